//! Sample statistics used by the estimators and Monte-Carlo summaries.

/// Type-7 (linear interpolation) quantile of unsorted data.
pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Unbiased sample variance.
pub fn variance(data: &[f64]) -> f64 {
    let m = mean(data);
    data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (data.len() as f64 - 1.0)
}

/// Moment-ratio skewness `m3 / m2^{3/2}`.
pub fn skewness(data: &[f64]) -> f64 {
    let m = mean(data);
    let n = data.len() as f64;
    let m2 = data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = data.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Moment-ratio kurtosis `m4 / m2²` (3 for a Gaussian).
pub fn kurtosis(data: &[f64]) -> f64 {
    let m = mean(data);
    let n = data.len() as f64;
    let m2 = data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = data.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

/// Median, 16th and 84th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Band {
    pub p16: f64,
    pub median: f64,
    pub p84: f64,
}

impl Band {
    pub fn of(data: &[f64]) -> Band {
        let mut v = data.to_vec();
        v.sort_by(f64::total_cmp);
        Band { p16: quantile_sorted(&v, 0.16), median: quantile_sorted(&v, 0.5), p84: quantile_sorted(&v, 0.84) }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.p16 <= x && x <= self.p84
    }

    pub fn width(&self) -> f64 {
        self.p84 - self.p16
    }
}
