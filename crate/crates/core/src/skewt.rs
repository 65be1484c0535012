//! Standardized skew Student's t (Azzalini–Capitanio) with zero mean and
//! unit variance.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::rng::open_uniform;
use crate::special::{chi_squared_quantile, ln_gamma, normal_quantile, student_t_cdf, student_t_ln_pdf};
use crate::{Result, SvarError};

/// Asymmetry `delta ∈ (−1, 1)` and tail exponent `nu > 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewTParams {
    pub delta: f64,
    pub nu: f64,
}

impl SkewTParams {
    pub fn new(delta: f64, nu: f64) -> Result<Self> {
        let p = SkewTParams { delta, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.abs() < 1.0) || !(self.nu > 2.0) || !self.nu.is_finite() {
            return Err(SvarError::InvalidSkewT { delta: self.delta, nu: self.nu });
        }
        Ok(())
    }

    pub fn constants(&self) -> SkewTConstants {
        SkewTConstants::new(*self)
    }
}

/// Normalization `c`, scale `v` and mean shift `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewTConstants {
    pub c: f64,
    pub v: f64,
    pub m: f64,
}

impl SkewTConstants {
    fn new(p: SkewTParams) -> Self {
        let nu = p.nu;
        let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
        let m = mean_shift(p.delta, nu);
        let v = 1.0 / (nu / (nu - 2.0) - m * m).sqrt();
        SkewTConstants { c: ln_c.exp(), v, m }
    }
}

fn mean_shift(delta: f64, nu: f64) -> f64 {
    delta * (nu / PI).sqrt() * (ln_gamma(0.5 * (nu - 1.0)) - ln_gamma(0.5 * nu)).exp()
}

/// Precomputed evaluator for one parameter pair.
#[derive(Debug, Clone, Copy)]
pub struct SkewT {
    params: SkewTParams,
    consts: SkewTConstants,
    ln_norm: f64,
    /// `δ / sqrt(1 − δ²)`.
    shape: f64,
    sqrt_nu1: f64,
}

impl SkewT {
    pub fn new(params: SkewTParams) -> Result<Self> {
        params.validate()?;
        let consts = params.constants();
        Ok(SkewT {
            params,
            consts,
            ln_norm: LN_2 + consts.c.ln() - consts.v.ln(),
            shape: params.delta / (1.0 - params.delta * params.delta).sqrt(),
            sqrt_nu1: (params.nu + 1.0).sqrt(),
        })
    }

    pub fn params(&self) -> SkewTParams {
        self.params
    }

    pub fn constants(&self) -> SkewTConstants {
        self.consts
    }

    #[inline]
    fn pieces(&self, eps: f64) -> (f64, f64, f64) {
        let SkewTConstants { v, m, .. } = self.consts;
        let w = eps + m * v;
        let q = w * w + self.params.nu * v * v;
        let x = self.shape * self.sqrt_nu1 * w / q.sqrt();
        (w, q, x)
    }

    pub fn log_pdf(&self, eps: f64) -> f64 {
        let nu = self.params.nu;
        let v = self.consts.v;
        let (w, _, x) = self.pieces(eps);
        self.ln_norm - 0.5 * (nu + 1.0) * (w * w / (v * v * nu)).ln_1p() + student_t_cdf(x, nu + 1.0).ln()
    }

    /// `d log p / d ε`.
    pub fn score_factor(&self, eps: f64) -> f64 {
        let nu = self.params.nu;
        let v = self.consts.v;
        let (w, q, x) = self.pieces(eps);
        let mut g = -(1.0 + nu) * w / q;
        if self.shape != 0.0 {
            let ratio = (student_t_ln_pdf(x, nu + 1.0) - student_t_cdf(x, nu + 1.0).ln()).exp();
            g += ratio * self.shape * self.sqrt_nu1 * nu * v * v / (q * q.sqrt());
        }
        g
    }

    /// Log-density and score factor in one pass.
    pub fn log_pdf_and_score(&self, eps: f64) -> (f64, f64) {
        let nu = self.params.nu;
        let v = self.consts.v;
        let (w, q, x) = self.pieces(eps);
        let ln_t1 = student_t_cdf(x, nu + 1.0).ln();
        let lp = self.ln_norm - 0.5 * (nu + 1.0) * (w * w / (v * v * nu)).ln_1p() + ln_t1;
        let mut g = -(1.0 + nu) * w / q;
        if self.shape != 0.0 {
            let ratio = (student_t_ln_pdf(x, nu + 1.0) - ln_t1).exp();
            g += ratio * self.shape * self.sqrt_nu1 * nu * v * v / (q * q.sqrt());
        }
        (lp, g)
    }

    /// Draw from three uniforms in (0, 1): a half-normal, a normal and a χ²_ν
    /// variate by inversion. Reflecting the uniforms gives the antithetic draw.
    pub fn sample_from_uniforms(&self, u: [f64; 3]) -> f64 {
        let d = self.params.delta;
        let half = normal_quantile(0.5 * (1.0 + u[0]));
        let z = d * half + (1.0 - d * d).sqrt() * normal_quantile(u[1]);
        let w = chi_squared_quantile(u[2], self.params.nu);
        self.consts.v * (z / (w / self.params.nu).sqrt() - self.consts.m)
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = [open_uniform(rng), open_uniform(rng), open_uniform(rng)];
        self.sample_from_uniforms(u)
    }
}

pub fn log_pdf(eps: f64, p: SkewTParams) -> Result<f64> {
    Ok(SkewT::new(p)?.log_pdf(eps))
}

pub fn score_factor(eps: f64, p: SkewTParams) -> Result<f64> {
    Ok(SkewT::new(p)?.score_factor(eps))
}

pub fn sample<R: RngCore + ?Sized>(p: SkewTParams, rng: &mut R) -> Result<f64> {
    Ok(SkewT::new(p)?.sample(rng))
}

/// Closed-form skewness (needs `nu > 3`) and kurtosis (needs `nu > 4`).
pub fn moments(p: SkewTParams) -> (f64, f64) {
    let SkewTParams { delta: d, nu } = p;
    let m = mean_shift(d, nu);
    let m2 = m * m;
    let var = nu / (nu - 2.0) - m2;
    let skew = m * (nu * (3.0 - d * d) / (nu - 3.0) - 3.0 * nu / (nu - 2.0) + 2.0 * m2) / var.powf(1.5);
    let kurt = (3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0)) - 4.0 * m2 * nu * (3.0 - d * d) / (nu - 3.0)
        + 6.0 * m2 * nu / (nu - 2.0)
        - 3.0 * m2 * m2)
        / (var * var);
    (skew, kurt)
}

// Unconstrained coordinates for moment targeting: delta = tanh(g),
// nu = 4 + exp(h), with nu capped so the family stays away from the Gaussian
// limit.
const NU_MAX: f64 = 400.0;

fn from_coords(g: f64, h: f64) -> SkewTParams {
    SkewTParams { delta: g.tanh().clamp(-0.999_999, 0.999_999), nu: 4.0 + h.exp().min(NU_MAX - 4.0) }
}

fn residual(g: f64, h: f64, target: (f64, f64)) -> [f64; 2] {
    let (s, k) = moments(from_coords(g, h));
    [s - target.0, k - target.1]
}

fn norm2(r: [f64; 2]) -> f64 {
    (r[0] * r[0] + r[1] * r[1]).sqrt()
}

fn newton(mut g: f64, mut h: f64, target: (f64, f64)) -> (f64, f64, f64) {
    let mut r = residual(g, h, target);
    for _ in 0..200 {
        let f = norm2(r);
        if f < 1e-13 {
            break;
        }
        let step = 1e-7;
        let rg = residual(g + step, h, target);
        let rgm = residual(g - step, h, target);
        let rh = residual(g, h + step, target);
        let rhm = residual(g, h - step, target);
        let j = [
            [(rg[0] - rgm[0]) / (2.0 * step), (rh[0] - rhm[0]) / (2.0 * step)],
            [(rg[1] - rgm[1]) / (2.0 * step), (rh[1] - rhm[1]) / (2.0 * step)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !det.is_finite() || det.abs() < 1e-300 {
            break;
        }
        let dg = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dh = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let (ng, nh) = (g - lambda * dg, h - (lambda * dh).clamp(-3.0, 3.0));
            let nr = residual(ng, nh, target);
            if norm2(nr).is_finite() && norm2(nr) < f {
                g = ng;
                h = nh;
                r = nr;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (g, h, norm2(r))
}

struct FeasibleGrid {
    points: Vec<(f64, f64, (f64, f64))>,
}

fn feasible_grid() -> &'static FeasibleGrid {
    static GRID: OnceLock<FeasibleGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let mut points = Vec::new();
        for a in 0..=80 {
            let g = -4.0 + 8.0 * a as f64 / 80.0;
            for b in 0..=60 {
                let h = -5.0 + ((NU_MAX - 4.0).ln() + 5.0) * b as f64 / 60.0;
                points.push((g, h, moments(from_coords(g, h))));
            }
        }
        FeasibleGrid { points }
    })
}

/// Residual tolerance for [`target_moments`].
pub const MOMENT_TOL: f64 = 1e-8;

/// `(delta, nu)` whose skewness and kurtosis equal the targets, with
/// `nu ∈ (4, 400]`.
pub fn target_moments(skewness: f64, kurtosis: f64) -> Result<SkewTParams> {
    if !skewness.is_finite() || !kurtosis.is_finite() {
        return Err(SvarError::NonFinite("moment targets"));
    }
    let target = (skewness, kurtosis);
    let g0 = if skewness == 0.0 { 0.0 } else { (0.5f64).atanh().copysign(skewness) };
    let (g, h, f) = newton(g0, (8.0f64 - 4.0).ln(), target);
    if f < MOMENT_TOL {
        return Ok(from_coords(g, h));
    }
    // Coarse grid restart.
    let grid = feasible_grid();
    let dist = |m: (f64, f64)| ((m.0 - skewness).powi(2) + (m.1 - kurtosis).powi(2)).sqrt();
    let mut ranked: Vec<&(f64, f64, (f64, f64))> = grid.points.iter().filter(|p| p.2 .1.is_finite()).collect();
    ranked.sort_by(|a, b| dist(a.2).total_cmp(&dist(b.2)));
    let mut best = (g, h, f);
    for p in ranked.iter().take(5) {
        let cand = newton(p.0, p.1, target);
        if cand.2 < best.2 {
            best = cand;
        }
        if best.2 < MOMENT_TOL {
            return Ok(from_coords(best.0, best.1));
        }
    }
    let nearest = from_coords(best.0, best.1);
    Err(SvarError::InfeasibleMoments {
        skewness,
        kurtosis,
        nearest_delta: nearest.delta,
        nearest_nu: nearest.nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(f: impl Fn(f64) -> f64) -> f64 {
        // Composite Simpson on [−60, 60].
        let n = 120_000;
        let (a, b) = (-60.0, 60.0);
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let x = a + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn symmetric_case_constants() {
        let c = SkewTParams::new(0.0, 5.0).unwrap().constants();
        assert_eq!(c.m, 0.0);
        assert!((c.v * c.v - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_case_is_scaled_student() {
        let nu = 5.0;
        let st = SkewT::new(SkewTParams::new(0.0, nu).unwrap()).unwrap();
        let scale = ((nu - 2.0) / nu).sqrt();
        for &e in &[0.0, -1.3, 2.2, 7.0] {
            let direct = student_t_ln_pdf(e / scale, nu) - scale.ln();
            assert!((st.log_pdf(e) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn density_is_standardized() {
        let st = SkewT::new(SkewTParams::new(-0.7, 5.0).unwrap()).unwrap();
        let mass = quad(|e| st.log_pdf(e).exp());
        let mean = quad(|e| e * st.log_pdf(e).exp());
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
        assert!(mean.abs() < 1e-6, "mean {mean}");
    }

    #[test]
    fn score_factor_matches_differences() {
        let st = SkewT::new(SkewTParams::new(-0.7, 5.0).unwrap()).unwrap();
        for &e in &[-3.0, -1.0, 0.0, 1.0, 3.0] {
            let h = 1e-5;
            let fd = (st.log_pdf(e + h) - st.log_pdf(e - h)) / (2.0 * h);
            let g = st.score_factor(e);
            assert!((g - fd).abs() <= 1e-6 * g.abs().max(1e-3), "eps {e}: {g} vs {fd}");
            assert_eq!(st.log_pdf_and_score(e), (st.log_pdf(e), g));
        }
        let sym = SkewT::new(SkewTParams::new(0.0, 7.0).unwrap()).unwrap();
        assert_eq!(sym.score_factor(0.0), 0.0);
    }

    #[test]
    fn score_factor_stays_bounded_in_tails() {
        for &(d, nu) in &[(-0.7, 5.0), (0.6, 6.0), (0.0, 3.0), (0.95, 30.0)] {
            let st = SkewT::new(SkewTParams::new(d, nu).unwrap()).unwrap();
            for s in [-1.0, 1.0] {
                assert!(st.score_factor(100.0 * s).abs() < 10.0 * st.score_factor(3.0 * s).abs());
            }
        }
    }

    #[test]
    fn mirror_symmetry() {
        let a = SkewT::new(SkewTParams::new(0.4, 6.0).unwrap()).unwrap();
        let b = SkewT::new(SkewTParams::new(-0.4, 6.0).unwrap()).unwrap();
        for &e in &[-4.0, -0.5, 0.0, 1.5, 9.0] {
            assert!((a.log_pdf(e) - b.log_pdf(-e)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(SkewTParams::new(0.1, 2.0).is_err());
        assert!(SkewTParams::new(1.0, 5.0).is_err());
        assert!(log_pdf(0.0, SkewTParams { delta: 0.0, nu: 1.5 }).is_err());
    }

    #[test]
    fn symmetric_kurtosis_target() {
        let nu = 10.0;
        let p = target_moments(0.0, 3.0 * (nu - 2.0) / (nu - 4.0)).unwrap();
        assert!(p.delta.abs() < 1e-9);
        assert!((p.nu - nu).abs() < 1e-6);
    }

    #[test]
    fn moment_round_trip() {
        for &(d, nu) in &[(-0.6, 6.0), (0.7, 5.5), (0.3, 12.0), (-0.9, 4.8)] {
            let (s, k) = moments(SkewTParams::new(d, nu).unwrap());
            let p = target_moments(s, k).unwrap();
            assert!((p.delta - d).abs() < 1e-4 && (p.nu - nu).abs() < 1e-4, "{d} {nu} -> {p:?}");
        }
    }

    #[test]
    fn infeasible_moments_report_nearest_point() {
        match target_moments(0.0, 2.0) {
            Err(SvarError::InfeasibleMoments { nearest_nu, .. }) => assert!(nearest_nu > 4.0),
            other => panic!("expected infeasibility, got {other:?}"),
        }
        assert!(target_moments(3.5, 4.0).is_err());
    }

    #[test]
    fn sampler_is_standardized() {
        let st = SkewT::new(SkewTParams::new(-0.7, 5.0).unwrap()).unwrap();
        let mut rng = crate::rng::stream(5, 0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| st.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }
}
