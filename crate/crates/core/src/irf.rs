//! Conditional impulse responses by Monte Carlo, with the parameter path
//! reacting to the impulse.
//!
//! Each simulated path is run once without an impulse and once per shock
//! `j` with the first shock replaced by `e_j`. All branches of a path share
//! the same later shocks, and antithetic partners reflect every underlying
//! uniform, which keeps the skew-t marginals intact.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::filter::{draw_statics, psd_factor, run_filter, DIVERGENCE_LIMIT};
use crate::model::{step_into, unpack, Model, ModelSpec, StaticParams, Structure};
use crate::rng::{open_uniform, stream};
use crate::stats::variance;
use crate::{parallel, Result, SvarError};

/// Default number of horizons after impact.
pub const DEFAULT_HORIZON: usize = 60;
/// Default number of simulated paths (half of them antithetic partners).
pub const DEFAULT_DRAWS: usize = 20_000;
/// Default repetitions for parameter-uncertainty bands.
pub const DEFAULT_REPETITIONS: usize = 120;
/// Share of clipped paths above which a warning is attached.
pub const CLIP_WARN_SHARE: f64 = 0.01;

/// A simulated observation larger than this marks the path as explosive.
const EXPLOSION_LIMIT: f64 = 1e10;
/// Paths simulated per parallel batch.
const BATCH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrfOptions {
    pub horizon: usize,
    /// Total simulated paths; must be even when `antithetic` is set.
    pub draws: usize,
    pub antithetic: bool,
    pub seed: u64,
}

impl Default for IrfOptions {
    fn default() -> Self {
        IrfOptions { horizon: DEFAULT_HORIZON, draws: DEFAULT_DRAWS, antithetic: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfMeta {
    pub draws: usize,
    pub antithetic: bool,
    /// Index of the impact observation in the sample (`history.len()`).
    pub conditioning_index: usize,
    pub seed: u64,
    /// Paths (or antithetic pairs) dropped because they exploded.
    pub clipped: usize,
    /// Repetitions behind the band half-widths; 0 for a single run.
    pub repetitions: usize,
    pub warnings: Vec<String>,
}

/// Responses of variable `i` to shock `j` at horizons `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfResult {
    pub n: usize,
    pub horizon: usize,
    /// Flat `[i][j][k]`.
    pub responses: Vec<f64>,
    /// Monte-Carlo standard error of each response.
    pub std_errors: Vec<f64>,
    pub band_halfwidths: Vec<f64>,
    pub meta: IrfMeta,
}

impl IrfResult {
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * (self.horizon + 1) + k
    }

    pub fn response(&self, i: usize, j: usize, k: usize) -> f64 {
        self.responses[self.index(i, j, k)]
    }

    pub fn std_error(&self, i: usize, j: usize, k: usize) -> f64 {
        self.std_errors[self.index(i, j, k)]
    }

    pub fn halfwidth(&self, i: usize, j: usize, k: usize) -> f64 {
        self.band_halfwidths[self.index(i, j, k)]
    }

    /// `(i, j, k, mean, half-width)` rows, 1-based `i` and `j`.
    pub fn long_rows(&self) -> Vec<(usize, usize, usize, f64, f64)> {
        let mut rows = Vec::with_capacity(self.responses.len());
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..=self.horizon {
                    rows.push((i + 1, j + 1, k, self.response(i, j, k), self.halfwidth(i, j, k)));
                }
            }
        }
        rows
    }
}

/// `Ψ_k C` of the constant VAR at θ, flat `[i][j][k]` for `k = 0..=horizon`.
pub fn linear_irf(theta: &[f64], spec: &ModelSpec, horizon: usize) -> Result<Vec<f64>> {
    let model = Model::new(spec)?;
    let st = model.structure(theta)?;
    let c = st.mixing()?;
    let (_, _, phis) = unpack(theta, spec)?;
    let comp = model.companion(&phis)?;
    let f = comp.matrix();
    let n = spec.n;
    let m = f.nrows();
    let mut embedded = DMatrix::zeros(m, n);
    embedded.view_mut((0, 0), (n, n)).copy_from(&c);
    let mut out = vec![0.0; n * n * (horizon + 1)];
    let mut power = embedded;
    for k in 0..=horizon {
        for i in 0..n {
            for j in 0..n {
                out[(i * n + j) * (horizon + 1) + k] = power[(i, j)];
            }
        }
        power = f * power;
    }
    Ok(out)
}

/// Everything a branch needs to start at the impact date.
struct Origin<'a> {
    model: &'a Model,
    statics: &'a StaticParams,
    /// The last `max_lag` observations before impact.
    lags: &'a [DVector<f64>],
    theta: &'a [f64],
    /// Structure at `theta`, reused at every step when θ cannot move.
    fixed: Option<(Structure, DMatrix<f64>)>,
}

impl Origin<'_> {
    /// Observations at horizons `0..=horizon`, or `None` if the path blows up.
    fn branch(&self, eps: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
        let spec = self.model.spec();
        let max_lag = spec.lag_mode.max_lag();
        let mut path: Vec<DVector<f64>> = self.lags.to_vec();
        let mut theta = self.theta.to_vec();
        let mut out = Vec::with_capacity(eps.len());
        for (k, e) in eps.iter().enumerate() {
            let x = spec.lag_mode.regressors(&path).ok()?;
            let y = match &self.fixed {
                Some((st, c)) => st.conditional_mean(&x) + c * e,
                None => {
                    let st = self.model.structure(&theta).ok()?;
                    st.conditional_mean(&x) + st.mixing().ok()? * e
                }
            };
            if !y.iter().all(|v| v.is_finite() && v.abs() <= EXPLOSION_LIMIT) {
                return None;
            }
            path.push(y.clone());
            out.push(y);
            if self.fixed.is_some() || k + 1 == eps.len() {
                continue;
            }
            if self.statics.needs_scores() {
                let window = &path[path.len() - 1 - max_lag..];
                let ev = self.model.evaluate(window, &theta, true, true).ok()?;
                step_into(&mut theta, ev.scores.as_deref(), self.statics);
            } else {
                step_into(&mut theta, None, self.statics);
            }
            if !theta.iter().all(|v| v.abs() <= DIVERGENCE_LIMIT) {
                return None;
            }
        }
        Some(out)
    }

    /// Shocked-minus-baseline differences for one path, flat `[i][j][k]`
    /// (the `k = 0` slot is left at zero).
    fn differences(&self, eps: &[DVector<f64>]) -> Option<Vec<f64>> {
        let n = self.model.spec().n;
        let horizon = eps.len() - 1;
        let base = self.branch(eps)?;
        let mut out = vec![0.0; n * n * (horizon + 1)];
        let mut shocked = eps.to_vec();
        for j in 0..n {
            shocked[0] = DVector::from_fn(n, |r, _| if r == j { 1.0 } else { 0.0 });
            let path = self.branch(&shocked)?;
            for k in 1..=horizon {
                for i in 0..n {
                    out[(i * n + j) * (horizon + 1) + k] = path[k][i] - base[k][i];
                }
            }
        }
        Some(out)
    }
}

fn shocks_from_uniforms(model: &Model, u: &[f64], reflect: bool) -> Vec<DVector<f64>> {
    let n = model.spec().n;
    u.chunks_exact(3 * n)
        .map(|step| {
            DVector::from_fn(n, |i, _| {
                let w = &step[3 * i..3 * i + 3];
                let w = if reflect { [1.0 - w[0], 1.0 - w[1], 1.0 - w[2]] } else { [w[0], w[1], w[2]] };
                model.densities()[i].sample_from_uniforms(w)
            })
        })
        .collect()
}

/// Monte-Carlo IRF at the state `theta_t` following `history` (whose last
/// element is the observation just before impact).
pub fn irf(history: &[DVector<f64>], spec: &ModelSpec, statics: &StaticParams, theta_t: &[f64], opts: IrfOptions) -> Result<IrfResult> {
    let model = Model::new(spec)?;
    statics.validate(spec.dim())?;
    if theta_t.len() != spec.dim() {
        return Err(SvarError::Shape { context: "theta_t", expected: spec.dim(), got: theta_t.len() });
    }
    let max_lag = spec.lag_mode.max_lag();
    if history.len() < max_lag {
        return Err(SvarError::InsufficientHistory { needed: max_lag, have: history.len() });
    }
    if opts.horizon == 0 {
        return Err(SvarError::InvalidArgument("horizon must be at least 1".into()));
    }
    if opts.draws < 2 || (opts.antithetic && opts.draws % 2 != 0) {
        return Err(SvarError::InvalidArgument(format!("draws must be at least 2 and even with antithetics, got {}", opts.draws)));
    }
    let n = spec.n;
    let horizon = opts.horizon;
    let cells = n * n * (horizon + 1);

    let st = model.structure(theta_t)?;
    let c = st.mixing()?;
    let fixed = statics.is_static().then(|| (st, c.clone()));
    let origin = Origin { model: &model, statics, lags: &history[history.len() - max_lag..], theta: theta_t, fixed };

    let units = if opts.antithetic { opts.draws / 2 } else { opts.draws };
    let uniforms = (horizon + 1) * n * 3;
    let unit = |r: usize| -> Option<Vec<f64>> {
        let mut rng = stream(opts.seed, r as u64);
        let u: Vec<f64> = (0..uniforms).map(|_| open_uniform(&mut rng)).collect();
        let first = origin.differences(&shocks_from_uniforms(&model, &u, false))?;
        if !opts.antithetic {
            return Some(first);
        }
        let second = origin.differences(&shocks_from_uniforms(&model, &u, true))?;
        Some(first.iter().zip(&second).map(|(a, b)| 0.5 * (a + b)).collect())
    };

    let mut sum = vec![0.0; cells];
    let mut sum_sq = vec![0.0; cells];
    let mut kept = 0usize;
    let mut start = 0;
    while start < units {
        let len = BATCH.min(units - start);
        for d in parallel::map_indexed(len, |r| unit(start + r)).into_iter().flatten() {
            kept += 1;
            for (q, v) in d.iter().enumerate() {
                sum[q] += v;
                sum_sq[q] += v * v;
            }
        }
        start += len;
    }
    let clipped = units - kept;
    if kept < 2 {
        return Err(SvarError::InvalidArgument(format!("{clipped} of {units} simulated paths exploded")));
    }

    let kf = kept as f64;
    let mut responses: Vec<f64> = sum.iter().map(|s| s / kf).collect();
    let mut std_errors: Vec<f64> = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let mean = s / kf;
            ((q / kf - mean * mean).max(0.0) * kf / (kf - 1.0) / kf).sqrt()
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let q = (i * n + j) * (horizon + 1);
            responses[q] = c[(i, j)];
            std_errors[q] = 0.0;
        }
    }
    let mut warnings = Vec::new();
    if clipped as f64 > CLIP_WARN_SHARE * units as f64 {
        warnings.push(format!("{clipped} of {units} paths exploded and were dropped"));
    }
    Ok(IrfResult {
        n,
        horizon,
        band_halfwidths: std_errors.clone(),
        responses,
        std_errors,
        meta: IrfMeta {
            draws: opts.draws,
            antithetic: opts.antithetic,
            conditioning_index: history.len(),
            seed: opts.seed,
            clipped,
            repetitions: 0,
            warnings,
        },
    })
}

/// IRF at the point estimate with half-widths equal to the standard
/// deviation of the IRF means across `repetitions` runs, each with statics
/// drawn from `N(ψ̂, covariance)` and the sample re-filtered from `theta0`.
pub fn irf_bands(
    y: &[DVector<f64>],
    spec: &ModelSpec,
    statics: &StaticParams,
    covariance: &DMatrix<f64>,
    theta0: &[f64],
    opts: IrfOptions,
    repetitions: usize,
) -> Result<IrfResult> {
    if repetitions < 2 {
        return Err(SvarError::InvalidArgument("bands need at least two repetitions".into()));
    }
    if covariance.nrows() != statics.restriction.len() {
        return Err(SvarError::Shape { context: "covariance", expected: statics.restriction.len(), got: covariance.nrows() });
    }
    let factor = psd_factor(covariance)?;
    let center_state = run_filter(y, spec, statics, theta0)?.theta_next;
    let mut center = irf(y, spec, statics, &center_state, opts)?;

    let reps: Vec<Option<IrfResult>> = parallel::map_indexed(repetitions, |r| {
        let mut rng = stream(opts.seed, u64::MAX - r as u64);
        let sp = draw_statics(statics, &factor, &mut rng).ok()?;
        let inner_seed = rng.next_u64();
        let state = run_filter(y, spec, &sp, theta0).ok()?.theta_next;
        irf(y, spec, &sp, &state, IrfOptions { seed: inner_seed, ..opts }).ok()
    });
    let ok: Vec<&IrfResult> = reps.iter().flatten().collect();
    if ok.len() < 2 {
        return Err(SvarError::InvalidArgument(format!("only {} of {repetitions} repetitions produced an IRF", ok.len())));
    }
    center.band_halfwidths = (0..center.responses.len())
        .map(|q| {
            let vals: Vec<f64> = ok.iter().map(|r| r.responses[q]).collect();
            variance(&vals).sqrt()
        })
        .collect();
    center.meta.repetitions = ok.len();
    if ok.len() < repetitions {
        center.meta.warnings.push(format!("{} of {repetitions} repetitions failed and were skipped", repetitions - ok.len()));
    }
    Ok(center)
}
