//! Forward score-driven filter, backward smoother, OLS initialization and
//! uncertainty bands.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::matcalc::{log_lower_triangular, LowerTriangular, SkewSymmetric};
use crate::model::{pack, step_into, Model, ModelSpec, StaticKind, StaticParams, ThetaVector};
use crate::rng::{open_uniform, stream};
use crate::special::normal_quantile;
use crate::{parallel, Result, SvarError};

/// Abort threshold on any θ component.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Steps excluded from tracking metrics.
pub const BURN_IN: usize = 100;

/// Default number of parameter draws for filtered-path bands.
pub const DEFAULT_BAND_DRAWS: usize = 360;

/// Filter settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    /// Apply the stability penalty to the likelihood and the scores.
    pub penalized: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions { penalized: true }
    }
}

/// Per-step filter record. Row `k` refers to observation `start + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Index of the first filtered observation (the number of lags).
    pub start: usize,
    /// θ used for each filtered observation.
    pub theta_path: Vec<ThetaVector>,
    /// Predictive state after the last observation.
    pub theta_next: ThetaVector,
    /// Scores at each step; empty when the statics never use them.
    pub scores: Vec<ThetaVector>,
    pub shocks: Vec<DVector<f64>>,
    /// Penalized log-likelihood contributions.
    pub loglik_contrib: Vec<f64>,
    /// Penalty part of each contribution.
    pub penalties: Vec<f64>,
    pub loglik: f64,
    /// `ρ̂ ≥ 1` before the penalty was applied.
    pub stability_flags: Vec<bool>,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.theta_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_path.is_empty()
    }

    /// Series of one θ component.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.theta_path.iter().map(|th| th[k]).collect()
    }

    pub fn flag_count(&self) -> usize {
        self.stability_flags.iter().filter(|&&f| f).count()
    }

    /// `C_t = e^{S_t} O_t` at each step.
    pub fn mixing(&self, spec: &ModelSpec) -> Result<Vec<DMatrix<f64>>> {
        let model = Model::new(spec)?;
        self.theta_path.iter().map(|th| model.structure(th)?.mixing()).collect()
    }

    /// `Σ_t = e^{S_t}` at each step.
    pub fn sigma(&self, spec: &ModelSpec) -> Result<Vec<DMatrix<f64>>> {
        let model = Model::new(spec)?;
        self.theta_path.iter().map(|th| crate::matcalc::mat_exp(&model.structure(th)?.s)).collect()
    }

    /// `O_t` at each step.
    pub fn orthogonal(&self, spec: &ModelSpec) -> Result<Vec<DMatrix<f64>>> {
        let model = Model::new(spec)?;
        self.theta_path.iter().map(|th| Ok(model.structure(th)?.o)).collect()
    }

    /// Diagonal of `C_t C_tᵀ` at each step.
    pub fn variance_diagonals(&self, spec: &ModelSpec) -> Result<Vec<DVector<f64>>> {
        Ok(self
            .mixing(spec)?
            .iter()
            .map(|c| DVector::from_iterator(c.nrows(), c.row_iter().map(|r| r.norm_squared())))
            .collect())
    }
}

fn check_data(y: &[DVector<f64>], spec: &ModelSpec) -> Result<()> {
    let need = spec.lag_mode.max_lag() + 1;
    if y.len() < need {
        return Err(SvarError::InsufficientHistory { needed: need, have: y.len() });
    }
    for row in y {
        if row.len() != spec.n {
            return Err(SvarError::Shape { context: "observation", expected: spec.n, got: row.len() });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(SvarError::NonFinite("data"));
        }
    }
    Ok(())
}

/// Walk the recursion, handing each step to `visit`.
pub(crate) fn run_with<F>(
    model: &Model,
    y: &[DVector<f64>],
    statics: &StaticParams,
    theta0: &[f64],
    opts: FilterOptions,
    mut visit: F,
) -> Result<ThetaVector>
where
    F: FnMut(usize, &[f64], &crate::model::Evaluation),
{
    let spec = model.spec();
    check_data(y, spec)?;
    let d = spec.dim();
    if theta0.len() != d {
        return Err(SvarError::Shape { context: "theta0", expected: d, got: theta0.len() });
    }
    statics.validate(d)?;
    let start = spec.lag_mode.max_lag();
    let want_scores = statics.needs_scores();
    let mut theta = theta0.to_vec();
    for t in start..y.len() {
        let ev = model.evaluate(&y[t - start..=t], &theta, want_scores, opts.penalized)?;
        visit(t, &theta, &ev);
        step_into(&mut theta, ev.scores.as_deref(), statics);
        let magnitude = theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(SvarError::Diverged { t, magnitude });
        }
    }
    Ok(ThetaVector(theta))
}

/// Forward pass with the penalized scores.
pub fn run_filter(y: &[DVector<f64>], spec: &ModelSpec, statics: &StaticParams, theta0: &[f64]) -> Result<FilterOutput> {
    run_filter_with(y, spec, statics, theta0, FilterOptions::default())
}

pub fn run_filter_with(
    y: &[DVector<f64>],
    spec: &ModelSpec,
    statics: &StaticParams,
    theta0: &[f64],
    opts: FilterOptions,
) -> Result<FilterOutput> {
    let model = Model::new(spec)?;
    let start = spec.lag_mode.max_lag();
    let steps = y.len().saturating_sub(start);
    let mut out = FilterOutput {
        start,
        theta_path: Vec::with_capacity(steps),
        theta_next: ThetaVector(Vec::new()),
        scores: Vec::new(),
        shocks: Vec::with_capacity(steps),
        loglik_contrib: Vec::with_capacity(steps),
        penalties: Vec::with_capacity(steps),
        loglik: 0.0,
        stability_flags: Vec::with_capacity(steps),
    };
    let next = run_with(&model, y, statics, theta0, opts, |_, theta, ev| {
        out.theta_path.push(ThetaVector(theta.to_vec()));
        if let Some(s) = &ev.scores {
            out.scores.push(s.clone());
        }
        out.shocks.push(ev.eps.clone());
        out.loglik_contrib.push(ev.penalized_loglik());
        out.penalties.push(ev.penalty);
        out.stability_flags.push(ev.stability.flagged);
    })?;
    out.theta_next = next;
    out.loglik = out.loglik_contrib.iter().sum();
    Ok(out)
}

/// Total penalized log-likelihood without storing the path.
pub fn filter_loglik(model: &Model, y: &[DVector<f64>], statics: &StaticParams, theta0: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    run_with(model, y, statics, theta0, FilterOptions::default(), |_, _, ev| total += ev.penalized_loglik())?;
    Ok(total)
}

/// Per-step penalized log-likelihood contributions.
pub fn filter_contributions(model: &Model, y: &[DVector<f64>], statics: &StaticParams, theta0: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(y.len());
    run_with(model, y, statics, theta0, FilterOptions::default(), |_, _, ev| out.push(ev.penalized_loglik()))?;
    Ok(out)
}

/// Backward pass: observations are visited from last to first, starting
/// from the forward predictive state. Each is still scored against its own
/// lags, so θ keeps the forward-time meaning; running the filter on the
/// reversed series instead would drift towards the time-reversed VAR.
pub fn run_smoother(y: &[DVector<f64>], spec: &ModelSpec, statics: &StaticParams, filtered: &FilterOutput) -> Result<FilterOutput> {
    let model = Model::new(spec)?;
    check_data(y, spec)?;
    let start = filtered.start;
    let want_scores = statics.needs_scores();
    let mut out = filtered.clone();
    let mut theta = filtered.theta_next.to_vec();
    for t in (start..y.len()).rev() {
        let ev = model.evaluate(&y[t - start..=t], &theta, want_scores, true)?;
        let k = t - start;
        out.theta_path[k] = ThetaVector(theta.clone());
        if let (Some(s), false) = (&ev.scores, out.scores.is_empty()) {
            out.scores[k] = s.clone();
        }
        out.shocks[k] = ev.eps.clone();
        out.loglik_contrib[k] = ev.penalized_loglik();
        out.penalties[k] = ev.penalty;
        out.stability_flags[k] = ev.stability.flagged;
        step_into(&mut theta, ev.scores.as_deref(), statics);
        let magnitude = theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(SvarError::Diverged { t, magnitude });
        }
    }
    out.theta_next = ThetaVector(theta);
    out.loglik = out.loglik_contrib.iter().sum();
    Ok(out)
}

/// Constant-parameter VAR fitted by least squares.
#[derive(Debug, Clone)]
pub struct OlsVar {
    pub phis: Vec<DMatrix<f64>>,
    /// Residual covariance with divisor equal to the number of rows used.
    pub resid_cov: DMatrix<f64>,
    pub rows: usize,
}

/// OLS of `y_t` on the regressors of the lag mode, without intercept, over
/// observations `max_lag .. end`.
pub fn ols_var(y: &[DVector<f64>], spec: &ModelSpec, end: usize) -> Result<OlsVar> {
    let n = spec.n;
    let start = spec.lag_mode.max_lag();
    let blocks = spec.lag_mode.blocks();
    let k = blocks * n;
    let end = end.min(y.len());
    if end <= start + k {
        return Err(SvarError::InsufficientHistory { needed: start + k + 1, have: end });
    }
    let rows = end - start;
    let mut xmat = DMatrix::zeros(rows, k);
    let mut ymat = DMatrix::zeros(rows, n);
    for (r, t) in (start..end).enumerate() {
        let regs = spec.lag_mode.regressors(&y[t - start..t])?;
        for (b, x) in regs.iter().enumerate() {
            for j in 0..n {
                xmat[(r, b * n + j)] = x[j];
            }
        }
        for i in 0..n {
            ymat[(r, i)] = y[t][i];
        }
    }
    let xtx = xmat.tr_mul(&xmat);
    let xty = xmat.tr_mul(&ymat);
    let chol = xtx.cholesky().ok_or(SvarError::Singular("OLS design"))?;
    let coef = chol.solve(&xty); // k × n, coef[(b n + j, i)] = Φ_b[i, j]
    let resid = &ymat - &xmat * &coef;
    let resid_cov = resid.tr_mul(&resid) / rows as f64;
    let phis = (0..blocks).map(|b| DMatrix::from_fn(n, n, |i, j| coef[(b * n + j, i)])).collect();
    Ok(OlsVar { phis, resid_cov, rows })
}

/// Starting state from OLS on the first `init_window` observations: `Φ`
/// from the regression, `S` the logarithm of the lower Cholesky factor of
/// the residual covariance, `A = 0`.
pub fn init_theta(y: &[DVector<f64>], spec: &ModelSpec, init_window: usize) -> Result<ThetaVector> {
    check_data(y, spec)?;
    let fit = ols_var(y, spec, init_window)?;
    let chol = fit.resid_cov.clone().cholesky().ok_or(SvarError::Singular("OLS residual covariance"))?;
    let s = log_lower_triangular(&LowerTriangular::new(chol.l())?)?;
    pack(&s, &SkewSymmetric::zeros(spec.n), &fit.phis, spec)
}

/// Per-step, per-component 68% half-widths.
#[derive(Debug, Clone, PartialEq)]
pub struct BandOutput {
    /// Filtered path at the point estimate.
    pub center: Vec<ThetaVector>,
    /// Filtering-uncertainty floor per component, `α_c · rms(s_c)`.
    pub floor: Vec<f64>,
    pub halfwidths: Vec<Vec<f64>>,
    /// Draws whose filter diverged and were skipped.
    pub skipped: usize,
    pub draws: usize,
}

/// Factor `L` with `L Lᵀ = cov`, tolerating exact zeros and tiny negative
/// round-off in the spectrum.
pub fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = cov.nrows();
    if cov.ncols() != m {
        return Err(SvarError::Shape { context: "covariance", expected: m, got: cov.ncols() });
    }
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale.max(1e-300) {
        return Err(SvarError::NotPsd(min));
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

/// Draw free statics from `N(ψ̂, cov)`; α groups are floored at zero.
pub fn draw_statics<R: RngCore + ?Sized>(base: &StaticParams, factor: &DMatrix<f64>, rng: &mut R) -> Result<StaticParams> {
    let center = base.free_values();
    let m = center.len();
    let z = DVector::from_fn(m, |_, _| normal_quantile(open_uniform(rng)));
    let shift = factor * z;
    let values: Vec<f64> = base
        .restriction
        .groups
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            let v = center[g] + shift[g];
            match grp.kind {
                StaticKind::Alpha => v.max(0.0),
                StaticKind::Beta => v.clamp(0.0, 1.0),
                StaticKind::Omega => v,
            }
        })
        .collect();
    base.with_free(&values)
}

/// Filtering bands: a constant floor from the α's plus the across-draw
/// variance of paths re-filtered under parameter draws.
pub fn bands(
    y: &[DVector<f64>],
    spec: &ModelSpec,
    statics: &StaticParams,
    covariance: &DMatrix<f64>,
    theta0: &[f64],
    draws: usize,
    seed: u64,
) -> Result<BandOutput> {
    if draws < 2 {
        return Err(SvarError::InvalidArgument("bands need at least two draws".into()));
    }
    if covariance.nrows() != statics.restriction.len() {
        return Err(SvarError::Shape { context: "covariance", expected: statics.restriction.len(), got: covariance.nrows() });
    }
    let factor = psd_factor(covariance)?;
    let base = run_filter(y, spec, statics, theta0)?;
    let d = spec.dim();
    let steps = base.len();

    let floor: Vec<f64> = (0..d)
        .map(|c| {
            if base.scores.is_empty() {
                return 0.0;
            }
            let ms = base.scores.iter().map(|s| s[c] * s[c]).sum::<f64>() / steps as f64;
            statics.alpha[c].abs() * ms.sqrt()
        })
        .collect();

    let paths: Vec<Option<Vec<ThetaVector>>> = parallel::map_indexed(draws, |r| {
        let mut rng = stream(seed, r as u64);
        let sp = draw_statics(statics, &factor, &mut rng).ok()?;
        run_filter(y, spec, &sp, theta0).ok().map(|f| f.theta_path)
    });
    let ok: Vec<&Vec<ThetaVector>> = paths.iter().flatten().collect();
    let skipped = draws - ok.len();
    let mut halfwidths = vec![vec![0.0; d]; steps];
    for t in 0..steps {
        for c in 0..d {
            let var = if ok.len() >= 2 {
                let vals: Vec<f64> = ok.iter().map(|p| p[t][c]).collect();
                crate::stats::variance(&vals)
            } else {
                0.0
            };
            halfwidths[t][c] = (floor[c] * floor[c] + var).sqrt();
        }
    }
    Ok(BandOutput { center: base.theta_path, floor, halfwidths, skipped, draws })
}
