//! Penalized pseudo-maximum likelihood over the free static parameters,
//! sandwich standard errors and the second-step density refit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::filter::{filter_contributions, filter_loglik, run_filter};
use crate::model::{Model, ModelSpec, StaticKind, StaticParams};
use crate::optim::{bfgs, nelder_mead, numerical_hessian, BfgsOptions, Convergence, NelderMeadOptions};
use crate::skewt::{target_moments, SkewTParams};
use crate::stats::{kurtosis, skewness};
use crate::{parallel, Result, SvarError};

/// Smallest α the log reparametrization can represent.
const LOG_ALPHA_FLOOR: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub max_evals: usize,
    pub polish: bool,
    /// Relative step of the numerical Hessian.
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 3, max_evals: 1500, polish: true, hessian_step: 1e-4 }
    }
}

/// Fitted statics with robust inference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub statics: StaticParams,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub loglik: f64,
    pub init_loglik: f64,
    pub convergence: Convergence,
    /// Sandwich covariance of the free parameters.
    pub covariance: Vec<Vec<f64>>,
    /// Filtered steps with `ρ̂ ≥ 1` at the optimum.
    pub flagged_steps: usize,
    pub warnings: Vec<String>,
}

impl EstimateResult {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let m = self.covariance.len();
        DMatrix::from_fn(m, m, |i, j| self.covariance[i][j])
    }

    /// Plain-text table: parameter, value, robust SE, t-statistic.
    pub fn table(&self) -> String {
        let mut s = format!("{:<16} {:>14} {:>14} {:>10}\n", "parameter", "value", "robust s.e.", "t-stat");
        for k in 0..self.names.len() {
            s += &format!(
                "{:<16} {:>14.6e} {:>14.6e} {:>10.3}\n",
                self.names[k], self.estimates[k], self.robust_se[k], self.t_stats[k]
            );
        }
        s
    }
}

/// Map between the free natural parameters and the optimizer coordinates.
struct Transform {
    kinds: Vec<StaticKind>,
}

impl Transform {
    fn new(statics: &StaticParams) -> Self {
        Transform { kinds: statics.restriction.groups.iter().map(|g| g.kind).collect() }
    }

    fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.kinds)
            .map(|(&v, k)| match k {
                StaticKind::Alpha => v.max(LOG_ALPHA_FLOOR).exp(),
                StaticKind::Beta => 1.0 / (1.0 + (-v).exp()),
                StaticKind::Omega => v,
            })
            .collect()
    }

    fn to_free(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.kinds)
            .map(|(&v, k)| match k {
                StaticKind::Alpha => v.max(1e-8).ln(),
                StaticKind::Beta => {
                    let b = v.clamp(1e-6, 1.0 - 1e-9);
                    (b / (1.0 - b)).ln()
                }
                StaticKind::Omega => v,
            })
            .collect()
    }
}

/// Total penalized log-likelihood at the given free natural values, or
/// `−∞` when the filter diverges.
pub fn objective(model: &Model, y: &[DVector<f64>], template: &StaticParams, theta0: &[f64], free: &[f64]) -> f64 {
    match template.with_free(free) {
        Ok(sp) => filter_loglik(model, y, &sp, theta0).unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Penalized PML over the groups of `template.restriction`; members outside
/// the groups stay at their template values.
pub fn fit(y: &[DVector<f64>], spec: &ModelSpec, template: &StaticParams, theta0: &[f64], opts: FitOptions) -> Result<EstimateResult> {
    let model = Model::new(spec)?;
    template.validate(spec.dim())?;
    if template.restriction.is_empty() {
        return Err(SvarError::InvalidArgument("no free static parameters".into()));
    }
    let steps = y.len().saturating_sub(spec.lag_mode.max_lag()).max(1) as f64;
    let tr = Transform::new(template);
    let x_init = template.free_values();
    let init_loglik = objective(&model, y, template, theta0, &x_init);
    let neg = |z: &[f64]| -objective(&model, y, template, theta0, &tr.to_natural(z)) / steps;

    let z0 = tr.to_free(&x_init);
    let starts: Vec<Vec<f64>> = (0..opts.starts.max(1))
        .map(|s| {
            z0.iter()
                .enumerate()
                .map(|(i, &v)| if s == 0 { v } else { v + if (i + s) % 2 == 0 { 1.0 } else { -1.0 } })
                .collect()
        })
        .collect();
    let nm_opts = NelderMeadOptions { max_evals: opts.max_evals, ftol: 1e-10, xtol: 1e-4, initial_step: 0.5 };
    let runs = parallel::map_indexed(starts.len(), |s| nelder_mead(neg, &starts[s], nm_opts));
    let mut best = runs.into_iter().min_by(|a, b| a.f.total_cmp(&b.f)).expect("at least one start");
    let mut status = best.status;
    if opts.polish {
        let pol = bfgs(neg, &best.x, BfgsOptions { max_iter: 50, gtol: 1e-7, fd_step: 1e-5 });
        if pol.f <= best.f {
            best.x = pol.x;
            best.f = pol.f;
            status = match (status, pol.status) {
                (Convergence::Converged, _) | (_, Convergence::Converged) => Convergence::Converged,
                (_, other) => other,
            };
        }
    }
    let mut x_hat = tr.to_natural(&best.x);
    let mut loglik = -best.f * steps;
    if init_loglik.is_finite() && init_loglik > loglik {
        x_hat = x_init.clone();
        loglik = init_loglik;
    }
    if !loglik.is_finite() {
        return Err(SvarError::InvalidArgument("every candidate static vector makes the filter diverge".into()));
    }
    let statics = template.with_free(&x_hat)?;
    let se = robust_se_with(&model, y, &statics, theta0, opts.hessian_step)?;
    let fo = run_filter(y, spec, &statics, theta0)?;
    let mut warnings = se.warnings.clone();
    if fo.flag_count() == fo.len() {
        warnings.push("every filtered step violates stability".into());
    }
    let t_stats = x_hat.iter().zip(&se.se).map(|(v, s)| v / s).collect();
    Ok(EstimateResult {
        names: statics.restriction.names(),
        estimates: x_hat,
        robust_se: se.se,
        t_stats,
        loglik,
        init_loglik,
        convergence: status,
        covariance: (0..se.covariance.nrows()).map(|i| se.covariance.row(i).iter().copied().collect()).collect(),
        flagged_steps: fo.flag_count(),
        warnings,
        statics,
    })
}

/// Sandwich covariance and its ingredients.
#[derive(Debug, Clone)]
pub struct RobustSe {
    pub se: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// `−H⁻¹`, the covariance under the information equality.
    pub hessian_covariance: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    pub outer_product: DMatrix<f64>,
    pub warnings: Vec<String>,
}

/// `H⁻¹ J H⁻¹` with `H` the numerical Hessian of the total log-likelihood
/// and `J` the outer product of per-step score contributions, both with
/// respect to the free statics.
pub fn robust_se(y: &[DVector<f64>], spec: &ModelSpec, statics: &StaticParams, theta0: &[f64]) -> Result<RobustSe> {
    robust_se_with(&Model::new(spec)?, y, statics, theta0, FitOptions::default().hessian_step)
}

fn robust_se_with(model: &Model, y: &[DVector<f64>], statics: &StaticParams, theta0: &[f64], rel: f64) -> Result<RobustSe> {
    let x = statics.free_values();
    let m = x.len();
    let h: Vec<f64> = x.iter().map(|v| rel * v.abs().max(1e-6)).collect();
    let total = |v: &[f64]| objective(model, y, statics, theta0, v);
    let hess = numerical_hessian(&total, &x, &h);

    let contrib = |v: &[f64]| -> Result<Vec<f64>> { filter_contributions(model, y, &statics.with_free(v)?, theta0) };
    let grads: Vec<Result<Vec<f64>>> = parallel::map_indexed(m, |k| {
        let mut p = x.clone();
        p[k] += h[k];
        let mut q = x.clone();
        q[k] -= h[k];
        let (cp, cq) = (contrib(&p)?, contrib(&q)?);
        Ok(cp.iter().zip(&cq).map(|(a, b)| (a - b) / (2.0 * h[k])).collect())
    });
    let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
    let steps = grads.first().map_or(0, |g| g.len());
    let mut opg = DMatrix::zeros(m, m);
    for t in 0..steps {
        let g = DVector::from_fn(m, |k, _| grads[k][t]);
        opg += &g * g.transpose();
    }

    let mut warnings = Vec::new();
    let hinv = match hess.clone().try_inverse().filter(|inv| inv.iter().all(|v| v.is_finite())) {
        Some(inv) if hess.iter().all(|v| v.is_finite()) => inv,
        _ => {
            warnings.push("Hessian is singular; using its pseudo-inverse".into());
            hess.clone().pseudo_inverse(1e-12).map_err(|_| SvarError::Singular("Hessian"))?
        }
    };
    let covariance = &hinv * &opg * &hinv;
    let se = (0..m).map(|k| covariance[(k, k)].max(0.0).sqrt()).collect();
    Ok(RobustSe { se, covariance, hessian_covariance: -&hinv, hessian: hess, outer_product: opg, warnings })
}

/// Smallest |δ| accepted when refitting densities.
pub const MIN_ABS_DELTA: f64 = 0.05;

/// Second step: refit each component's (δ, ν) to the skewness and kurtosis
/// of the filtered shocks, then restore the identification conditions.
pub fn two_step_densities(
    y: &[DVector<f64>],
    spec: &ModelSpec,
    statics: &StaticParams,
    theta0: &[f64],
) -> Result<(ModelSpec, Vec<String>)> {
    let fo = run_filter(y, spec, statics, theta0)?;
    let shocks: Vec<Vec<f64>> = (0..spec.n).map(|i| fo.shocks.iter().map(|e| e[i]).collect()).collect();
    Ok(refit_densities(spec, &shocks))
}

/// Density refit from per-component shock samples.
pub fn refit_densities(spec: &ModelSpec, shocks: &[Vec<f64>]) -> (ModelSpec, Vec<String>) {
    let mut warnings = Vec::new();
    let mut out = spec.clone();
    for (i, e) in shocks.iter().enumerate() {
        let (s, k) = (skewness(e), kurtosis(e));
        match target_moments(s, k) {
            Ok(p) => out.skewt[i] = p,
            Err(err) => warnings.push(format!("component {}: keeping previous density ({err})", i + 1)),
        }
    }
    enforce_identification(&mut out.skewt, &mut warnings);
    (out, warnings)
}

fn enforce_identification(p: &mut [SkewTParams], warnings: &mut Vec<String>) {
    for (i, q) in p.iter_mut().enumerate() {
        if q.delta.abs() < MIN_ABS_DELTA {
            let d = if q.delta < 0.0 { -MIN_ABS_DELTA } else { MIN_ABS_DELTA };
            warnings.push(format!("component {}: delta {:.4} moved to {d} to keep the shock asymmetric", i + 1, q.delta));
            q.delta = d;
        }
    }
    for i in 1..p.len() {
        loop {
            let clash_nu = (0..i).any(|j| (p[j].nu - p[i].nu).abs() < 1e-3);
            let clash_delta = (0..i).any(|j| (p[j].delta - p[i].delta).abs() < 1e-3);
            if !clash_nu && !clash_delta {
                break;
            }
            if clash_nu {
                warnings.push(format!("component {}: nu {:.4} shifted by +0.1 to stay distinct", i + 1, p[i].nu));
                p[i].nu += 0.1;
            }
            if clash_delta {
                let step = if p[i].delta < 0.0 { -0.01 } else { 0.01 };
                let nd = (p[i].delta + step).clamp(-0.99, 0.99);
                warnings.push(format!("component {}: delta {:.4} shifted to {nd:.4} to stay distinct", i + 1, p[i].delta));
                p[i].delta = nd;
            }
        }
    }
}
