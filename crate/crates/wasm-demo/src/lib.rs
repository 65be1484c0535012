//! Browser bindings for the static demo page in `www/`.
//!
//! Three operations: the skew-t density for chosen shape parameters, a
//! simulated sample tracked by the filter, and conditional impulse
//! responses at the end of that sample.

use wasm_bindgen::prelude::*;

use sdsvar::irf::{irf, linear_irf, IrfOptions, IrfResult};
use sdsvar::model::RestrictionMap;
use sdsvar::simulate::{self, DgpConfig, SimOutput};
use sdsvar::skewt::{moments, SkewT, SkewTParams};
use sdsvar::{filter, StaticParams};

fn js(e: sdsvar::SvarError) -> JsError {
    JsError::new(&e.to_string())
}

/// Density of the standardized skew-t on an even grid over `[lo, hi]`.
pub fn density_grid(delta: f64, nu: f64, lo: f64, hi: f64, points: usize) -> sdsvar::Result<Vec<f64>> {
    let d = SkewT::new(SkewTParams::new(delta, nu)?)?;
    let step = (hi - lo) / (points.max(2) - 1) as f64;
    Ok((0..points.max(2)).map(|k| d.log_pdf(lo + k as f64 * step).exp()).collect())
}

#[wasm_bindgen]
pub fn density(delta: f64, nu: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    density_grid(delta, nu, lo, hi, points).map_err(js)
}

/// `[skewness, kurtosis]`; infinite where the moment does not exist.
#[wasm_bindgen]
pub fn shape_moments(delta: f64, nu: f64) -> Vec<f64> {
    let (s, k) = moments(SkewTParams { delta, nu });
    vec![s, k]
}

fn dgp(name: &str, t_len: usize, seed: u64) -> sdsvar::Result<DgpConfig> {
    Ok(match name {
        "score_driven" => simulate::reference_score_driven(t_len, seed),
        "sine" => simulate::reference_sine(t_len, seed),
        "shock_driven" => simulate::reference_shock_driven(t_len, seed),
        other => return Err(sdsvar::SvarError::InvalidArgument(format!("unknown process `{other}`"))),
    })
}

/// A simulated sample with its true and filtered parameter paths.
#[wasm_bindgen]
pub struct Tracking {
    cfg: DgpConfig,
    statics: StaticParams,
    sim: SimOutput,
    fo: filter::FilterOutput,
}

impl Tracking {
    /// The filter runs with the statics of the score-driven process scaled
    /// by `alpha_scale`, started at the true θ₀.
    pub fn build(process: &str, t_len: usize, seed: u64, alpha_scale: f64) -> sdsvar::Result<Tracking> {
        let cfg = dgp(process, t_len, seed)?;
        let base = [0.01, 0.01, 0.001, 0.001].map(|a| a * alpha_scale);
        let statics = StaticParams::integrated(cfg.spec.dim(), RestrictionMap::by_matrix(&cfg.spec), &base)?;
        let sim = simulate::simulate(&cfg)?;
        let fo = filter::run_filter(&sim.y_vectors(), &cfg.spec, &statics, &cfg.theta0)?;
        Ok(Tracking { cfg, statics, sim, fo })
    }

    pub fn impulse(&self, horizon: usize, draws: usize, seed: u64) -> sdsvar::Result<(IrfResult, Vec<f64>)> {
        let opts = IrfOptions { horizon, draws: draws + draws % 2, antithetic: true, seed };
        let res = irf(&self.sim.y_vectors(), &self.cfg.spec, &self.statics, &self.fo.theta_next, opts)?;
        let frozen = linear_irf(&self.fo.theta_next, &self.cfg.spec, horizon)?;
        Ok((res, frozen))
    }
}

#[wasm_bindgen]
impl Tracking {
    #[wasm_bindgen(constructor)]
    pub fn new(process: &str, t_len: usize, seed: u32, alpha_scale: f64) -> Result<Tracking, JsError> {
        Tracking::build(process, t_len, seed.into(), alpha_scale).map_err(js)
    }

    pub fn labels(&self) -> Vec<String> {
        self.cfg.spec.layout().labels(&self.cfg.spec.lag_mode)
    }

    /// Index of the first filtered observation.
    pub fn start(&self) -> usize {
        self.fo.start
    }

    pub fn truth(&self, k: usize) -> Vec<f64> {
        self.sim.theta_true[self.fo.start..].iter().map(|th| th[k]).collect()
    }

    pub fn filtered(&self, k: usize) -> Vec<f64> {
        self.fo.component(k)
    }

    pub fn observed(&self, i: usize) -> Vec<f64> {
        self.sim.y.iter().map(|r| r[i]).collect()
    }

    pub fn loglik(&self) -> f64 {
        self.fo.loglik
    }

    /// Responses to shock `shock` at the end of the sample, returned as
    /// `[mean | half-width | constant-θ]`, each block flat `[i][k]`.
    pub fn responses(&self, shock: usize, horizon: usize, draws: usize, seed: u32) -> Result<Vec<f64>, JsError> {
        let (res, frozen) = self.impulse(horizon, draws, seed.into()).map_err(js)?;
        let n = res.n;
        if shock >= n {
            return Err(JsError::new("shock index out of range"));
        }
        let block = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            (0..n).flat_map(|i| (0..=horizon).map(move |k| (i, k))).map(|(i, k)| f(i, k)).collect()
        };
        let mut out = block(&|i, k| res.response(i, shock, k));
        out.extend(block(&|i, k| res.halfwidth(i, shock, k)));
        out.extend(block(&|i, k| frozen[(i * n + shock) * (horizon + 1) + k]));
        Ok(out)
    }
}
