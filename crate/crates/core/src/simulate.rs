//! Data-generating processes with recorded parameter paths, and the
//! Monte-Carlo replication driver.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::estimate::{fit, FitOptions};
use crate::filter::{init_theta, run_filter, run_smoother, BURN_IN};
use crate::model::{step_into, unpack, Component, LagMode, Model, ModelSpec, StaticParams, ThetaVector};
use crate::rng::stream;
use crate::skewt::SkewTParams;
use crate::stats::Band;
use crate::{parallel, Result, SvarError};

/// Loadings of one parameter matrix on the shocks: row `r` of the `n² × n`
/// matrix moves `vec(M)[r]` (column-major).
pub type Loading = Vec<Vec<f64>>;

/// Random-walk parameters driven linearly by the structural shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockLoadings {
    pub alpha_s: f64,
    pub alpha_a: f64,
    pub alpha_phi: Vec<f64>,
    pub loading_s: Loading,
    pub loading_a: Loading,
    pub loading_phi: Vec<Loading>,
}

impl ShockLoadings {
    /// Three-variable, two-lag loadings with every α equal to 0.01.
    pub fn reference() -> Self {
        let l_s = vec![
            vec![0.0, 0.0, 1.0],
            vec![-0.5, 0.0, 0.0],
            vec![0.0, 0.5, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.5],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ];
        let l_skew = vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, -1.0],
            vec![0.0, 0.0, 0.0],
        ];
        ShockLoadings {
            alpha_s: 0.01,
            alpha_a: 0.01,
            alpha_phi: vec![0.01, 0.01],
            loading_s: l_s,
            loading_a: l_skew.clone(),
            loading_phi: vec![l_skew.clone(), l_skew],
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        let n = spec.n;
        let blocks = spec.lag_mode.blocks();
        let ok = |l: &Loading| l.len() == n * n && l.iter().all(|r| r.len() == n);
        if !ok(&self.loading_s) || !ok(&self.loading_a) || !self.loading_phi.iter().all(ok) {
            return Err(SvarError::Shape { context: "loading matrix rows", expected: n * n, got: self.loading_s.len() });
        }
        if self.loading_phi.len() != blocks || self.alpha_phi.len() != blocks {
            return Err(SvarError::Shape { context: "lag-block loadings", expected: blocks, got: self.loading_phi.len() });
        }
        Ok(())
    }

    /// `Δθ` for one shock vector. Rows of the S loading above the diagonal
    /// and rows of the A loading on or below it are ignored, since those
    /// entries are not free.
    fn increment(&self, spec: &ModelSpec, eps: &DVector<f64>) -> Vec<f64> {
        let lay = spec.layout();
        let n = spec.n;
        let row = |l: &Loading, r: usize| l[r].iter().zip(eps.iter()).map(|(a, e)| a * e).sum::<f64>();
        (0..lay.dim())
            .map(|k| match lay.component(k) {
                Component::S { i, j } => self.alpha_s * row(&self.loading_s, j * n + i),
                Component::A { i, j } => self.alpha_a * row(&self.loading_a, j * n + i),
                Component::Phi { block, i, j } => self.alpha_phi[block] * row(&self.loading_phi[block], j * n + i),
            })
            .collect()
    }
}

fn default_s_amp() -> f64 {
    0.25
}
fn default_a_amp() -> f64 {
    5.0
}
fn default_phi_amp() -> f64 {
    0.95
}

/// How θ evolves in the simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpKind {
    /// θ fixed at `theta0`.
    Constant,
    /// The model's own recursion with the given statics.
    ScoreDriven { statics: StaticParams },
    /// `S_t = S₀(1 + a_S sin(2πt/T))`, `A_t = A₀(1 + a_A sin(2π(t + 4T)/(4T)))`,
    /// `Φ_t = Φ₀(1 + a_Φ sin(2πt/T))`.
    DeterministicSine {
        #[serde(default = "default_s_amp")]
        s_amplitude: f64,
        #[serde(default = "default_a_amp")]
        a_amplitude: f64,
        #[serde(default = "default_phi_amp")]
        phi_amplitude: f64,
    },
    /// Driftless random walk moved by the structural shocks.
    ShockDrivenRw { loadings: ShockLoadings },
}

/// A complete simulation recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub spec: ModelSpec,
    pub t_len: usize,
    pub theta0: ThetaVector,
    pub kind: DgpKind,
    pub seed: u64,
}

/// Simulated sample with the parameters and shocks that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub y: Vec<Vec<f64>>,
    pub theta_true: Vec<ThetaVector>,
    pub eps_true: Vec<Vec<f64>>,
}

impl SimOutput {
    pub fn y_vectors(&self) -> Vec<DVector<f64>> {
        self.y.iter().map(|r| DVector::from_column_slice(r)).collect()
    }
}

/// Three-variable spec with asymmetries (−0.7, −0.6, 0.7) and tail
/// exponents (5, 6, 5.5).
pub fn reference_spec(lag_mode: LagMode) -> ModelSpec {
    ModelSpec::new(
        lag_mode,
        vec![
            SkewTParams { delta: -0.7, nu: 5.0 },
            SkewTParams { delta: -0.6, nu: 6.0 },
            SkewTParams { delta: 0.7, nu: 5.5 },
        ],
    )
    .expect("reference parameters are valid")
}

/// `S₀ = log(0.1) I`, `A₀` with upper entries (−0.11, 0.23, −0.03),
/// lag blocks 0.3 I and 0.2 I.
pub fn reference_theta0(spec: &ModelSpec) -> ThetaVector {
    let n = spec.n;
    let lay = spec.layout();
    let mut th = vec![0.0; lay.dim()];
    for i in 0..n {
        th[lay.s_index(i, i)] = 0.1f64.ln();
    }
    if n == 3 {
        th[lay.a_index(0, 1)] = -0.11;
        th[lay.a_index(0, 2)] = 0.23;
        th[lay.a_index(1, 2)] = -0.03;
    }
    let diag = [0.3, 0.2];
    for b in 0..lay.blocks {
        for i in 0..n {
            th[lay.phi_index(b, i, i)] = *diag.get(b).unwrap_or(&0.0);
        }
    }
    ThetaVector(th)
}

/// Score-driven reference DGP: one α for S, one for A, one per lag block,
/// integrated recursion.
pub fn reference_score_driven(t_len: usize, seed: u64) -> DgpConfig {
    let spec = reference_spec(LagMode::Plain { p: 2 });
    let statics = StaticParams::integrated(
        spec.dim(),
        crate::model::RestrictionMap::by_matrix(&spec),
        &[0.01, 0.01, 0.001, 0.001],
    )
    .expect("valid reference statics");
    DgpConfig { theta0: reference_theta0(&spec), spec, t_len, kind: DgpKind::ScoreDriven { statics }, seed }
}

pub fn reference_sine(t_len: usize, seed: u64) -> DgpConfig {
    let spec = reference_spec(LagMode::Plain { p: 2 });
    DgpConfig {
        theta0: reference_theta0(&spec),
        spec,
        t_len,
        kind: DgpKind::DeterministicSine { s_amplitude: 0.25, a_amplitude: 5.0, phi_amplitude: 0.95 },
        seed,
    }
}

pub fn reference_shock_driven(t_len: usize, seed: u64) -> DgpConfig {
    let spec = reference_spec(LagMode::Plain { p: 2 });
    DgpConfig {
        theta0: reference_theta0(&spec),
        spec,
        t_len,
        kind: DgpKind::ShockDrivenRw { loadings: ShockLoadings::reference() },
        seed,
    }
}

/// Monthly-style setting: heterogeneous lags, score-driven with separate
/// α's for diagonals and shared ones for off-diagonals (13 groups).
pub fn empirical_style(t_len: usize, seed: u64) -> DgpConfig {
    let spec = reference_spec(LagMode::Heterogeneous);
    let restriction = crate::model::RestrictionMap::diagonal_offdiagonal(&spec);
    let alphas: Vec<f64> = restriction
        .groups
        .iter()
        .map(|g| match g.name.as_str() {
            n if n.starts_with("alpha_S") => if n.ends_with("off") { 0.005 } else { 0.01 },
            "alpha_A" => 0.01,
            n if n.ends_with("off") => 0.0005,
            _ => 0.001,
        })
        .collect();
    let statics = StaticParams::integrated(spec.dim(), restriction, &alphas).expect("valid statics");
    DgpConfig { theta0: reference_theta0(&spec), spec, t_len, kind: DgpKind::ScoreDriven { statics }, seed }
}

fn sine_theta(cfg: &DgpConfig, t: usize, s_amp: f64, a_amp: f64, phi_amp: f64) -> ThetaVector {
    let lay = cfg.spec.layout();
    let tt = cfg.t_len as f64;
    let tf = t as f64;
    let ws = 1.0 + s_amp * (2.0 * PI * tf / tt).sin();
    let wa = 1.0 + a_amp * (2.0 * PI * (tf + 4.0 * tt) / (4.0 * tt)).sin();
    let wp = 1.0 + phi_amp * (2.0 * PI * tf / tt).sin();
    ThetaVector(
        cfg.theta0
            .iter()
            .enumerate()
            .map(|(k, &v)| match lay.component(k) {
                Component::S { .. } => v * ws,
                Component::A { .. } => v * wa,
                Component::Phi { .. } => v * wp,
            })
            .collect(),
    )
}

/// Source of structural shocks for the simulator.
pub trait ShockSource {
    fn draw(&mut self, model: &Model) -> DVector<f64>;
}

impl<R: RngCore> ShockSource for R {
    fn draw(&mut self, model: &Model) -> DVector<f64> {
        DVector::from_iterator(model.spec().n, model.densities().iter().map(|d| d.sample(self)))
    }
}

/// Simulate with the stream `(cfg.seed, 0)`.
pub fn simulate(cfg: &DgpConfig) -> Result<SimOutput> {
    simulate_with(cfg, &mut stream(cfg.seed, 0))
}

/// Simulate with an explicit shock source. Observations before the first
/// full lag window use zero pre-sample values and θ₀; the parameters start
/// moving at that first full window, which is where the filter starts.
pub fn simulate_with<S: ShockSource + ?Sized>(cfg: &DgpConfig, shocks: &mut S) -> Result<SimOutput> {
    let spec = &cfg.spec;
    let model = Model::new(spec)?;
    let d = spec.dim();
    if cfg.theta0.len() != d {
        return Err(SvarError::Shape { context: "theta0", expected: d, got: cfg.theta0.len() });
    }
    let max_lag = spec.lag_mode.max_lag();
    if cfg.t_len <= max_lag {
        return Err(SvarError::InsufficientHistory { needed: max_lag + 1, have: cfg.t_len });
    }
    match &cfg.kind {
        DgpKind::Constant => {
            let (_, _, phis) = unpack(&cfg.theta0, spec)?;
            let rho = model.companion(&phis)?.eigen_radius();
            if rho >= 1.0 {
                return Err(SvarError::ExplosiveDgp(rho));
            }
        }
        DgpKind::ScoreDriven { statics } => statics.validate(d)?,
        DgpKind::ShockDrivenRw { loadings } => loadings.check(spec)?,
        DgpKind::DeterministicSine { .. } => {}
    }

    let n = spec.n;
    let mut padded: Vec<DVector<f64>> = vec![DVector::zeros(n); max_lag];
    let mut theta = cfg.theta0.0.clone();
    let mut out = SimOutput { y: Vec::with_capacity(cfg.t_len), theta_true: Vec::with_capacity(cfg.t_len), eps_true: Vec::with_capacity(cfg.t_len) };
    for t in 0..cfg.t_len {
        if let DgpKind::DeterministicSine { s_amplitude, a_amplitude, phi_amplitude } = cfg.kind {
            theta = sine_theta(cfg, t, s_amplitude, a_amplitude, phi_amplitude).0;
        }
        let st = model.structure(&theta)?;
        let eps = shocks.draw(&model);
        let x = spec.lag_mode.regressors(&padded)?;
        let y = st.conditional_mean(&x) + st.mixing()? * &eps;
        if y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
            return Err(SvarError::SampleExploded { t, magnitude: y.amax() });
        }
        padded.push(y.clone());
        out.y.push(y.iter().copied().collect());
        out.theta_true.push(ThetaVector(theta.clone()));
        out.eps_true.push(eps.iter().copied().collect());
        if t < max_lag {
            continue;
        }
        match &cfg.kind {
            DgpKind::ScoreDriven { statics } => {
                let window = &padded[padded.len() - 1 - max_lag..];
                let ev = model.evaluate(window, &theta, statics.needs_scores(), true)?;
                step_into(&mut theta, ev.scores.as_deref(), statics);
            }
            DgpKind::ShockDrivenRw { loadings } => {
                for (th, inc) in theta.iter_mut().zip(loadings.increment(spec, &eps)) {
                    *th += inc;
                }
            }
            DgpKind::Constant | DgpKind::DeterministicSine { .. } => {}
        }
        let magnitude = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= crate::filter::DIVERGENCE_LIMIT) {
            return Err(SvarError::SampleExploded { t, magnitude });
        }
    }
    Ok(out)
}

/// Where the filter starts in each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// The true θ₀.
    True,
    /// OLS on the first `window` observations, `A = 0`.
    Ols { window: usize },
}

/// Which statics the filter uses in each replication.
#[derive(Debug, Clone, PartialEq)]
pub enum StaticsChoice {
    Given(StaticParams),
    Estimate { template: StaticParams, options: FitOptions },
}

#[derive(Debug, Clone, PartialEq)]
pub struct McAnalysis {
    pub statics: StaticsChoice,
    pub init: InitStrategy,
    pub smoother: bool,
    /// θ components to summarize.
    pub components: Vec<usize>,
}

/// Per-replication outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    /// Free statics used (estimated or given).
    pub estimates: Vec<f64>,
    /// `[component][t]` filtered minus true.
    pub filtered_error: Vec<Vec<f64>>,
    pub smoothed_error: Option<Vec<Vec<f64>>>,
    /// `[component][t]` true values.
    pub truth: Vec<Vec<f64>>,
    /// θ_T − θ_0 of the simulated path, all components.
    pub drift: Vec<f64>,
}

/// Per-time bands across replications, for the filtered and (optionally)
/// smoothed errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBands {
    pub component: usize,
    pub label: String,
    pub filtered_abs: Vec<Band>,
    pub filtered_rel: Vec<Band>,
    pub smoothed_abs: Option<Vec<Band>>,
    pub smoothed_rel: Option<Vec<Band>>,
}

impl ErrorBands {
    /// Share of steps after the burn-in where zero lies inside the band.
    pub fn zero_coverage(bands: &[Band], burn_in: usize) -> f64 {
        let tail = &bands[burn_in.min(bands.len())..];
        tail.iter().filter(|b| b.contains(0.0)).count() as f64 / tail.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    /// Index of the first filtered observation.
    pub start: usize,
    pub bands: Vec<ErrorBands>,
    pub replications: Vec<Replication>,
    pub failures: Vec<(usize, String)>,
}

impl McSummary {
    pub fn burn_in(&self) -> usize {
        BURN_IN
    }

    /// Estimates of free parameter `g` across successful replications.
    pub fn estimates_of(&self, g: usize) -> Vec<f64> {
        self.replications.iter().map(|r| r.estimates[g]).collect()
    }

    /// Mean over `steps` of the per-step median `|error|` across
    /// replications, for the `ci`-th summarized component.
    pub fn median_abs_error(&self, ci: usize, steps: std::ops::Range<usize>, smoothed: bool) -> Option<f64> {
        let mut total = 0.0;
        let count = steps.len();
        for t in steps {
            let vals = self
                .replications
                .iter()
                .map(|r| {
                    let e = if smoothed { r.smoothed_error.as_ref()?[ci][t] } else { r.filtered_error[ci][t] };
                    Some(e.abs())
                })
                .collect::<Option<Vec<f64>>>()?;
            total += crate::stats::quantile(&vals, 0.5);
        }
        Some(total / count.max(1) as f64)
    }
}

fn run_replication(cfg: &DgpConfig, r: usize, analysis: &McAnalysis) -> Result<Replication> {
    let sim = simulate_with(cfg, &mut stream(cfg.seed, r as u64))?;
    let y = sim.y_vectors();
    let spec = &cfg.spec;
    let theta0 = match analysis.init {
        InitStrategy::True => cfg.theta0.clone(),
        InitStrategy::Ols { window } => init_theta(&y, spec, window)?,
    };
    let statics = match &analysis.statics {
        StaticsChoice::Given(sp) => sp.clone(),
        StaticsChoice::Estimate { template, options } => fit(&y, spec, template, &theta0, *options)?.statics,
    };
    let fo = run_filter(&y, spec, &statics, &theta0)?;
    let sm = if analysis.smoother { Some(run_smoother(&y, spec, &statics, &fo)?) } else { None };
    let start = fo.start;
    let truth: Vec<Vec<f64>> = analysis.components.iter().map(|&c| sim.theta_true[start..].iter().map(|th| th[c]).collect()).collect();
    let err = |path: &[ThetaVector]| -> Vec<Vec<f64>> {
        analysis
            .components
            .iter()
            .enumerate()
            .map(|(ci, &c)| path.iter().zip(&truth[ci]).map(|(th, tr)| th[c] - tr).collect())
            .collect()
    };
    let last = sim.theta_true.last().expect("non-empty sample");
    Ok(Replication {
        estimates: statics.free_values(),
        filtered_error: err(&fo.theta_path),
        smoothed_error: sm.as_ref().map(|s| err(&s.theta_path)),
        truth,
        drift: last.iter().zip(cfg.theta0.iter()).map(|(a, b)| a - b).collect(),
    })
}

/// Replicate simulation and filtering `replications` times; replication `r`
/// draws from stream `(cfg.seed, r)`. Failed replications are listed, not
/// fatal.
pub fn mc_study(cfg: &DgpConfig, replications: usize, analysis: &McAnalysis) -> Result<McSummary> {
    if replications < 2 {
        return Err(SvarError::InvalidArgument("a Monte-Carlo study needs at least two replications".into()));
    }
    let results = parallel::map_indexed(replications, |r| run_replication(cfg, r, analysis));
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(rep) => reps.push(rep),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if reps.is_empty() {
        return Err(SvarError::InvalidArgument(format!("all {replications} replications failed: {}", failures[0].1)));
    }
    let labels = cfg.spec.layout().labels(&cfg.spec.lag_mode);
    let steps = reps[0].truth.first().map_or(0, |v| v.len());
    let band_at = |get: &dyn Fn(&Replication) -> f64| -> Band {
        let vals: Vec<f64> = reps.iter().map(get).collect();
        Band::of(&vals)
    };
    let bands = analysis
        .components
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let series = |pick: &dyn Fn(&Replication, usize) -> f64| (0..steps).map(|t| band_at(&|r| pick(r, t))).collect::<Vec<_>>();
            let rel = |e: f64, tr: f64| e / tr.abs();
            let has_smooth = reps[0].smoothed_error.is_some();
            ErrorBands {
                component: c,
                label: labels[c].clone(),
                filtered_abs: series(&|r, t| r.filtered_error[ci][t]),
                filtered_rel: series(&|r, t| rel(r.filtered_error[ci][t], r.truth[ci][t])),
                smoothed_abs: has_smooth.then(|| series(&|r, t| r.smoothed_error.as_ref().expect("smoothed")[ci][t])),
                smoothed_rel: has_smooth
                    .then(|| series(&|r, t| rel(r.smoothed_error.as_ref().expect("smoothed")[ci][t], r.truth[ci][t]))),
            }
        })
        .collect();
    Ok(McSummary { start: cfg.spec.lag_mode.max_lag(), bands, replications: reps, failures })
}

/// Yule–Walker autocovariances `Γ(0)` and `Γ(1)` of a stable constant VAR
/// with innovation covariance `C Cᵀ`, from the companion Lyapunov equation.
pub fn yule_walker(phis: &[DMatrix<f64>], c: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let comp = crate::matcalc::CompanionMatrix::from_blocks(phis)?;
    let f = comp.matrix().clone();
    let n = c.nrows();
    let m = f.nrows();
    let mut q = DMatrix::zeros(m, m);
    q.view_mut((0, 0), (n, n)).copy_from(&(c * c.transpose()));
    // Doubling iteration for Γ = F Γ Fᵀ + Q.
    let mut gamma = q.clone();
    let mut a = f.clone();
    for _ in 0..60 {
        let next = &gamma + &a * &gamma * a.transpose();
        a = &a * &a;
        let done = (&next - &gamma).amax() <= 1e-15 * next.amax();
        gamma = next;
        if done {
            break;
        }
    }
    let g0 = gamma.view((0, 0), (n, n)).into_owned();
    let g1 = (&f * &gamma).view((0, 0), (n, n)).into_owned();
    Ok((g0, g1))
}
