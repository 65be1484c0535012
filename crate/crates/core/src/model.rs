//! The score-driven SVAR: parameter layout, conditional likelihood, analytic
//! scores, stability penalty and the parameter update.
//!
//! θ layout: `vech(S)` (row-major lower triangle), then the strict upper
//! triangle of `A` (row-major), then each lag block `vec(Φ)` (column-major).

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::matcalc::{
    cayley, mat_exp, mat_exp_frechet, spectral_radius_gradient, spectral_radius_screened, CompanionMatrix,
    LowerTriangular, SkewSymmetric,
};
use crate::skewt::{SkewT, SkewTParams};
use crate::{Result, SvarError};

pub const DEFAULT_PENALTY_K: f64 = 200.0;
pub const DEFAULT_SQUARING_Q: u32 = 10;

/// Number of monthly lags averaged into the semester regressor.
pub const SEMESTER_SPAN: usize = 5;

/// Lag structure of the conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagMode {
    /// `Φ¹ y_{t−1} + … + Φᵖ y_{t−p}`.
    Plain { p: usize },
    /// `Φᵐ y_{t−1} + Φˢ ȳ`, with `ȳ` the mean of `y_{t−2} … y_{t−6}`.
    Heterogeneous,
}

impl LagMode {
    pub fn blocks(&self) -> usize {
        match self {
            LagMode::Plain { p } => *p,
            LagMode::Heterogeneous => 2,
        }
    }

    /// Past observations needed per time step.
    pub fn max_lag(&self) -> usize {
        match self {
            LagMode::Plain { p } => *p,
            LagMode::Heterogeneous => 1 + SEMESTER_SPAN,
        }
    }

    /// Block positions (and weights) at which a coefficient block enters the
    /// companion top row.
    pub fn companion_positions(&self, block: usize) -> Vec<(usize, f64)> {
        match (self, block) {
            (LagMode::Plain { .. }, b) => vec![(b, 1.0)],
            (LagMode::Heterogeneous, 0) => vec![(0, 1.0)],
            (LagMode::Heterogeneous, _) => (1..=SEMESTER_SPAN).map(|k| (k, 1.0 / SEMESTER_SPAN as f64)).collect(),
        }
    }

    pub fn block_label(&self, block: usize) -> String {
        match self {
            LagMode::Plain { .. } => format!("Phi{}", block + 1),
            LagMode::Heterogeneous => if block == 0 { "PhiM" } else { "PhiS" }.to_string(),
        }
    }

    /// Regressors from `history`, whose last element is `y_{t−1}`.
    pub fn regressors(&self, history: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let need = self.max_lag();
        if history.len() < need {
            return Err(SvarError::InsufficientHistory { needed: need, have: history.len() });
        }
        let lag = |l: usize| &history[history.len() - l];
        Ok(match self {
            LagMode::Plain { p } => (1..=*p).map(|l| lag(l).clone()).collect(),
            LagMode::Heterogeneous => {
                let mut avg = lag(2).clone();
                for l in 3..=1 + SEMESTER_SPAN {
                    avg += lag(l);
                }
                vec![lag(1).clone(), avg / SEMESTER_SPAN as f64]
            }
        })
    }
}

fn default_penalty_k() -> f64 {
    DEFAULT_PENALTY_K
}

fn default_squaring_q() -> u32 {
    DEFAULT_SQUARING_Q
}

/// Model dimensions, lag structure, pseudo-densities and penalty settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub lag_mode: LagMode,
    pub skewt: Vec<SkewTParams>,
    #[serde(default = "default_penalty_k")]
    pub penalty_k: f64,
    #[serde(default = "default_squaring_q")]
    pub squaring_q: u32,
}

impl ModelSpec {
    pub fn new(lag_mode: LagMode, skewt: Vec<SkewTParams>) -> Result<Self> {
        let spec = ModelSpec {
            n: skewt.len(),
            lag_mode,
            skewt,
            penalty_k: DEFAULT_PENALTY_K,
            squaring_q: DEFAULT_SQUARING_Q,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Structural consistency.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(SvarError::InvalidArgument("n must be positive".into()));
        }
        if self.skewt.len() != self.n {
            return Err(SvarError::Shape { context: "skew-t parameters", expected: self.n, got: self.skewt.len() });
        }
        for p in &self.skewt {
            p.validate()?;
        }
        if let LagMode::Plain { p: 0 } = self.lag_mode {
            return Err(SvarError::InvalidArgument("lag order must be at least 1".into()));
        }
        if !(self.penalty_k >= 0.0) || !self.penalty_k.is_finite() {
            return Err(SvarError::InvalidArgument(format!("penalty_k = {}", self.penalty_k)));
        }
        if self.squaring_q == 0 || self.squaring_q > 60 {
            return Err(SvarError::InvalidArgument(format!("squaring_q = {}", self.squaring_q)));
        }
        Ok(())
    }

    /// Conditions under which the structural shocks are identified: at least
    /// two variables, all asymmetries non-zero, pairwise distinct asymmetries
    /// and tail exponents.
    pub fn check_identification(&self) -> Result<()> {
        self.validate()?;
        if self.n < 2 {
            return Err(SvarError::Identification("need at least two variables".into()));
        }
        for (i, p) in self.skewt.iter().enumerate() {
            if p.delta == 0.0 {
                return Err(SvarError::Identification(format!("component {} is symmetric", i + 1)));
            }
            for (j, q) in self.skewt.iter().enumerate().skip(i + 1) {
                if p.delta == q.delta {
                    return Err(SvarError::Identification(format!("components {} and {} share delta", i + 1, j + 1)));
                }
                if p.nu == q.nu {
                    return Err(SvarError::Identification(format!("components {} and {} share nu", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> ThetaLayout {
        ThetaLayout { n: self.n, blocks: self.lag_mode.blocks() }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }
}

/// Index arithmetic for θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub n: usize,
    pub blocks: usize,
}

/// Which matrix a θ component belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    S { i: usize, j: usize },
    A { i: usize, j: usize },
    Phi { block: usize, i: usize, j: usize },
}

impl ThetaLayout {
    pub fn s_len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn a_len(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.s_len() + self.a_len() + self.blocks * self.n * self.n
    }

    /// `S_ij`, `i ≥ j`, zero-based.
    pub fn s_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.n);
        i * (i + 1) / 2 + j
    }

    /// `A_ij`, `i < j`, zero-based.
    pub fn a_index(&self, i: usize, j: usize) -> usize {
        self.s_len() + SkewSymmetric::upper_index(self.n, i, j)
    }

    pub fn phi_index(&self, block: usize, i: usize, j: usize) -> usize {
        self.s_len() + self.a_len() + block * self.n * self.n + j * self.n + i
    }

    pub fn phi_range(&self) -> std::ops::Range<usize> {
        self.s_len() + self.a_len()..self.dim()
    }

    pub fn component(&self, k: usize) -> Component {
        let n = self.n;
        if k < self.s_len() {
            let mut i = 0;
            while (i + 1) * (i + 2) / 2 <= k {
                i += 1;
            }
            return Component::S { i, j: k - i * (i + 1) / 2 };
        }
        let mut r = k - self.s_len();
        if r < self.a_len() {
            for i in 0..n {
                let row = n - 1 - i;
                if r < row {
                    return Component::A { i, j: i + 1 + r };
                }
                r -= row;
            }
        }
        let r = k - self.s_len() - self.a_len();
        let block = r / (n * n);
        let within = r % (n * n);
        Component::Phi { block, i: within % n, j: within / n }
    }

    /// Human-readable names, one-based.
    pub fn labels(&self, lag_mode: &LagMode) -> Vec<String> {
        (0..self.dim())
            .map(|k| match self.component(k) {
                Component::S { i, j } => format!("S{}{}", i + 1, j + 1),
                Component::A { i, j } => format!("A{}{}", i + 1, j + 1),
                Component::Phi { block, i, j } => format!("{}_{}{}", lag_mode.block_label(block), i + 1, j + 1),
            })
            .collect()
    }
}

/// The time-varying parameter state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaVector(pub Vec<f64>);

impl ThetaVector {
    pub fn zeros(d: usize) -> Self {
        ThetaVector(vec![0.0; d])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ThetaVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ThetaVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ThetaVector {
    fn from(v: Vec<f64>) -> Self {
        ThetaVector(v)
    }
}

pub fn unpack(theta: &[f64], spec: &ModelSpec) -> Result<(LowerTriangular, SkewSymmetric, Vec<DMatrix<f64>>)> {
    let lay = spec.layout();
    if theta.len() != lay.dim() {
        return Err(SvarError::Shape { context: "theta", expected: lay.dim(), got: theta.len() });
    }
    let n = spec.n;
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            s[(i, j)] = theta[lay.s_index(i, j)];
        }
    }
    let a = SkewSymmetric::from_upper(n, theta[lay.s_len()..lay.s_len() + lay.a_len()].to_vec())?;
    let phis = (0..lay.blocks)
        .map(|b| {
            let start = lay.phi_index(b, 0, 0);
            DMatrix::from_column_slice(n, n, &theta[start..start + n * n])
        })
        .collect();
    Ok((LowerTriangular::new(s)?, a, phis))
}

pub fn pack(s: &LowerTriangular, a: &SkewSymmetric, phis: &[DMatrix<f64>], spec: &ModelSpec) -> Result<ThetaVector> {
    let lay = spec.layout();
    let n = spec.n;
    if s.matrix().nrows() != n || a.dim() != n {
        return Err(SvarError::Shape { context: "S/A dimension", expected: n, got: s.matrix().nrows() });
    }
    if phis.len() != lay.blocks {
        return Err(SvarError::Shape { context: "lag blocks", expected: lay.blocks, got: phis.len() });
    }
    let mut theta = Vec::with_capacity(lay.dim());
    for i in 0..n {
        for j in 0..=i {
            theta.push(s.matrix()[(i, j)]);
        }
    }
    theta.extend_from_slice(a.upper());
    for phi in phis {
        if phi.shape() != (n, n) {
            return Err(SvarError::Shape { context: "lag block", expected: n, got: phi.nrows() });
        }
        theta.extend_from_slice(phi.as_slice());
    }
    Ok(ThetaVector(theta))
}

/// Recovered structural shocks for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralShock {
    pub eps: DVector<f64>,
}

/// Matrices implied by one θ.
#[derive(Debug, Clone)]
pub struct Structure {
    pub s: DMatrix<f64>,
    pub a: SkewSymmetric,
    pub o: DMatrix<f64>,
    pub exp_neg_s: DMatrix<f64>,
    inv_plus: DMatrix<f64>,
    inv_minus: DMatrix<f64>,
    pub phis: Vec<DMatrix<f64>>,
}

impl Structure {
    /// `C = e^{S} O`.
    pub fn mixing(&self) -> Result<DMatrix<f64>> {
        Ok(mat_exp(&self.s)? * &self.o)
    }

    /// `Σ Φ_b x_b`.
    pub fn conditional_mean(&self, regressors: &[DVector<f64>]) -> DVector<f64> {
        let mut mu = DVector::zeros(self.s.nrows());
        for (phi, x) in self.phis.iter().zip(regressors) {
            mu.gemv(1.0, phi, x, 1.0);
        }
        mu
    }
}

/// Stability diagnostics for one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    /// Gelfand estimate; `None` when a cheap bound already shows it is below 1.
    pub rho: Option<f64>,
    /// `ρ̂ ≥ 1`.
    pub flagged: bool,
    /// Leading singular value not separated from the second.
    pub degenerate: bool,
}

/// Everything the filter needs from one time step.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub eps: DVector<f64>,
    /// Unpenalized log-likelihood contribution.
    pub loglik: f64,
    /// `k(1 + ρ̂)` when flagged, otherwise 0.
    pub penalty: f64,
    pub stability: Stability,
    pub scores: Option<ThetaVector>,
}

impl Evaluation {
    pub fn penalized_loglik(&self) -> f64 {
        self.loglik - self.penalty
    }
}

/// A validated spec with precomputed density evaluators.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    layout: ThetaLayout,
    densities: Vec<SkewT>,
}

impl Model {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let densities = spec.skewt.iter().map(|p| SkewT::new(*p)).collect::<Result<Vec<_>>>()?;
        Ok(Model { spec: spec.clone(), layout: spec.layout(), densities })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> ThetaLayout {
        self.layout
    }

    pub fn densities(&self) -> &[SkewT] {
        &self.densities
    }

    pub fn structure(&self, theta: &[f64]) -> Result<Structure> {
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(SvarError::NonFinite("theta"));
        }
        let (s, a, phis) = unpack(theta, &self.spec)?;
        let s = s.into_inner();
        let n = self.spec.n;
        let am = a.to_matrix();
        let id = DMatrix::<f64>::identity(n, n);
        let inv_plus = (&id + &am).try_inverse().ok_or(SvarError::Singular("I + A"))?;
        let inv_minus = (&id - &am).try_inverse().ok_or(SvarError::Singular("I − A"))?;
        let o = cayley(&a).into_inner();
        let exp_neg_s = mat_exp(&(-&s))?;
        Ok(Structure { s, a, o, exp_neg_s, inv_plus, inv_minus, phis })
    }

    pub fn companion(&self, phis: &[DMatrix<f64>]) -> Result<CompanionMatrix> {
        match self.spec.lag_mode {
            LagMode::Plain { .. } => CompanionMatrix::from_blocks(phis),
            LagMode::Heterogeneous => {
                let semester = &phis[1] / SEMESTER_SPAN as f64;
                let mut blocks = vec![phis[0].clone()];
                blocks.extend(std::iter::repeat_n(semester, SEMESTER_SPAN));
                CompanionMatrix::from_blocks(&blocks)
            }
        }
    }

    fn split_window<'a>(&self, window: &'a [DVector<f64>]) -> Result<(&'a [DVector<f64>], &'a DVector<f64>)> {
        let need = self.spec.lag_mode.max_lag() + 1;
        if window.len() < need {
            return Err(SvarError::InsufficientHistory { needed: need - 1, have: window.len().saturating_sub(1) });
        }
        let (y, history) = window.split_last().expect("non-empty window");
        if y.len() != self.spec.n {
            return Err(SvarError::Shape { context: "observation", expected: self.spec.n, got: y.len() });
        }
        Ok((history, y))
    }

    /// Shocks from a window whose last element is `y_t`.
    pub fn residual_and_shock(&self, window: &[DVector<f64>], theta: &[f64]) -> Result<StructuralShock> {
        let st = self.structure(theta)?;
        let (history, y) = self.split_window(window)?;
        let x = self.spec.lag_mode.regressors(history)?;
        let u = y - st.conditional_mean(&x);
        Ok(StructuralShock { eps: st.o.tr_mul(&(&st.exp_neg_s * u)) })
    }

    /// Gelfand screen of the companion matrix with its full gradient when
    /// flagged.
    pub fn stability(&self, phis: &[DMatrix<f64>]) -> Result<(Stability, Option<DMatrix<f64>>)> {
        let comp = self.companion(phis)?;
        match spectral_radius_screened(&comp, self.spec.squaring_q, 1.0)? {
            None => Ok((Stability { rho: None, flagged: false, degenerate: false }, None)),
            Some(payload) => {
                let flagged = payload.rho >= 1.0;
                let grad = flagged.then(|| spectral_radius_gradient(&payload));
                Ok((Stability { rho: Some(payload.rho), flagged, degenerate: payload.degenerate }, grad))
            }
        }
    }

    /// Likelihood, shocks, stability and (optionally) scores at one step.
    pub fn evaluate(&self, window: &[DVector<f64>], theta: &[f64], want_scores: bool, penalized: bool) -> Result<Evaluation> {
        let st = self.structure(theta)?;
        let (history, y) = self.split_window(window)?;
        let x = self.spec.lag_mode.regressors(history)?;
        let n = self.spec.n;
        let u = y - st.conditional_mean(&x);
        let z = &st.exp_neg_s * &u;
        let eps = st.o.tr_mul(&z);

        let mut loglik = -st.s.trace();
        let mut g = DVector::zeros(n);
        for i in 0..n {
            let (lp, gi) = self.densities[i].log_pdf_and_score(eps[i]);
            loglik += lp;
            g[i] = gi;
        }

        let (stability, rho_grad) = if penalized { self.stability(&st.phis)? } else { (Stability { rho: None, flagged: false, degenerate: false }, None) };
        let penalty = if stability.flagged { self.spec.penalty_k * (1.0 + stability.rho.unwrap_or(1.0)) } else { 0.0 };

        let scores = if want_scores {
            let mut sc = self.raw_scores(&st, &u, &eps, &g, &x)?;
            if let Some(grad) = rho_grad {
                self.apply_penalty(&mut sc, &grad);
            }
            Some(sc)
        } else {
            None
        };
        Ok(Evaluation { eps, loglik, penalty, stability, scores })
    }

    fn raw_scores(
        &self,
        st: &Structure,
        u: &DVector<f64>,
        eps: &DVector<f64>,
        g: &DVector<f64>,
        x: &[DVector<f64>],
    ) -> Result<ThetaVector> {
        let lay = self.layout;
        let n = self.spec.n;
        let mut sc = vec![0.0; lay.dim()];
        // ∂ε/∂θ contracted with g; w = O g.
        let w = &st.o * g;

        // S: −L(−Sᵀ, w uᵀ) − I.
        let frechet = mat_exp_frechet(&(-st.s.transpose()), &(&w * u.transpose()))?;
        for i in 0..n {
            for j in 0..=i {
                sc[lay.s_index(i, j)] = -frechet[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
        }

        // A: ε = Oᵀz with ∂Oᵀ = −Oᵀ D (I+A)⁻¹ − D (I−A)⁻¹ Oᵀ along D = E_ij − E_ji.
        let z = &st.o * eps;
        let b = &st.inv_plus * &z;
        let d = &st.inv_minus * eps;
        for i in 0..n {
            for j in i + 1..n {
                let t1 = w[i] * b[j] - w[j] * b[i];
                let t2 = g[i] * d[j] - g[j] * d[i];
                sc[lay.a_index(i, j)] = -(t1 + t2);
            }
        }

        // Φ: −(e^{−S}ᵀ w)_i x_j.
        let r = st.exp_neg_s.tr_mul(&w);
        for (blk, xb) in x.iter().enumerate() {
            for j in 0..n {
                for i in 0..n {
                    sc[lay.phi_index(blk, i, j)] = -r[i] * xb[j];
                }
            }
        }
        Ok(ThetaVector(sc))
    }

    fn apply_penalty(&self, sc: &mut [f64], grad: &DMatrix<f64>) {
        let lay = self.layout;
        let n = self.spec.n;
        let k = self.spec.penalty_k;
        for blk in 0..lay.blocks {
            let positions = self.spec.lag_mode.companion_positions(blk);
            for j in 0..n {
                for i in 0..n {
                    let drho: f64 = positions.iter().map(|&(pos, wgt)| wgt * grad[(i, pos * n + j)]).sum();
                    sc[lay.phi_index(blk, i, j)] -= k * drho;
                }
            }
        }
    }
}

pub fn residual_and_shock(window: &[DVector<f64>], theta: &[f64], spec: &ModelSpec) -> Result<StructuralShock> {
    Model::new(spec)?.residual_and_shock(window, theta)
}

/// `−tr S + Σ log p(ε_i)`.
pub fn log_likelihood_t(window: &[DVector<f64>], theta: &[f64], spec: &ModelSpec) -> Result<f64> {
    Ok(Model::new(spec)?.evaluate(window, theta, false, false)?.loglik)
}

/// Log-likelihood minus `k(1 + ρ̂)` when `ρ̂ ≥ 1`.
pub fn penalized_log_likelihood_t(window: &[DVector<f64>], theta: &[f64], spec: &ModelSpec) -> Result<f64> {
    Ok(Model::new(spec)?.evaluate(window, theta, false, true)?.penalized_loglik())
}

pub fn scores_t(window: &[DVector<f64>], theta: &[f64], spec: &ModelSpec) -> Result<ThetaVector> {
    Ok(Model::new(spec)?.evaluate(window, theta, true, false)?.scores.expect("scores requested"))
}

pub fn penalized_scores_t(window: &[DVector<f64>], theta: &[f64], spec: &ModelSpec) -> Result<ThetaVector> {
    Ok(Model::new(spec)?.evaluate(window, theta, true, true)?.scores.expect("scores requested"))
}

/// Which static coefficient a group ties together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticKind {
    Omega,
    Beta,
    Alpha,
}

/// A set of θ indices sharing one free static coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub kind: StaticKind,
    pub members: Vec<usize>,
}

/// Free static parameters; everything not listed stays at its given value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RestrictionMap {
    pub groups: Vec<ParamGroup>,
}

impl RestrictionMap {
    /// One α per matrix: S, A and each lag block.
    pub fn by_matrix(spec: &ModelSpec) -> Self {
        let lay = spec.layout();
        let mut groups = vec![
            ParamGroup { name: "alpha_S".into(), kind: StaticKind::Alpha, members: (0..lay.s_len()).collect() },
            ParamGroup {
                name: "alpha_A".into(),
                kind: StaticKind::Alpha,
                members: (lay.s_len()..lay.s_len() + lay.a_len()).collect(),
            },
        ];
        let nn = spec.n * spec.n;
        for b in 0..lay.blocks {
            let start = lay.phi_index(b, 0, 0);
            groups.push(ParamGroup {
                name: format!("alpha_{}", spec.lag_mode.block_label(b)),
                kind: StaticKind::Alpha,
                members: (start..start + nn).collect(),
            });
        }
        RestrictionMap { groups }
    }

    /// Separate α for each diagonal entry of S and of every lag block, one
    /// shared α for the off-diagonal entries of each of them, and one for A.
    /// For three variables and two lag blocks this gives 13 free values.
    pub fn diagonal_offdiagonal(spec: &ModelSpec) -> Self {
        let lay = spec.layout();
        let n = spec.n;
        let alpha = |name: String, members: Vec<usize>| ParamGroup { name, kind: StaticKind::Alpha, members };
        let mut groups = Vec::new();
        for i in 0..n {
            groups.push(alpha(format!("alpha_S{}{}", i + 1, i + 1), vec![lay.s_index(i, i)]));
        }
        let s_off: Vec<usize> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| lay.s_index(i, j)).collect();
        if !s_off.is_empty() {
            groups.push(alpha("alpha_S_off".into(), s_off));
        }
        if lay.a_len() > 0 {
            groups.push(alpha("alpha_A".into(), (lay.s_len()..lay.s_len() + lay.a_len()).collect()));
        }
        for b in 0..lay.blocks {
            let label = spec.lag_mode.block_label(b);
            for i in 0..n {
                groups.push(alpha(format!("alpha_{label}{}{}", i + 1, i + 1), vec![lay.phi_index(b, i, i)]));
            }
            let off: Vec<usize> = (0..n)
                .flat_map(|j| (0..n).map(move |i| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| lay.phi_index(b, i, j))
                .collect();
            if !off.is_empty() {
                groups.push(alpha(format!("alpha_{label}_off"), off));
            }
        }
        RestrictionMap { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for g in &self.groups {
            if g.members.is_empty() {
                return Err(SvarError::InvalidArgument(format!("group {} is empty", g.name)));
            }
            for &m in &g.members {
                if m >= d {
                    return Err(SvarError::InvalidArgument(format!("group {} refers to index {m} ≥ {d}", g.name)));
                }
                if !seen.insert((g.kind, m)) {
                    return Err(SvarError::InvalidArgument(format!("index {m} appears in two {:?} groups", g.kind)));
                }
            }
        }
        Ok(())
    }
}

/// `θ_{t+1} = ω + β ⊙ θ_t + α ⊙ s_t` coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticParams {
    pub omega: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub restriction: RestrictionMap,
}

impl StaticParams {
    /// Integrated recursion (`ω = 0`, `β = 1`) with one α per group.
    pub fn integrated(d: usize, restriction: RestrictionMap, group_alpha: &[f64]) -> Result<Self> {
        let mut sp = StaticParams { omega: vec![0.0; d], beta: vec![1.0; d], alpha: vec![0.0; d], restriction };
        sp.restriction.validate(d)?;
        sp.set_free(group_alpha)?;
        Ok(sp)
    }

    /// Integrated recursion with every α zero: θ never moves.
    pub fn frozen(d: usize) -> Self {
        StaticParams { omega: vec![0.0; d], beta: vec![1.0; d], alpha: vec![0.0; d], restriction: RestrictionMap::default() }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, v) in [("omega", &self.omega), ("beta", &self.beta), ("alpha", &self.alpha)] {
            if v.len() != d {
                return Err(SvarError::Shape { context: name_context(name), expected: d, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SvarError::NonFinite(name_context(name)));
            }
        }
        self.restriction.validate(d)
    }

    fn slot(&self, kind: StaticKind) -> &Vec<f64> {
        match kind {
            StaticKind::Omega => &self.omega,
            StaticKind::Beta => &self.beta,
            StaticKind::Alpha => &self.alpha,
        }
    }

    fn slot_mut(&mut self, kind: StaticKind) -> &mut Vec<f64> {
        match kind {
            StaticKind::Omega => &mut self.omega,
            StaticKind::Beta => &mut self.beta,
            StaticKind::Alpha => &mut self.alpha,
        }
    }

    /// One value per group, read from its first member.
    pub fn free_values(&self) -> Vec<f64> {
        self.restriction.groups.iter().map(|g| self.slot(g.kind)[g.members[0]]).collect()
    }

    /// Write one value per group to all of its members.
    pub fn set_free(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.restriction.len() {
            return Err(SvarError::Shape { context: "free static values", expected: self.restriction.len(), got: values.len() });
        }
        let groups = std::mem::take(&mut self.restriction.groups);
        for (g, &v) in groups.iter().zip(values) {
            let slot = self.slot_mut(g.kind);
            for &m in &g.members {
                slot[m] = v;
            }
        }
        self.restriction.groups = groups;
        Ok(())
    }

    pub fn with_free(&self, values: &[f64]) -> Result<Self> {
        let mut sp = self.clone();
        sp.set_free(values)?;
        Ok(sp)
    }

    /// θ can only move through the scores.
    pub fn is_static(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0)
            && self.beta.iter().all(|&b| b == 1.0)
            && self.omega.iter().all(|&w| w == 0.0)
    }

    pub fn needs_scores(&self) -> bool {
        self.alpha.iter().any(|&a| a != 0.0)
    }
}

fn name_context(name: &str) -> &'static str {
    match name {
        "omega" => "omega",
        "beta" => "beta",
        _ => "alpha",
    }
}

/// One step of the parameter recursion.
pub fn step(theta: &[f64], score: &[f64], statics: &StaticParams) -> Result<ThetaVector> {
    let d = theta.len();
    if score.len() != d {
        return Err(SvarError::Shape { context: "score", expected: d, got: score.len() });
    }
    if statics.dim() != d || statics.omega.len() != d || statics.beta.len() != d {
        return Err(SvarError::Shape { context: "statics", expected: d, got: statics.dim() });
    }
    Ok(ThetaVector(
        (0..d).map(|k| statics.omega[k] + statics.beta[k] * theta[k] + statics.alpha[k] * score[k]).collect(),
    ))
}

/// In-place variant used by the filter and simulators.
pub(crate) fn step_into(theta: &mut [f64], score: Option<&[f64]>, statics: &StaticParams) {
    for k in 0..theta.len() {
        let s = score.map_or(0.0, |s| s[k]);
        theta[k] = statics.omega[k] + statics.beta[k] * theta[k] + statics.alpha[k] * s;
    }
}

/// θ from an `S` matrix, the upper entries of `A` and the lag blocks.
pub fn theta_from_parts(spec: &ModelSpec, s: &DMatrix<f64>, a_upper: &[f64], phis: &[DMatrix<f64>]) -> Result<ThetaVector> {
    let s = LowerTriangular::new(s.clone())?;
    let a = SkewSymmetric::from_upper(spec.n, a_upper.to_vec())?;
    pack(&s, &a, phis, spec)
}

/// Exact spectral radius of the companion matrix implied by θ.
pub fn companion_radius(theta: &[f64], spec: &ModelSpec) -> Result<f64> {
    let model = Model::new(spec)?;
    let (_, _, phis) = unpack(theta, spec)?;
    Ok(model.companion(&phis)?.eigen_radius())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec3(lag_mode: LagMode) -> ModelSpec {
        ModelSpec::new(
            lag_mode,
            vec![
                SkewTParams::new(-0.7, 5.0).unwrap(),
                SkewTParams::new(-0.6, 6.0).unwrap(),
                SkewTParams::new(0.7, 5.5).unwrap(),
            ],
        )
        .unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> (Vec<DVector<f64>>, Vec<f64>) {
        let d = spec.dim();
        let lay = spec.layout();
        let mut theta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        for k in lay.phi_range() {
            theta[k] *= 0.4;
        }
        let window = (0..=spec.lag_mode.max_lag()).map(|_| DVector::from_fn(spec.n, |_, _| rng.random_range(-1.5..1.5))).collect();
        (window, theta)
    }

    #[test]
    fn layout_indices_cover_theta_once() {
        for mode in [LagMode::Plain { p: 2 }, LagMode::Heterogeneous, LagMode::Plain { p: 3 }] {
            let spec = spec3(mode);
            let lay = spec.layout();
            assert_eq!(lay.dim(), 6 + 3 + 9 * mode.blocks());
            let mut hit = vec![0; lay.dim()];
            for k in 0..lay.dim() {
                let back = match lay.component(k) {
                    Component::S { i, j } => lay.s_index(i, j),
                    Component::A { i, j } => lay.a_index(i, j),
                    Component::Phi { block, i, j } => lay.phi_index(block, i, j),
                };
                assert_eq!(back, k);
                hit[k] += 1;
            }
            assert!(hit.iter().all(|&h| h == 1));
        }
        let lab = spec3(LagMode::Heterogeneous).layout().labels(&LagMode::Heterogeneous);
        assert_eq!(&lab[..7], &["S11", "S21", "S22", "S31", "S32", "S33", "A12"]);
        assert_eq!(lab[9], "PhiM_11");
        assert_eq!(lab[10], "PhiM_21");
    }

    #[test]
    fn zero_theta_unpacks_to_zero_matrices() {
        let spec = spec3(LagMode::Plain { p: 2 });
        let (s, a, phis) = unpack(&vec![0.0; spec.dim()], &spec).unwrap();
        assert!(s.matrix().iter().all(|&x| x == 0.0));
        assert!(a.upper().iter().all(|&x| x == 0.0));
        assert!(phis.iter().all(|p| p.iter().all(|&x| x == 0.0)));
        assert!(unpack(&[0.0; 5], &spec).is_err());
    }

    #[test]
    fn zero_state_shock_is_observation() {
        let spec = spec3(LagMode::Plain { p: 2 });
        let window = vec![DVector::from_vec(vec![1.0, 2.0, 3.0]), DVector::from_vec(vec![-1.0, 0.5, 2.0]), DVector::from_vec(vec![0.3, -0.2, 0.9])];
        let sh = residual_and_shock(&window, &vec![0.0; spec.dim()], &spec).unwrap();
        assert_eq!(sh.eps, window[2]);
        assert!(matches!(residual_and_shock(&window[1..], &vec![0.0; spec.dim()], &spec), Err(SvarError::InsufficientHistory { .. })));
    }

    #[test]
    fn heterogeneous_constant_history_average() {
        let c = DVector::from_vec(vec![0.7, -1.1, 2.0]);
        let hist = vec![c.clone(); 6];
        let x = LagMode::Heterogeneous.regressors(&hist).unwrap();
        assert!((&x[1] - &c).amax() < 1e-15);
    }

    #[test]
    fn scores_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [LagMode::Plain { p: 2 }, LagMode::Heterogeneous] {
            let spec = spec3(mode);
            for _ in 0..5 {
                let (w, th) = random_state(&mut rng, &spec);
                let sc = scores_t(&w, &th, &spec).unwrap();
                for k in 0..th.len() {
                    let h = 1e-6;
                    let mut p = th.clone();
                    p[k] += h;
                    let mut m = th.clone();
                    m[k] -= h;
                    let fd = (log_likelihood_t(&w, &p, &spec).unwrap() - log_likelihood_t(&w, &m, &spec).unwrap()) / (2.0 * h);
                    assert!((sc[k] - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "{mode:?} k {k}: {} vs {fd}", sc[k]);
                }
            }
        }
    }

    #[test]
    fn phi_scores_vanish_with_zero_history() {
        let spec = spec3(LagMode::Plain { p: 2 });
        let mut w = vec![DVector::zeros(3); 3];
        w[2] = DVector::from_vec(vec![0.4, -0.3, 1.2]);
        let sc = scores_t(&w, &vec![0.0; spec.dim()], &spec).unwrap();
        assert!(sc[spec.layout().phi_range()].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn penalty_leaves_stable_states_alone() {
        let spec = spec3(LagMode::Plain { p: 2 });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, mut th) = random_state(&mut rng, &spec);
        for k in spec.layout().phi_range() {
            th[k] *= 0.1;
        }
        assert_eq!(scores_t(&w, &th, &spec).unwrap(), penalized_scores_t(&w, &th, &spec).unwrap());
    }

    #[test]
    fn penalty_shifts_only_phi_scores() {
        let spec = spec3(LagMode::Plain { p: 1 });
        let lay = spec.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, mut th) = random_state(&mut rng, &spec);
        for k in lay.phi_range() {
            th[k] = 0.0;
        }
        th[lay.phi_index(0, 0, 0)] = 1.1;
        th[lay.phi_index(0, 1, 1)] = 0.3;
        th[lay.phi_index(0, 0, 1)] = 0.2;
        let raw = scores_t(&w, &th, &spec).unwrap();
        let pen = penalized_scores_t(&w, &th, &spec).unwrap();
        let phi0 = lay.phi_range().start;
        assert_eq!(&raw[..phi0], &pen[..phi0]);
        for k in lay.phi_range() {
            let h = 1e-6;
            let mut p = th.clone();
            p[k] += h;
            let mut m = th.clone();
            m[k] -= h;
            let fd = (penalized_log_likelihood_t(&w, &p, &spec).unwrap() - penalized_log_likelihood_t(&w, &m, &spec).unwrap()) / (2.0 * h);
            assert!((pen[k] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "k {k}: {} vs {fd}", pen[k]);
        }
        let ll = log_likelihood_t(&w, &th, &spec).unwrap();
        let pl = penalized_log_likelihood_t(&w, &th, &spec).unwrap();
        let rho = Model::new(&spec).unwrap().stability(&unpack(&th, &spec).unwrap().2).unwrap().0.rho.unwrap();
        assert_eq!(ll - pl, spec.penalty_k * (1.0 + rho));
    }

    #[test]
    fn step_update_rules() {
        let d = 4;
        let th = vec![0.3, -1.0, 2.0, 0.5];
        let s = vec![1.0, 2.0, -3.0, 0.25];
        let mut sp = StaticParams::frozen(d);
        sp.omega = vec![0.1; d];
        sp.beta = vec![0.9; d];
        let out = step(&th, &s, &sp).unwrap();
        for k in 0..d {
            assert_eq!(out[k], 0.1 + 0.9 * th[k]);
        }
        let map = RestrictionMap {
            groups: vec![ParamGroup { name: "alpha_off".into(), kind: StaticKind::Alpha, members: vec![1, 3] }],
        };
        let sp = StaticParams::integrated(d, map, &[0.01]).unwrap();
        let out = step(&th, &s, &sp).unwrap();
        for k in 0..d {
            assert_eq!(out[k], th[k] + sp.alpha[k] * s[k]);
        }
        assert_eq!(sp.alpha, vec![0.0, 0.01, 0.0, 0.01]);
        assert!(step(&th, &s[..3], &sp).is_err());
    }

    #[test]
    fn restriction_templates() {
        let spec = spec3(LagMode::Heterogeneous);
        let m = RestrictionMap::diagonal_offdiagonal(&spec);
        assert_eq!(m.len(), 13);
        m.validate(spec.dim()).unwrap();
        let covered: usize = m.groups.iter().map(|g| g.members.len()).sum();
        assert_eq!(covered, spec.dim());
        let b = RestrictionMap::by_matrix(&spec3(LagMode::Plain { p: 2 }));
        assert_eq!(b.names(), vec!["alpha_S", "alpha_A", "alpha_Phi1", "alpha_Phi2"]);
    }

    #[test]
    fn identification_checks() {
        let spec = spec3(LagMode::Plain { p: 1 });
        spec.check_identification().unwrap();
        let mut bad = spec.clone();
        bad.skewt[1].nu = bad.skewt[0].nu;
        assert!(bad.check_identification().is_err());
        let mut sym = spec.clone();
        sym.skewt[2].delta = 0.0;
        assert!(sym.check_identification().is_err());
    }
}
