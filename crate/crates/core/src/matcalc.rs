//! Matrix calculus used by the likelihood and its scores.
//!
//! - `mat_exp`: Padé scaling-and-squaring exponential (degrees 3 to 13).
//! - `mat_exp_frechet`: directional derivative of `exp` through the block
//!   identity `exp([[S, E], [0, S]]) = [[e^S, L(S, E)], [0, e^S]]`.
//! - `cayley` and `cayley_derivative`: the orthogonal factor `O(A)` and the
//!   two matrices whose sum gives `−∂Oᵀ/∂A_ij`.
//! - `spectral_radius_gelfand`: `σ_max(Φ^{2^q})^{1/2^q}` computed on a
//!   rescaled squaring chain, with forward-mode and adjoint sensitivities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SvarError};

/// Lower-triangular real matrix (`S_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(DMatrix<f64>);

impl LowerTriangular {
    /// Zeroes nothing; rejects inputs with non-zero entries above the diagonal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(SvarError::InvalidArgument("lower-triangular matrix must be square".into()));
        }
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if m[(i, j)] != 0.0 {
                    return Err(SvarError::InvalidArgument(format!(
                        "entry ({i}, {j}) above the diagonal is non-zero"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// Skew-symmetric matrix stored through its strict upper triangle, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewSymmetric {
    n: usize,
    upper: Vec<f64>,
}

impl SkewSymmetric {
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Result<Self> {
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(SvarError::Shape {
                context: "skew-symmetric upper triangle",
                expected,
                got: upper.len(),
            });
        }
        Ok(Self { n, upper })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Position of `(i, j)`, `i < j`, inside the row-major strict upper triangle.
    pub fn upper_index(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < n);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut a = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                a[(i, j)] = self.upper[k];
                a[(j, i)] = -self.upper[k];
                k += 1;
            }
        }
        a
    }

    pub fn neg(&self) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|x| -x).collect(),
        }
    }
}

/// Orthogonal matrix produced by the Cayley map.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMatrix(DMatrix<f64>);

impl OrthogonalMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `max |O Oᵀ − I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.0.nrows();
        max_abs(&(&self.0 * self.0.transpose() - DMatrix::<f64>::identity(n, n)))
    }
}

/// Companion form of a VAR with `blocks.len()` lags of dimension `n`:
/// top block row `[B₁ … B_L]`, identity blocks on the sub-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix {
    n: usize,
    lags: usize,
    matrix: DMatrix<f64>,
}

impl CompanionMatrix {
    pub fn from_blocks(blocks: &[DMatrix<f64>]) -> Result<Self> {
        let lags = blocks.len();
        if lags == 0 {
            return Err(SvarError::InvalidArgument("companion needs at least one lag block".into()));
        }
        let n = blocks[0].nrows();
        let dim = n * lags;
        let mut m = DMatrix::zeros(dim, dim);
        for (l, b) in blocks.iter().enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(SvarError::Shape {
                    context: "companion lag block",
                    expected: n,
                    got: b.nrows().max(b.ncols()),
                });
            }
            m.view_mut((0, l * n), (n, n)).copy_from(b);
        }
        for k in n..dim {
            m[(k, k - n)] = 1.0;
        }
        Ok(Self { n, lags, matrix: m })
    }

    /// Wraps an arbitrary square matrix (e.g. a diagonal test matrix) as a
    /// single-block companion.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(SvarError::InvalidArgument("companion matrix must be square".into()));
        }
        Ok(Self {
            n: m.nrows(),
            lags: 1,
            matrix: m,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Modulus of the largest eigenvalue, from the real Schur form.
    pub fn eigen_radius(&self) -> f64 {
        self.matrix
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm thresholds for which the degree-m approximant is accurate to unit roundoff.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

/// Matrix exponential by Padé approximation with scaling and squaring.
pub fn mat_exp(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut e = mat_exp_dense(s)?;
    let n = s.nrows();
    let lower = (0..n).all(|i| (i + 1..n).all(|j| s[(i, j)] == 0.0));
    if lower {
        // The exponential of a lower-triangular matrix is lower triangular
        // with diagonal exp(S_ii); restore what round-off in the solve blurs.
        for i in 0..n {
            for j in i + 1..n {
                e[(i, j)] = 0.0;
            }
            e[(i, i)] = s[(i, i)].exp();
        }
    }
    Ok(e)
}

fn mat_exp_dense(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(SvarError::InvalidArgument("mat_exp needs a square matrix".into()));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(SvarError::NonFinite("mat_exp input"));
    }
    let n = s.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = one_norm(s);

    let low_degree = |coef: &[f64]| -> Result<DMatrix<f64>> {
        let a2 = s * s;
        let mut u = ident.scale(coef[1]);
        let mut v = ident.scale(coef[0]);
        let mut pow = a2.clone();
        let mut k = 2;
        while k < coef.len() {
            v += pow.scale(coef[k]);
            if k + 1 < coef.len() {
                u += pow.scale(coef[k + 1]);
            }
            k += 2;
            if k < coef.len() {
                pow = &pow * &a2;
            }
        }
        let u = s * u;
        pade_solve(&u, &v)
    };

    if norm <= THETA3 {
        return low_degree(&PADE3);
    }
    if norm <= THETA5 {
        return low_degree(&PADE5);
    }
    if norm <= THETA7 {
        return low_degree(&PADE7);
    }
    if norm <= THETA9 {
        return low_degree(&PADE9);
    }

    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = s.scale(0.5f64.powi(squarings));
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]));
    let u = &a * (inner_u + a6.scale(b[7]) + a4.scale(b[5]) + a2.scale(b[3]) + ident.scale(b[1]));
    let inner_v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]));
    let v = inner_v + a6.scale(b[6]) + a4.scale(b[4]) + a2.scale(b[2]) + ident.scale(b[0]);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(SvarError::Singular("Padé denominator"))
}

/// Directional (Fréchet) derivative of `exp` at `s` in direction `e`.
pub fn mat_exp_frechet(s: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.shape() != e.shape() || !s.is_square() {
        return Err(SvarError::Shape {
            context: "Fréchet direction",
            expected: s.nrows(),
            got: e.nrows(),
        });
    }
    let n = s.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(s);
    big.view_mut((n, n), (n, n)).copy_from(s);
    big.view_mut((0, n), (n, n)).copy_from(e);
    let ex = mat_exp_dense(&big)?;
    Ok(ex.view((0, n), (n, n)).into_owned())
}

/// Exponential and Fréchet derivative from one augmented evaluation.
pub fn mat_exp_with_frechet(s: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(s);
    big.view_mut((n, n), (n, n)).copy_from(s);
    big.view_mut((0, n), (n, n)).copy_from(e);
    let ex = mat_exp_dense(&big)?;
    Ok((ex.view((0, 0), (n, n)).into_owned(), ex.view((0, n), (n, n)).into_owned()))
}

/// `O(A) = (I + A)(I − A)⁻¹`.
pub fn cayley(a: &SkewSymmetric) -> OrthogonalMatrix {
    let n = a.dim();
    let am = a.to_matrix();
    let ident = DMatrix::<f64>::identity(n, n);
    // (I + A) and (I − A)⁻¹ commute, so O = (I − A)⁻¹ (I + A).
    let o = (&ident - &am)
        .lu()
        .solve(&(&ident + &am))
        .expect("I − A is invertible for real skew-symmetric A");
    OrthogonalMatrix(o)
}

/// Factor matrices `(Oᵀ D (I+A)⁻¹, D (I−A)⁻¹ Oᵀ)` with `D = E_ij − E_ji`;
/// their sum is `−∂Oᵀ/∂A_ij`. Indices are zero-based and need `i < j`.
pub fn cayley_derivative(a: &SkewSymmetric, i: usize, j: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.dim();
    if j <= i || j >= n {
        return Err(SvarError::InvalidArgument(format!(
            "Cayley derivative needs i < j < n, got ({i}, {j}) with n = {n}"
        )));
    }
    let am = a.to_matrix();
    let ident = DMatrix::<f64>::identity(n, n);
    let inv_plus = (&ident + &am).try_inverse().ok_or(SvarError::Singular("I + A"))?;
    let inv_minus = (&ident - &am).try_inverse().ok_or(SvarError::Singular("I − A"))?;
    let ot = (&inv_minus * (&ident + &am)).transpose();
    let mut d = DMatrix::zeros(n, n);
    d[(i, j)] = 1.0;
    d[(j, i)] = -1.0;
    Ok((&ot * &d * inv_plus, &d * inv_minus * ot))
}

/// Principal square root of a lower-triangular matrix with positive
/// diagonal (column recurrence of Björck and Hammarling).
fn sqrt_lower_triangular(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut r = DMatrix::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = l[(j, j)].sqrt();
    }
    for d in 1..n {
        for j in 0..n - d {
            let i = j + d;
            let mut acc = l[(i, j)];
            for k in j + 1..i {
                acc -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = acc / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// Principal logarithm of a lower-triangular matrix with positive
/// diagonal, by inverse scaling and squaring with a Mercator series.
/// The result is lower triangular and `mat_exp` maps it back.
pub fn log_lower_triangular(l: &LowerTriangular) -> Result<LowerTriangular> {
    let m = l.matrix();
    let n = m.nrows();
    if (0..n).any(|i| !(m[(i, i)] > 0.0)) {
        return Err(SvarError::InvalidArgument("logarithm needs a strictly positive diagonal".into()));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut r = m.clone();
    let mut halvings = 0;
    while max_abs(&(&r - &id)) > 0.05 {
        r = sqrt_lower_triangular(&r);
        halvings += 1;
        if halvings > 60 {
            return Err(SvarError::NonFinite("matrix logarithm"));
        }
    }
    let x = &r - &id;
    let mut power = x.clone();
    let mut sum = x.clone();
    for k in 2..=40 {
        power = &power * &x;
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        sum += power.scale(sign / k as f64);
    }
    LowerTriangular::new(sum.scale(2f64.powi(halvings)))
}

/// Relative gap below which the leading singular value counts as repeated.
pub const SINGULAR_GAP_TOL: f64 = 1e-8;

/// Gelfand estimate plus everything its derivatives need.
#[derive(Debug, Clone)]
pub struct GelfandPayload {
    pub q: u32,
    /// `σ_max(Φ^{2^q})^{1/2^q}`.
    pub rho: f64,
    /// `ln σ_max(Φ^{2^q})`.
    pub log_sigma_max: f64,
    /// Rescaled squaring chain `M_0 … M_{q−1}`, `M_0 = Φ / c_0`,
    /// `M_{k+1} = M_k² / c_{k+1}`.
    chain: Vec<DMatrix<f64>>,
    /// `c_0 … c_q`.
    scales: Vec<f64>,
    /// Leading singular pair of `M_q` and the corresponding value.
    u: DVector<f64>,
    v: DVector<f64>,
    sigma_scaled: f64,
    /// `(σ₁ − σ₂)/σ₁ < SINGULAR_GAP_TOL`.
    pub degenerate: bool,
}

impl GelfandPayload {
    pub fn chain(&self) -> &[DMatrix<f64>] {
        &self.chain
    }

    pub fn singular_vectors(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.u, &self.v)
    }
}

/// Gelfand spectral-radius estimate through `q` rescaled squarings.
pub fn spectral_radius_gelfand(phi: &CompanionMatrix, q: u32) -> Result<GelfandPayload> {
    Ok(gelfand_chain(phi, q, None)?.expect("no screening threshold"))
}

/// Like [`spectral_radius_gelfand`], but returns `None` as soon as
/// `‖Φ^{2^k}‖_F^{1/2^k}` (an upper bound on the final estimate) drops below
/// `threshold`, skipping the remaining squarings and the SVD.
pub fn spectral_radius_screened(phi: &CompanionMatrix, q: u32, threshold: f64) -> Result<Option<GelfandPayload>> {
    gelfand_chain(phi, q, Some(threshold))
}

fn gelfand_chain(phi: &CompanionMatrix, q: u32, screen: Option<f64>) -> Result<Option<GelfandPayload>> {
    if q == 0 {
        return Err(SvarError::InvalidArgument("squaring depth q must be at least 1".into()));
    }
    let m0 = phi.matrix();
    if m0.iter().any(|x| !x.is_finite()) {
        return Err(SvarError::NonFinite("companion matrix"));
    }
    let mut scales = Vec::with_capacity(q as usize + 1);
    let mut chain = Vec::with_capacity(q as usize);
    let c0 = max_abs(m0);
    if c0 == 0.0 {
        if screen.is_some() {
            return Ok(None);
        }
        let dim = m0.nrows();
        return Ok(Some(GelfandPayload {
            q,
            rho: 0.0,
            log_sigma_max: f64::NEG_INFINITY,
            chain: vec![DMatrix::zeros(dim, dim); q as usize],
            scales: vec![1.0; q as usize + 1],
            u: DVector::zeros(dim),
            v: DVector::zeros(dim),
            sigma_scaled: 0.0,
            degenerate: true,
        }));
    }
    let mut log_scale = c0.ln();
    scales.push(c0);
    let mut m = m0.unscale(c0);
    let below = |m: &DMatrix<f64>, log_scale: f64, k: u32| match screen {
        Some(t) => ((m.norm().ln() + log_scale) / 2f64.powi(k as i32)).exp() < t,
        None => false,
    };
    for k in 0..q {
        if below(&m, log_scale, k) {
            return Ok(None);
        }
        let sq = &m * &m;
        let mut c = max_abs(&sq);
        if c == 0.0 {
            // Nilpotent: every further power vanishes.
            c = 1.0;
        }
        chain.push(m);
        m = sq.unscale(c);
        log_scale = 2.0 * log_scale + c.ln();
        scales.push(c);
    }
    if below(&m, log_scale, q) {
        return Ok(None);
    }
    // Leading pair from the eigen-decomposition of MᵀM. nalgebra's SVD with
    // vectors can return a wrong σ₁ on the near rank-one matrices the
    // squaring chain produces.
    let gram = m.tr_mul(&m);
    let eig = gram.symmetric_eigen();
    let imax = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(imax).into_owned();
    let mv = &m * &v;
    let smax = mv.norm();
    let second = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != imax)
        .map(|(_, l)| l.max(0.0).sqrt())
        .fold(0.0, f64::max);
    let u = if smax > 0.0 { mv.unscale(smax) } else { DVector::zeros(m.nrows()) };
    let log_sigma_max = smax.ln() + log_scale;
    let rho = (log_sigma_max / 2f64.powi(q as i32)).exp();
    let degenerate = smax == 0.0 || (smax - second) / smax < SINGULAR_GAP_TOL;
    Ok(Some(GelfandPayload {
        q,
        rho,
        log_sigma_max,
        chain,
        scales,
        u,
        v,
        sigma_scaled: smax,
        degenerate,
    }))
}

/// `∂ρ̂/∂Φ` along an arbitrary direction of the companion matrix, by
/// forward propagation of `∂Φ^{2^k} = ∂Φ^{2^{k−1}} Φ^{2^{k−1}} + Φ^{2^{k−1}} ∂Φ^{2^{k−1}}`.
pub fn spectral_radius_directional(payload: &GelfandPayload, direction: &DMatrix<f64>) -> f64 {
    if payload.sigma_scaled == 0.0 {
        return 0.0;
    }
    let mut d = direction.unscale(payload.scales[0]);
    for (k, m) in payload.chain.iter().enumerate() {
        d = (&d * m + m * &d).unscale(payload.scales[k + 1]);
    }
    let dsigma = payload.u.dot(&(&d * &payload.v));
    payload.rho / (2f64.powi(payload.q as i32) * payload.sigma_scaled) * dsigma
}

/// `∂ρ̂/∂Φ_{ij}` of a lag coefficient that enters the companion top row at
/// the given `(block position, weight)` pairs; a semester block, for
/// instance, appears in five positions with weight 1/5.
pub fn spectral_radius_derivative(
    payload: &GelfandPayload,
    n: usize,
    i: usize,
    j: usize,
    positions: &[(usize, f64)],
) -> Result<f64> {
    let dim = payload.u.len();
    if i >= n || j >= n {
        return Err(SvarError::InvalidArgument(format!("index ({i}, {j}) out of range for n = {n}")));
    }
    let mut e = DMatrix::zeros(dim, dim);
    for &(pos, w) in positions {
        if (pos + 1) * n > dim {
            return Err(SvarError::InvalidArgument(format!("block position {pos} outside companion")));
        }
        e[(i, pos * n + j)] += w;
    }
    Ok(spectral_radius_directional(payload, &e))
}

/// Full gradient `∂ρ̂/∂Φ` (companion-sized) by reverse propagation through
/// the squaring chain. Equivalent to evaluating the directional derivative
/// for every entry, at the cost of a single backward pass.
pub fn spectral_radius_gradient(payload: &GelfandPayload) -> DMatrix<f64> {
    let dim = payload.u.len();
    if payload.sigma_scaled == 0.0 {
        return DMatrix::zeros(dim, dim);
    }
    let mut g = &payload.u * payload.v.transpose();
    for (k, m) in payload.chain.iter().enumerate().rev() {
        let mt = m.transpose();
        g = (&g * &mt + &mt * &g).unscale(payload.scales[k + 1]);
    }
    let g = g.unscale(payload.scales[0]);
    g.scale(payload.rho / (2f64.powi(payload.q as i32) * payload.sigma_scaled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale)
    }

    fn series_exp(s: &DMatrix<f64>) -> DMatrix<f64> {
        let n = s.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..=30 {
            term = &term * s / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn log_lower_triangular_inverts_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut s = random_matrix(&mut rng, 3, 1.5);
            for i in 0..3 {
                for j in i + 1..3 {
                    s[(i, j)] = 0.0;
                }
            }
            let l = LowerTriangular::new(mat_exp(&s).unwrap()).unwrap();
            let back = log_lower_triangular(&l).unwrap();
            assert!(max_abs(&(back.matrix() - &s)) < 1e-11);
        }
        let chol = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.03, 0.1]);
        let back = log_lower_triangular(&LowerTriangular::new(chol.clone()).unwrap()).unwrap();
        assert!(max_abs(&(mat_exp(back.matrix()).unwrap() - chol)) < 1e-14);
    }

    #[test]
    fn screened_radius_matches_full_when_not_skipped() {
        let phi = CompanionMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.02, 0.3, 0.0, 0.4])).unwrap();
        let full = spectral_radius_gelfand(&phi, 10).unwrap();
        let screened = spectral_radius_screened(&phi, 10, 1.0).unwrap().unwrap();
        assert_eq!(full.rho, screened.rho);
        let stable = CompanionMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.0, 0.4])).unwrap();
        assert!(spectral_radius_screened(&stable, 10, 1.0).unwrap().is_none());
        assert!(spectral_radius_gelfand(&stable, 10).unwrap().rho < 1.0);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn exp_of_log_scaled_identity() {
        let s = DMatrix::<f64>::identity(3, 3) * 0.1f64.ln();
        let e = mat_exp(&s).unwrap();
        assert!(max_abs(&(e - DMatrix::identity(3, 3) * 0.1)) < 1e-15);
    }

    #[test]
    fn exp_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut s = random_matrix(&mut rng, 3, 1.0);
            let norm = s.norm();
            if norm > 1.0 {
                s /= norm;
            }
            let diff = max_abs(&(mat_exp(&s).unwrap() - series_exp(&s)));
            assert!(diff < 1e-12, "diff {diff}");
        }
    }

    #[test]
    fn exp_large_norm_uses_squaring() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_matrix(&mut rng, 4, 3.0);
        // e^{S} e^{−S} = I even when several squarings are needed.
        let prod = mat_exp(&s).unwrap() * mat_exp(&(-&s)).unwrap();
        assert!(max_abs(&(prod - DMatrix::identity(4, 4))) < 1e-9);
    }

    #[test]
    fn exp_rejects_non_finite() {
        let mut s = DMatrix::zeros(2, 2);
        s[(0, 1)] = f64::NAN;
        assert!(matches!(mat_exp(&s), Err(SvarError::NonFinite(_))));
    }

    #[test]
    fn exp_of_lower_triangular_stays_lower_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut s = random_matrix(&mut rng, 4, 2.0);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    s[(i, j)] = 0.0;
                }
            }
            let e = mat_exp(&s).unwrap();
            for i in 0..4 {
                for j in (i + 1)..4 {
                    assert_eq!(e[(i, j)], 0.0);
                }
                let rel = (e[(i, i)] - s[(i, i)].exp()).abs() / s[(i, i)].exp();
                assert!(rel < 1e-12, "diag rel {rel}");
            }
        }
    }

    #[test]
    fn frechet_at_zero_is_identity_map() {
        let mut e = DMatrix::zeros(3, 3);
        e[(0, 0)] = 1.0;
        let d = mat_exp_frechet(&DMatrix::zeros(3, 3), &e).unwrap();
        assert!(max_abs(&(d - &e)) < 1e-15);
    }

    #[test]
    fn frechet_diagonal_case() {
        // For diagonal S, ∂e^{S}/∂S_ii = E_ii e^{S}: the derivative of the
        // i-th diagonal entry is e^{S_ii}, not S_ii e^{S}.
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -1.2, 0.7]));
        for i in 0..3 {
            let mut e = DMatrix::zeros(3, 3);
            e[(i, i)] = 1.0;
            let d = mat_exp_frechet(&s, &e).unwrap();
            let h = 1e-6;
            let fd = (mat_exp(&(&s + &e * h)).unwrap() - mat_exp(&(&s - &e * h)).unwrap()) / (2.0 * h);
            let expected = &e * mat_exp(&s).unwrap();
            assert!(max_abs(&(&d - &expected)) < 1e-14);
            assert!(max_abs(&(&d - &fd)) / max_abs(&fd) < 1e-6);
        }
    }

    #[test]
    fn frechet_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_matrix(&mut rng, 3, 1.0);
        let mut e = DMatrix::zeros(3, 3);
        e[(1, 0)] = 1.0;
        let h = 1e-5;
        let fd = (mat_exp(&(&s + &e * h)).unwrap() - mat_exp(&(&s - &e * h)).unwrap()) / (2.0 * h);
        let d = mat_exp_frechet(&s, &e).unwrap();
        assert!(max_abs(&(d - fd)) < 1e-8);
    }

    #[test]
    fn frechet_shape_mismatch() {
        assert!(mat_exp_frechet(&DMatrix::zeros(3, 3), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn cayley_of_zero_is_identity() {
        let o = cayley(&SkewSymmetric::zeros(3));
        assert_eq!(o.matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn cayley_of_monte_carlo_initial_a() {
        let a = SkewSymmetric::from_upper(3, vec![-0.11, 0.23, -0.03]).unwrap();
        let o = cayley(&a);
        assert!(o.orthogonality_defect() < 1e-12);
        assert!((o.matrix().determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cayley_of_negated_argument_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = SkewSymmetric::from_upper(4, (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let o = cayley(&a);
            let o_neg = cayley(&a.neg());
            assert!(o.orthogonality_defect() < 1e-12);
            assert!(max_abs(&(o_neg.matrix() - o.matrix().transpose())) < 1e-12);
        }
    }

    #[test]
    fn cayley_derivative_at_zero() {
        let (f1, f2) = cayley_derivative(&SkewSymmetric::zeros(2), 0, 1).unwrap();
        let mut d = DMatrix::zeros(2, 2);
        d[(0, 1)] = 1.0;
        d[(1, 0)] = -1.0;
        assert_eq!(f1, d);
        assert_eq!(f2, d);
    }

    #[test]
    fn cayley_derivative_matches_finite_differences() {
        let a = SkewSymmetric::from_upper(3, vec![-0.11, 0.23, -0.03]).unwrap();
        let (f1, f2) = cayley_derivative(&a, 0, 2).unwrap();
        let k = SkewSymmetric::upper_index(3, 0, 2);
        let h = 1e-6;
        let mut up = a.upper().to_vec();
        let mut dn = a.upper().to_vec();
        up[k] += h;
        dn[k] -= h;
        let fd = (cayley(&SkewSymmetric::from_upper(3, up).unwrap()).matrix().transpose()
            - cayley(&SkewSymmetric::from_upper(3, dn).unwrap()).matrix().transpose())
            / (2.0 * h);
        assert!(max_abs(&(-(f1 + f2) - fd)) < 1e-7);
    }

    #[test]
    fn cayley_derivative_rejects_lower_index() {
        assert!(cayley_derivative(&SkewSymmetric::zeros(3), 2, 1).is_err());
        assert!(cayley_derivative(&SkewSymmetric::zeros(3), 1, 1).is_err());
    }

    #[test]
    fn cayley_derivative_linear_in_direction_sign() {
        // Swapping (i, j) flips D = E_ij − E_ji; both factors flip with it.
        let a = SkewSymmetric::from_upper(3, vec![0.4, -0.2, 0.9]).unwrap();
        let (f1, f2) = cayley_derivative(&a, 0, 1).unwrap();
        let am = a.to_matrix();
        let ident = DMatrix::<f64>::identity(3, 3);
        let ot = cayley(&a).matrix().transpose();
        let mut d = DMatrix::zeros(3, 3);
        d[(1, 0)] = 1.0;
        d[(0, 1)] = -1.0;
        let g1 = &ot * &d * (&ident + &am).try_inverse().unwrap();
        let g2 = &d * (&ident - &am).try_inverse().unwrap() * &ot;
        assert!(max_abs(&(f1 + g1)) < 1e-14);
        assert!(max_abs(&(f2 + g2)) < 1e-14);
    }

    #[test]
    fn gelfand_diagonal() {
        let c = CompanionMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2]))).unwrap();
        let p = spectral_radius_gelfand(&c, 10).unwrap();
        assert!((p.rho - 0.5).abs() < 1e-6);
    }

    #[test]
    fn gelfand_handles_radius_above_one_without_overflow() {
        // Eigenvalues 1.05 and 0.4 in a non-normal 2×2 matrix.
        let c = CompanionMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.05, 0.3, 0.0, 0.4])).unwrap();
        let p = spectral_radius_gelfand(&c, 10).unwrap();
        assert!(p.rho.is_finite());
        assert!(p.rho > 1.04 && p.rho < 1.06, "rho {}", p.rho);
    }

    #[test]
    fn gelfand_random_stable_companion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks: Vec<_> = (0..2).map(|_| random_matrix(&mut rng, 3, 0.3)).collect();
        let c = CompanionMatrix::from_blocks(&blocks).unwrap();
        let exact = c.eigen_radius();
        assert!(exact < 1.0);
        let p = spectral_radius_gelfand(&c, 10).unwrap();
        assert!((p.rho - exact).abs() < 1e-3, "{} vs {}", p.rho, exact);
    }

    #[test]
    fn gelfand_never_underestimates() {
        // ‖M^r‖ ≥ ρ(M)^r for any induced norm.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let blocks: Vec<_> = (0..2).map(|_| random_matrix(&mut rng, 2, 0.8)).collect();
            let c = CompanionMatrix::from_blocks(&blocks).unwrap();
            let p = spectral_radius_gelfand(&c, 10).unwrap();
            assert!(p.rho >= c.eigen_radius() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn gelfand_zero_matrix() {
        let c = CompanionMatrix::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        let p = spectral_radius_gelfand(&c, 10).unwrap();
        assert_eq!(p.rho, 0.0);
        assert_eq!(spectral_radius_gradient(&p), DMatrix::zeros(3, 3));
    }

    #[test]
    fn gelfand_rejects_zero_depth() {
        let c = CompanionMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
        assert!(spectral_radius_gelfand(&c, 0).is_err());
    }

    #[test]
    fn derivative_of_dominant_diagonal_entry() {
        let c = CompanionMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2]))).unwrap();
        let p = spectral_radius_gelfand(&c, 10).unwrap();
        let d = spectral_radius_derivative(&p, 2, 0, 0, &[(0, 1.0)]).unwrap();
        assert!((d - 1.0).abs() < 2e-2, "d {d}");
    }

    #[test]
    fn derivative_vanishes_for_decoupled_block() {
        // Block-diagonal: the dominant eigenvalue lives in the first block.
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = 0.9;
        m[(0, 1)] = 0.2;
        m[(1, 1)] = 0.3;
        m[(2, 2)] = 0.1;
        m[(2, 3)] = 0.05;
        m[(3, 2)] = 0.02;
        m[(3, 3)] = 0.2;
        let c = CompanionMatrix::from_matrix(m).unwrap();
        let p = spectral_radius_gelfand(&c, 10).unwrap();
        let d = spectral_radius_derivative(&p, 4, 3, 2, &[(0, 1.0)]).unwrap();
        assert!(d.abs() < 1e-6, "d {d}");
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks: Vec<_> = (0..2).map(|_| random_matrix(&mut rng, 3, 0.4)).collect();
        let c = CompanionMatrix::from_blocks(&blocks).unwrap();
        let p = spectral_radius_gelfand(&c, 10).unwrap();
        assert!(!p.degenerate);
        let grad = spectral_radius_gradient(&p);
        for (i, j, lag) in [(0, 0, 0), (1, 2, 0), (2, 1, 1)] {
            let h = 1e-6;
            let mut up = blocks.clone();
            let mut dn = blocks.clone();
            up[lag][(i, j)] += h;
            dn[lag][(i, j)] -= h;
            let rp = spectral_radius_gelfand(&CompanionMatrix::from_blocks(&up).unwrap(), 10).unwrap().rho;
            let rm = spectral_radius_gelfand(&CompanionMatrix::from_blocks(&dn).unwrap(), 10).unwrap().rho;
            let fd = (rp - rm) / (2.0 * h);
            let d = spectral_radius_derivative(&p, 3, i, j, &[(lag, 1.0)]).unwrap();
            assert!((d - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "d {d} fd {fd}");
            assert!((grad[(i, lag * 3 + j)] - d).abs() < 1e-10 * d.abs().max(1.0));
        }
    }

    #[test]
    fn companion_layout() {
        let b1 = DMatrix::from_element(2, 2, 1.0);
        let b2 = DMatrix::from_element(2, 2, 2.0);
        let c = CompanionMatrix::from_blocks(&[b1, b2]).unwrap();
        let m = c.matrix();
        assert_eq!(m[(0, 3)], 2.0);
        assert_eq!(m[(2, 0)], 1.0);
        assert_eq!(m[(3, 1)], 1.0);
        assert_eq!(m[(2, 1)], 0.0);
        assert_eq!(m[(3, 3)], 0.0);
    }
}
