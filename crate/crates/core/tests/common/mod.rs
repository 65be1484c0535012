#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sdsvar::model::{LagMode, ModelSpec};
use sdsvar::skewt::SkewTParams;

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// `∫ g(x) p(x) dx` over the real line with `x = tan u`, split at `u = 0`.
/// The transformed integrand vanishes at `u = ±π/2` whenever `g p` decays
/// faster than `|x|^{-2}`.
pub fn skewt_moment<G: Fn(f64) -> f64>(p: SkewTParams, g: G) -> f64 {
    let f = |u: f64| {
        let x = u.tan();
        let c = u.cos();
        let v = sdsvar::skewt::log_pdf(x, p).unwrap().exp() * g(x) / (c * c);
        if v.is_finite() { v } else { 0.0 }
    };
    let edge = std::f64::consts::FRAC_PI_2 * (1.0 - 1e-12);
    simpson(f, -edge, 0.0, 200_000) + simpson(f, 0.0, edge, 200_000)
}

/// Five-point central difference.
pub fn five_point<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(1e-12..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

pub fn random_skewt(rng: &mut ChaCha8Rng) -> SkewTParams {
    SkewTParams::new(rng.random_range(-0.9..0.9), rng.random_range(4.5..30.0)).unwrap()
}

/// Three-variable spec with distinct random densities.
pub fn random_spec(rng: &mut ChaCha8Rng, lag_mode: LagMode) -> ModelSpec {
    loop {
        let ps = (0..3).map(|_| random_skewt(rng)).collect();
        if let Ok(spec) = ModelSpec::new(lag_mode, ps) {
            if spec.check_identification().is_ok() {
                return spec;
            }
        }
    }
}

/// Random θ: moderate S and A, lag blocks rescaled so the companion
/// spectral radius equals `rho`.
pub fn random_theta(rng: &mut ChaCha8Rng, spec: &ModelSpec, rho: f64) -> Vec<f64> {
    let lay = spec.layout();
    let mut th = vec![0.0; lay.dim()];
    for i in 0..spec.n {
        for j in 0..=i {
            th[lay.s_index(i, j)] = if i == j { -0.7 + 0.3 * normal(rng) } else { 0.3 * normal(rng) };
        }
    }
    for i in 0..spec.n {
        for j in i + 1..spec.n {
            th[lay.a_index(i, j)] = 0.5 * normal(rng);
        }
    }
    for k in lay.phi_range() {
        th[k] = 0.3 * normal(rng);
    }
    // Scaling every block by c does not scale the radius by c once there is
    // more than one lag, so repeat until it lands.
    for _ in 0..200 {
        let current = sdsvar::model::companion_radius(&th, spec).unwrap();
        if (current - rho).abs() <= 1e-12 * rho {
            break;
        }
        for k in lay.phi_range() {
            th[k] *= (rho / current).sqrt();
        }
    }
    th
}

pub fn random_window(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> Vec<DVector<f64>> {
    (0..=spec.lag_mode.max_lag()).map(|_| DVector::from_fn(spec.n, |_, _| normal(rng))).collect()
}

/// Companion matrix with `N(0, scale²)` blocks.
pub fn random_blocks(rng: &mut ChaCha8Rng, n: usize, p: usize, scale: f64) -> Vec<DMatrix<f64>> {
    (0..p).map(|_| DMatrix::from_fn(n, n, |_, _| scale * normal(rng))).collect()
}

/// Ridders' extrapolated central difference starting from step `h0`.
/// The step shrinks by 1.4 per row of the Neville tableau, and the answer
/// is the entry with the smallest estimated error, so it adapts to both
/// curvature and evaluation noise without reference to any other value.
pub fn ridders<F: Fn(f64) -> f64>(f: F, x: f64, h0: f64) -> f64 {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 12;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    a[0][0] = (f(x + h) - f(x - h)) / (2.0 * h);
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        a[0][i] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[j][i] - a[j - 1][i]).abs().max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    best
}
