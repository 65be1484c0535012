//! Scalar special functions: Student's t CDF/density, normal and χ² quantiles.
//!
//! Gamma and incomplete beta/gamma functions come from `statrs`.

use std::f64::consts::PI;

use statrs::function::{beta::beta_reg, erf::erfc_inv, gamma};

pub use statrs::function::gamma::ln_gamma;

/// Student's t CDF with `dof` degrees of freedom, through the regularized
/// incomplete beta function. Accurate in both tails.
pub fn student_t_cdf(x: f64, dof: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + x * x));
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn student_t_ln_pdf(x: f64, dof: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln()
        - 0.5 * (dof + 1.0) * (x * x / dof).ln_1p()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn chi_squared_ln_pdf(x: f64, dof: f64) -> f64 {
    let k = 0.5 * dof;
    (k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)
}

/// χ² quantile: Wilson–Hilferty start, safeguarded Newton on the
/// regularized lower incomplete gamma function.
pub fn chi_squared_quantile(p: f64, dof: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let z = normal_quantile(p);
    let c = 2.0 / (9.0 * dof);
    let mut x = dof * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > 0.0) || !x.is_finite() {
        // Lower tail: P(X ≤ x) ≈ (x/2)^{k/2} / Γ(k/2 + 1).
        let k = 0.5 * dof;
        x = 2.0 * ((p.ln() + ln_gamma(k + 1.0)) / k).exp();
    }
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let f = gamma::gamma_lr(0.5 * dof, 0.5 * x) - p;
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let dens = chi_squared_ln_pdf(x, dof).exp();
        let mut next = x - f / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(lo) + 1.0 };
        }
        if (next - x).abs() <= 1e-14 * x.max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}
