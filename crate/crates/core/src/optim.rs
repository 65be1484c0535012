//! Small-dimension minimizers: Nelder–Mead simplex and a quasi-Newton
//! polish with finite-difference gradients, plus numerical derivatives.

use nalgebra::{DMatrix, DVector};

use crate::parallel;

/// How an optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converged,
    MaxIter,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub status: Convergence,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex spread in `f` falls below this.
    pub ftol: f64,
    /// … and its diameter below this.
    pub xtol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_evals: 2000, ftol: 1e-9, xtol: 1e-6, initial_step: 0.5 }
    }
}

fn finite_or_max(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::MAX
    }
}

/// Minimize `f` from `x0` with the adaptive-coefficient simplex of Gao and
/// Han.
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: NelderMeadOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
{
    let m = x0.len();
    let eval = |x: &[f64]| finite_or_max(f(x));
    if m == 0 {
        return OptimResult { x: vec![], f: eval(x0), evals: 1, status: Convergence::Converged };
    }
    let md = m as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / md, 0.75 - 1.0 / (2.0 * md), 1.0 - 1.0 / md);
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..m {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut fs: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut evals = m + 1;
    let mut status = Convergence::MaxIter;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=m).collect();
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();

        let fspread = (fs[m] - fs[0]).abs();
        let diam = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).fold(0.0f64, |a, (p, q)| a.max((p - q).abs())))
            .fold(0.0f64, f64::max);
        if fspread <= opts.ftol * (1.0 + fs[0].abs()) && diam <= opts.xtol {
            status = Convergence::Converged;
            break;
        }

        let centroid: Vec<f64> = (0..m).map(|k| simplex[..m].iter().map(|v| v[k]).sum::<f64>() / md).collect();
        let along = |t: f64| -> Vec<f64> { (0..m).map(|k| centroid[k] + t * (simplex[m][k] - centroid[k])).collect() };
        let xr = along(-alpha);
        let fr = eval(&xr);
        evals += 1;
        if fr < fs[0] {
            let xe = along(-alpha * gamma);
            let fe = eval(&xe);
            evals += 1;
            if fe < fr {
                simplex[m] = xe;
                fs[m] = fe;
            } else {
                simplex[m] = xr;
                fs[m] = fr;
            }
            continue;
        }
        if fr < fs[m - 1] {
            simplex[m] = xr;
            fs[m] = fr;
            continue;
        }
        let (xc, fc) = if fr < fs[m] {
            let xc = along(-alpha * rho);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < fs[m].min(fr) {
            simplex[m] = xc;
            fs[m] = fc;
            continue;
        }
        for i in 1..=m {
            let v: Vec<f64> = (0..m).map(|k| simplex[0][k] + sigma * (simplex[i][k] - simplex[0][k])).collect();
            fs[i] = eval(&v);
            simplex[i] = v;
        }
        evals += m;
    }
    let best = (0..=m).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).expect("non-empty simplex");
    OptimResult { x: simplex[best].clone(), f: fs[best], evals, status }
}

/// Central-difference gradient with step `h_k = rel · max(|x_k|, 1)`.
pub fn numerical_gradient<F>(f: &F, x: &[f64], rel: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    parallel::map_indexed(x.len(), |k| {
        let h = rel * x[k].abs().max(1.0);
        let mut p = x.to_vec();
        p[k] += h;
        let mut q = x.to_vec();
        q[k] -= h;
        (f(&p) - f(&q)) / (2.0 * h)
    })
}

/// Central-difference Hessian with per-coordinate steps `h`.
pub fn numerical_hessian<F>(f: &F, x: &[f64], h: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = x.len();
    let f0 = f(x);
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let vals = parallel::map_indexed(pairs.len(), |p| {
        let (i, j) = pairs[p];
        let shifted = |si: f64, sj: f64| {
            let mut v = x.to_vec();
            v[i] += si * h[i];
            v[j] += sj * h[j];
            f(&v)
        };
        if i == j {
            let mut v = x.to_vec();
            v[i] += 2.0 * h[i];
            let fp = f(&v);
            v[i] = x[i] - 2.0 * h[i];
            let fm = f(&v);
            (fp - 2.0 * f0 + fm) / (4.0 * h[i] * h[i])
        } else {
            (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0)) / (4.0 * h[i] * h[j])
        }
    });
    let mut hess = DMatrix::zeros(m, m);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        hess[(i, j)] = vals[p];
        hess[(j, i)] = vals[p];
    }
    hess
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub gtol: f64,
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 100, gtol: 1e-6, fd_step: 1e-6 }
    }
}

/// BFGS with finite-difference gradients and Armijo backtracking.
pub fn bfgs<F>(f: F, x0: &[f64], opts: BfgsOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = x0.len();
    let eval = |x: &[f64]| finite_or_max(f(x));
    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(x.as_slice());
    let mut evals = 1;
    let mut g = DVector::from_vec(numerical_gradient(&eval, x.as_slice(), opts.fd_step));
    evals += 2 * m;
    let mut hinv = DMatrix::<f64>::identity(m, m);
    let mut status = Convergence::MaxIter;
    for _ in 0..opts.max_iter {
        if g.amax() < opts.gtol {
            status = Convergence::Converged;
            break;
        }
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(m, m);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let cand = &x + &dir * t;
            let fc = eval(cand.as_slice());
            evals += 1;
            if fc <= fx + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            status = Convergence::LineSearchFailure;
            break;
        };
        let gn = DVector::from_vec(numerical_gradient(&eval, xn.as_slice(), opts.fd_step));
        evals += 2 * m;
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(m, m);
            let left = &id - &s * yv.transpose() * rho;
            let right = &id - &yv * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
        }
        let df = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if df.abs() <= 1e-12 * (1.0 + fx.abs()) && s.amax() < 1e-9 {
            status = Convergence::Converged;
            break;
        }
    }
    OptimResult { x: x.as_slice().to_vec(), f: fx, evals, status }
}
