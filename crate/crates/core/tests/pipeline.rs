mod common;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdsvar::estimate::{refit_densities, robust_se};
use sdsvar::filter::{bands, ols_var, run_filter};
use sdsvar::model::{step, unpack, LagMode, Model, StaticParams};
use sdsvar::simulate::{
    reference_score_driven, reference_spec, reference_theta0, simulate, yule_walker, DgpConfig, DgpKind,
};
use sdsvar::skewt::{sample, SkewTParams};

fn constant(t_len: usize, seed: u64) -> DgpConfig {
    let spec = reference_spec(LagMode::Plain { p: 2 });
    DgpConfig { theta0: reference_theta0(&spec), spec, t_len, kind: DgpKind::Constant, seed }
}

fn statics_of(cfg: &DgpConfig) -> &StaticParams {
    match &cfg.kind {
        DgpKind::ScoreDriven { statics } => statics,
        _ => panic!("score-driven config expected"),
    }
}

#[test]
fn filter_path_is_replayed_by_step() {
    let cfg = reference_score_driven(400, 1);
    let y = simulate(&cfg).unwrap().y_vectors();
    let statics = statics_of(&cfg);
    let fo = run_filter(&y, &cfg.spec, statics, &cfg.theta0).unwrap();
    assert_eq!(fo, run_filter(&y, &cfg.spec, statics, &cfg.theta0).unwrap());
    for k in 0..fo.len() {
        let next = step(&fo.theta_path[k], &fo.scores[k], statics).unwrap();
        let expected = if k + 1 < fo.len() { &fo.theta_path[k + 1] } else { &fo.theta_next };
        assert_eq!(&next, expected, "step {k}");
    }
    let total: f64 = fo.loglik_contrib.iter().sum();
    assert!((total - fo.loglik).abs() <= 1e-9 * fo.loglik.abs());
}

#[test]
fn filter_at_truth_recovers_simulated_path() {
    for cfg in [reference_score_driven(500, 2), sdsvar::simulate::empirical_style(300, 3)] {
        let sim = simulate(&cfg).unwrap();
        assert_eq!(sim, simulate(&cfg).unwrap());
        let fo = run_filter(&sim.y_vectors(), &cfg.spec, statics_of(&cfg), &cfg.theta0).unwrap();
        for (k, th) in fo.theta_path.iter().enumerate() {
            let truth = &sim.theta_true[fo.start + k];
            let gap = th.iter().zip(truth.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap <= 1e-12, "step {k}: {gap:e}");
            let eps = &sim.eps_true[fo.start + k];
            assert!(fo.shocks[k].iter().zip(eps).all(|(a, b)| (a - b).abs() <= 1e-10));
        }
    }
}

#[test]
fn constant_var_matches_yule_walker() {
    let cfg = constant(50_000, 4);
    let y = simulate(&cfg).unwrap().y_vectors();
    let (_, _, phis) = unpack(&cfg.theta0, &cfg.spec).unwrap();
    let c = Model::new(&cfg.spec).unwrap().structure(&cfg.theta0).unwrap().mixing().unwrap();
    let (g0, g1) = yule_walker(&phis, &c).unwrap();
    let burn = 100;
    let m = (y.len() - burn) as f64;
    let mut s0 = DMatrix::<f64>::zeros(3, 3);
    let mut s1 = DMatrix::<f64>::zeros(3, 3);
    for t in burn..y.len() {
        s0 += &y[t] * y[t].transpose();
        s1 += &y[t] * y[t - 1].transpose();
    }
    s0 /= m;
    s1 /= m;
    for i in 0..3 {
        assert!((s0[(i, i)] - g0[(i, i)]).abs() <= 0.05 * g0[(i, i)], "Γ0[{i}{i}] {} vs {}", s0[(i, i)], g0[(i, i)]);
    }
    let scale = g0.amax();
    assert!((&s0 - &g0).amax() <= 0.05 * scale);
    assert!((&s1 - &g1).amax() <= 0.05 * scale);
}

#[test]
fn scores_have_mean_zero_at_truth() {
    let cfg = constant(20_000, 5);
    let y = simulate(&cfg).unwrap().y_vectors();
    let model = Model::new(&cfg.spec).unwrap();
    let d = cfg.spec.dim();
    let max_lag = cfg.spec.lag_mode.max_lag();
    let mut rows = Vec::new();
    for t in max_lag..y.len() {
        let ev = model.evaluate(&y[t - max_lag..=t], &cfg.theta0, true, false).unwrap();
        rows.push(ev.scores.unwrap());
    }
    let m = rows.len() as f64;
    for c in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let mean = sdsvar::stats::mean(&col);
        let se = (sdsvar::stats::variance(&col) / m).sqrt();
        assert!(mean.abs() <= 4.5 * se, "component {c}: mean {mean:e}, s.e. {se:e}");
    }
}

#[test]
fn ols_agrees_with_independent_least_squares() {
    let cfg = constant(3000, 6);
    let y = simulate(&cfg).unwrap().y_vectors();
    let fit = ols_var(&y, &cfg.spec, y.len()).unwrap();
    // Same regression through an SVD solve of the stacked system.
    let rows = y.len() - 2;
    let x = DMatrix::from_fn(rows, 6, |r, c| y[r + 2 - 1 - c / 3][c % 3]);
    let yy = DMatrix::from_fn(rows, 3, |r, i| y[r + 2][i]);
    let coef = x.svd(true, true).solve(&yy, 1e-14).unwrap();
    for b in 0..2 {
        for i in 0..3 {
            for j in 0..3 {
                assert!((fit.phis[b][(i, j)] - coef[(b * 3 + j, i)]).abs() <= 1e-10);
            }
        }
    }
    let (_, _, truth) = unpack(&cfg.theta0, &cfg.spec).unwrap();
    for b in 0..2 {
        assert!((&fit.phis[b] - &truth[b]).amax() <= 0.08, "block {b}");
    }
}

#[test]
fn zero_covariance_bands_equal_the_floor() {
    let cfg = reference_score_driven(300, 7);
    let y = simulate(&cfg).unwrap().y_vectors();
    let statics = statics_of(&cfg);
    let m = statics.restriction.len();
    let out = bands(&y, &cfg.spec, statics, &DMatrix::zeros(m, m), &cfg.theta0, 8, 1).unwrap();
    assert_eq!(out.skipped, 0);
    for row in &out.halfwidths {
        for (h, f) in row.iter().zip(&out.floor) {
            assert!((h - f).abs() <= 1e-12 * f.max(1e-300));
        }
    }
    let fo = run_filter(&y, &cfg.spec, statics, &cfg.theta0).unwrap();
    let c = 0;
    let rms = (fo.scores.iter().map(|s| s[c] * s[c]).sum::<f64>() / fo.len() as f64).sqrt();
    assert!((out.floor[c] - statics.alpha[c] * rms).abs() <= 1e-15);
}

#[test]
fn density_refit_recovers_known_shapes() {
    let truth = [SkewTParams { delta: -0.5, nu: 12.0 }, SkewTParams { delta: 0.3, nu: 10.0 }, SkewTParams { delta: 0.6, nu: 15.0 }];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shocks: Vec<Vec<f64>> = truth.iter().map(|&p| (0..100_000).map(|_| sample(p, &mut rng).unwrap()).collect()).collect();
    let spec = reference_spec(LagMode::Plain { p: 1 });
    let (fitted, warnings) = refit_densities(&spec, &shocks);
    assert!(warnings.is_empty(), "{warnings:?}");
    for (got, want) in fitted.skewt.iter().zip(&truth) {
        assert!((got.delta - want.delta).abs() <= 0.1, "{got:?} vs {want:?}");
        assert!((got.nu - want.nu).abs() <= 0.35 * want.nu, "{got:?} vs {want:?}");
    }
}

#[test]
fn robust_errors_shrink_with_sample_size() {
    let short = reference_score_driven(600, 9);
    let long = reference_score_driven(2400, 9);
    let se = |cfg: &DgpConfig| {
        let y = simulate(cfg).unwrap().y_vectors();
        robust_se(&y, &cfg.spec, statics_of(cfg), &cfg.theta0).unwrap().se
    };
    let (a, b) = (se(&short), se(&long));
    let ratio: f64 = a.iter().zip(&b).map(|(x, z)| (x / z).ln()).sum::<f64>() / a.len() as f64;
    let ratio = ratio.exp();
    // Geometric mean over the four groups. With integrated recursions
    // ∂θ_t/∂α accumulates along the path, so information grows faster than
    // T and the errors shrink at least at the parametric √4 = 2 rate.
    assert!(ratio >= 1.6, "ratio {ratio}, short {a:?}, long {b:?}");
}
