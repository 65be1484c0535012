use nalgebra::{DMatrix, DVector};

use sdsvar::irf::{irf, irf_bands, IrfOptions};
use sdsvar::model::{LagMode, StaticParams};
use sdsvar::simulate::{reference_score_driven, reference_spec, reference_theta0, simulate, DgpKind};

fn history() -> Vec<DVector<f64>> {
    vec![DVector::from_vec(vec![0.05, -0.1, 0.02]), DVector::from_vec(vec![-0.03, 0.08, 0.01])]
}

fn score_driven() -> (sdsvar::ModelSpec, StaticParams, sdsvar::ThetaVector) {
    let cfg = reference_score_driven(10, 0);
    let DgpKind::ScoreDriven { statics } = cfg.kind else { unreachable!() };
    (cfg.spec, statics, cfg.theta0)
}

#[test]
fn same_seed_same_responses() {
    let (spec, statics, theta) = score_driven();
    let opts = IrfOptions { horizon: 12, draws: 400, antithetic: true, seed: 3 };
    let a = irf(&history(), &spec, &statics, &theta, opts).unwrap();
    assert_eq!(a, irf(&history(), &spec, &statics, &theta, opts).unwrap());
    let b = irf(&history(), &spec, &statics, &theta, IrfOptions { seed: 4, ..opts }).unwrap();
    assert_ne!(a.responses, b.responses);
    // Impact does not depend on the draws.
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(a.response(i, j, 0), b.response(i, j, 0));
        }
    }
}

#[test]
fn antithetic_pairs_reduce_noise() {
    let (spec, statics, theta) = score_driven();
    let base = IrfOptions { horizon: 12, draws: 4000, antithetic: false, seed: 5 };
    let plain = irf(&history(), &spec, &statics, &theta, base).unwrap();
    let paired = irf(&history(), &spec, &statics, &theta, IrfOptions { antithetic: true, ..base }).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (p, q) in paired.std_errors.iter().zip(&plain.std_errors) {
        num += p * p;
        den += q * q;
    }
    assert!(num < den, "paired {num:e} vs plain {den:e}");
}

#[test]
fn linear_model_noise_comes_from_the_replaced_shock() {
    // With θ frozen a path difference is Ψ_k C (e_j − ε_t): the noise is the
    // same displaced draw for every j, so the errors cannot depend on j.
    let spec = reference_spec(LagMode::Plain { p: 2 });
    let theta = reference_theta0(&spec);
    let frozen = StaticParams::frozen(spec.dim());
    let r = irf(&history(), &spec, &frozen, &theta, IrfOptions { horizon: 8, draws: 200, antithetic: false, seed: 1 }).unwrap();
    assert_eq!(r.meta.clipped, 0);
    for i in 0..3 {
        for k in 1..=8 {
            let s0 = r.std_error(i, 0, k);
            assert!(s0 > 0.0);
            for j in 1..3 {
                assert!((r.std_error(i, j, k) - s0).abs() <= 1e-12 * s0, "({i}, {j}, {k})");
            }
        }
    }
}

#[test]
fn bands_are_deterministic() {
    let cfg = reference_score_driven(200, 6);
    let y = simulate(&cfg).unwrap().y_vectors();
    let DgpKind::ScoreDriven { statics } = &cfg.kind else { unreachable!() };
    let m = statics.restriction.len();
    let cov = DMatrix::from_diagonal_element(m, m, 1e-8);
    let opts = IrfOptions { horizon: 6, draws: 100, antithetic: true, seed: 2 };
    let a = irf_bands(&y, &cfg.spec, statics, &cov, &cfg.theta0, opts, 4).unwrap();
    assert_eq!(a, irf_bands(&y, &cfg.spec, statics, &cov, &cfg.theta0, opts, 4).unwrap());
    assert_eq!(a.meta.repetitions, 4);
    assert!(a.band_halfwidths.iter().all(|h| h.is_finite() && *h >= 0.0));
}
