mod common;

use fairbni::estimation::{
    fit_propensity, propensity_gradient, propensity_log_likelihood, PropensityModel,
};
use fairbni::simulation::{SimConfig, Study};

#[test]
fn noiseless_outcomes_recover_parameters_exactly() {
    let config = SimConfig {
        noise: false,
        ..SimConfig::desk()
    };
    let study = Study::new(&config).unwrap();
    let truth = study.true_outcome_model();
    for r in 0..3 {
        let realization = study.replicate(r).unwrap();
        let (_, fitted) = study.estimate(&realization.dataset).unwrap();
        let fitted = fitted.unwrap();
        for (a, b) in fitted.beta.iter().zip(&truth.beta) {
            assert!((a - b).abs() < 1e-6, "beta {a} vs {b}");
        }
        for (a, b) in fitted.alpha.iter().zip(&truth.alpha) {
            assert!((a - b).abs() < 1e-6, "alpha {a} vs {b}");
        }
    }
}

#[test]
fn noise_has_signal_to_noise_three() {
    let config = SimConfig::with_dims(10_000, 40, 5, 5).unwrap();
    let study = Study::new(&config).unwrap();
    let realization = study.replicate(0).unwrap();
    let mu = &realization.mean_outcomes;
    let y = realization.dataset.outcomes();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let noise: Vec<f64> = y.iter().zip(mu).map(|(a, b)| a - b).collect();
    let ratio = var(&noise) / var(mu);
    assert!((ratio - 1.0 / 3.0).abs() < 0.1 / 3.0, "ratio {ratio}");
}

#[test]
fn propensity_fit_is_first_order_optimal() {
    let study = Study::new(&SimConfig::with_dims(500, 120, 2, 3).unwrap()).unwrap();
    let ds = study.replicate(0).unwrap().dataset;
    let model = fit_propensity(&ds).unwrap();
    let grad = propensity_gradient(&ds, &model);
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm <= 1e-8, "gradient norm {norm}");

    // The analytic gradient agrees with central differences of the
    // log-likelihood away from the optimum.
    let shifted = PropensityModel {
        intercept: model.intercept + 0.3,
        coefficients: model.coefficients.iter().map(|c| c - 0.2).collect(),
        iterations: 0,
    };
    let grad = propensity_gradient(&ds, &shifted);
    let h = 1e-6;
    for k in 0..=ds.q() {
        let bump = |delta: f64| {
            let mut m = shifted.clone();
            if k == 0 {
                m.intercept += delta;
            } else {
                m.coefficients[k - 1] += delta;
            }
            propensity_log_likelihood(&ds, &m)
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        assert!((fd - grad[k]).abs() < 1e-5 * (1.0 + fd.abs()), "coordinate {k}: {fd} vs {}", grad[k]);
    }
}

#[test]
fn calibration_hits_targets() {
    for config in [SimConfig::desk(), SimConfig::with_dims(3000, 80, 13, 19).unwrap()] {
        let study = Study::new(&config).unwrap();
        assert!((study.calibration.mean_propensity - 0.23).abs() <= 0.01);
        assert!((study.calibration.mean_outcome - 0.046).abs() <= 0.01);
    }
}

#[test]
fn estimation_error_shrinks_with_n() {
    let rmse = |n| {
        let mut c = common::identified_regime(n);
        c.replications = 20;
        common::beta_rmse(&c).0
    };
    assert!(rmse(4000) < rmse(500));
}
