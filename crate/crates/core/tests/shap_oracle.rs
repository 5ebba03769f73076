mod common;

use common::shapley::{max_abs_diff, permutation_shapley, random_net, random_rows, subset_shapley};
use ndarray::Array2;
use phenoflow_core::explain::{kernel_shap, shapley_kernel_weight};
use phenoflow_core::predictor::{FnPredictor, Predictor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn kernel_weight_examples() {
    assert!((shapley_kernel_weight(3, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((shapley_kernel_weight(4, 2).unwrap() - 0.125).abs() < 1e-15);
}

#[test]
fn full_enumeration_equals_permutation_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let f = random_net(8, 6, 1);
    let x: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    let bg = random_rows(&mut rng, 4, 8);
    let model = FnPredictor {
        n_features: 8,
        f: &f,
    };
    let got = kernel_shap(&model, &x, bg.view(), 1 << 8, 0).unwrap();
    assert!(got.exact);
    let want = permutation_shapley(&f, &x, &bg);
    assert!(
        max_abs_diff(&got.phi, &want) <= 1e-6,
        "{:?} vs {want:?}",
        got.phi
    );
}

#[test]
fn full_enumeration_equals_subset_formula_m10_m12() {
    for (m, seed) in [(10usize, 2u64), (12, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_net(m, 8, seed);
        let bg = random_rows(&mut rng, 5, m);
        let model = FnPredictor {
            n_features: m,
            f: &f,
        };
        for _ in 0..3 {
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = kernel_shap(&model, &x, bg.view(), (1 << m) - 2, 0).unwrap();
            assert!(got.exact);
            let want = subset_shapley(&f, &x, &bg);
            assert!(
                max_abs_diff(&got.phi, &want) <= 1e-6,
                "M={m}: {:?} vs {want:?}",
                got.phi
            );
            let recon = got.base_value + got.phi.iter().sum::<f64>();
            assert!((recon - got.prediction).abs() <= 1e-8);
        }
    }
}

#[test]
fn linear_model_is_analytic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in [3usize, 7, 11] {
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let wc = w.clone();
        let model = FnPredictor {
            n_features: m,
            f: move |x: &[f64]| 0.7 + wc.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
        };
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        for n_bg in [1usize, 6] {
            let bg = random_rows(&mut rng, n_bg, m);
            let means = bg.mean_axis(ndarray::Axis(0)).unwrap();
            let got = kernel_shap(&model, &x, bg.view(), 4096, 0).unwrap();
            for i in 0..m {
                let want = w[i] * (x[i] - means[i]);
                assert!(
                    (got.phi[i] - want).abs() <= 1e-10,
                    "M={m} i={i}: {} vs {want}",
                    got.phi[i]
                );
            }
        }
    }
}

#[test]
fn symmetric_features_get_equal_credit() {
    let model = FnPredictor {
        n_features: 4,
        f: |x: &[f64]| (x[0] + x[1]).sin() * x[2] + x[3] * x[3],
    };
    let x = [0.4, 0.4, 1.3, -0.7];
    let bg =
        Array2::from_shape_vec((2, 4), vec![0.1, 0.1, -0.5, 0.3, -0.9, -0.9, 0.2, 1.0]).unwrap();
    let got = kernel_shap(&model, &x, bg.view(), 64, 0).unwrap();
    assert!((got.phi[0] - got.phi[1]).abs() <= 1e-12, "{:?}", got.phi);
}

#[test]
fn sampling_is_exact_for_additive_models() {
    let m = 79;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let coef: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = coef.clone();
    let model = FnPredictor {
        n_features: m,
        f: move |x: &[f64]| c.iter().zip(x).map(|(a, v)| a * v.sin()).sum::<f64>(),
    };
    let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let bg = random_rows(&mut rng, 10, m);
    for seed in 0..3 {
        let got = kernel_shap(&model, &x, bg.view(), 2048, seed).unwrap();
        assert!(!got.exact);
        for i in 0..m {
            let mean_bg = bg.column(i).iter().map(|v| v.sin()).sum::<f64>() / 10.0;
            let want = coef[i] * (x[i].sin() - mean_bg);
            assert!(
                (got.phi[i] - want).abs() <= 1e-8,
                "i={i}: {} vs {want}",
                got.phi[i]
            );
        }
    }
}

#[test]
fn sampled_estimates_concentrate_on_exact_values() {
    let m = 14;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let f = random_net(m, 8, 21);
    let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let bg = random_rows(&mut rng, 4, m);
    let model = FnPredictor {
        n_features: m,
        f: &f,
    };
    let exact = kernel_shap(&model, &x, bg.view(), (1 << m) - 2, 0).unwrap();
    assert!(exact.exact);
    let scale = exact.phi.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let runs: Vec<Vec<f64>> = (0..20)
        .map(|s| kernel_shap(&model, &x, bg.view(), 1024, s).unwrap().phi)
        .collect();
    let mean: Vec<f64> = (0..m)
        .map(|i| runs.iter().map(|r| r[i]).sum::<f64>() / 20.0)
        .collect();
    let mean_err = max_abs_diff(&mean, &exact.phi);
    let single_err = runs
        .iter()
        .map(|r| max_abs_diff(r, &exact.phi))
        .fold(0.0, f64::max);
    assert!(
        mean_err <= 0.05 * scale,
        "mean error {mean_err}, scale {scale}"
    );
    assert!(
        single_err <= 0.2 * scale,
        "single-run error {single_err}, scale {scale}"
    );
    for r in &runs {
        let recon = exact.base_value + r.iter().sum::<f64>();
        assert!((recon - exact.prediction).abs() <= 1e-8);
    }
    println!("mean error {mean_err:.2e}, worst single {single_err:.2e}, scale {scale:.2e}");
}

#[test]
fn model_evaluates_in_batches_like_single_rows() {
    let f = random_net(5, 4, 0);
    let model = FnPredictor {
        n_features: 5,
        f: &f,
    };
    let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(0), 7, 5);
    let batch = model.predict_batch(rows.view());
    for (row, b) in rows.rows().into_iter().zip(batch.iter()) {
        assert_eq!(f(row.as_slice().unwrap()), *b);
    }
}
