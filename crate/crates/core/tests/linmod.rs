mod common;

use common::*;
use emprobe::linmod::{fit_logistic, fit_ridge, logistic_gradient, predict_ridge, GRADIENT_RTOL};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

const ALPHAS: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];

fn random_labels(r: &mut rand_chacha::ChaCha8Rng, x: &DMatrix<f64>) -> Vec<bool> {
    // Noisy linear labels, forced to contain both classes.
    let w: Vec<f64> = (0..x.ncols()).map(|_| normal(r)).collect();
    let mut y: Vec<bool> = (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum::<f64>() + normal(r) > 0.0)
        .collect();
    y[0] = true;
    y[1] = false;
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_matches_dense_normal_equations(seed in any::<u64>(), n in 2usize..=50, d in 1usize..=10, a in 0usize..6) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, d);
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let model = fit_ridge(&x, &y, ALPHAS[a]).unwrap();
        let (w, b) = ridge_oracle(&x, &y, ALPHAS[a]);
        for (got, want) in model.weights.iter().zip(&w) {
            prop_assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
        }
        prop_assert!((model.intercept - b).abs() <= 1e-8);
    }

    #[test]
    fn ridge_perturbations_never_improve(seed in any::<u64>(), n in 3usize..=30, d in 1usize..=6, a in 0usize..6) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, d);
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let alpha = ALPHAS[a];
        let m = fit_ridge(&x, &y, alpha).unwrap();
        let base = ridge_objective(&x, &y, alpha, &m.weights, m.intercept);
        for _ in 0..10 {
            let mut dir: Vec<f64> = (0..=d).map(|_| normal(&mut r)).collect();
            let len = norm(&dir);
            dir.iter_mut().for_each(|v| *v *= 1e-3 / len);
            let w: Vec<f64> = m.weights.iter().zip(&dir).map(|(a, b)| a + b).collect();
            let moved = ridge_objective(&x, &y, alpha, &w, m.intercept + dir[d]);
            prop_assert!(moved >= base - 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn ridge_residual_grows_with_alpha(seed in any::<u64>(), n in 3usize..=40, d in 1usize..=8) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, d);
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let mut last = 0.0;
        for alpha in ALPHAS {
            let m = fit_ridge(&x, &y, alpha).unwrap();
            let pred = predict_ridge(&m, &x).unwrap();
            let res = norm(&y.iter().zip(&pred).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(res >= last - 1e-10 * (1.0 + last));
            last = res;
        }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..=20, d in 1usize..=5, ci in 0usize..3) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, d);
        let y: Vec<bool> = (0..n).map(|_| r.random()).collect();
        let c = [0.1, 1.0, 10.0][ci];
        let p: Vec<f64> = (0..=d).map(|_| normal(&mut r)).collect();
        let g = logistic_gradient(&x, &y, c, &p[..d], p[d]).unwrap();
        let fd = central_diff(|q| logistic_objective_naive(&x, &y, c, &q[..d], q[d]), &p, 1e-5);
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= 1e-4 * norm(&g).max(1e-3), "{g:?} vs {fd:?}");
    }

    #[test]
    fn logistic_solution_is_stationary_and_deterministic(seed in any::<u64>(), n in 2usize..=40, d in 1usize..=6, ci in 0usize..5) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, d);
        let y = random_labels(&mut r, &x);
        let c = [0.01, 0.1, 1.0, 10.0, 100.0][ci];
        let m = fit_logistic(&x, &y, c).unwrap();
        let g = logistic_gradient(&x, &y, c, &m.weights, m.intercept).unwrap();
        let g0 = logistic_gradient(&x, &y, c, &vec![0.0; d], 0.0).unwrap();
        prop_assert!(norm(&g) <= GRADIENT_RTOL * norm(&g0).max(1.0));
        let again = fit_logistic(&x, &y, c).unwrap();
        prop_assert_eq!(m, again);
    }

    #[test]
    fn logistic_training_loss_falls_with_c(seed in any::<u64>(), n in 4usize..=30, d in 1usize..=5) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, d);
        let y = random_labels(&mut r, &x);
        let mut last = f64::INFINITY;
        for c in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let m = fit_logistic(&x, &y, c).unwrap();
            let loss = logistic_objective_naive(&x, &y, 1.0, &m.weights, m.intercept)
                - 0.5 * m.weights.iter().map(|v| v * v).sum::<f64>();
            prop_assert!(loss <= last + 1e-9 * last.abs().max(1.0), "{loss} after {last}");
            last = loss;
        }
    }
}

#[test]
fn wide_design_is_stationary() {
    let mut r = rng(7);
    let x = normal_matrix(&mut r, 12, 40);
    let y = random_labels(&mut r, &x);
    for c in [0.01, 1.0, 100.0] {
        let m = fit_logistic(&x, &y, c).unwrap();
        let g = logistic_gradient(&x, &y, c, &m.weights, m.intercept).unwrap();
        assert!(norm(&g) <= 1e-6, "C={c}: {}", norm(&g));
    }
}

#[test]
fn ridge_hand_examples_through_prediction() {
    let x = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
    let m = fit_ridge(&x, &[0.0, 2.0], 2.0).unwrap();
    assert!((m.weights[0] - 0.5).abs() < 1e-12 && (m.intercept - 0.5).abs() < 1e-12);
    let p = predict_ridge(&m, &DMatrix::from_row_slice(1, 1, &[0.0])).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-12);

    let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
    let y = [1.0, 2.0, 3.0];
    let m = fit_ridge(&x, &y, 0.0).unwrap();
    for (p, t) in predict_ridge(&m, &x).unwrap().iter().zip(y) {
        assert!((p - t).abs() <= 1e-10);
    }

    let big = fit_ridge(&x, &y, 1e9).unwrap();
    assert!(big.weights[0].abs() < 1e-3 && (big.intercept - 2.0).abs() < 1e-3);
}
