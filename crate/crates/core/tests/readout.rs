//! Readout solver checked against an independent nalgebra route.

use approx::assert_relative_eq;
use lsm_core::readout::{normal_equations, solve_ridge, with_bias};
use lsm_core::{fit_readout, predict, FeatureMode, Matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Ridge with bias solved through nalgebra's LU on explicitly formed
/// normal equations.
fn oracle_fit(s: &Matrix, y: &Matrix, lambda: f64) -> DMatrix<f64> {
    let x = to_na(&with_bias(s));
    let a = x.transpose() * &x + DMatrix::identity(x.ncols(), x.ncols()) * lambda;
    let b = x.transpose() * to_na(y);
    a.lu().solve(&b).expect("oracle system is nonsingular")
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

#[test]
fn identity_features_tend_to_minimum_norm_solution() {
    let s = Matrix::identity(2);
    let y = Matrix::from_rows(&[[2.0], [3.0]]).unwrap();

    // S̃ = [I | 1] is 2x3 of rank 2; as lambda -> 0 ridge converges to the
    // minimum-norm interpolant, computed here by SVD pseudo-inverse.
    let pinv = to_na(&with_bias(&s)).pseudo_inverse(1e-12).unwrap();
    let min_norm = pinv * to_na(&y);
    assert_relative_eq!(min_norm[0], 1.0 / 3.0, epsilon = 1e-12);
    assert_relative_eq!(min_norm[1], 4.0 / 3.0, epsilon = 1e-12);
    assert_relative_eq!(min_norm[2], 5.0 / 3.0, epsilon = 1e-12);

    let model = fit_readout(&s, &y, Some(1e-12), FeatureMode::default()).unwrap();
    for (i, expected) in [1.0 / 3.0, 4.0 / 3.0, 5.0 / 3.0].into_iter().enumerate() {
        assert!((model.weights()[(i, 0)] - expected).abs() < 1e-3);
    }
    // Targets are reproduced.
    let pred = predict(&model, &s).unwrap();
    assert!((pred[(0, 0)] - 2.0).abs() < 1e-9 && (pred[(1, 0)] - 3.0).abs() < 1e-9);
}

#[test]
fn no_bias_diagonal_case() {
    let s = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
    let y = Matrix::from_rows(&[[1.0], [4.0]]).unwrap();
    let w = solve_ridge(&s, &y, 1.0).unwrap();
    assert_relative_eq!(w[(0, 0)], 0.5, epsilon = 1e-14);
    assert_relative_eq!(w[(1, 0)], 1.6, epsilon = 1e-14);
}

#[test]
fn fit_matches_lu_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let t = rng.random_range(3..60);
        let f = rng.random_range(1..20);
        let p = rng.random_range(1..4);
        let lambda = 10f64.powf(rng.random_range(-6.0..1.0));
        let s = random_matrix(&mut rng, t, f);
        let y = random_matrix(&mut rng, t, p);
        let model = fit_readout(&s, &y, Some(lambda), FeatureMode::default()).unwrap();
        let oracle = oracle_fit(&s, &y, lambda);
        let scale = 1.0 + oracle.amax();
        for r in 0..=f {
            for c in 0..p {
                assert!((model.weights()[(r, c)] - oracle[(r, c)]).abs() <= 1e-8 * scale);
            }
        }
    }
}

#[test]
fn exact_interpolation_when_overdetermined() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let f = rng.random_range(2..12);
        let t = f + 5;
        let s = random_matrix(&mut rng, t, f);
        // Targets generated by a known linear map, so an exact fit exists.
        let w = random_matrix(&mut rng, f + 1, 2);
        let y = with_bias(&s).matmul(&w).unwrap();
        let model = fit_readout(&s, &y, Some(1e-12), FeatureMode::default()).unwrap();
        let pred = predict(&model, &s).unwrap();
        for (a, b) in pred.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

fn residual_ok(s: &Matrix, y: &Matrix, lambda: f64) -> bool {
    let model = fit_readout(s, y, Some(lambda), FeatureMode::default()).unwrap();
    let (a, b) = normal_equations(&with_bias(s), y, lambda);
    let r = lsm_core::linalg::residual(&a, model.weights(), &b);
    r.max_abs() <= 1e-8 * (1.0 + b.max_abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normal_equation_residual_is_small(seed in any::<u64>(), lexp in -6.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.random_range(1..80);
        let f = rng.random_range(1..30);
        let s = random_matrix(&mut rng, t, f);
        let y = random_matrix(&mut rng, t, 2);
        prop_assert!(residual_ok(&s, &y, 10f64.powf(lexp)));
    }

    #[test]
    fn fit_is_linear_in_targets(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_matrix(&mut rng, 30, 6);
        let y1 = random_matrix(&mut rng, 30, 1);
        let y2 = random_matrix(&mut rng, 30, 1);
        let combo = Matrix::from_vec(
            30,
            1,
            y1.as_slice().iter().zip(y2.as_slice()).map(|(u, v)| a * u + b * v).collect(),
        )
        .unwrap();
        let mode = FeatureMode::default();
        let w = fit_readout(&s, &combo, Some(0.01), mode).unwrap();
        let w1 = fit_readout(&s, &y1, Some(0.01), mode).unwrap();
        let w2 = fit_readout(&s, &y2, Some(0.01), mode).unwrap();
        for i in 0..7 {
            let expect = a * w1.weights()[(i, 0)] + b * w2.weights()[(i, 0)];
            prop_assert!((w.weights()[(i, 0)] - expect).abs() <= 1e-9);
        }
    }

    #[test]
    fn larger_lambda_shrinks_weights(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_matrix(&mut rng, 25, 8);
        let y = random_matrix(&mut rng, 25, 2);
        let mut last = f64::INFINITY;
        for lambda in [1e-6, 1e-4, 1e-2, 1.0, 100.0] {
            let norm = fit_readout(&s, &y, Some(lambda), FeatureMode::default()).unwrap().weights().norm();
            prop_assert!(norm <= last * (1.0 + 1e-12));
            last = norm;
        }
    }
}
