use std::f64::consts::PI;

use convex_invariance::bodies::ConvexBody;
use convex_invariance::coefficients::symbol;
use convex_invariance::conditions::{
    check_theorem1_conditions, ellipticity_constant, left_eigen_scalar, DEFAULT_EIGEN_TOL,
};
use convex_invariance::linalg::{left_split, min_sym_eigenvalue, packed_pairs};
use convex_invariance::SystemCoefficients;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perturbed_laplacian(n: usize, m: usize, eps: f64, seed: u64) -> SystemCoefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let packed = packed_pairs(n)
        .into_iter()
        .map(|(j, k)| {
            let base = if j == k { DMatrix::identity(m, m) } else { DMatrix::zeros(m, m) };
            base + DMatrix::from_fn(m, m, |_, _| eps * rng.random_range(-1.0..1.0))
        })
        .collect();
    SystemCoefficients::constant(n, m, packed).unwrap()
}

/// Brute-force minimum over 10⁴ directions of the unit sphere.
fn sigma_scan_oracle(c: &SystemCoefficients) -> f64 {
    let n = c.n();
    let packed = c.constant_second_order().unwrap();
    let count = 10_000;
    (0..count)
        .map(|i| {
            let sigma = if n == 2 {
                let t = PI * i as f64 / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            } else {
                // golden-spiral points
                let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = PI * (3.0 - 5f64.sqrt()) * i as f64;
                DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
            };
            min_sym_eigenvalue(&symbol(packed, n, &sigma))
        })
        .fold(f64::INFINITY, f64::min)
}

fn diagonal_system(rng: &mut ChaCha8Rng) -> SystemCoefficients {
    let diag = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        DMatrix::from_diagonal(&DVector::from_fn(2, |_, _| rng.random_range(lo..hi)))
    };
    let packed = vec![diag(rng, 0.5, 2.0), diag(rng, -0.3, 0.3), diag(rng, 0.5, 2.0)];
    SystemCoefficients::constant(2, 2, packed)
        .unwrap()
        .with_first_order(vec![diag(rng, -1.0, 1.0), diag(rng, -1.0, 1.0)])
        .unwrap()
}

#[test]
fn perturbed_laplacian_tracks_dense_scan() {
    for (seed, (n, m)) in [(2, 1), (2, 2), (3, 2), (3, 3)].into_iter().enumerate() {
        for eps in [0.0, 0.02, 0.1, 0.2] {
            let c = perturbed_laplacian(n, m, eps, seed as u64);
            let est = ellipticity_constant(&c, &[vec![0.0; n]], 64).unwrap();
            let oracle = sigma_scan_oracle(&c);
            // δ̂ is attained somewhere, so it cannot undercut the dense scan by
            // more than the scan's own resolution
            assert!(est >= oracle - 1e-3, "n={n} m={m} eps={eps}: {est} < {oracle}");
            assert!(est <= oracle + 1e-6, "n={n} m={m} eps={eps}: {est} > {oracle}");
            // |Σ E_jk σ_j σ_k| ≤ (Σ |σ_j|)² m ε ≤ n m ε
            let c_bound = (n * m) as f64;
            assert!(est >= 1.0 - c_bound * eps - 1e-12, "n={n} m={m} eps={eps}: {est}");
        }
    }
}

#[test]
fn theorem1_report_certifies_reduced_ellipticity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let orthant = ConvexBody::orthant(&[0.0, 0.0]);
    let xs = vec![vec![0.0, 0.0]];
    for _ in 0..50 {
        let c = diagonal_system(&mut rng);
        let r = check_theorem1_conditions(&c, &orthant, &xs, 16, DEFAULT_EIGEN_TOL).unwrap();
        assert!(r.passed);
        assert!(r.reduced_delta.unwrap() >= r.delta_estimate - 1e-12);
        assert_eq!(r.failures.is_empty(), r.passed);
    }
}

#[test]
fn left_multiplied_family_passes_with_the_original() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let orthant = ConvexBody::orthant(&[1.0, -1.0]);
    let xs = vec![vec![0.3, 0.7]];
    for _ in 0..30 {
        let c = diagonal_system(&mut rng);
        let p = DMatrix::from_diagonal(&DVector::from_fn(2, |_, _| rng.random_range(0.2..3.0)));
        let pc = c.left_multiply(&p).unwrap();
        let a = check_theorem1_conditions(&c, &orthant, &xs, 16, DEFAULT_EIGEN_TOL).unwrap();
        let b = check_theorem1_conditions(&pc, &orthant, &xs, 16, DEFAULT_EIGEN_TOL).unwrap();
        assert!(a.passed && b.passed);
    }
}

#[test]
fn sampled_coefficients_are_checked_pointwise() {
    // upper triangular away from x₁ = 0.5, with a lower entry that switches on
    let c = SystemCoefficients::sampled(
        2,
        2,
        std::sync::Arc::new(|x: &[f64]| {
            let low = if x[0] > 0.5 { 0.2 } else { 0.0 };
            vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.3, low, 1.0]),
                DMatrix::zeros(2, 2),
                DMatrix::identity(2, 2),
            ]
        }),
    )
    .unwrap();
    let half_plane = ConvexBody::polyhedral_angle(2, &[1], &[0.0]).unwrap();
    let pass = check_theorem1_conditions(&c, &half_plane, &[vec![0.1, 0.0], vec![0.4, 0.0]], 8, DEFAULT_EIGEN_TOL).unwrap();
    assert!(pass.passed);
    let fail = check_theorem1_conditions(&c, &half_plane, &[vec![0.1, 0.0], vec![0.9, 0.0]], 8, DEFAULT_EIGEN_TOL).unwrap();
    assert!(!fail.passed);
    assert!(fail.failures.iter().all(|f| f.x_index == Some(1)));
}

proptest! {
    #[test]
    fn residual_is_orthogonal_to_the_normal(
        entries in prop::collection::vec(-5.0f64..5.0, 9),
        dir in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let nu = DVector::from_vec(dir);
        prop_assume!(nu.norm() > 1e-3);
        let nu = nu.normalize();
        let m = DMatrix::from_row_slice(3, 3, &entries);
        let (g, f) = left_split(&m, &nu);
        prop_assert!(f.dot(&nu).abs() <= 1e-12 * (1.0 + m.norm()));
        prop_assert!((m.transpose() * &nu - &nu * g - &f).amax() <= 1e-12 * (1.0 + m.norm()));
    }

    #[test]
    fn returned_scalar_meets_the_residual_bound(
        entries in prop::collection::vec(-2.0f64..2.0, 4),
        angle in 0.0f64..std::f64::consts::TAU,
        tol in 1e-10f64..1e-2,
    ) {
        let m = DMatrix::from_row_slice(2, 2, &entries);
        let nu = DVector::from_vec(vec![angle.cos(), angle.sin()]);
        if let Some(a) = left_eigen_scalar(&m, &nu, tol).unwrap() {
            prop_assert!((m.transpose() * &nu - &nu * a).norm() <= tol * (1.0 + m.norm()));
        }
    }

    #[test]
    fn refinement_never_raises_the_estimate(seed in 0u64..1000, eps in 0.0f64..0.3) {
        let c = perturbed_laplacian(3, 2, eps, seed);
        let coarse = ellipticity_constant(&c, &[vec![0.0; 3]], 16).unwrap();
        let fine = ellipticity_constant(&c, &[vec![0.0; 3]], 32).unwrap();
        prop_assert!(fine <= coarse + 1e-6, "{fine} > {coarse}");
    }
}
