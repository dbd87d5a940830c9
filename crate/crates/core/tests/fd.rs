use std::sync::Arc;

use convex_invariance::bodies::ConvexBody;
use convex_invariance::fd::{
    audit_invariance, search_counterexample, solve_quasilinear, BoxGrid, DirichletSolver, GridField, PicardConfig,
    SearchConfig, SolverConfig, SolverKind,
};
use convex_invariance::SystemCoefficients;
use nalgebra::{dmatrix, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solve(coeffs: &SystemCoefficients, grid: &BoxGrid, boundary: &GridField, kind: SolverKind) -> GridField {
    let config = SolverConfig { kind, ..SolverConfig::default() };
    DirichletSolver::new(coeffs, grid, config).unwrap().solve(boundary).unwrap().0
}

#[test]
fn harmonic_polynomials_are_exact_on_a_stretched_box() {
    let grid = BoxGrid::new(vec![-1.0, 0.5], vec![2.0, 1.5], vec![17, 9]).unwrap();
    let lap = SystemCoefficients::laplacian(2, 1);
    for kind in [SolverKind::BandedLu, SolverKind::BiCgStab, SolverKind::GaussSeidel] {
        for f in [|x: &[f64]| x[0], |x: &[f64]| x[0] * x[0] - x[1] * x[1]] {
            let exact = GridField::from_fn(&grid, 1, |x| vec![f(x)]).unwrap();
            let u = solve(&lap, &grid, &exact, kind);
            assert!(u.max_diff(&exact) < 1e-8, "{kind:?}: {}", u.max_diff(&exact));
        }
    }
}

#[test]
fn scalar_operator_decouples_into_scalar_solves() {
    let grid = BoxGrid::unit(2, 21).unwrap();
    let a = dmatrix![1.0, 0.3; -0.2, 1.0];
    let zero = DMatrix::zeros(2, 2);
    let system = SystemCoefficients::constant(2, 2, vec![a.clone(), zero, a]).unwrap();
    let lap = SystemCoefficients::laplacian(2, 1);
    let g = |x: &[f64]| vec![(3.0 * x[0]).sin() + x[1], x[0] * x[1] * x[1]];
    let bd = GridField::from_fn(&grid, 2, g).unwrap();
    let u = solve(&system, &grid, &bd, SolverKind::BandedLu);
    for p in 0..2 {
        let bp = GridField::from_fn(&grid, 1, |x| vec![g(x)[p]]).unwrap();
        let up = solve(&lap, &grid, &bp, SolverKind::BandedLu);
        for v in 0..grid.node_count() {
            assert!((u.at(v)[p] - up.at(v)[0]).abs() < 1e-10);
        }
    }
}

#[test]
fn picard_reproduces_affine_data() {
    // B(η) = (1 + min(|η|², 10)) I: affine functions solve every frozen system
    let grid = BoxGrid::unit(2, 17).unwrap();
    let c = SystemCoefficients::quasilinear(
        2,
        1,
        Arc::new(|_x: &[f64], eta: &[f64]| {
            let s = 1.0 + eta.iter().map(|e| e * e).sum::<f64>().min(10.0);
            vec![dmatrix![s], dmatrix![0.0], dmatrix![s]]
        }),
    )
    .unwrap();
    let affine = GridField::from_fn(&grid, 1, |x| vec![0.3 + 2.0 * x[0] - 1.5 * x[1]]).unwrap();
    let (u, rep) = solve_quasilinear(&c, &grid, &affine, PicardConfig::default()).unwrap();
    assert!(u.max_diff(&affine) < 1e-8);
    assert!(rep.picard_iterations.is_some());
}

#[test]
fn left_multiplication_leaves_the_solution_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = BoxGrid::unit(2, 15).unwrap();
    let packed = vec![
        dmatrix![1.0, 0.2; 0.0, 1.3],
        dmatrix![0.1, 0.0; 0.0, -0.2],
        dmatrix![1.2, -0.1; 0.0, 0.9],
    ];
    let c = SystemCoefficients::constant(2, 2, packed)
        .unwrap()
        .with_first_order(vec![dmatrix![0.5, 0.0; 0.0, -0.3], dmatrix![0.0, 0.2; 0.0, 0.4]])
        .unwrap();
    let bd = GridField::from_fn(&grid, 2, |x| vec![(x[0] - x[1]).cos(), x[0] * x[0]]).unwrap();
    let u = solve(&c, &grid, &bd, SolverKind::BandedLu);
    for _ in 0..5 {
        let p = DMatrix::identity(2, 2) * 2.0 + DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.5..0.5));
        let v = solve(&c.left_multiply(&p).unwrap(), &grid, &bd, SolverKind::BandedLu);
        assert!(u.max_diff(&v) < 1e-10);
    }
}

#[test]
fn solution_carries_the_boundary_values() {
    let grid = BoxGrid::unit(3, 7).unwrap();
    let lap = SystemCoefficients::laplacian(3, 2);
    let bd = GridField::from_fn(&grid, 2, |x| vec![x[0].exp() * x[2], (x[1] * 7.0).sin()]).unwrap();
    let u = solve(&lap, &grid, &bd, SolverKind::Auto);
    for v in grid.boundary_nodes() {
        assert_eq!(u.at(v), bd.at(v));
    }
}

#[test]
fn diagonal_systems_keep_orthant_data_inside() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let grid = BoxGrid::unit(2, 25).unwrap();
    let orthant = ConvexBody::orthant(&[0.0, 0.0]);
    for _ in 0..10 {
        let d = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| DMatrix::from_fn(2, 2, |p, q| if p == q { rng.random_range(lo..hi) } else { 0.0 });
        let c = SystemCoefficients::constant(2, 2, vec![d(&mut rng, 0.5, 2.0), d(&mut rng, -0.2, 0.2), d(&mut rng, 0.5, 2.0)])
            .unwrap()
            .with_first_order(vec![d(&mut rng, -1.0, 1.0), d(&mut rng, -1.0, 1.0)])
            .unwrap();
        let bd = GridField::from_fn(&grid, 2, |x| vec![(5.0 * x[0]).sin().powi(2), x[1] * (1.0 - x[0])]).unwrap();
        let u = solve(&c, &grid, &bd, SolverKind::BandedLu);
        let audit = audit_invariance(&u, &orthant, None).unwrap();
        assert!(audit.max_margin <= 0.0, "{}", audit.max_margin);
    }
}

#[test]
fn search_finds_data_leaving_the_orthant() {
    // Δ coupled through a lower mixed term: u₂ picks up −∂₁∂₂u₁
    let grid = BoxGrid::unit(2, 25).unwrap();
    let c = SystemCoefficients::constant(
        2,
        2,
        vec![DMatrix::identity(2, 2), dmatrix![0.0, 0.0; 0.8, 0.0], DMatrix::identity(2, 2)],
    )
    .unwrap();
    let solver = DirichletSolver::new(&c, &grid, SolverConfig::default()).unwrap();
    let orthant = ConvexBody::orthant(&[0.0, 0.0]);
    let config = SearchConfig { seed: 4, budget: 150, modes: 3, amplitude: 1.0 };
    let found = search_counterexample(&solver, &orthant, config).unwrap();
    assert!(found.best_margin > 1e-3, "{}", found.best_margin);
    assert!(found.solves <= config.budget);
    for v in grid.boundary_nodes() {
        assert!(orthant.violation_margin(&nalgebra::DVector::from_column_slice(found.boundary.at(v))) <= 0.0);
    }
    let again = search_counterexample(&solver, &orthant, config).unwrap();
    assert_eq!(found.best_margin, again.best_margin);
}
