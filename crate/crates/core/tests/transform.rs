use convex_invariance::bodies::ConvexBody;
use convex_invariance::transform::{
    apply_transform, averaged_kernel, check_kernel_invariance, double_layer_kernel, witness_for_first_failure,
    DiscreteKernel, KernelFailureKind, KernelNode, KernelPoint,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Diagonal non-negative nodes, normalized componentwise.
fn diagonal_kernel(m: usize, nodes: usize, rng: &mut ChaCha8Rng) -> DiscreteKernel {
    let weights: Vec<f64> = (0..nodes).map(|_| rng.random_range(0.1..1.0)).collect();
    let diags: Vec<DVector<f64>> = (0..nodes)
        .map(|_| DVector::from_fn(m, |_, _| rng.random_range(0.0..2.0)))
        .collect();
    let mut totals = DVector::zeros(m);
    for (d, w) in diags.iter().zip(&weights) {
        totals += d * *w;
    }
    let nodes = diags
        .iter()
        .zip(&weights)
        .map(|(d, &w)| KernelNode {
            weight: w,
            matrix: DMatrix::from_diagonal(&d.component_div(&totals)),
            position: None,
        })
        .collect();
    DiscreteKernel::new(m, vec![KernelPoint { label: "x0".into(), nodes }]).unwrap()
}

fn dense_kernel(m: usize, nodes: usize, rng: &mut ChaCha8Rng) -> DiscreteKernel {
    let nodes: Vec<KernelNode> = (0..nodes)
        .map(|_| KernelNode {
            weight: rng.random_range(0.1..1.0),
            matrix: DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0)),
            position: None,
        })
        .collect();
    DiscreteKernel::new(m, vec![KernelPoint::normalized_by_last("x0", nodes).unwrap()]).unwrap()
}

fn convex_polygon(rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let k = rng.random_range(3..8);
    let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 0.05);
    angles.iter().map(|t| [t.cos(), t.sin()]).collect()
}

#[test]
fn negative_weight_witness_leaves_the_interval() {
    let interval = ConvexBody::polyhedral_cylinder(1, &[0], &[0.0], &[1.0]).unwrap();
    let nodes = vec![
        KernelNode { weight: 1.0, matrix: DMatrix::from_element(1, 1, -0.5), position: None },
        KernelNode { weight: 1.0, matrix: DMatrix::from_element(1, 1, 0.0), position: None },
    ];
    let k = DiscreteKernel::new(1, vec![KernelPoint::normalized_by_last("x0", nodes).unwrap()]).unwrap();
    let w = witness_for_first_failure(&k, &interval, 8, 1e-10).unwrap();
    assert_eq!(w.kind, KernelFailureKind::NegativeG);
    assert!(w.values.iter().all(|v| (0.0..=1.0).contains(&v[0])));
    assert!(w.image_margin > 0.0);
    assert!(w.predicted_excess > 0.0);
}

#[test]
fn residual_witness_for_dense_kernel_on_the_orthant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let orthant = ConvexBody::orthant(&[0.0, 0.0, 0.0]);
    for _ in 0..20 {
        let k = dense_kernel(3, 4, &mut rng);
        let w = witness_for_first_failure(&k, &orthant, 16, 1e-10).unwrap();
        for v in &w.values {
            assert!(orthant.violation_margin(&DVector::from_column_slice(v)) <= 0.0);
        }
        assert!(w.image_margin > 0.0, "{w:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passing_kernels_keep_orthant_data_inside(seed in 0u64..10_000, m in 1usize..4, nodes in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = diagonal_kernel(m, nodes, &mut rng);
        let orthant = ConvexBody::orthant(&vec![0.0; m]);
        prop_assert!(check_kernel_invariance(&k, &orthant, 16, 1e-10).unwrap().passed);
        for _ in 0..10 {
            let u: Vec<DVector<f64>> = (0..nodes)
                .map(|_| DVector::from_fn(m, |_, _| rng.random_range(0.0..5.0)))
                .collect();
            let image = apply_transform(&k, &u, 0).unwrap();
            prop_assert!(orthant.violation_margin(&image) <= 1e-12);
        }
    }

    #[test]
    fn failure_residuals_are_tangential(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = dense_kernel(2, 3, &mut rng);
        let cone = ConvexBody::cone(
            DVector::zeros(2),
            vec![DVector::from_vec(vec![0.0, -1.0]), DVector::from_vec(vec![-1.0, 0.4]).normalize()],
        )
        .unwrap();
        let report = check_kernel_invariance(&k, &cone, 8, 1e-10).unwrap();
        for f in &report.failures {
            let r = DVector::from_column_slice(&f.residual);
            let nu = DVector::from_column_slice(&f.normal);
            prop_assert!(r.dot(&nu).abs() <= 1e-12 * (1.0 + r.norm()));
        }
    }

    #[test]
    fn double_layer_weights_are_normalized(seed in 0u64..10_000, refinement in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let polygon = convex_polygon(&mut rng);
        prop_assume!(polygon.len() >= 3);
        let (cx, cy) = polygon.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        let c = [cx / polygon.len() as f64, cy / polygon.len() as f64];
        let k = double_layer_kernel(&polygon, &[c], refinement).unwrap();
        prop_assert!(k.normalization_defect(0) <= 1e-12);
        prop_assert!(k.points()[0].nodes.iter().all(|n| n.weight > 0.0));
    }

    #[test]
    fn averaging_stays_between_data_bounds(
        x in 0.05f64..0.95,
        width in 0.05f64..2.0,
        data in prop::collection::vec(-10.0f64..10.0, 32),
    ) {
        let k = averaged_kernel(|x, y| (-(x - y).powi(2) / width).exp(), &[x], 0.0, 1.0, 32).unwrap();
        let u: Vec<DVector<f64>> = data.iter().map(|&v| DVector::from_element(1, v)).collect();
        let v = apply_transform(&k, &u, 0).unwrap()[0];
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }
}
