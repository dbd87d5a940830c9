use std::sync::Arc;

use convex_invariance::bodies::{ConvexBody, TOL_GEOM};
use convex_invariance::linalg::for_each_subset;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn unit(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v).normalize()
}

fn ellipse() -> ConvexBody {
    // x²/4 + y² ≤ 1
    let sampler = Arc::new(|budget: usize| {
        (0..budget)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / budget as f64;
                let a = DVector::from_vec(vec![2.0 * t.cos(), t.sin()]);
                let n = DVector::from_vec(vec![t.cos() / 2.0, t.sin()]).normalize();
                (a, n)
            })
            .collect()
    });
    ConvexBody::sampled_smooth(2, 512, sampler).unwrap()
}

fn zoo() -> Vec<ConvexBody> {
    vec![
        ConvexBody::half_space(unit(&[1.0, -2.0, 0.5]), DVector::from_vec(vec![0.3, 0.0, -1.0])).unwrap(),
        ConvexBody::orthant(&[0.0, 1.0]),
        ConvexBody::polyhedral_angle(3, &[0, 2], &[-1.0, 0.5]).unwrap(),
        ConvexBody::polyhedral_cylinder(3, &[1], &[0.0], &[2.0]).unwrap(),
        ConvexBody::spherical_cylinder(3, 2, 0.7).unwrap(),
        ConvexBody::cone(
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
            vec![unit(&[1.0, 0.0, -1.0]), unit(&[-1.0, 0.0, -1.0]), unit(&[0.0, 1.0, -1.0]), unit(&[0.0, -1.0, -1.0])],
        )
        .unwrap(),
        ConvexBody::polytope(vec![
            (unit(&[1.0, 0.0]), DVector::from_vec(vec![1.0, 0.0])),
            (unit(&[-1.0, 1.0]), DVector::from_vec(vec![0.0, 1.0])),
            (unit(&[-1.0, -1.0]), DVector::from_vec(vec![0.0, -1.0])),
        ])
        .unwrap(),
        ConvexBody::ball(DVector::from_vec(vec![1.0, -2.0]), 0.5).unwrap(),
        ellipse(),
    ]
}

#[test]
fn layer_constrains_only_its_coordinate() {
    let layer = ConvexBody::polyhedral_cylinder(3, &[2], &[0.0], &[1.0]).unwrap();
    assert!(layer.contains(&DVector::from_vec(vec![5.0, -7.0, 0.5]), 0.0));
}

#[test]
fn half_space_boundary_point_has_zero_margin() {
    let alpha = 0.75;
    let body = ConvexBody::half_space(unit(&[0.0, -1.0]), DVector::from_vec(vec![0.0, alpha])).unwrap();
    assert_eq!(body.violation_margin(&DVector::from_vec(vec![-3.0, alpha])), 0.0);
}

#[test]
fn sampled_smooth_membership_tracks_the_ellipse() {
    let e = ellipse();
    assert!(e.contains(&DVector::from_vec(vec![1.9, 0.0]), 0.0));
    assert!(!e.contains(&DVector::from_vec(vec![1.5, 0.8]), 0.0));
}

#[test]
fn cone_facet_subsets_are_well_conditioned() {
    let normals = vec![unit(&[1.0, 0.0, -1.0]), unit(&[-1.0, 0.0, -1.0]), unit(&[0.0, 1.0, -1.0]), unit(&[0.0, -1.0, -1.0])];
    ConvexBody::cone(DVector::zeros(3), normals.clone()).unwrap();
    for_each_subset(normals.len(), 3, |subset| {
        let cols: Vec<DVector<f64>> = subset.iter().map(|&i| normals[i].clone()).collect();
        assert!(DMatrix::from_columns(&cols).determinant().abs() > 1e-10);
        true
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normals_point_outward(t in 1e-6f64..10.0, budget in 1usize..40) {
        for body in zoo() {
            for s in body.normal_samples(budget).unwrap() {
                prop_assert!((s.normal.norm() - 1.0).abs() <= 1e-12);
                let out = &s.point + &s.normal * (t + TOL_GEOM);
                prop_assert!(!body.contains(&out, TOL_GEOM), "{} at {:?}", body.kind(), s.point);
            }
        }
    }

    #[test]
    fn membership_agrees_with_margin(coords in prop::collection::vec(-3.0f64..3.0, 3)) {
        for body in zoo() {
            let u = DVector::from_column_slice(&coords[..body.dim()]);
            prop_assert_eq!(body.contains(&u, 0.0), body.violation_margin(&u) <= 0.0);
        }
    }

    #[test]
    fn members_satisfy_every_supporting_half_space(coords in prop::collection::vec(-3.0f64..3.0, 3)) {
        for body in zoo() {
            let u = body.project(&DVector::from_column_slice(&coords[..body.dim()]));
            prop_assert!(body.violation_margin(&u) <= 1e-6, "{} {}", body.kind(), body.violation_margin(&u));
            for s in body.normal_samples(16).unwrap() {
                prop_assert!((&u - &s.point).dot(&s.normal) <= 1e-6);
            }
        }
    }
}
