use std::f64::consts::{PI, TAU};

use convex_invariance::halfspace::{
    kernel_normalization_check, solve_halfspace, solve_mode, HalfSpacePlan, HalfSpaceProblem, PeriodicData,
};
use convex_invariance::SystemCoefficients;
use nalgebra::{dmatrix, DMatrix};

fn gaussian_periodized(y: f64, cell: f64, s: f64) -> f64 {
    (-6..=6)
        .map(|k| {
            let d = y - k as f64 * cell;
            (-d * d / (2.0 * s * s)).exp()
        })
        .sum()
}

/// Poisson kernel of the half-plane for `cell`-periodic data.
fn periodic_poisson(t: f64, xn: f64, cell: f64) -> f64 {
    let a = TAU * xn / cell;
    a.sinh() / (cell * (a.cosh() - (TAU * t / cell).cos()))
}

#[test]
fn gaussian_matches_poisson_quadrature() {
    let (cell, s, samples) = (4.0, 0.3, 256);
    let heights = [0.1, 0.3, 1.0];
    let lap = SystemCoefficients::laplacian(2, 1);
    let data = PeriodicData::from_fn(1, samples, cell, 1, |y| vec![gaussian_periodized(y[0], cell, s)]).unwrap();
    let sol = solve_halfspace(&HalfSpaceProblem {
        coeffs: lap,
        data: data.clone(),
        heights: heights.to_vec(),
    })
    .unwrap();
    let quad = 8192;
    let hq = cell / quad as f64;
    for (h, &xn) in heights.iter().enumerate() {
        for node in (0..samples).step_by(16) {
            let x1 = data.coords(node)[0];
            let oracle: f64 = (0..quad)
                .map(|i| {
                    let y = -0.5 * cell + i as f64 * hq;
                    gaussian_periodized(y, cell, s) * periodic_poisson(x1 - y, xn, cell) * hq
                })
                .sum();
            let got = sol.at(h, node)[0];
            assert!((got - oracle).abs() < 1e-6, "xn = {xn}, x1 = {x1}: {got} vs {oracle}");
        }
    }
}

#[test]
fn odd_data_vanish_on_symmetry_axis() {
    let lap = SystemCoefficients::laplacian(2, 1);
    let plan = HalfSpacePlan::new(&lap, 128, 2.0, &[0.0, 0.05, 0.4, 2.0]).unwrap();
    let data = PeriodicData::from_fn(1, 128, 2.0, 1, |y| {
        vec![(PI * y[0]).sin() * (1.0 + (PI * y[0]).cos().powi(2)) + 0.3 * (4.0 * PI * y[0]).sin()]
    })
    .unwrap();
    let sol = plan.solve(&data).unwrap();
    for h in 0..4 {
        assert!(sol.at(h, 64)[0].abs() < 1e-13);
    }
}

#[test]
fn stable_exponents_scale_with_frequency() {
    let packed = vec![
        dmatrix![2.0, 0.4; -0.3, 1.0],
        dmatrix![0.3, 0.1; 0.0, -0.2],
        dmatrix![1.0, 0.2; 0.1, 1.5],
    ];
    for xi in [0.7, 3.0, -11.0] {
        let a = solve_mode(&packed, 2, &[xi]).unwrap();
        let b = solve_mode(&packed, 2, &[2.0 * xi]).unwrap();
        for (p, q) in a.stable_exponents.iter().zip(&b.stable_exponents) {
            let scale = (p[0].hypot(p[1])).max(1e-300);
            assert!(((2.0 * p[0] - q[0]).hypot(2.0 * p[1] - q[1])) <= 1e-9 * 2.0 * scale);
        }
    }
}

#[test]
fn three_dimensional_scalar_operator_solves_its_equation() {
    // A·L with L = ∂₁² + ∂₂² + ∂₃² + 0.5 ∂₁∂₃; components satisfy L u = 0
    let a = dmatrix![1.0, 0.4; -0.2, 0.8];
    let zero = DMatrix::zeros(2, 2);
    let packed = vec![a.clone(), zero.clone(), &a * 0.25, a.clone(), zero, a.clone()];
    let coeffs = SystemCoefficients::constant(3, 2, packed).unwrap();
    let cell = 1.0;
    let samples = 128;
    let dz = 1e-3;
    let heights = [0.2 - dz, 0.2, 0.2 + dz];
    let plan = HalfSpacePlan::new(&coeffs, samples, cell, &heights).unwrap();
    let data = PeriodicData::from_fn(2, samples, cell, 2, |y| {
        let (s, t) = (TAU * y[0], TAU * y[1]);
        vec![1.0 + s.cos() * t.sin(), (2.0 * s).sin() + 0.5 * t.cos()]
    })
    .unwrap();
    let sol = plan.solve(&data).unwrap();
    assert!(sol.max_imag < 1e-10);
    let h = cell / samples as f64;
    let at = |hi: usize, i: usize, j: usize, p: usize| sol.at(hi, (i % samples) + samples * (j % samples))[p];
    let (i, j) = (37, 53);
    for p in 0..2 {
        let u11 = (at(1, i + 1, j, p) - 2.0 * at(1, i, j, p) + at(1, i + samples - 1, j, p)) / (h * h);
        let u22 = (at(1, i, j + 1, p) - 2.0 * at(1, i, j, p) + at(1, i, j + samples - 1, p)) / (h * h);
        let u33 = (at(2, i, j, p) - 2.0 * at(1, i, j, p) + at(0, i, j, p)) / (dz * dz);
        let u13 = (at(2, i + 1, j, p) - at(2, i + samples - 1, j, p) - at(0, i + 1, j, p) + at(0, i + samples - 1, j, p))
            / (4.0 * h * dz);
        let residual = u11 + u22 + u33 + 0.5 * u13;
        // O(h²) truncation of the probe stencil at the band-limit of the data
        assert!(residual.abs() < 0.02, "component {p}: {residual}");
    }
}

#[test]
fn normalization_holds_for_coupled_systems() {
    let c = SystemCoefficients::constant(
        2,
        2,
        vec![dmatrix![1.0, 0.0; 0.0, 1.0], dmatrix![0.0, 0.0; 0.3, 0.0], dmatrix![1.0, 0.0; 0.0, 1.0]],
    )
    .unwrap();
    assert!(kernel_normalization_check(&c, 64).unwrap() <= 1e-10);
}

#[test]
fn coupled_system_matches_closed_form() {
    // A₁₁ = A₂₂ = I, A₁₂ = ε E₂₁: u₁ = P f₁, u₂ = P f₂ − ε x₂ ∂₁ P f₁
    let eps = 0.3;
    let c = SystemCoefficients::constant(
        2,
        2,
        vec![dmatrix![1.0, 0.0; 0.0, 1.0], dmatrix![0.0, 0.0; eps, 0.0], dmatrix![1.0, 0.0; 0.0, 1.0]],
    )
    .unwrap();
    let heights = [0.0, 0.05, 0.3];
    let plan = HalfSpacePlan::new(&c, 64, 1.0, &heights).unwrap();
    let data = PeriodicData::from_fn(1, 64, 1.0, 2, |y| {
        vec![1.0 + (TAU * y[0]).cos(), 0.5 + 0.25 * (2.0 * TAU * y[0]).sin()]
    })
    .unwrap();
    let sol = plan.solve(&data).unwrap();
    for (h, &xn) in heights.iter().enumerate() {
        for node in 0..64 {
            let y = data.coords(node)[0];
            let d1 = (-TAU * xn).exp();
            let d2 = (-2.0 * TAU * xn).exp();
            let u1 = 1.0 + (TAU * y).cos() * d1;
            let u2 = 0.5 + 0.25 * (2.0 * TAU * y).sin() * d2 + eps * xn * TAU * (TAU * y).sin() * d1;
            let got = sol.at(h, node);
            assert!((got[0] - u1).abs() < 1e-12 && (got[1] - u2).abs() < 1e-12, "{got:?} vs {u1}, {u2}");
        }
    }
}
