//! Constant-coefficient systems in the half-space `x_n > 0`.
//!
//! Boundary data are periodic samples on a tangential cell of side `L`
//! (`N` samples per axis, nodes `y_j = −L/2 + j L/N`); the periodic problem
//! is the object solved. For a tangential frequency `ξ'` the ansatz
//! `u = e^{i ξ'·x'} w(x_n)` turns the system into
//!
//! ```text
//! A_nn w'' + 2i Σ_j ξ_j A_jn w' − Σ_{j,k<n} A_jk ξ_j ξ_k w = 0,
//! ```
//!
//! whose decaying solutions are spanned by the stable invariant subspace of
//! the companion matrix. That subspace is computed with the matrix sign
//! function, which needs no eigenvectors and so also covers pencils with
//! Jordan chains; the mode is then `w(x_n) = exp(G x_n) w(0)`.
//! The zero mode is the constant `w(0)`.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::bodies::{ConvexBody, TOL_GEOM};
use crate::coefficients::SystemCoefficients;
use crate::conditions::ellipticity_constant;
use crate::error::{Error, Result};
use crate::fd::SearchConfig;
use crate::linalg::packed_index;

type C64 = Complex<f64>;
type CMat = DMatrix<C64>;

/// Audit tolerance for spectrally accurate half-space solutions.
pub const HALFSPACE_AUDIT_TOL: f64 = 1e-6;

/// Relative spectral gap `ε_spec / max(|ξ'|, 1)` required of every exponent.
pub const SPECTRAL_EPS: f64 = 1e-8;

/// Heights used by [`kernel_normalization_check`], in units of the cell.
pub const NORMALIZATION_PROBE_HEIGHTS: [f64; 5] = [0.0, 0.05, 0.2, 1.0, 5.0];

/// Periodic samples of `m`-vector data on the tangential grid, node-major
/// with tangential axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicData {
    pub tangential_dim: usize,
    pub samples: usize,
    pub cell: f64,
    pub m: usize,
    pub values: Vec<f64>,
}

impl PeriodicData {
    pub fn from_fn(
        tangential_dim: usize,
        samples: usize,
        cell: f64,
        m: usize,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let total = samples.pow(tangential_dim as u32);
        let mut values = Vec::with_capacity(total * m);
        for node in 0..total {
            let y = node_coords(tangential_dim, samples, cell, node);
            let v = f(&y);
            if v.len() != m {
                return Err(Error::Dimension(format!("data value at node {node} has length {}", v.len())));
            }
            values.extend(v);
        }
        Ok(PeriodicData {
            tangential_dim,
            samples,
            cell,
            m,
            values,
        })
    }

    pub fn node_count(&self) -> usize {
        self.samples.pow(self.tangential_dim as u32)
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        node_coords(self.tangential_dim, self.samples, self.cell, node)
    }
}

fn node_coords(d: usize, samples: usize, cell: f64, node: usize) -> Vec<f64> {
    let h = cell / samples as f64;
    let mut rest = node;
    (0..d)
        .map(|_| {
            let j = rest % samples;
            rest /= samples;
            -0.5 * cell + j as f64 * h
        })
        .collect()
}

/// Constant-coefficient half-space problem with periodic boundary data.
#[derive(Debug, Clone)]
pub struct HalfSpaceProblem {
    pub coeffs: SystemCoefficients,
    pub data: PeriodicData,
    pub heights: Vec<f64>,
}

/// Solution values at each requested height.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceSolution {
    pub heights: Vec<f64>,
    pub m: usize,
    pub tangential_dim: usize,
    pub samples: usize,
    pub cell: f64,
    /// `values[h]` is node-major like [`PeriodicData::values`].
    pub values: Vec<Vec<f64>>,
    /// Largest imaginary part discarded after the inverse transform.
    pub max_imag: f64,
}

impl HalfSpaceSolution {
    pub fn at(&self, height: usize, node: usize) -> &[f64] {
        &self.values[height][node * self.m..(node + 1) * self.m]
    }

    pub fn node_count(&self) -> usize {
        self.samples.pow(self.tangential_dim as u32)
    }

    /// CSV `y1..,x_n,u1..um` for one height.
    pub fn to_csv(&self, height: usize) -> String {
        let d = self.tangential_dim;
        let mut out: Vec<String> = (1..=d).map(|i| format!("y{i}")).collect();
        out.push("xn".into());
        out.extend((1..=self.m).map(|p| format!("u{p}")));
        let mut s = out.join(",");
        s.push('\n');
        for node in 0..self.node_count() {
            let mut row: Vec<String> = node_coords(d, self.samples, self.cell, node)
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect();
            row.push(format!("{:.17e}", self.heights[height]));
            row.extend(self.at(height, node).iter().map(|v| format!("{v:.17e}")));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// The decaying solution space of one tangential mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSolution {
    pub xi: Vec<f64>,
    /// Exponents with negative real part, as `[re, im]`.
    pub stable_exponents: Vec<[f64; 2]>,
    pub unstable_exponents: Vec<[f64; 2]>,
    /// Smallest `|Re λ|` over all `2m` exponents.
    pub min_abs_re: f64,
    #[serde(skip)]
    pub generator: CMat,
}

impl ModeSolution {
    /// `exp(G x_n)`: maps `w(0)` to `w(x_n)`.
    pub fn propagator(&self, height: f64) -> CMat {
        (&self.generator * C64::new(height, 0.0)).exp()
    }
}

fn cplx(m: &DMatrix<f64>) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

fn sign_function(c: &CMat) -> Option<CMat> {
    let k = c.nrows() as f64;
    let mut s = c.clone();
    let mut scaled = true;
    for _ in 0..100 {
        let inv = s.clone().try_inverse()?;
        let mu = if scaled {
            let det = s.determinant().norm();
            if !(det.is_finite() && det > 0.0) {
                return None;
            }
            det.powf(-1.0 / k)
        } else {
            1.0
        };
        let next = (&s * C64::new(0.5 * mu, 0.0)) + (inv * C64::new(0.5 / mu, 0.0));
        let diff = (&next - &s).norm();
        let size = next.norm();
        s = next;
        if !size.is_finite() {
            return None;
        }
        if diff <= 1e-2 * size {
            scaled = false;
        }
        if diff <= 1e-14 * size {
            return Some(s);
        }
    }
    None
}

/// Orthonormal basis of the range of a rank-`r` matrix.
fn range_basis(p: &CMat, r: usize) -> CMat {
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("requested u");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut z = CMat::zeros(p.nrows(), r);
    for (j, &i) in order.iter().take(r).enumerate() {
        z.set_column(j, &u.column(i));
    }
    z
}

fn eigen_pairs(m: &CMat) -> Vec<[f64; 2]> {
    let mut ev: Vec<[f64; 2]> = match m.eigenvalues() {
        Some(v) => v.iter().map(|z| [z.re, z.im]).collect(),
        None => Vec::new(),
    };
    ev.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    ev
}

fn spectral_error(xi: &[f64], c: &CMat, scale: f64, m: usize) -> Error {
    let ev = eigen_pairs(c);
    let stable = ev.iter().filter(|z| z[0] < 0.0).count();
    let min_re = ev.iter().map(|z| z[0].abs() * scale).fold(f64::INFINITY, f64::min);
    Error::SpectralSplit {
        xi: xi.to_vec(),
        stable,
        unstable: 2 * m - stable,
        min_re,
    }
}

/// Solves the quadratic pencil of tangential frequency `xi ≠ 0`.
pub fn solve_mode(second_order: &[DMatrix<f64>], n: usize, xi: &[f64]) -> Result<ModeSolution> {
    let m = second_order[0].nrows();
    if xi.len() + 1 != n {
        return Err(Error::Dimension("frequency must have n − 1 components".into()));
    }
    let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(r > 0.0) {
        return Err(Error::InvalidInput("solve_mode needs a nonzero frequency".into()));
    }
    let last = n - 1;
    let a2 = &second_order[packed_index(n, last, last)];
    let mut a1 = DMatrix::<f64>::zeros(m, m);
    let mut a0 = DMatrix::<f64>::zeros(m, m);
    for j in 0..last {
        a1 += &second_order[packed_index(n, j, last)] * (2.0 * xi[j] / r);
        for k in 0..last {
            a0 -= &second_order[packed_index(n, j, k)] * (xi[j] * xi[k] / (r * r));
        }
    }
    // scaled companion for μ = λ / |ξ'|, state (w, w' / |ξ'|)
    let a2_inv = a2
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("A_nn is singular".into()))?;
    let mut c = CMat::zeros(2 * m, 2 * m);
    for i in 0..m {
        c[(i, m + i)] = C64::new(1.0, 0.0);
    }
    let lower_left = -cplx(&(&a2_inv * &a0));
    let lower_right = -(cplx(&a2_inv) * cplx(&a1) * C64::new(0.0, 1.0));
    c.view_mut((m, 0), (m, m)).copy_from(&lower_left);
    c.view_mut((m, m), (m, m)).copy_from(&lower_right);

    let Some(s) = sign_function(&c) else {
        return Err(spectral_error(xi, &c, r, m));
    };
    let id = CMat::identity(2 * m, 2 * m);
    let p_stable = (&id - &s) * C64::new(0.5, 0.0);
    let p_unstable = (&id + &s) * C64::new(0.5, 0.0);
    let stable = p_stable.trace().re.round();
    if stable != m as f64 {
        return Err(spectral_error(xi, &c, r, m));
    }
    let z = range_basis(&p_stable, m);
    let w = range_basis(&p_unstable, m);
    let lambda_s = z.adjoint() * &c * &z;
    let lambda_u = w.adjoint() * &c * &w;
    let scale_pairs = |v: Vec<[f64; 2]>| -> Vec<[f64; 2]> { v.into_iter().map(|[a, b]| [a * r, b * r]).collect() };
    let stable_exponents = scale_pairs(eigen_pairs(&lambda_s));
    let unstable_exponents = scale_pairs(eigen_pairs(&lambda_u));
    let min_abs_re = stable_exponents
        .iter()
        .chain(&unstable_exponents)
        .map(|z| z[0].abs())
        .fold(f64::INFINITY, f64::min);
    let eps = SPECTRAL_EPS * r.max(1.0);
    let split_ok = stable_exponents.len() == m
        && unstable_exponents.len() == m
        && stable_exponents.iter().all(|z| z[0] < -eps)
        && unstable_exponents.iter().all(|z| z[0] > eps);
    if !split_ok {
        return Err(Error::SpectralSplit {
            xi: xi.to_vec(),
            stable: stable_exponents.iter().filter(|z| z[0] < 0.0).count(),
            unstable: unstable_exponents.iter().filter(|z| z[0] > 0.0).count(),
            min_re: min_abs_re,
        });
    }
    let z1 = z.rows(0, m).into_owned();
    let sv = z1.singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    if smin <= 1e-10 * smax {
        return Err(Error::MatchingSingular { xi: xi.to_vec() });
    }
    let z1_inv = z1.clone().try_inverse().ok_or_else(|| Error::MatchingSingular { xi: xi.to_vec() })?;
    let generator = &z1 * lambda_s * z1_inv * C64::new(r, 0.0);
    Ok(ModeSolution {
        xi: xi.to_vec(),
        stable_exponents,
        unstable_exponents,
        min_abs_re,
        generator,
    })
}

/// Signed integer frequency of FFT index `k` (Nyquist reported as `N/2`).
fn signed_index(k: usize, samples: usize) -> i64 {
    if k <= samples / 2 {
        k as i64
    } else {
        k as i64 - samples as i64
    }
}

/// A reusable solution operator: per-mode propagators at fixed heights.
pub struct HalfSpacePlan {
    n: usize,
    m: usize,
    samples: usize,
    cell: f64,
    heights: Vec<f64>,
    /// `propagators[h][mode]`.
    propagators: Vec<Vec<CMat>>,
    modes: Vec<ModeSolution>,
    delta: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for HalfSpacePlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HalfSpacePlan")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("samples", &self.samples)
            .field("cell", &self.cell)
            .field("heights", &self.heights)
            .finish()
    }
}

impl HalfSpacePlan {
    /// `n ∈ {2, 3}`; `samples` must be a power of two.
    pub fn new(coeffs: &SystemCoefficients, samples: usize, cell: f64, heights: &[f64]) -> Result<Self> {
        let n = coeffs.n();
        let m = coeffs.m();
        if !(n == 2 || n == 3) {
            return Err(Error::InvalidInput(format!("half-space solver supports n = 2 or 3, got {n}")));
        }
        if coeffs.has_first_order() || coeffs.is_quasilinear() {
            return Err(Error::InvalidInput("half-space solver takes second-order terms only".into()));
        }
        let packed = coeffs
            .constant_second_order()
            .ok_or_else(|| Error::InvalidInput("half-space solver needs constant coefficients".into()))?
            .to_vec();
        if samples < 2 || !samples.is_power_of_two() {
            return Err(Error::InvalidInput(format!("N = {samples} is not a power of two ≥ 2")));
        }
        if !(cell.is_finite() && cell > 0.0) {
            return Err(Error::InvalidInput("cell size must be positive".into()));
        }
        if heights.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::InvalidInput("heights must be finite and non-negative".into()));
        }
        let delta = ellipticity_constant(coeffs, &[vec![0.0; n]], 64)?;
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "system is not strongly elliptic (δ̂ = {delta:e})"
            )));
        }
        let d = n - 1;
        let total = samples.pow(d as u32);
        let mut propagators = vec![Vec::with_capacity(total); heights.len()];
        let mut modes = Vec::with_capacity(total);
        let base = std::f64::consts::TAU / cell;
        let nyquist = samples / 2;
        for mode in 0..total {
            let mut rest = mode;
            let ks: Vec<usize> = (0..d)
                .map(|_| {
                    let k = rest % samples;
                    rest /= samples;
                    k
                })
                .collect();
            if ks.iter().all(|&k| k == 0) {
                for p in propagators.iter_mut() {
                    p.push(CMat::identity(m, m));
                }
                continue;
            }
            // Nyquist components alias ±; averaging both keeps the output real
            let flips: Vec<usize> = (0..d).filter(|&i| ks[i] == nyquist).collect();
            let variants = 1usize << flips.len();
            let mut acc = vec![CMat::zeros(m, m); heights.len()];
            for v in 0..variants {
                let xi: Vec<f64> = (0..d)
                    .map(|i| {
                        let mut s = signed_index(ks[i], samples) as f64;
                        if let Some(pos) = flips.iter().position(|&f| f == i) {
                            if v >> pos & 1 == 1 {
                                s = -s;
                            }
                        }
                        base * s
                    })
                    .collect();
                let sol = solve_mode(&packed, n, &xi)?;
                for (h, &x) in heights.iter().enumerate() {
                    acc[h] += sol.propagator(x);
                }
                if v == 0 {
                    modes.push(sol);
                }
            }
            for (h, a) in acc.into_iter().enumerate() {
                propagators[h].push(a * C64::new(1.0 / variants as f64, 0.0));
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        Ok(HalfSpacePlan {
            n,
            m,
            samples,
            cell,
            heights: heights.to_vec(),
            propagators,
            modes,
            delta,
            forward: planner.plan_fft_forward(samples),
            inverse: planner.plan_fft_inverse(samples),
        })
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tangential_dim(&self) -> usize {
        self.n - 1
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    /// Ellipticity estimate certified when the plan was built.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Mode solutions of the nonzero frequencies, in FFT order.
    pub fn modes(&self) -> &[ModeSolution] {
        &self.modes
    }

    /// Scales the zero-mode propagator. For negative-control tests only.
    #[doc(hidden)]
    pub fn inject_zero_mode_fault(&mut self, factor: f64) {
        for p in self.propagators.iter_mut() {
            p[0] *= C64::new(factor, 0.0);
        }
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        let d = self.n - 1;
        let n = self.samples;
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut line = vec![C64::new(0.0, 0.0); n];
        for axis in 0..d {
            let stride = n.pow(axis as u32);
            let outer = data.len() / n;
            for l in 0..outer {
                let start = (l / stride) * stride * n + l % stride;
                for (j, z) in line.iter_mut().enumerate() {
                    *z = data[start + j * stride];
                }
                fft.process(&mut line);
                for (j, z) in line.iter().enumerate() {
                    data[start + j * stride] = *z;
                }
            }
        }
    }

    pub fn solve(&self, data: &PeriodicData) -> Result<HalfSpaceSolution> {
        let d = self.n - 1;
        if data.tangential_dim != d || data.samples != self.samples || data.m != self.m {
            return Err(Error::Dimension("boundary data does not match the plan".into()));
        }
        if (data.cell - self.cell).abs() > 1e-12 * self.cell {
            return Err(Error::Dimension("boundary data cell differs from the plan".into()));
        }
        let total = data.node_count();
        let m = self.m;
        // the −L/2 offset contributes (−1)^k on both transforms and cancels
        let spectra: Vec<Vec<C64>> = (0..m)
            .map(|p| {
                let mut v: Vec<C64> = (0..total).map(|i| C64::new(data.values[i * m + p], 0.0)).collect();
                self.transform(&mut v, false);
                v
            })
            .collect();
        let norm = 1.0 / total as f64;
        let mut values = Vec::with_capacity(self.heights.len());
        let mut max_imag = 0.0f64;
        for props in &self.propagators {
            let mut out: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); total]; m];
            for (mode, e) in props.iter().enumerate() {
                let f = DVector::from_fn(m, |p, _| spectra[p][mode]);
                let w = e * f;
                for p in 0..m {
                    out[p][mode] = w[p] * norm;
                }
            }
            let mut field = vec![0.0; total * m];
            for (p, mut comp) in out.into_iter().enumerate() {
                self.transform(&mut comp, true);
                for (i, z) in comp.iter().enumerate() {
                    field[i * m + p] = z.re;
                    max_imag = max_imag.max(z.im.abs());
                }
            }
            values.push(field);
        }
        Ok(HalfSpaceSolution {
            heights: self.heights.clone(),
            m,
            tangential_dim: d,
            samples: self.samples,
            cell: self.cell,
            values,
            max_imag,
        })
    }
}

/// One-shot solve of a [`HalfSpaceProblem`].
pub fn solve_halfspace(problem: &HalfSpaceProblem) -> Result<HalfSpaceSolution> {
    let plan = HalfSpacePlan::new(&problem.coeffs, problem.data.samples, problem.data.cell, &problem.heights)?;
    plan.solve(&problem.data)
}

/// Largest deviation from `e_i` of the solutions with constant data `e_i`
/// over the plan's heights and all tangential nodes.
pub fn normalization_defect(plan: &HalfSpacePlan) -> Result<f64> {
    let m = plan.m();
    let mut defect = 0.0f64;
    for i in 0..m {
        let data = PeriodicData::from_fn(plan.tangential_dim(), plan.samples(), plan.cell(), m, |_| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e
        })?;
        let sol = plan.solve(&data)?;
        for h in 0..sol.heights.len() {
            for node in 0..sol.node_count() {
                for (p, v) in sol.at(h, node).iter().enumerate() {
                    let target = if p == i { 1.0 } else { 0.0 };
                    defect = defect.max((v - target).abs());
                }
            }
        }
    }
    Ok(defect)
}

/// Numerical proxy for the normalization of the solution kernel: the
/// defect of [`normalization_defect`] on a unit cell with `resolution`
/// samples per axis at [`NORMALIZATION_PROBE_HEIGHTS`].
pub fn kernel_normalization_check(coeffs: &SystemCoefficients, resolution: usize) -> Result<f64> {
    let plan = HalfSpacePlan::new(coeffs, resolution, 1.0, &NORMALIZATION_PROBE_HEIGHTS)?;
    normalization_defect(&plan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfSpaceAudit {
    pub passed: bool,
    pub max_margin: f64,
    pub tol: f64,
    pub worst_instance: usize,
    pub worst_height: f64,
    pub worst_point: Vec<f64>,
}

fn check_data_in_body(data: &PeriodicData, body: &ConvexBody) -> Result<()> {
    for node in 0..data.node_count() {
        let u = DVector::from_column_slice(data.at(node));
        let margin = body.violation_margin(&u);
        if margin > TOL_GEOM * (1.0 + u.norm()) {
            return Err(Error::BoundaryOutsideBody { node, margin });
        }
    }
    Ok(())
}

fn worst_in(sol: &HalfSpaceSolution, body: &ConvexBody) -> (f64, usize, usize) {
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for h in 0..sol.heights.len() {
        for node in 0..sol.node_count() {
            let margin = body.violation_margin(&DVector::from_column_slice(sol.at(h, node)));
            if margin > best.0 {
                best = (margin, h, node);
            }
        }
    }
    best
}

/// Largest violation margin over the plan's heights and all tangential
/// nodes for each body-valued data set; passes at [`HALFSPACE_AUDIT_TOL`].
pub fn audit_halfspace_invariance(
    plan: &HalfSpacePlan,
    body: &ConvexBody,
    data: &[PeriodicData],
) -> Result<HalfSpaceAudit> {
    if body.dim() != plan.m() {
        return Err(Error::Dimension("body dimension differs from system size".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptySamples("boundary data family"));
    }
    let mut audit = HalfSpaceAudit {
        passed: true,
        max_margin: f64::NEG_INFINITY,
        tol: HALFSPACE_AUDIT_TOL,
        worst_instance: 0,
        worst_height: 0.0,
        worst_point: Vec::new(),
    };
    for (i, f) in data.iter().enumerate() {
        check_data_in_body(f, body)?;
        let sol = plan.solve(f)?;
        let (margin, h, node) = worst_in(&sol, body);
        if margin > audit.max_margin {
            audit.max_margin = margin;
            audit.worst_instance = i;
            audit.worst_height = sol.heights[h];
            audit.worst_point = f.coords(node);
        }
    }
    audit.passed = audit.max_margin <= audit.tol;
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceSearchResult {
    pub best_margin: f64,
    pub solves: usize,
    pub height: f64,
    pub point: Vec<f64>,
    pub data: PeriodicData,
}

/// Random periodic trigonometric data, projected into the body.
fn trig_data(plan: &HalfSpacePlan, body: &ConvexBody, coeffs: &[Vec<f64>], modes: usize) -> Result<PeriodicData> {
    let d = plan.tangential_dim();
    let per = modes + 1;
    let cell = plan.cell();
    PeriodicData::from_fn(d, plan.samples(), cell, plan.m(), |y| {
        let u = DVector::from_fn(plan.m(), |p, _| {
            coeffs[p]
                .chunks(2)
                .enumerate()
                .map(|(k, ab)| {
                    let mut rest = k;
                    let mut phase = 0.0;
                    for yi in y.iter().take(d) {
                        phase += std::f64::consts::TAU * (rest % per) as f64 * yi / cell;
                        rest /= per;
                    }
                    ab[0] * phase.cos() + ab[1] * phase.sin()
                })
                .sum()
        });
        body.project(&u).as_slice().to_vec()
    })
}

/// Seeded search for body-valued periodic data whose solution leaves the
/// body, mirroring the grid search: random trigonometric coefficients with
/// `|c| ≤ amplitude`, then greedy amplification and perturbation.
pub fn search_halfspace_counterexample(
    plan: &HalfSpacePlan,
    body: &ConvexBody,
    config: SearchConfig,
) -> Result<HalfSpaceSearchResult> {
    if config.budget == 0 {
        return Err(Error::InvalidInput("search budget must be positive".into()));
    }
    let d = plan.tangential_dim();
    let terms = 2 * (config.modes + 1).pow(d as u32);
    let amp = config.amplitude;
    let clamp = |v: f64| v.clamp(-amp, amp);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut solves = 0;
    let evaluate = |coeffs: &[Vec<f64>], solves: &mut usize| -> Result<(f64, f64, Vec<f64>, PeriodicData)> {
        let data = trig_data(plan, body, coeffs, config.modes)?;
        let sol = plan.solve(&data)?;
        *solves += 1;
        let (margin, h, node) = worst_in(&sol, body);
        Ok((margin, sol.heights[h], data.coords(node), data))
    };
    let random_coeffs = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..plan.m())
            .map(|_| (0..terms).map(|_| amp * rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let explore = config.budget.div_ceil(2);
    let mut best_coeffs = random_coeffs(&mut rng);
    let mut best = evaluate(&best_coeffs, &mut solves)?;
    while solves < explore {
        let c = random_coeffs(&mut rng);
        let cand = evaluate(&c, &mut solves)?;
        if cand.0 > best.0 {
            best = cand;
            best_coeffs = c;
        }
    }
    let mut step = 0.5 * amp;
    while solves < config.budget {
        let scaled: Vec<Vec<f64>> = best_coeffs.iter().map(|c| c.iter().map(|v| clamp(v * 1.5)).collect()).collect();
        let cand = evaluate(&scaled, &mut solves)?;
        if cand.0 > best.0 {
            best = cand;
            best_coeffs = scaled;
            continue;
        }
        if solves >= config.budget {
            break;
        }
        let perturbed: Vec<Vec<f64>> = best_coeffs
            .iter()
            .map(|c| c.iter().map(|v| clamp(v + step * rng.random_range(-1.0..1.0))).collect())
            .collect();
        let cand = evaluate(&perturbed, &mut solves)?;
        if cand.0 > best.0 {
            best = cand;
            best_coeffs = perturbed;
        } else {
            step *= 0.9;
        }
    }
    let (best_margin, height, point, data) = best;
    Ok(HalfSpaceSearchResult {
        best_margin,
        solves,
        height,
        point,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn constants_are_preserved() {
        let c = SystemCoefficients::constant(
            2,
            2,
            vec![dmatrix![2.0, 0.3; 0.1, 1.0], dmatrix![0.2, 0.0; 0.1, 0.1], dmatrix![1.0, 0.2; 0.0, 1.5]],
        )
        .unwrap();
        let d = kernel_normalization_check(&c, 16).unwrap();
        assert!(d <= 1e-12, "{d}");
    }

    #[test]
    fn fault_injection_is_detected() {
        let c = SystemCoefficients::laplacian(2, 2);
        let mut plan = HalfSpacePlan::new(&c, 8, 1.0, &[0.0, 0.5]).unwrap();
        plan.inject_zero_mode_fault(1.0 + 1e-3);
        let d = normalization_defect(&plan).unwrap();
        assert!((d - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn laplace_exponent_is_minus_abs_xi() {
        let lap = SystemCoefficients::laplacian(2, 1);
        let s = solve_mode(lap.constant_second_order().unwrap(), 2, &[3.0]).unwrap();
        assert!((s.stable_exponents[0][0] + 3.0).abs() < 1e-12);
        assert!((s.generator[(0, 0)] - C64::new(-3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn odd_data_vanish_on_the_axis() {
        let lap = SystemCoefficients::laplacian(2, 1);
        let plan = HalfSpacePlan::new(&lap, 64, 2.0, &[0.1, 0.5]).unwrap();
        let data = PeriodicData::from_fn(1, 64, 2.0, 1, |y| vec![(std::f64::consts::PI * y[0]).sin() + (3.0 * std::f64::consts::PI * y[0]).sin()]).unwrap();
        let sol = plan.solve(&data).unwrap();
        // node 32 is y = 0
        for h in 0..2 {
            assert!(sol.at(h, 32)[0].abs() < 1e-14);
        }
        assert!(sol.max_imag < 1e-12);
    }

    #[test]
    fn non_elliptic_system_is_rejected() {
        let c = SystemCoefficients::constant(2, 1, vec![dmatrix![1.0], dmatrix![0.0], dmatrix![-1.0]]).unwrap();
        assert!(HalfSpacePlan::new(&c, 8, 1.0, &[0.1]).is_err());
        let lap = SystemCoefficients::laplacian(2, 1);
        assert!(HalfSpacePlan::new(&lap, 12, 1.0, &[0.1]).is_err());
    }
}
