//! Strong ellipticity and the left-eigenvector invariance conditions.
//!
//! A convex body is invariant for `Σ A_jk ∂_j∂_k u + Σ A_j ∂_j u = 0` when,
//! for every outward normal `ν` of the body, `ν` is a left eigenvector of
//! every coefficient matrix: `ᵗA_jk ν = a_jk(x; ν) ν` and `ᵗA_j ν = a_j(x; ν) ν`.
//! The projection `(u - a, ν)` then solves a scalar equation with the
//! recovered coefficients and obeys the scalar maximum principle.
//!
//! Everything here is a *sampled* verification: the quantifiers "for all x",
//! "for all η" and "for all ν" are replaced by the supplied sample sets.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bodies::{ConvexBody, NormalSample};
use crate::coefficients::{symbol, SystemCoefficients};
use crate::error::{Error, Result};
use crate::linalg::{self, min_sym_eigenvalue, packed_pairs, sphere_points, unit_axis};

/// Default relative tolerance on left-eigenvector residuals.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-8;

/// Sphere budget used by the condition checkers when estimating `δ`.
pub const DEFAULT_SPHERE_BUDGET: usize = 64;

/// Returns `a = (ᵗM ν, ν)` when `‖ᵗM ν − a ν‖ ≤ tol·(1 + ‖M‖_F)`.
pub fn left_eigen_scalar(m: &DMatrix<f64>, nu: &DVector<f64>, tol: f64) -> Result<Option<f64>> {
    linalg::check_unit(nu)?;
    if m.nrows() != nu.len() || m.ncols() != nu.len() {
        return Err(Error::Dimension("matrix and normal sizes differ".into()));
    }
    let (g, f) = linalg::left_split(m, nu);
    Ok((f.norm() <= tol * (1.0 + m.norm())).then_some(g))
}

/// Minimizes `f` over the unit sphere of `ℝ^n`: quasi-uniform scans with
/// `budget, budget/2, budget/4, …` points, each followed by one pattern-search
/// refinement around its best point. The levels are nested under doubling of
/// `budget`, so a larger budget never returns a larger minimum.
pub(crate) fn min_over_sphere(
    n: usize,
    budget: usize,
    f: &dyn Fn(&DVector<f64>) -> f64,
) -> (f64, DVector<f64>) {
    let floor = n.max(2);
    let mut level = budget.max(floor);
    let mut best = refine_level(n, level, f);
    while level / 2 >= floor {
        level /= 2;
        let cand = refine_level(n, level, f);
        if cand.0 < best.0 {
            best = cand;
        }
    }
    best
}

fn refine_level(n: usize, budget: usize, f: &dyn Fn(&DVector<f64>) -> f64) -> (f64, DVector<f64>) {
    let samples = sphere_points(n, budget);
    let (mut best_val, mut best) = samples
        .iter()
        .map(|s| (f(s), s.clone()))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty sphere sample");
    if n < 2 {
        return (best_val, best);
    }
    let mut step = std::f64::consts::PI / (budget as f64).powf(1.0 / (n - 1) as f64);
    while step > 1e-10 {
        let tangents = tangent_basis(&best);
        let mut improved = false;
        for t in &tangents {
            for sign in [1.0, -1.0] {
                let cand = &best + t * (sign * step);
                let cand = &cand / cand.norm();
                let v = f(&cand);
                if v < best_val {
                    best_val = v;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best_val, best)
}

fn tangent_basis(p: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = p.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let mut v = unit_axis(n, i);
        v -= p * p.dot(&v);
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        if basis.len() == n - 1 {
            break;
        }
    }
    basis
}

/// Sampled estimate `δ̂` of the ellipticity constant: the minimum over the
/// given points `x` and over unit `σ` of the smallest eigenvalue of the
/// symmetric part of `Σ A_jk(x) σ_j σ_k`.
///
/// `δ̂` is an actual value of the minimized function, hence never below the
/// true constant on the sampled set.
pub fn ellipticity_constant(
    coeffs: &SystemCoefficients,
    x_samples: &[Vec<f64>],
    sphere_budget: usize,
) -> Result<f64> {
    ellipticity_with(coeffs, x_samples, &[None], sphere_budget, None)
}

/// As [`ellipticity_constant`] for `B_jk(x, η)`, also minimizing over `η`.
pub fn ellipticity_constant_quasilinear(
    coeffs: &SystemCoefficients,
    x_samples: &[Vec<f64>],
    eta_samples: &[Vec<f64>],
    sphere_budget: usize,
) -> Result<f64> {
    if eta_samples.is_empty() {
        return Err(Error::EmptySamples("eta samples"));
    }
    let etas: Vec<Option<&[f64]>> = eta_samples.iter().map(|e| Some(e.as_slice())).collect();
    ellipticity_with(coeffs, x_samples, &etas, sphere_budget, None)
}

/// Relaxed ellipticity: `ζ` ranges over the given normals only, i.e.
/// `min (Σ A_jk σ_j σ_k ζ, ζ)` over unit `σ` and `ζ ∈ normals`.
pub fn ellipticity_constant_relaxed(
    coeffs: &SystemCoefficients,
    x_samples: &[Vec<f64>],
    normals: &[DVector<f64>],
    sphere_budget: usize,
) -> Result<f64> {
    if normals.is_empty() {
        return Err(Error::EmptySamples("normals"));
    }
    ellipticity_with(coeffs, x_samples, &[None], sphere_budget, Some(normals))
}

fn ellipticity_with(
    coeffs: &SystemCoefficients,
    x_samples: &[Vec<f64>],
    etas: &[Option<&[f64]>],
    sphere_budget: usize,
    relaxed: Option<&[DVector<f64>]>,
) -> Result<f64> {
    if x_samples.is_empty() {
        return Err(Error::EmptySamples("x samples"));
    }
    let n = coeffs.n();
    if sphere_budget < n {
        return Err(Error::InvalidInput(format!("sphere budget {sphere_budget} < n = {n}")));
    }
    let mut delta = f64::INFINITY;
    for x in x_samples {
        for eta in etas {
            let packed = match eta {
                Some(e) => coeffs.quasilinear_at(x, e)?,
                None => coeffs.second_order_at(x)?,
            };
            let f = |s: &DVector<f64>| {
                let a = symbol(&packed, n, s);
                match relaxed {
                    None => min_sym_eigenvalue(&a),
                    Some(normals) => normals
                        .iter()
                        .map(|z| z.dot(&(&a * z)))
                        .fold(f64::INFINITY, f64::min),
                }
            };
            let (v, _) = min_over_sphere(n, sphere_budget, &f);
            delta = delta.min(v);
        }
    }
    Ok(delta)
}

/// Which coefficient a recovered scalar or a failure refers to (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "order", rename_all = "snake_case")]
pub enum CoefficientIndex {
    Second { j: usize, k: usize },
    First { j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// `ν` is not a left eigenvector of the coefficient.
    Residual,
    /// The reduced scalar form fell below `δ̂`.
    ReducedEllipticity,
    /// `δ̂ ≤ 0`: the system is not strongly elliptic on the samples.
    NotElliptic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionFailure {
    pub kind: FailureKind,
    pub x_index: Option<usize>,
    pub x: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub normal_index: Option<usize>,
    pub normal: Option<Vec<f64>>,
    pub coefficient: Option<CoefficientIndex>,
    pub residual: f64,
}

/// A recovered scalar `a_jk(x; ν)`, `a_j(x; ν)` or `b_jk(x, η; ν)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarFieldEntry {
    pub coefficient: CoefficientIndex,
    pub x_index: usize,
    pub eta_index: Option<usize>,
    pub normal_index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub passed: bool,
    pub delta_estimate: f64,
    /// Smallest value of the reduced scalar form `Σ a_jk σ_j σ_k` over the
    /// scanned unit `σ` (None when no normal passed for all second-order terms).
    pub reduced_delta: Option<f64>,
    pub failures: Vec<ConditionFailure>,
    pub scalar_fields: Vec<ScalarFieldEntry>,
    pub normals: Vec<Vec<f64>>,
    pub x_count: usize,
    pub eta_count: Option<usize>,
    /// Always "sampled": the checks quantify over the supplied samples only.
    pub verification: String,
}

/// Unit-sphere σ samples used to certify the reduced scalar ellipticity.
fn sigma_scan(n: usize) -> Vec<DVector<f64>> {
    sphere_points(n, DEFAULT_SPHERE_BUDGET)
}

struct PointCheck<'a> {
    x_index: usize,
    x: &'a [f64],
    eta: Option<(usize, &'a [f64])>,
    second: Vec<DMatrix<f64>>,
    first: Vec<DMatrix<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn check_point(
    n: usize,
    point: &PointCheck<'_>,
    normals: &[NormalSample],
    tol: f64,
    delta: f64,
    sigmas: &[DVector<f64>],
    report: &mut ConditionReport,
) -> Result<()> {
    let pairs = packed_pairs(n);
    for (ni, s) in normals.iter().enumerate() {
        let nu = &s.normal;
        let mut second_ok = true;
        let mut scalars = vec![0.0; pairs.len()];
        let mut coeff_list: Vec<(CoefficientIndex, &DMatrix<f64>)> = pairs
            .iter()
            .zip(&point.second)
            .map(|(&(j, k), a)| (CoefficientIndex::Second { j, k }, a))
            .collect();
        coeff_list.extend(
            point
                .first
                .iter()
                .enumerate()
                .map(|(j, a)| (CoefficientIndex::First { j }, a)),
        );
        for (ci, (index, a)) in coeff_list.into_iter().enumerate() {
            match left_eigen_scalar(a, nu, tol)? {
                Some(value) => {
                    if ci < pairs.len() {
                        scalars[ci] = value;
                    }
                    report.scalar_fields.push(ScalarFieldEntry {
                        coefficient: index,
                        x_index: point.x_index,
                        eta_index: point.eta.map(|e| e.0),
                        normal_index: ni,
                        value,
                    });
                }
                None => {
                    if ci < pairs.len() {
                        second_ok = false;
                    }
                    let (_, f) = linalg::left_split(a, nu);
                    report.failures.push(ConditionFailure {
                        kind: FailureKind::Residual,
                        x_index: Some(point.x_index),
                        x: Some(point.x.to_vec()),
                        eta: point.eta.map(|e| e.1.to_vec()),
                        normal_index: Some(ni),
                        normal: Some(nu.as_slice().to_vec()),
                        coefficient: Some(index),
                        residual: f.norm(),
                    });
                }
            }
        }
        if second_ok {
            let reduced = sigmas
                .iter()
                .map(|s| {
                    pairs
                        .iter()
                        .zip(&scalars)
                        .map(|(&(j, k), a)| if j == k { a * s[j] * s[j] } else { 2.0 * a * s[j] * s[k] })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            report.reduced_delta = Some(report.reduced_delta.map_or(reduced, |r| r.min(reduced)));
            if reduced < delta - 1e-9 * (1.0 + delta.abs()) {
                report.failures.push(ConditionFailure {
                    kind: FailureKind::ReducedEllipticity,
                    x_index: Some(point.x_index),
                    x: Some(point.x.to_vec()),
                    eta: point.eta.map(|e| e.1.to_vec()),
                    normal_index: Some(ni),
                    normal: Some(nu.as_slice().to_vec()),
                    coefficient: None,
                    residual: delta - reduced,
                });
            }
        }
    }
    Ok(())
}

fn empty_report(delta: f64, normals: &[NormalSample], x_count: usize, eta_count: Option<usize>) -> ConditionReport {
    let mut failures = Vec::new();
    if !(delta > 0.0) {
        failures.push(ConditionFailure {
            kind: FailureKind::NotElliptic,
            x_index: None,
            x: None,
            eta: None,
            normal_index: None,
            normal: None,
            coefficient: None,
            residual: -delta,
        });
    }
    ConditionReport {
        passed: false,
        delta_estimate: delta,
        reduced_delta: None,
        failures,
        scalar_fields: Vec::new(),
        normals: normals.iter().map(|s| s.normal.as_slice().to_vec()).collect(),
        x_count,
        eta_count,
        verification: "sampled".into(),
    }
}

/// Checks the left-eigenvector condition for every `A_jk(x)` and `A_j(x)`
/// against every sampled normal of `body`, on the given points.
pub fn check_theorem1_conditions(
    coeffs: &SystemCoefficients,
    body: &ConvexBody,
    x_samples: &[Vec<f64>],
    normal_budget: usize,
    tol: f64,
) -> Result<ConditionReport> {
    if body.dim() != coeffs.m() {
        return Err(Error::Dimension("body dimension differs from system size m".into()));
    }
    let normals = body.normal_samples(normal_budget)?;
    let delta = ellipticity_constant(coeffs, x_samples, DEFAULT_SPHERE_BUDGET)?;
    let sigmas = sigma_scan(coeffs.n());
    let mut report = empty_report(delta, &normals, x_samples.len(), None);
    for (xi, x) in x_samples.iter().enumerate() {
        let point = PointCheck {
            x_index: xi,
            x,
            eta: None,
            second: coeffs.second_order_at(x)?,
            first: coeffs.first_order_at(x)?,
        };
        check_point(coeffs.n(), &point, &normals, tol, delta, &sigmas, &mut report)?;
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}

/// The quasilinear analogue: `ᵗB_jk(x, η) ν = b_jk(x, η; ν) ν` over sampled
/// `x` and `η` (no first-order terms).
pub fn check_theorem2_conditions(
    coeffs: &SystemCoefficients,
    body: &ConvexBody,
    x_samples: &[Vec<f64>],
    eta_samples: &[Vec<f64>],
    normal_budget: usize,
    tol: f64,
) -> Result<ConditionReport> {
    if body.dim() != coeffs.m() {
        return Err(Error::Dimension("body dimension differs from system size m".into()));
    }
    let normals = body.normal_samples(normal_budget)?;
    let delta = ellipticity_constant_quasilinear(coeffs, x_samples, eta_samples, DEFAULT_SPHERE_BUDGET)?;
    let sigmas = sigma_scan(coeffs.n());
    let mut report = empty_report(delta, &normals, x_samples.len(), Some(eta_samples.len()));
    for (xi, x) in x_samples.iter().enumerate() {
        for (ei, eta) in eta_samples.iter().enumerate() {
            let point = PointCheck {
                x_index: xi,
                x,
                eta: Some((ei, eta)),
                second: coeffs.quasilinear_at(x, eta)?,
                first: Vec::new(),
            };
            check_point(coeffs.n(), &point, &normals, tol, delta, &sigmas, &mut report)?;
        }
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}

/// `{0} ∪ {± s e_i}` in `ℝ^{mn}` for every magnitude `s`.
pub fn default_eta_samples(m: usize, n: usize, magnitudes: &[f64]) -> Vec<Vec<f64>> {
    let dim = m * n;
    let mut out = vec![vec![0.0; dim]];
    for &s in magnitudes {
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = sign * s;
                out.push(e);
            }
        }
    }
    out
}

/// A spatial domain for the cone-complement hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialDomain {
    /// Axis-aligned box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// A point cloud standing in for an (unbounded) domain.
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuasilinearBranch {
    /// The domain is bounded.
    Bounded,
    /// The domain avoids the cone `K_h`.
    ConeExcluded,
    /// Neither hypothesis is satisfied.
    NotCovered,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeComplementCheck {
    /// No domain point lies in `K_h = {x_n² > h² |x'|², x_n < 0}`.
    pub cone_excluded: bool,
    pub branch: QuasilinearBranch,
    /// First offending point index (point clouds only).
    pub first_inside: Option<usize>,
}

fn in_cone(h: f64, x: &[f64]) -> bool {
    let (tail, lead) = x.split_at(x.len() - 1);
    let xn = lead[0];
    xn < 0.0 && xn * xn > h * h * tail.iter().map(|v| v * v).sum::<f64>()
}

/// Whether the domain lies in the complement of the cone `K_h`, `h > 1`,
/// with vertex at the origin.
pub fn cone_complement_predicate(h: f64, domain: &SpatialDomain) -> Result<ConeComplementCheck> {
    if !(h > 1.0) {
        return Err(Error::InvalidInput(format!("cone parameter h = {h} must exceed 1")));
    }
    match domain {
        SpatialDomain::Box { lo, hi } => {
            if lo.is_empty() || lo.len() != hi.len() {
                return Err(Error::Dimension("box corners".into()));
            }
            let n = lo.len();
            // closest |x'| to the axis, deepest x_n
            let dist2: f64 = (0..n - 1)
                .map(|i| {
                    let c = 0.0f64.clamp(lo[i], hi[i]);
                    c * c
                })
                .sum();
            let xn = lo[n - 1];
            let intersects = xn < 0.0 && xn * xn > h * h * dist2;
            Ok(ConeComplementCheck {
                cone_excluded: !intersects,
                branch: QuasilinearBranch::Bounded,
                first_inside: None,
            })
        }
        SpatialDomain::Points(points) => {
            if points.is_empty() {
                return Err(Error::EmptySamples("domain points"));
            }
            let first_inside = points.iter().position(|p| !p.is_empty() && in_cone(h, p));
            let excluded = first_inside.is_none();
            Ok(ConeComplementCheck {
                cone_excluded: excluded,
                branch: if excluded {
                    QuasilinearBranch::ConeExcluded
                } else {
                    QuasilinearBranch::NotCovered
                },
                first_inside,
            })
        }
    }
}
