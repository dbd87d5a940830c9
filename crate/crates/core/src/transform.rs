//! Normalized matrix-valued integral transforms over finite measures.
//!
//! A transform `(T u)(x) = Σ_i K_i u(y_i) μ_i` with `Σ_i K_i μ_i = I` keeps a
//! convex body invariant exactly when every normal `ν` of the body is a left
//! eigenvector of every `K_i` (with `μ_i > 0`) with a non-negative eigenvalue
//! `g_i(ν) = (ᵗK_i ν, ν)`. [`check_kernel_invariance`] tests this on sampled
//! normals and [`build_witness`] constructs body-valued data whose image
//! leaves the body when the test fails.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bodies::{ConvexBody, NormalSample};
use crate::error::{Error, Result};
use crate::linalg::{self, left_split};

/// Tolerance on `max |Σ K_i μ_i − I|`.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelNode {
    pub weight: f64,
    pub matrix: DMatrix<f64>,
    /// Optional node coordinates, for reporting.
    pub position: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelPoint {
    pub label: String,
    pub nodes: Vec<KernelNode>,
}

impl KernelPoint {
    /// Replaces the last node's matrix so that the point becomes normalized.
    pub fn normalized_by_last(label: impl Into<String>, mut nodes: Vec<KernelNode>) -> Result<Self> {
        let Some(last) = nodes.last() else {
            return Err(Error::InvalidInput("kernel point without nodes".into()));
        };
        if !(last.weight > 0.0) {
            return Err(Error::InvalidInput("last node needs a positive weight".into()));
        }
        let m = last.matrix.nrows();
        let k = nodes.len() - 1;
        let partial = nodes[..k]
            .iter()
            .fold(DMatrix::zeros(m, m), |acc, n| acc + &n.matrix * n.weight);
        let w = nodes[k].weight;
        nodes[k].matrix = (DMatrix::identity(m, m) - partial) / w;
        Ok(KernelPoint {
            label: label.into(),
            nodes,
        })
    }

    fn moment(&self, m: usize) -> DMatrix<f64> {
        self.nodes
            .iter()
            .fold(DMatrix::zeros(m, m), |acc, n| acc + &n.matrix * n.weight)
    }
}

/// A kernel with finitely many nodes per evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    m: usize,
    points: Vec<KernelPoint>,
}

impl DiscreteKernel {
    /// Validates shapes, weights and the normalization `Σ K_i μ_i = I`.
    pub fn new(m: usize, points: Vec<KernelPoint>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Dimension("m must be positive".into()));
        }
        for p in &points {
            if p.nodes.is_empty() {
                return Err(Error::InvalidInput(format!("point '{}' has no nodes", p.label)));
            }
            for node in &p.nodes {
                if !(node.weight.is_finite() && node.weight >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "point '{}': weight {} is not finite and non-negative",
                        p.label, node.weight
                    )));
                }
                if node.matrix.shape() != (m, m) || node.matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "point '{}': kernel matrix must be a finite {m}×{m} matrix",
                        p.label
                    )));
                }
            }
            let defect = (p.moment(m) - DMatrix::identity(m, m)).amax();
            if defect > NORMALIZATION_TOL {
                return Err(Error::KernelNotNormalized {
                    label: p.label.clone(),
                    defect,
                });
            }
        }
        Ok(DiscreteKernel { m, points })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> &[KernelPoint] {
        &self.points
    }

    /// `max |Σ K_i μ_i − I|` at point `x`.
    pub fn normalization_defect(&self, x: usize) -> f64 {
        (self.points[x].moment(self.m) - DMatrix::identity(self.m, self.m)).amax()
    }

    fn point(&self, x: usize) -> Result<&KernelPoint> {
        self.points
            .get(x)
            .ok_or_else(|| Error::InvalidInput(format!("no evaluation point with index {x}")))
    }
}

/// `Σ_i K_i u_i μ_i` at evaluation point `x`; `u` holds one value per node.
pub fn apply_transform(kernel: &DiscreteKernel, u: &[DVector<f64>], x: usize) -> Result<DVector<f64>> {
    let point = kernel.point(x)?;
    if u.len() != point.nodes.len() {
        return Err(Error::InvalidInput(format!(
            "point '{}' has {} nodes but {} values were given",
            point.label,
            point.nodes.len(),
            u.len()
        )));
    }
    let mut out = DVector::zeros(kernel.m);
    for (node, v) in point.nodes.iter().zip(u) {
        if v.len() != kernel.m {
            return Err(Error::Dimension("node value length differs from m".into()));
        }
        out += &node.matrix * v * node.weight;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFailureKind {
    Residual,
    NegativeG,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelFailure {
    pub kind: KernelFailureKind,
    pub x_index: usize,
    pub label: String,
    pub node: usize,
    pub normal_index: usize,
    pub normal: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GEntry {
    pub x_index: usize,
    pub node: usize,
    pub normal_index: usize,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub passed: bool,
    pub g_table: Vec<GEntry>,
    pub failures: Vec<KernelFailure>,
    pub normals: Vec<Vec<f64>>,
}

/// Tests `ᵗK_i ν = g_i ν` with `g_i ≥ 0` for every point, every node with
/// positive weight and every sampled normal of `body`.
pub fn check_kernel_invariance(
    kernel: &DiscreteKernel,
    body: &ConvexBody,
    normal_budget: usize,
    tol: f64,
) -> Result<KernelReport> {
    if body.dim() != kernel.m {
        return Err(Error::Dimension("body dimension differs from kernel size".into()));
    }
    let normals = body.normal_samples(normal_budget)?;
    let mut report = KernelReport {
        passed: false,
        g_table: Vec::new(),
        failures: Vec::new(),
        normals: normals.iter().map(|s| s.normal.as_slice().to_vec()).collect(),
    };
    for (xi, point) in kernel.points.iter().enumerate() {
        for (node_index, node) in point.nodes.iter().enumerate() {
            if node.weight <= 0.0 {
                continue;
            }
            for (ni, s) in normals.iter().enumerate() {
                let (g, f) = left_split(&node.matrix, &s.normal);
                let fnorm = f.norm();
                let kind = if fnorm > tol {
                    Some(KernelFailureKind::Residual)
                } else if g < -tol {
                    Some(KernelFailureKind::NegativeG)
                } else {
                    None
                };
                match kind {
                    Some(kind) => report.failures.push(KernelFailure {
                        kind,
                        x_index: xi,
                        label: point.label.clone(),
                        node: node_index,
                        normal_index: ni,
                        normal: s.normal.as_slice().to_vec(),
                        residual: f.as_slice().to_vec(),
                        residual_norm: fnorm,
                        g,
                    }),
                    None => report.g_table.push(GEntry {
                        x_index: xi,
                        node: node_index,
                        normal_index: ni,
                        g,
                    }),
                }
            }
        }
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}

/// Body-valued data whose transform leaves the body at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x_index: usize,
    pub anchor: Vec<f64>,
    pub normal: Vec<f64>,
    pub kind: KernelFailureKind,
    /// One value per node of the evaluation point.
    pub values: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
    /// `((T u)(x) − a, ν)` predicted from the construction.
    pub predicted_excess: f64,
    pub image: Vec<f64>,
    /// Violation margin of the image; positive when it left the body.
    pub image_margin: f64,
}

const MAX_HALVINGS: usize = 40;

fn all_inside(body: &ConvexBody, values: &[DVector<f64>]) -> bool {
    values.iter().all(|u| body.violation_margin(u) <= 0.0)
}

/// Smallest `β ≥ 0` (up to bisection accuracy) keeping `a + α f_i − β ν`
/// inside the body for every `i`; `None` when no bracket is found.
fn beta_search(
    body: &ConvexBody,
    anchor: &DVector<f64>,
    nu: &DVector<f64>,
    shifts: &[DVector<f64>],
    alpha: f64,
) -> Option<f64> {
    let lambda = shifts.iter().map(|f| f.norm()).fold(0.0, f64::max);
    let r = alpha * lambda;
    let candidate = |beta: f64| -> Vec<DVector<f64>> {
        shifts.iter().map(|f| anchor + f * alpha - nu * beta).collect()
    };
    let closed_form = match body {
        ConvexBody::HalfSpace { .. } => Some(0.0),
        ConvexBody::Ball { radius, .. } | ConvexBody::SphericalCylinder { radius, .. } => {
            (r < *radius).then(|| radius - (radius * radius - r * r).sqrt())
        }
        _ => None,
    };
    if let Some(beta) = closed_form {
        if all_inside(body, &candidate(beta)) {
            return Some(beta);
        }
    }
    if all_inside(body, &candidate(0.0)) {
        return Some(0.0);
    }
    let mut hi = r.max(f64::EPSILON * (1.0 + anchor.norm()));
    let limit = 1e6 * (1.0 + anchor.norm() + r);
    while !all_inside(body, &candidate(hi)) {
        hi *= 2.0;
        if hi > limit {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if all_inside(body, &candidate(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Builds data `u` with `u(y_i) ∈ body` and `(T u)(x) ∉ body`.
///
/// `anchor` is a boundary point with outward normal `ν`; it should be a
/// regular point (see [`ConvexBody::regular_boundary_point`]) since at a
/// corner the tangential shifts may leave the body. When some residual
/// `f_i = ᵗK_i ν − g_i ν` exceeds `tol`, the data are
/// `u_i = a + α f_i − β ν` with `α` halved from `alpha0` until
/// `α Σ |f_i|² μ_i − β > 0`. Otherwise, when some `g_i < −tol`, the data are
/// `a − s ν` on those nodes and `a − ε s ν` elsewhere.
pub fn build_witness(
    kernel: &DiscreteKernel,
    body: &ConvexBody,
    x: usize,
    anchor: &NormalSample,
    alpha0: f64,
    tol: f64,
) -> Result<Witness> {
    let point = kernel.point(x)?;
    let (a, nu) = (&anchor.point, &anchor.normal);
    if a.len() != kernel.m || body.dim() != kernel.m {
        return Err(Error::Dimension("anchor, body and kernel sizes differ".into()));
    }
    linalg::check_unit(nu)?;
    if !(alpha0 > 0.0) {
        return Err(Error::InvalidInput("alpha must be positive".into()));
    }
    let scale = 1.0 + a.norm();
    if body.violation_margin(a).abs() > 1e-9 * scale {
        return Err(Error::WitnessPrecondition("anchor is not a boundary point".into()));
    }
    let splits: Vec<(f64, DVector<f64>)> = point.nodes.iter().map(|n| left_split(&n.matrix, nu)).collect();
    let active = |i: usize| point.nodes[i].weight > 0.0;
    let has_residual = (0..splits.len()).any(|i| active(i) && splits[i].1.norm() > tol);
    let has_negative = (0..splits.len()).any(|i| active(i) && splits[i].0 < -tol);

    let finish = |kind, values: Vec<DVector<f64>>, alpha, beta, predicted| -> Result<Witness> {
        let image = apply_transform(kernel, &values, x)?;
        Ok(Witness {
            x_index: x,
            anchor: a.as_slice().to_vec(),
            normal: nu.as_slice().to_vec(),
            kind,
            image_margin: body.violation_margin(&image),
            image: image.as_slice().to_vec(),
            values: values.iter().map(|v| v.as_slice().to_vec()).collect(),
            alpha,
            beta,
            predicted_excess: predicted,
        })
    };

    if has_residual {
        // residuals on nodes outside the active set are dropped
        let shifts: Vec<DVector<f64>> = splits
            .iter()
            .enumerate()
            .map(|(i, (_, f))| if active(i) && f.norm() > tol { f.clone() } else { f * 0.0 })
            .collect();
        let energy: f64 = shifts
            .iter()
            .zip(&point.nodes)
            .map(|(f, n)| f.norm_squared() * n.weight)
            .sum();
        let mut alpha = alpha0;
        let mut bracket_failed_at = None;
        for _ in 0..=MAX_HALVINGS {
            match beta_search(body, a, nu, &shifts, alpha) {
                Some(beta) => {
                    let predicted = alpha * energy - beta;
                    if predicted > 0.0 {
                        let values: Vec<DVector<f64>> =
                            shifts.iter().map(|f| a + f * alpha - nu * beta).collect();
                        return finish(KernelFailureKind::Residual, values, alpha, beta, predicted);
                    }
                }
                None => bracket_failed_at = Some(alpha),
            }
            alpha *= 0.5;
        }
        return Err(match bracket_failed_at {
            Some(alpha) => Error::WitnessBracket {
                alpha,
                suggested_alpha: alpha * 0.5f64.powi(MAX_HALVINGS as i32),
            },
            None => Error::WitnessPrecondition(format!(
                "sign test not attained after {MAX_HALVINGS} halvings of alpha"
            )),
        });
    }

    if has_negative {
        let mut s = 1.0;
        while body.violation_margin(&(a - nu * s)) > 0.0 {
            s *= 0.5;
            if s < 1e-12 {
                return Err(Error::WitnessPrecondition("no inward segment along -ν".into()));
            }
        }
        let negative = |i: usize| active(i) && splits[i].0 < -tol;
        let mass_neg: f64 = (0..splits.len())
            .filter(|&i| negative(i))
            .map(|i| splits[i].0 * point.nodes[i].weight)
            .sum();
        let mass_rest: f64 = (0..splits.len())
            .filter(|&i| !negative(i))
            .map(|i| splits[i].0 * point.nodes[i].weight)
            .sum();
        let mut eps = 0.5;
        for _ in 0..=MAX_HALVINGS {
            let predicted = -s * mass_neg - eps * s * mass_rest;
            if predicted > 0.0 {
                let values: Vec<DVector<f64>> = (0..splits.len())
                    .map(|i| if negative(i) { a - nu * s } else { a - nu * (eps * s) })
                    .collect();
                return finish(KernelFailureKind::NegativeG, values, eps, s, predicted);
            }
            eps *= 0.5;
        }
        return Err(Error::WitnessPrecondition("negative-g sign test not attained".into()));
    }

    Err(Error::WitnessPrecondition(format!(
        "kernel satisfies the eigenvector condition at point '{}' for this normal",
        point.label
    )))
}

/// Runs the check and builds a witness for the first failure, anchored at a
/// regular boundary point with the failing normal.
pub fn witness_for_first_failure(
    kernel: &DiscreteKernel,
    body: &ConvexBody,
    normal_budget: usize,
    tol: f64,
) -> Result<Witness> {
    let report = check_kernel_invariance(kernel, body, normal_budget, tol)?;
    let failure = report
        .failures
        .first()
        .ok_or_else(|| Error::WitnessPrecondition("kernel passes the invariance check".into()))?;
    let samples = body.normal_samples(normal_budget)?;
    let sample = &samples[failure.normal_index];
    let point = body
        .regular_boundary_point(sample)
        .ok_or_else(|| Error::WitnessPrecondition("no regular boundary point for the failing normal".into()))?;
    let anchor = NormalSample {
        point,
        normal: sample.normal.clone(),
    };
    build_witness(kernel, body, failure.x_index, &anchor, 1.0, tol)
}

/// The double layer potential of a convex polygon as a scalar kernel.
///
/// Every edge is split into `refinement` equal pieces; each piece becomes a
/// node at its midpoint with weight equal to the angle it subtends at `x`
/// divided by `2π`. The weights at each interior point sum to one.
pub fn double_layer_kernel(
    polygon: &[[f64; 2]],
    x_points: &[[f64; 2]],
    refinement: usize,
) -> Result<DiscreteKernel> {
    let nv = polygon.len();
    if nv < 3 {
        return Err(Error::InvalidInput("polygon needs at least three vertices".into()));
    }
    if refinement == 0 {
        return Err(Error::InvalidInput("refinement must be at least 1".into()));
    }
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
    let turns: Vec<f64> = (0..nv)
        .map(|i| cross(polygon[i], polygon[(i + 1) % nv], polygon[(i + 2) % nv]))
        .collect();
    let ccw = turns.iter().all(|&t| t > 0.0);
    if !ccw && !turns.iter().all(|&t| t < 0.0) {
        return Err(Error::InvalidInput("polygon is not strictly convex".into()));
    }
    let verts: Vec<[f64; 2]> = if ccw {
        polygon.to_vec()
    } else {
        polygon.iter().rev().copied().collect()
    };
    let diam = verts
        .iter()
        .flat_map(|p| verts.iter().map(move |q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()))
        .fold(0.0, f64::max);

    let mut points = Vec::with_capacity(x_points.len());
    for (xi, x) in x_points.iter().enumerate() {
        for i in 0..nv {
            let (p, q) = (verts[i], verts[(i + 1) % nv]);
            let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            if cross(p, q, *x) / len <= 1e-12 * diam {
                return Err(Error::InvalidInput(format!("point {xi} is not strictly inside the polygon")));
            }
        }
        let mut nodes = Vec::with_capacity(nv * refinement);
        for i in 0..nv {
            let (p, q) = (verts[i], verts[(i + 1) % nv]);
            for s in 0..refinement {
                let lerp = |t: f64| [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
                let a = lerp(s as f64 / refinement as f64);
                let b = lerp((s + 1) as f64 / refinement as f64);
                let mid = lerp((s as f64 + 0.5) / refinement as f64);
                let (ua, ub) = ([a[0] - x[0], a[1] - x[1]], [b[0] - x[0], b[1] - x[1]]);
                let angle = (ua[0] * ub[1] - ua[1] * ub[0]).atan2(ua[0] * ub[0] + ua[1] * ub[1]);
                nodes.push(KernelNode {
                    weight: angle / std::f64::consts::TAU,
                    matrix: DMatrix::identity(1, 1),
                    position: Some(mid.to_vec()),
                });
            }
        }
        points.push(KernelPoint {
            label: format!("x{xi}"),
            nodes,
        });
    }
    DiscreteKernel::new(1, points)
}

/// The averaging transform `(S u)(x) = ∫ s(x,y) u(y) dy / ∫ s(x,y) dy` on
/// `[a, b]`, discretized by the midpoint rule with `nodes` nodes.
pub fn averaged_kernel(
    s: impl Fn(f64, f64) -> f64,
    x_points: &[f64],
    a: f64,
    b: f64,
    nodes: usize,
) -> Result<DiscreteKernel> {
    if !(b > a) || nodes == 0 {
        return Err(Error::InvalidInput("need a < b and at least one node".into()));
    }
    let h = (b - a) / nodes as f64;
    let ys: Vec<f64> = (0..nodes).map(|i| a + (i as f64 + 0.5) * h).collect();
    let mut points = Vec::with_capacity(x_points.len());
    for (xi, &x) in x_points.iter().enumerate() {
        let vals: Vec<f64> = ys.iter().map(|&y| s(x, y)).collect();
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!("s(x, y) must be positive at x = {x}")));
        }
        let total: f64 = vals.iter().sum();
        points.push(KernelPoint {
            label: format!("x{xi}"),
            nodes: ys
                .iter()
                .zip(&vals)
                .map(|(&y, &v)| KernelNode {
                    weight: v / total,
                    matrix: DMatrix::identity(1, 1),
                    position: Some(vec![y]),
                })
                .collect(),
        });
    }
    DiscreteKernel::new(1, points)
}
