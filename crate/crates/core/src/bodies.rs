//! Convex bodies described through their supporting half-spaces.
//!
//! Every body in this module is the intersection of the half-spaces
//! `{u : (u - a, ν) ≤ 0}` over its boundary points `a` with outward unit normal
//! `ν`. The condition checkers only ever look at a finite list of such pairs,
//! which [`ConvexBody::normal_samples`] provides: the exact facet list for the
//! polyhedral variants and a deterministic quasi-uniform sample for the smooth
//! ones.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, for_each_subset, sphere_points, unit_axis};

/// Default tolerance for geometric predicates.
pub const TOL_GEOM: f64 = 1e-9;

/// Determinant bound used for the independence of cone normals.
pub const DET_TOL: f64 = 1e-10;

/// Membership resolution used for [`ConvexBody::SampledSmooth`] when no
/// explicit value is given.
pub const DEFAULT_SAMPLED_RESOLUTION: usize = 256;

/// Boundary sampler of a smooth body: given a budget, returns pairs
/// `(a, ν(a))` of boundary points and unit outward normals.
pub type BoundarySampler = Arc<dyn Fn(usize) -> Vec<(DVector<f64>, DVector<f64>)> + Send + Sync>;

/// A boundary point together with its unit outward normal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalSample {
    pub point: DVector<f64>,
    pub normal: DVector<f64>,
}

#[derive(Clone)]
pub enum ConvexBody {
    /// `{u : (u - anchor, normal) ≤ 0}`.
    HalfSpace {
        normal: DVector<f64>,
        anchor: DVector<f64>,
    },
    /// `{u : u_i ≥ lower_i for i in indices}`; an orthant when every
    /// coordinate is constrained.
    PolyhedralAngle {
        dim: usize,
        indices: Vec<usize>,
        lower: Vec<f64>,
    },
    /// `{u : lower_i ≤ u_i ≤ upper_i for i in indices}`: layers, rectangular
    /// cylinders and parallelepipeds.
    PolyhedralCylinder {
        dim: usize,
        indices: Vec<usize>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `{u : u_{dim-k+1}² + … + u_dim² ≤ radius²}`.
    SphericalCylinder { dim: usize, k: usize, radius: f64 },
    /// `{u : (u - vertex, ν_i) ≤ 0 for all i}`.
    PolyhedralCone {
        vertex: DVector<f64>,
        normals: Vec<DVector<f64>>,
    },
    /// Intersection of half-spaces `(normal, anchor)`.
    Polytope {
        facets: Vec<(DVector<f64>, DVector<f64>)>,
    },
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    /// A smooth body known only through a boundary sampler. Membership is
    /// decided against `resolution` sampled supporting half-spaces.
    SampledSmooth {
        dim: usize,
        resolution: usize,
        sampler: BoundarySampler,
    },
}

impl fmt::Debug for ConvexBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvexBody::HalfSpace { normal, anchor } => f
                .debug_struct("HalfSpace")
                .field("normal", &normal.as_slice())
                .field("anchor", &anchor.as_slice())
                .finish(),
            ConvexBody::PolyhedralAngle { dim, indices, lower } => f
                .debug_struct("PolyhedralAngle")
                .field("dim", dim)
                .field("indices", indices)
                .field("lower", lower)
                .finish(),
            ConvexBody::PolyhedralCylinder {
                dim,
                indices,
                lower,
                upper,
            } => f
                .debug_struct("PolyhedralCylinder")
                .field("dim", dim)
                .field("indices", indices)
                .field("lower", lower)
                .field("upper", upper)
                .finish(),
            ConvexBody::SphericalCylinder { dim, k, radius } => f
                .debug_struct("SphericalCylinder")
                .field("dim", dim)
                .field("k", k)
                .field("radius", radius)
                .finish(),
            ConvexBody::PolyhedralCone { vertex, normals } => f
                .debug_struct("PolyhedralCone")
                .field("vertex", &vertex.as_slice())
                .field("facets", &normals.len())
                .finish(),
            ConvexBody::Polytope { facets } => f
                .debug_struct("Polytope")
                .field("facets", &facets.len())
                .finish(),
            ConvexBody::Ball { center, radius } => f
                .debug_struct("Ball")
                .field("center", &center.as_slice())
                .field("radius", radius)
                .finish(),
            ConvexBody::SampledSmooth {
                dim, resolution, ..
            } => f
                .debug_struct("SampledSmooth")
                .field("dim", dim)
                .field("resolution", resolution)
                .finish(),
        }
    }
}

fn normalized(v: DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidInput("normal vector must be nonzero and finite".into()));
    }
    Ok(v / n)
}

impl ConvexBody {
    pub fn half_space(normal: DVector<f64>, anchor: DVector<f64>) -> Result<Self> {
        if normal.len() != anchor.len() {
            return Err(Error::Dimension("half-space normal and anchor differ in length".into()));
        }
        let body = ConvexBody::HalfSpace {
            normal: normalized(normal)?,
            anchor,
        };
        body.validate()?;
        Ok(body)
    }

    /// The orthant `{u : u_i ≥ lower_i, i = 1..m}`.
    pub fn orthant(lower: &[f64]) -> Self {
        ConvexBody::PolyhedralAngle {
            dim: lower.len(),
            indices: (0..lower.len()).collect(),
            lower: lower.to_vec(),
        }
    }

    /// The polyhedral angle constraining `u_i ≥ lower_i` for the given
    /// (zero-based) coordinate indices.
    pub fn polyhedral_angle(dim: usize, indices: &[usize], lower: &[f64]) -> Result<Self> {
        let body = ConvexBody::PolyhedralAngle {
            dim,
            indices: indices.to_vec(),
            lower: lower.to_vec(),
        };
        body.validate()?;
        Ok(body)
    }

    pub fn polyhedral_cylinder(
        dim: usize,
        indices: &[usize],
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self> {
        let body = ConvexBody::PolyhedralCylinder {
            dim,
            indices: indices.to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        };
        body.validate()?;
        Ok(body)
    }

    pub fn spherical_cylinder(dim: usize, k: usize, radius: f64) -> Result<Self> {
        let body = ConvexBody::SphericalCylinder { dim, k, radius };
        body.validate()?;
        Ok(body)
    }

    /// Polyhedral cone with the given vertex and facet normals (normalized
    /// on construction).
    pub fn cone(vertex: DVector<f64>, normals: Vec<DVector<f64>>) -> Result<Self> {
        let normals = normals.into_iter().map(normalized).collect::<Result<Vec<_>>>()?;
        let body = ConvexBody::PolyhedralCone { vertex, normals };
        body.validate()?;
        Ok(body)
    }

    /// Polytope given by `(normal, anchor)` half-space constraints.
    pub fn polytope(facets: Vec<(DVector<f64>, DVector<f64>)>) -> Result<Self> {
        let facets = facets
            .into_iter()
            .map(|(n, a)| Ok((normalized(n)?, a)))
            .collect::<Result<Vec<_>>>()?;
        let body = ConvexBody::Polytope { facets };
        body.validate()?;
        Ok(body)
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        let body = ConvexBody::Ball { center, radius };
        body.validate()?;
        Ok(body)
    }

    pub fn sampled_smooth(dim: usize, resolution: usize, sampler: BoundarySampler) -> Result<Self> {
        let body = ConvexBody::SampledSmooth {
            dim,
            resolution,
            sampler,
        };
        body.validate()?;
        Ok(body)
    }

    /// Short machine-readable variant name.
    pub fn kind(&self) -> &'static str {
        match self {
            ConvexBody::HalfSpace { .. } => "half_space",
            ConvexBody::PolyhedralAngle { .. } => "polyhedral_angle",
            ConvexBody::PolyhedralCylinder { .. } => "polyhedral_cylinder",
            ConvexBody::SphericalCylinder { .. } => "spherical_cylinder",
            ConvexBody::PolyhedralCone { .. } => "polyhedral_cone",
            ConvexBody::Polytope { .. } => "polytope",
            ConvexBody::Ball { .. } => "ball",
            ConvexBody::SampledSmooth { .. } => "sampled_smooth",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::HalfSpace { normal, .. } => normal.len(),
            ConvexBody::PolyhedralAngle { dim, .. }
            | ConvexBody::PolyhedralCylinder { dim, .. }
            | ConvexBody::SphericalCylinder { dim, .. }
            | ConvexBody::SampledSmooth { dim, .. } => *dim,
            ConvexBody::PolyhedralCone { vertex, .. } => vertex.len(),
            ConvexBody::Polytope { facets } => facets.first().map_or(0, |(n, _)| n.len()),
            ConvexBody::Ball { center, .. } => center.len(),
        }
    }

    /// True for variants with a finite normal set.
    pub fn is_polyhedral(&self) -> bool {
        matches!(
            self,
            ConvexBody::HalfSpace { .. }
                | ConvexBody::PolyhedralAngle { .. }
                | ConvexBody::PolyhedralCylinder { .. }
                | ConvexBody::PolyhedralCone { .. }
                | ConvexBody::Polytope { .. }
        )
    }

    /// Checks the structural invariants of the variant.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::Dimension("body dimension must be at least 1".into()));
        }
        match self {
            ConvexBody::HalfSpace { normal, anchor } => {
                linalg::check_unit(normal)?;
                if anchor.len() != dim {
                    return Err(Error::Dimension("half-space anchor".into()));
                }
            }
            ConvexBody::PolyhedralAngle { indices, lower, .. } => {
                check_indices(dim, indices)?;
                if lower.len() != indices.len() {
                    return Err(Error::Dimension("one lower bound per constrained index".into()));
                }
            }
            ConvexBody::PolyhedralCylinder {
                indices,
                lower,
                upper,
                ..
            } => {
                check_indices(dim, indices)?;
                if lower.len() != indices.len() || upper.len() != indices.len() {
                    return Err(Error::Dimension("one bound pair per constrained index".into()));
                }
                if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
                    return Err(Error::InvalidInput(format!(
                        "cylinder bounds must satisfy lower < upper (index {})",
                        indices[i]
                    )));
                }
            }
            ConvexBody::SphericalCylinder { k, radius, .. } => {
                if *k == 0 || *k > dim {
                    return Err(Error::InvalidInput(format!("spherical cylinder k = {k} not in 1..={dim}")));
                }
                if !(*radius > 0.0) {
                    return Err(Error::InvalidInput("radius must be positive".into()));
                }
            }
            ConvexBody::PolyhedralCone { normals, .. } => {
                if normals.is_empty() {
                    return Err(Error::InvalidInput("cone needs at least one facet".into()));
                }
                for n in normals {
                    if n.len() != dim {
                        return Err(Error::Dimension("cone normal".into()));
                    }
                    linalg::check_unit(n)?;
                }
                check_general_position(normals, dim)?;
            }
            ConvexBody::Polytope { facets } => {
                if facets.is_empty() {
                    return Err(Error::InvalidInput("polytope needs at least one facet".into()));
                }
                for (n, a) in facets {
                    if n.len() != dim || a.len() != dim {
                        return Err(Error::Dimension("polytope facet".into()));
                    }
                    linalg::check_unit(n)?;
                }
            }
            ConvexBody::Ball { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidInput("radius must be positive".into()));
                }
            }
            ConvexBody::SampledSmooth { resolution, .. } => {
                if *resolution == 0 {
                    return Err(Error::InvalidInput("sampled body needs a positive resolution".into()));
                }
            }
        }
        Ok(())
    }

    /// Supporting half-spaces `(a, ν)` of the body.
    ///
    /// Polyhedral variants return their exact facet list (the budget is
    /// ignored); smooth variants return `budget` quasi-uniform samples.
    pub fn normal_samples(&self, budget: usize) -> Result<Vec<NormalSample>> {
        if budget == 0 {
            return Err(Error::InvalidInput("normal budget must be at least 1".into()));
        }
        self.validate()?;
        let dim = self.dim();
        let pairs = match self {
            ConvexBody::HalfSpace { normal, anchor } => vec![(anchor.clone(), normal.clone())],
            ConvexBody::PolyhedralAngle { indices, lower, .. } => {
                let corner = corner_point(dim, indices, lower);
                indices
                    .iter()
                    .map(|&i| (corner.clone(), -unit_axis(dim, i)))
                    .collect()
            }
            ConvexBody::PolyhedralCylinder {
                indices,
                lower,
                upper,
                ..
            } => {
                let corner = corner_point(dim, indices, lower);
                let mut out = Vec::with_capacity(2 * indices.len());
                for (pos, &i) in indices.iter().enumerate() {
                    out.push((corner.clone(), -unit_axis(dim, i)));
                    let mut top = corner.clone();
                    top[i] = upper[pos];
                    out.push((top, unit_axis(dim, i)));
                }
                out
            }
            ConvexBody::SphericalCylinder { k, radius, .. } => sphere_points(*k, budget)
                .into_iter()
                .map(|g| {
                    let mut nu = DVector::zeros(dim);
                    nu.rows_mut(dim - k, *k).copy_from(&g);
                    (&nu * *radius, nu)
                })
                .collect(),
            ConvexBody::PolyhedralCone { vertex, normals } => {
                normals.iter().map(|n| (vertex.clone(), n.clone())).collect()
            }
            ConvexBody::Polytope { facets } => {
                facets.iter().map(|(n, a)| (a.clone(), n.clone())).collect()
            }
            ConvexBody::Ball { center, radius } => sphere_points(dim, budget)
                .into_iter()
                .map(|nu| (center + &nu * *radius, nu))
                .collect(),
            ConvexBody::SampledSmooth { sampler, .. } => {
                let samples = sampler(budget);
                if samples.len() != budget {
                    return Err(Error::InvalidInput(format!(
                        "boundary sampler returned {} pairs for budget {budget}",
                        samples.len()
                    )));
                }
                for (a, n) in &samples {
                    if a.len() != dim || n.len() != dim {
                        return Err(Error::Dimension("sampled boundary pair".into()));
                    }
                    linalg::check_unit(n)?;
                }
                samples
            }
        };
        Ok(pairs
            .into_iter()
            .map(|(point, normal)| NormalSample { point, normal })
            .collect())
    }

    /// `max (u - a, ν)` over the body's constraints: non-positive exactly for
    /// members, equal to the (signed) excess outside.
    pub fn violation_margin(&self, u: &DVector<f64>) -> f64 {
        match self {
            ConvexBody::HalfSpace { normal, anchor } => (u - anchor).dot(normal),
            ConvexBody::PolyhedralAngle { indices, lower, .. } => indices
                .iter()
                .zip(lower)
                .map(|(&i, &lo)| lo - u[i])
                .fold(f64::NEG_INFINITY, f64::max),
            ConvexBody::PolyhedralCylinder {
                indices,
                lower,
                upper,
                ..
            } => indices
                .iter()
                .enumerate()
                .map(|(p, &i)| (lower[p] - u[i]).max(u[i] - upper[p]))
                .fold(f64::NEG_INFINITY, f64::max),
            ConvexBody::SphericalCylinder { dim, k, radius } => {
                u.rows(dim - k, *k).norm() - radius
            }
            ConvexBody::PolyhedralCone { vertex, normals } => {
                let d = u - vertex;
                normals.iter().map(|n| d.dot(n)).fold(f64::NEG_INFINITY, f64::max)
            }
            ConvexBody::Polytope { facets } => facets
                .iter()
                .map(|(n, a)| (u - a).dot(n))
                .fold(f64::NEG_INFINITY, f64::max),
            ConvexBody::Ball { center, radius } => (u - center).norm() - radius,
            ConvexBody::SampledSmooth {
                sampler,
                resolution,
                ..
            } => sampler(*resolution)
                .iter()
                .map(|(a, n)| (u - a).dot(n))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `violation_margin(u) ≤ tol`.
    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        self.violation_margin(u) <= tol
    }

    /// The finite list of supporting half-spaces used for membership.
    fn constraints(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        match self {
            ConvexBody::SampledSmooth {
                sampler,
                resolution,
                ..
            } => sampler(*resolution),
            _ => self
                .normal_samples(DEFAULT_SAMPLED_RESOLUTION)
                .map(|s| s.into_iter().map(|p| (p.point, p.normal)).collect())
                .unwrap_or_default(),
        }
    }

    /// Some point in the interior of the body, when one is easy to find.
    pub fn interior_point(&self) -> Option<DVector<f64>> {
        let dim = self.dim();
        let candidate = match self {
            ConvexBody::HalfSpace { normal, anchor } => anchor - normal,
            ConvexBody::PolyhedralAngle { indices, lower, .. } => {
                let mut p = corner_point(dim, indices, lower);
                for &i in indices {
                    p[i] += 1.0;
                }
                p
            }
            ConvexBody::PolyhedralCylinder {
                indices,
                lower,
                upper,
                ..
            } => {
                let mut p = DVector::zeros(dim);
                for (pos, &i) in indices.iter().enumerate() {
                    p[i] = 0.5 * (lower[pos] + upper[pos]);
                }
                p
            }
            ConvexBody::SphericalCylinder { .. } => DVector::zeros(dim),
            ConvexBody::Ball { center, .. } => center.clone(),
            ConvexBody::PolyhedralCone { vertex, normals } => {
                vertex + cone_interior_direction(normals)?
            }
            ConvexBody::Polytope { facets } => {
                let sum = facets
                    .iter()
                    .fold(DVector::zeros(dim), |acc: DVector<f64>, (_, a)| acc + a);
                sum / facets.len() as f64
            }
            ConvexBody::SampledSmooth { sampler, resolution, .. } => {
                let pts = sampler(*resolution);
                let sum = pts
                    .iter()
                    .fold(DVector::zeros(dim), |acc: DVector<f64>, (a, _)| acc + a);
                sum / pts.len().max(1) as f64
            }
        };
        (self.violation_margin(&candidate) < -TOL_GEOM).then_some(candidate)
    }

    /// A boundary point with the same outward normal as `sample` at which the
    /// boundary is locally flat or smooth, i.e. not a corner shared with
    /// another facet. Smooth variants return the sample point itself.
    pub fn regular_boundary_point(&self, sample: &NormalSample) -> Option<DVector<f64>> {
        if !self.is_polyhedral() || matches!(self, ConvexBody::HalfSpace { .. }) {
            return Some(sample.point.clone());
        }
        let constraints = self.constraints();
        let own = constraints
            .iter()
            .position(|(_, n)| (n - &sample.normal).norm() < 1e-12)?;
        let (plane_point, nu) = &constraints[own];
        let inner = self.interior_point()?;
        let scale = 1.0 + inner.norm() + plane_point.norm();
        let mut t = 1.0;
        for _ in 0..40 {
            let p = &sample.point + (&inner - &sample.point) * t;
            let h = &p + nu * (plane_point - &p).dot(nu);
            let slack_ok = constraints
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != own)
                .all(|(_, (a, n))| (&h - a).dot(n) < -1e-10 * scale);
            if slack_ok {
                return Some(h);
            }
            t *= 0.5;
        }
        None
    }

    /// Nearest point of the body (exact for the analytic variants, Dykstra's
    /// alternating projections onto the facet half-spaces otherwise; an
    /// unconverged Dykstra iterate is pulled inside along the segment to an
    /// interior point).
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            ConvexBody::HalfSpace { normal, anchor } => {
                let s = (u - anchor).dot(normal);
                if s > 0.0 {
                    u - normal * s
                } else {
                    u.clone()
                }
            }
            ConvexBody::PolyhedralAngle { indices, lower, .. } => {
                let mut p = u.clone();
                for (&i, &lo) in indices.iter().zip(lower) {
                    p[i] = p[i].max(lo);
                }
                p
            }
            ConvexBody::PolyhedralCylinder {
                indices,
                lower,
                upper,
                ..
            } => {
                let mut p = u.clone();
                for (pos, &i) in indices.iter().enumerate() {
                    p[i] = p[i].clamp(lower[pos], upper[pos]);
                }
                p
            }
            ConvexBody::SphericalCylinder { dim, k, radius } => {
                let mut p = u.clone();
                let r = u.rows(dim - k, *k).norm();
                if r > *radius {
                    let mut tail = p.rows_mut(dim - k, *k);
                    tail *= radius / r;
                }
                p
            }
            ConvexBody::Ball { center, radius } => {
                let d = u - center;
                let r = d.norm();
                if r > *radius {
                    center + d * (radius / r)
                } else {
                    u.clone()
                }
            }
            _ => {
                let x = dykstra(&self.constraints(), u);
                match self.interior_point() {
                    Some(c) if self.violation_margin(&x) > 0.0 => self.pull_inside(&c, x),
                    _ => x,
                }
            }
        }
    }

    /// Largest `t ∈ [0, 1]` (by bisection) with `c + t (x − c)` inside.
    fn pull_inside(&self, c: &DVector<f64>, x: DVector<f64>) -> DVector<f64> {
        let d = &x - c;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.violation_margin(&(c + &d * mid)) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c + d * lo
    }
}

fn check_indices(dim: usize, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("at least one constrained coordinate required".into()));
    }
    let mut seen = vec![false; dim];
    for &i in indices {
        if i >= dim || seen[i] {
            return Err(Error::InvalidInput(format!("bad or repeated coordinate index {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

fn corner_point(dim: usize, indices: &[usize], lower: &[f64]) -> DVector<f64> {
    let mut p = DVector::zeros(dim);
    for (&i, &lo) in indices.iter().zip(lower) {
        p[i] = lo;
    }
    p
}

/// Every `dim`-subset of the normals must be linearly independent when there
/// are at least `dim` of them.
fn check_general_position(normals: &[DVector<f64>], dim: usize) -> Result<()> {
    if normals.len() < dim {
        return Ok(());
    }
    let mut failure = None;
    for_each_subset(normals.len(), dim, |subset| {
        let cols: Vec<&DVector<f64>> = subset.iter().map(|&i| &normals[i]).collect();
        let det = linalg::det_of_columns(&cols);
        if det.abs() <= DET_TOL {
            failure = Some(Error::DegenerateBody {
                subset: subset.to_vec(),
                det: det.abs(),
            });
            return false;
        }
        true
    });
    failure.map_or(Ok(()), Err)
}

/// A direction `d` with `(d, ν_i) < 0` for every facet normal, if the simple
/// candidates find one.
fn cone_interior_direction(normals: &[DVector<f64>]) -> Option<DVector<f64>> {
    let dim = normals[0].len();
    let p = normals.len();
    let mut nt = DMatrix::zeros(p, dim);
    for (i, n) in normals.iter().enumerate() {
        nt.set_row(i, &n.transpose());
    }
    let rhs = DVector::from_element(p, -1.0);
    let mut candidates = Vec::new();
    if let Ok(d) = nt.clone().svd(true, true).solve(&rhs, 1e-12) {
        candidates.push(d);
    }
    candidates.push(-normals.iter().fold(DVector::zeros(dim), |acc: DVector<f64>, n| acc + n));
    candidates
        .into_iter()
        .find(|d| normals.iter().all(|n| d.dot(n) < -1e-9))
}

fn dykstra(constraints: &[(DVector<f64>, DVector<f64>)], u: &DVector<f64>) -> DVector<f64> {
    let mut x = u.clone();
    let mut increments = vec![DVector::zeros(u.len()); constraints.len()];
    for _ in 0..500 {
        let mut change = 0.0f64;
        for (i, (a, n)) in constraints.iter().enumerate() {
            let y = &x + &increments[i];
            let s = (&y - a).dot(n);
            let proj = if s > 0.0 { &y - n * s } else { y.clone() };
            increments[i] = &y - &proj;
            change = change.max((&proj - &x).norm());
            x = proj;
        }
        if change < 1e-14 {
            break;
        }
    }
    x
}
