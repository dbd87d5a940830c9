//! Structure of the matrices that keep a given body invariant, and detection
//! of the diagonal-family and scalar-operator factorizations.
//!
//! For a body with normal set `𝔑`, a matrix `A` is admissible when every
//! `ν ∈ 𝔑` is a left eigenvector of `A`. The admissible matrices form a linear
//! space, which for the catalogued bodies has a closed description:
//!
//! | body | admissible matrices |
//! |---|---|
//! | polyhedral angle or cylinder constraining rows `R` | rows in `R` vanish off the diagonal |
//! | orthant, parallelepiped | diagonal |
//! | spherical cylinder over the trailing `k` rows | as above, with equal diagonal entries on those rows |
//! | cone with `m` facets, normals `N` | `(ᵗN)⁻¹ D ᵗN`, `D` diagonal |
//! | cone with more than `m` facets, ball, generic smooth body | scalar |
//!
//! Row indices are zero-based.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::bodies::{ConvexBody, DET_TOL};
use crate::coefficients::SystemCoefficients;
use crate::conditions::{ellipticity_constant, left_eigen_scalar};
use crate::error::{Error, Result};
use crate::linalg::{self, null_space, packed_pairs, singular_values};

/// Normal budget used by [`classify_matrix`] for bodies with sampled normals.
pub const DEFAULT_CLASSIFY_BUDGET: usize = 64;

/// Numerical rank-one threshold on `σ₂/σ₁`.
pub const RANK_ONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum StructureClass {
    /// The listed rows have zero off-diagonal entries.
    RowsZeroedDiagonal { rows: Vec<usize> },
    /// As above, and the diagonal entries of the listed rows coincide.
    RowsZeroedEqualDiagonal { rows: Vec<usize> },
    /// `(ᵗN)⁻¹ D ᵗN` for the matrix `N` whose columns are the facet normals.
    ConjugatedDiagonal {
        #[serde(serialize_with = "serialize_columns")]
        normals: DMatrix<f64>,
    },
    Scalar,
    Diagonal,
    Unconstrained { reason: String },
}

fn serialize_columns<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.ncols()))?;
    for c in m.column_iter() {
        seq.serialize_element(c.as_slice())?;
    }
    seq.end()
}

fn unit_entry(m: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(m, m);
    e[(i, j)] = 1.0;
    e
}

impl StructureClass {
    /// A random admissible `m × m` matrix with entries of order one.
    pub fn random_member<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> DMatrix<f64> {
        let mut a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        match self {
            StructureClass::RowsZeroedDiagonal { rows } => {
                for &r in rows {
                    for c in (0..m).filter(|&c| c != r) {
                        a[(r, c)] = 0.0;
                    }
                }
            }
            StructureClass::RowsZeroedEqualDiagonal { rows } => {
                let d = rng.random_range(-1.0..1.0);
                for &r in rows {
                    for c in (0..m).filter(|&c| c != r) {
                        a[(r, c)] = 0.0;
                    }
                    a[(r, r)] = d;
                }
            }
            StructureClass::ConjugatedDiagonal { normals } => {
                let d: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                a = conjugate(normals, &d).expect("validated normals");
            }
            StructureClass::Scalar => a = DMatrix::identity(m, m) * rng.random_range(-1.0..1.0),
            StructureClass::Diagonal => {
                a = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
            }
            StructureClass::Unconstrained { .. } => {}
        }
        a
    }

    /// Unit directions along structurally constrained entries: adding a
    /// nonzero multiple of any of them leaves the class.
    ///
    /// For conjugated diagonals the directions are the off-diagonal entries
    /// in the facet basis, `(ᵗN)⁻¹ E_ij ᵗN`.
    pub fn perturbation_directions(&self, m: usize) -> Vec<DMatrix<f64>> {
        let off_rows = |rows: &[usize]| -> Vec<DMatrix<f64>> {
            rows.iter()
                .flat_map(|&r| (0..m).filter(move |&c| c != r).map(move |c| unit_entry(m, r, c)))
                .collect()
        };
        match self {
            StructureClass::RowsZeroedDiagonal { rows } => off_rows(rows),
            StructureClass::RowsZeroedEqualDiagonal { rows } => {
                let mut out = off_rows(rows);
                if rows.len() > 1 {
                    out.extend(rows.iter().map(|&r| unit_entry(m, r, r)));
                }
                out
            }
            StructureClass::ConjugatedDiagonal { normals } => {
                let nt = normals.transpose();
                let nt_inv = nt.clone().try_inverse().expect("validated normals");
                let mut out = Vec::new();
                for i in 0..m {
                    for j in (0..m).filter(|&j| j != i) {
                        out.push(&nt_inv * unit_entry(m, i, j) * &nt);
                    }
                }
                out
            }
            StructureClass::Scalar => {
                let mut out: Vec<DMatrix<f64>> = Vec::new();
                if m > 1 {
                    for i in 0..m {
                        for j in 0..m {
                            out.push(unit_entry(m, i, j));
                        }
                    }
                }
                out
            }
            StructureClass::Diagonal => (0..m)
                .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| unit_entry(m, i, j)))
                .collect(),
            StructureClass::Unconstrained { .. } => Vec::new(),
        }
    }
}

/// Recovered scalars `ν ↦ a(ν)` of a matrix on a body's normal samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub normals: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// True when the normals are samples of a curved boundary part rather
    /// than the complete facet list.
    pub sampled: bool,
}

fn has_curved_boundary(body: &ConvexBody) -> bool {
    matches!(
        body,
        ConvexBody::Ball { .. } | ConvexBody::SphericalCylinder { .. } | ConvexBody::SampledSmooth { .. }
    )
}

/// Whether `M` satisfies `ᵗM ν = a(ν) ν` on every sampled normal of `body`.
pub fn classify_matrix(m: &DMatrix<f64>, body: &ConvexBody, tol: f64) -> Option<Classification> {
    classify_matrix_with_budget(m, body, tol, DEFAULT_CLASSIFY_BUDGET)
}

pub fn classify_matrix_with_budget(
    m: &DMatrix<f64>,
    body: &ConvexBody,
    tol: f64,
    budget: usize,
) -> Option<Classification> {
    if m.nrows() != body.dim() || m.ncols() != body.dim() {
        return None;
    }
    let samples = body.normal_samples(budget).ok()?;
    let mut out = Classification {
        normals: Vec::with_capacity(samples.len()),
        values: Vec::with_capacity(samples.len()),
        sampled: has_curved_boundary(body),
    };
    for s in samples {
        let a = left_eigen_scalar(m, &s.normal, tol).ok()??;
        out.normals.push(s.normal.as_slice().to_vec());
        out.values.push(a);
    }
    Some(out)
}

/// The catalogued structure class of the matrices admissible for `body`.
pub fn admissible_family(body: &ConvexBody) -> StructureClass {
    let dim = body.dim();
    let rows_class = |indices: &[usize]| {
        let mut rows = indices.to_vec();
        rows.sort_unstable();
        rows.dedup();
        if rows.len() == dim {
            StructureClass::Diagonal
        } else {
            StructureClass::RowsZeroedDiagonal { rows }
        }
    };
    match body {
        ConvexBody::PolyhedralAngle { indices, .. } | ConvexBody::PolyhedralCylinder { indices, .. } => {
            if dim == 1 {
                StructureClass::Scalar
            } else {
                rows_class(indices)
            }
        }
        ConvexBody::SphericalCylinder { k, .. } => {
            if dim == 1 || *k == dim {
                StructureClass::Scalar
            } else {
                StructureClass::RowsZeroedEqualDiagonal {
                    rows: (dim - k..dim).collect(),
                }
            }
        }
        ConvexBody::HalfSpace { normal, .. } => {
            let axis = (0..dim).find(|&i| (normal[i].abs() - 1.0).abs() <= 1e-12);
            match axis {
                _ if dim == 1 => StructureClass::Scalar,
                Some(i) => StructureClass::RowsZeroedDiagonal { rows: vec![i] },
                None => StructureClass::Unconstrained {
                    reason: "half-space with a non-axis normal: rotate it to a coordinate half-space first".into(),
                },
            }
        }
        ConvexBody::PolyhedralCone { normals, .. } => {
            if dim == 1 {
                StructureClass::Scalar
            } else if normals.len() == dim {
                let mut n = DMatrix::zeros(dim, dim);
                for (j, v) in normals.iter().enumerate() {
                    n.set_column(j, v);
                }
                StructureClass::ConjugatedDiagonal { normals: n }
            } else if normals.len() > dim {
                StructureClass::Scalar
            } else {
                StructureClass::Unconstrained {
                    reason: format!("cone with {} < m facets is not catalogued", normals.len()),
                }
            }
        }
        ConvexBody::Ball { .. } => StructureClass::Scalar,
        ConvexBody::Polytope { facets } => {
            let normals: Vec<DVector<f64>> = facets.iter().map(|f| f.0.clone()).collect();
            scalar_if_rigid(&normals, "polytope")
        }
        ConvexBody::SampledSmooth { .. } => match body.normal_samples(DEFAULT_CLASSIFY_BUDGET) {
            Ok(samples) => {
                let normals: Vec<DVector<f64>> = samples.into_iter().map(|s| s.normal).collect();
                scalar_if_rigid(&normals, "sampled smooth body")
            }
            Err(e) => StructureClass::Unconstrained {
                reason: format!("boundary sampler failed: {e}"),
            },
        },
    }
}

fn scalar_if_rigid(normals: &[DVector<f64>], what: &str) -> StructureClass {
    let space = admissible_space(normals);
    if space.len() == 1 {
        StructureClass::Scalar
    } else {
        StructureClass::Unconstrained {
            reason: format!("{what}: admissible space has dimension {}", space.len()),
        }
    }
}

/// Basis (Frobenius-orthonormal) of all `A` with `ᵗA ν ∥ ν` for every given
/// normal, from the null space of the linear constraint system.
///
/// For `m + 1` normals whose `m`-subsets are all independent the space is
/// spanned by the identity.
pub fn admissible_space(normals: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
    let Some(first) = normals.first() else {
        return Vec::new();
    };
    let m = first.len();
    // unknowns: column-major entries of A; equations: (I - ννᵗ) ᵗA ν = 0
    let mut sys = DMatrix::zeros(m * normals.len(), m * m);
    for (k, nu) in normals.iter().enumerate() {
        for i in 0..m {
            let row = k * m + i;
            for p in 0..m {
                sys[(row, p + m * i)] += nu[p];
                for q in 0..m {
                    sys[(row, p + m * q)] -= nu[i] * nu[p] * nu[q];
                }
            }
        }
    }
    null_space(&sys, 1e-10)
        .into_iter()
        .map(|v| DMatrix::from_column_slice(m, m, v.as_slice()))
        .collect()
}

fn conjugate(n: &DMatrix<f64>, d: &[f64]) -> Option<DMatrix<f64>> {
    let nt = n.transpose();
    let nt_inv = nt.clone().try_inverse()?;
    Some(nt_inv * DMatrix::from_diagonal(&DVector::from_column_slice(d)) * nt)
}

/// `A = (ᵗN)⁻¹ D ᵗN` with `N = [ν_1, …, ν_m]`, so that `ᵗA ν_k = D_k ν_k`.
pub fn cone_conjugation(normals: &[DVector<f64>], d: &[f64]) -> Result<DMatrix<f64>> {
    let m = normals.len();
    if m == 0 || d.len() != m || normals.iter().any(|v| v.len() != m) {
        return Err(Error::Dimension("need m unit normals in ℝ^m and m diagonal entries".into()));
    }
    for v in normals {
        linalg::check_unit(v)?;
    }
    let refs: Vec<&DVector<f64>> = normals.iter().collect();
    let det = linalg::det_of_columns(&refs);
    if det.abs() <= DET_TOL {
        return Err(Error::DegenerateBody {
            subset: (0..m).collect(),
            det,
        });
    }
    let mut n = DMatrix::zeros(m, m);
    for (j, v) in normals.iter().enumerate() {
        n.set_column(j, v);
    }
    conjugate(&n, d).ok_or_else(|| Error::Singular("normal matrix".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorizationKind {
    /// `A · diag(L_1, …, L_m)` with scalar elliptic `L_s`.
    DiagonalFamily,
    /// `A · L` with one scalar elliptic `L`.
    ScalarOperator,
    None,
}

/// Result of [`detect_factorization`].
///
/// The entries satisfy `(A_jk)_{ps} = b_{ps} a^{(s)}_{jk}` with the gauge
/// `a^{(s)}_{nn} = 1`. Forms are packed in `(0,0), (0,1), …, (n-1,n-1)` order
/// and hold the tensor entries (not the symbol weights).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Factorization {
    pub kind: FactorizationKind,
    /// Row-major `b_{ps}`; empty when no factorization was found.
    pub b: Vec<Vec<f64>>,
    /// One form per column, or a single form for a scalar operator.
    pub forms: Vec<Vec<f64>>,
    /// Relative Frobenius reconstruction error.
    pub residual: f64,
    /// `σ₂/σ₁` of each column's stacked matrix.
    pub column_ratios: Vec<f64>,
    /// `σ₂/σ₁` of the whole stacked tensor.
    pub stacked_ratio: f64,
    /// Ellipticity estimate of the reconstruction.
    pub delta: Option<f64>,
    pub reason: Option<String>,
}

impl Factorization {
    fn none(column_ratios: Vec<f64>, stacked_ratio: f64, reason: impl Into<String>) -> Self {
        Factorization {
            kind: FactorizationKind::None,
            b: Vec::new(),
            forms: Vec::new(),
            residual: f64::NAN,
            column_ratios,
            stacked_ratio,
            delta: None,
            reason: Some(reason.into()),
        }
    }

    /// Largest per-column ratio: the obstruction to a diagonal family.
    pub fn max_column_ratio(&self) -> f64 {
        self.column_ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn b_matrix(&self) -> Option<DMatrix<f64>> {
        let m = self.b.len();
        (m > 0).then(|| DMatrix::from_fn(m, m, |i, j| self.b[i][j]))
    }

    /// Packed `A_jk` rebuilt from the factors.
    pub fn reconstruct(&self, n: usize) -> Option<Vec<DMatrix<f64>>> {
        let b = self.b_matrix()?;
        let m = b.nrows();
        let pairs = n * (n + 1) / 2;
        Some(
            (0..pairs)
                .map(|q| {
                    DMatrix::from_fn(m, m, |p, s| {
                        let form = if self.forms.len() == 1 { &self.forms[0] } else { &self.forms[s] };
                        b[(p, s)] * form[q]
                    })
                })
                .collect(),
        )
    }
}

fn ratio(sv: &[f64]) -> f64 {
    match sv {
        [s1, s2, ..] if *s1 > 0.0 => s2 / s1,
        [s1] if *s1 > 0.0 => 0.0,
        _ => f64::NAN,
    }
}

/// Leading rank-one factor `(u σ₁, v)` of a matrix.
fn rank_one(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let svd = m.clone().svd(true, true);
    let (mut imax, mut smax) = (0, -1.0);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > smax {
            imax = i;
            smax = s;
        }
    }
    let u = svd.u.expect("requested u").column(imax) * smax;
    let v = svd.v_t.expect("requested v_t").row(imax).transpose();
    (u, v)
}

/// Detects `(A_jk)_{ps} = b_{ps} a^{(s)}_{jk}` (diagonal family) or
/// `(A_jk)_{ps} = b_{ps} a_{jk}` (scalar operator) in constant coefficients.
///
/// A factorization is returned only when `b` is non-degenerate, the gauge
/// `a^{(s)}_{nn} = 1` is attainable and the reconstruction is strongly
/// elliptic.
pub fn detect_factorization(coeffs: &SystemCoefficients, tol: f64) -> Factorization {
    let Some(packed) = coeffs.constant_second_order() else {
        return Factorization::none(Vec::new(), f64::NAN, "coefficients are not constant");
    };
    let (n, m) = (coeffs.n(), coeffs.m());
    let pairs = packed_pairs(n).len();
    let column_stack = |s: usize| DMatrix::from_fn(m, pairs, |p, q| packed[q][(p, s)]);
    let columns: Vec<DMatrix<f64>> = (0..m).map(column_stack).collect();
    let column_ratios: Vec<f64> = columns.iter().map(|c| ratio(&singular_values(c))).collect();
    let whole = DMatrix::from_fn(m * m, pairs, |r, q| packed[q][(r % m, r / m)]);
    let stacked_ratio = ratio(&singular_values(&whole));
    if column_ratios.iter().any(|r| r.is_nan()) {
        return Factorization::none(column_ratios, stacked_ratio, "a column of every A_jk vanishes");
    }

    let gauge = |u: DVector<f64>, v: DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
        let ann = v[pairs - 1];
        (ann.abs() > 1e-12 * v.norm()).then(|| (u * ann, v / ann))
    };

    let (kind, b, forms) = if stacked_ratio <= tol {
        let (u, v) = rank_one(&whole);
        let Some((u, v)) = gauge(u, v) else {
            return Factorization::none(column_ratios, stacked_ratio, "the ∂_n² coefficient of the form vanishes");
        };
        let b = DMatrix::from_fn(m, m, |p, s| u[p + m * s]);
        (FactorizationKind::ScalarOperator, b, vec![v.as_slice().to_vec()])
    } else if column_ratios.iter().all(|&r| r <= tol) {
        let mut b = DMatrix::zeros(m, m);
        let mut forms = Vec::with_capacity(m);
        for (s, c) in columns.iter().enumerate() {
            let (u, v) = rank_one(c);
            let Some((u, v)) = gauge(u, v) else {
                return Factorization::none(
                    column_ratios,
                    stacked_ratio,
                    format!("the ∂_n² coefficient of form {s} vanishes"),
                );
            };
            b.set_column(s, &u);
            forms.push(v.as_slice().to_vec());
        }
        (FactorizationKind::DiagonalFamily, b, forms)
    } else {
        let worst = column_ratios
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(s, _)| s)
            .unwrap_or(0);
        return Factorization::none(
            column_ratios,
            stacked_ratio,
            format!("column {worst} stacked matrix is not rank one"),
        );
    };

    let sv = singular_values(&b);
    if sv[m - 1] <= DET_TOL * sv[0] {
        return Factorization::none(column_ratios, stacked_ratio, "b is degenerate");
    }
    let mut out = Factorization {
        kind,
        b: b.row_iter().map(|r| r.iter().copied().collect()).collect(),
        forms,
        residual: 0.0,
        column_ratios,
        stacked_ratio,
        delta: None,
        reason: None,
    };
    let recon = out.reconstruct(n).expect("b present");
    let norm: f64 = packed.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
    let diff: f64 = packed
        .iter()
        .zip(&recon)
        .map(|(a, r)| (a - r).norm_squared())
        .sum::<f64>()
        .sqrt();
    out.residual = diff / norm;
    let delta = SystemCoefficients::constant(n, m, recon)
        .and_then(|c| ellipticity_constant(&c, &[vec![0.0; n]], 64))
        .unwrap_or(f64::NAN);
    out.delta = Some(delta);
    if !(delta > 0.0) {
        out.kind = FactorizationKind::None;
        out.reason = Some(format!("reconstruction is not strongly elliptic (δ̂ = {delta:e})"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_on_orthant_recovers_entries() {
        let m = DMatrix::from_diagonal(&dvector![2.0, -1.0, 0.5]);
        let orthant = ConvexBody::orthant(&[0.0, 0.0, 0.0]);
        let c = classify_matrix(&m, &orthant, 1e-8).unwrap();
        assert_eq!(c.values, vec![2.0, -1.0, 0.5]);
        assert!(!c.sampled);
    }

    #[test]
    fn spherical_cylinder_member_passes() {
        let m = dmatrix![3.0, 1.0, -2.0; 0.0, 5.0, 0.0; 0.0, 0.0, 5.0];
        let cyl = ConvexBody::spherical_cylinder(3, 2, 1.0).unwrap();
        let c = classify_matrix(&m, &cyl, 1e-8).unwrap();
        assert!(c.sampled);
        assert!(c.values.iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn dense_matrix_fails_on_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ball = ConvexBody::ball(DVector::zeros(3), 1.0).unwrap();
        let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        assert!(classify_matrix(&m, &ball, 1e-8).is_none());
        assert!(classify_matrix(&(DMatrix::identity(3, 3) * 0.7), &ball, 1e-8).is_some());
    }

    #[test]
    fn catalogue_tags() {
        let orthant = ConvexBody::orthant(&[0.0, 0.0, 0.0]);
        assert_eq!(admissible_family(&orthant), StructureClass::Diagonal);
        let dihedral = ConvexBody::polyhedral_angle(3, &[1, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(
            admissible_family(&dihedral),
            StructureClass::RowsZeroedDiagonal { rows: vec![1, 2] }
        );
        let cyl = ConvexBody::spherical_cylinder(3, 2, 2.0).unwrap();
        assert_eq!(
            admissible_family(&cyl),
            StructureClass::RowsZeroedEqualDiagonal { rows: vec![1, 2] }
        );
        let ball = ConvexBody::ball(DVector::zeros(2), 1.0).unwrap();
        assert_eq!(admissible_family(&ball), StructureClass::Scalar);
    }

    #[test]
    fn conjugation_examples() {
        let neg: Vec<DVector<f64>> = (0..3).map(|i| -linalg::unit_axis(3, i)).collect();
        let a = cone_conjugation(&neg, &[1.0, 2.0, 3.0]).unwrap();
        assert!((a - DMatrix::from_diagonal(&dvector![1.0, 2.0, 3.0])).norm() < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let normals = vec![dvector![0.0, -1.0], dvector![s, s]];
        let a = cone_conjugation(&normals, &[1.0, 2.0]).unwrap();
        let at = a.transpose();
        assert!((&at * &normals[0] - &normals[0]).norm() < 1e-12);
        assert!((&at * &normals[1] - &normals[1] * 2.0).norm() < 1e-12);

        let c = cone_conjugation(&normals, &[1.5, 1.5]).unwrap();
        assert!((c - DMatrix::identity(2, 2) * 1.5).norm() < 1e-12);

        let bad = vec![dvector![1.0, 0.0], dvector![1.0, 0.0]];
        assert!(matches!(cone_conjugation(&bad, &[1.0, 2.0]), Err(Error::DegenerateBody { .. })));
    }

    #[test]
    fn generic_normals_admit_only_scalars() {
        let normals = vec![
            dvector![1.0, 0.0, 0.0],
            dvector![0.0, 1.0, 0.0],
            dvector![0.0, 0.0, 1.0],
            dvector![1.0, 1.0, 1.0] / 3f64.sqrt(),
        ];
        let space = admissible_space(&normals);
        assert_eq!(space.len(), 1);
        let b = &space[0];
        let scaled = b / b[(0, 0)];
        assert!((scaled - DMatrix::identity(3, 3)).norm() < 1e-10);
        assert_eq!(admissible_space(&normals[..3]).len(), 3);
    }

    #[test]
    fn detects_diagonal_family_example() {
        let c = SystemCoefficients::constant(
            2,
            2,
            vec![dmatrix![1.0, 1.0; 0.0, 1.0], DMatrix::zeros(2, 2), dmatrix![1.0, 2.0; 0.0, 2.0]],
        )
        .unwrap();
        let f = detect_factorization(&c, RANK_ONE_TOL);
        assert_eq!(f.kind, FactorizationKind::DiagonalFamily);
        let b = f.b_matrix().unwrap();
        assert!((b - dmatrix![1.0, 2.0; 0.0, 2.0]).norm() < 1e-12);
        assert!((DVector::from_vec(f.forms[0].clone()) - dvector![1.0, 0.0, 1.0]).norm() < 1e-12);
        assert!((DVector::from_vec(f.forms[1].clone()) - dvector![0.5, 0.0, 1.0]).norm() < 1e-12);
        assert!(f.residual < 1e-14);
    }

    #[test]
    fn detects_scalar_operator() {
        let a0 = dmatrix![2.0, 0.5; -0.3, 1.0];
        let forms = [1.0, 0.2, 3.0];
        let c = SystemCoefficients::constant(2, 2, forms.iter().map(|&a| &a0 * a).collect()).unwrap();
        let f = detect_factorization(&c, RANK_ONE_TOL);
        assert_eq!(f.kind, FactorizationKind::ScalarOperator);
        let b = f.b_matrix().unwrap();
        assert!((b - &a0 * 3.0).norm() < 1e-12);
        assert!(f.residual < 1e-14);
    }

    #[test]
    fn coupled_system_is_not_factorizable() {
        let eps = 0.1;
        let c = SystemCoefficients::constant(
            2,
            2,
            vec![DMatrix::identity(2, 2), dmatrix![0.0, 0.0; eps, 0.0], DMatrix::identity(2, 2)],
        )
        .unwrap();
        let f = detect_factorization(&c, RANK_ONE_TOL);
        assert_eq!(f.kind, FactorizationKind::None);
        // column 0 stacks rows (1, 0, 1) and (0, ε, 0): σ₂/σ₁ = ε/√2
        assert!((f.column_ratios[0] - eps / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.column_ratios[1], 0.0);
    }

    #[test]
    fn non_elliptic_factorization_is_rejected() {
        let c = SystemCoefficients::constant(
            2,
            1,
            vec![dmatrix![1.0], DMatrix::zeros(1, 1), dmatrix![-1.0]],
        )
        .unwrap();
        let f = detect_factorization(&c, RANK_ONE_TOL);
        assert_eq!(f.kind, FactorizationKind::None);
        assert!(f.reason.unwrap().contains("elliptic"));
    }
}
