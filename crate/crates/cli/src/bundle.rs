//! Problem bundles: the JSON input of every subcommand.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use convex_invariance::transform::{DiscreteKernel, KernelNode, KernelPoint};
use convex_invariance::{ConvexBody, SystemCoefficients};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::expr::{Expr, Scope};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub coefficients: Option<CoefficientsSpec>,
    pub body: Option<BodySpec>,
    /// Points at which spatially varying coefficients are checked.
    pub x_samples: Option<Vec<Vec<f64>>>,
    /// Gradient magnitudes `s` for the samples `{0} ∪ {±s e_i}`.
    pub eta_magnitudes: Option<Vec<f64>>,
    pub matrix: Option<MatrixSpec>,
    pub kernel: Option<KernelSpec>,
    #[serde(rename = "box")]
    pub box_domain: Option<BoxSpec>,
    /// One expression per component in `x1..xn`.
    pub boundary: Option<Vec<String>>,
    /// Constant `C` of the audit tolerance `C h²`.
    pub audit_constant: Option<f64>,
    pub halfspace: Option<HalfSpaceSpec>,
    /// One expression per component in the tangential variables `x1..x(n-1)`.
    pub data: Option<Vec<String>>,
}

/// A matrix entry: a number or an expression.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, expecting = "expected a number or an expression string")]
pub enum Entry {
    Number(f64),
    Expr(String),
}

/// An `m×m` matrix, as nested rows or flat row-major.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, expecting = "expected a matrix as nested rows or a flat row-major list of numbers or expression strings")]
pub enum MatrixSpec {
    Rows(Vec<Vec<Entry>>),
    Flat(Vec<Entry>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSpec {
    pub n: usize,
    pub m: usize,
    /// `A_jk` for `j ≤ k` in the order `(0,0), (0,1), …, (n-1,n-1)`.
    #[serde(rename = "A2")]
    pub a2: Option<Vec<MatrixSpec>>,
    #[serde(rename = "A1")]
    pub a1: Option<Vec<MatrixSpec>>,
    /// `B_jk(x, η)` in the same order; entries may use `eta1..eta(mn)`.
    pub quasilinear: Option<Vec<MatrixSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    HalfSpace,
    Orthant,
    PolyhedralAngle,
    PolyhedralCylinder,
    SphericalCylinder,
    Cone,
    Polytope,
    Ball,
}

/// A body descriptor: `kind` plus the fields that kind uses.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub kind: BodyKind,
    pub normal: Option<Vec<f64>>,
    pub anchor: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub dim: Option<usize>,
    pub indices: Option<Vec<usize>>,
    pub k: Option<usize>,
    pub radius: Option<f64>,
    pub vertex: Option<Vec<f64>>,
    pub normals: Option<Vec<Vec<f64>>>,
    pub facets: Option<Vec<FacetSpec>>,
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacetSpec {
    pub normal: Vec<f64>,
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub m: usize,
    pub points: Vec<KernelPointSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelPointSpec {
    pub x: String,
    pub nodes: Vec<KernelNodeSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelNodeSpec {
    pub w: f64,
    #[serde(rename = "K")]
    pub k: MatrixSpec,
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceSpec {
    #[serde(rename = "L")]
    pub cell: f64,
    #[serde(rename = "N")]
    pub samples: usize,
    pub heights: Vec<f64>,
}

/// Parses a bundle, reporting the line, column and field path of any error.
pub fn parse_bundle(text: &str, origin: &str) -> Result<Bundle> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        anyhow!("{origin}:{}:{}: field '{path}': {inner}", inner.line(), inner.column())
    })
}

/// A matrix whose entries are constants or expressions.
pub struct MatrixTable {
    m: usize,
    entries: Vec<Expr>,
}

impl MatrixTable {
    fn parse(spec: &MatrixSpec, m: usize, scope: Scope, field: &str) -> Result<Self> {
        let flat: Vec<&Entry> = match spec {
            MatrixSpec::Rows(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    bail!("field '{field}': expected {m} rows of {m} entries");
                }
                rows.iter().flatten().collect()
            }
            MatrixSpec::Flat(v) => {
                if v.len() != m * m {
                    bail!("field '{field}': expected {} entries, got {}", m * m, v.len());
                }
                v.iter().collect()
            }
        };
        let entries = flat
            .into_iter()
            .enumerate()
            .map(|(i, e)| match e {
                Entry::Number(v) => Ok(Expr::constant(*v)),
                Entry::Expr(s) => Expr::parse(s, scope)
                    .map_err(|err| anyhow!("field '{field}' entry ({}, {}): {err}", i / m, i % m)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MatrixTable { m, entries })
    }

    fn constant(&self) -> Option<DMatrix<f64>> {
        let values: Option<Vec<f64>> = self.entries.iter().map(Expr::as_constant).collect();
        values.map(|v| DMatrix::from_row_slice(self.m, self.m, &v))
    }

    fn eval(&self, x: &[f64], eta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.m, self.m, self.entries.iter().map(|e| e.eval(x, eta)))
    }
}

fn tables(specs: &[MatrixSpec], m: usize, scope: Scope, field: &str) -> Result<Vec<MatrixTable>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| MatrixTable::parse(s, m, scope, &format!("{field}[{i}]")))
        .collect()
}

fn all_constant(tables: &[MatrixTable]) -> Option<Vec<DMatrix<f64>>> {
    tables.iter().map(MatrixTable::constant).collect()
}

impl CoefficientsSpec {
    /// Builds the system. All-number tables take the constant path; any
    /// expression makes the field spatially varying.
    pub fn build(&self) -> Result<SystemCoefficients> {
        let (n, m) = (self.n, self.m);
        let pairs = n * (n + 1) / 2;
        let x_scope = Scope { x: n, eta: 0 };
        if let Some(q) = &self.quasilinear {
            if self.a2.is_some() || self.a1.is_some() {
                bail!("field 'coefficients': 'quasilinear' excludes 'A2' and 'A1'");
            }
            if q.len() != pairs {
                bail!("field 'coefficients.quasilinear': expected {pairs} matrices (j ≤ k), got {}", q.len());
            }
            let t = tables(q, m, Scope { x: n, eta: m * n }, "coefficients.quasilinear")?;
            let field = Arc::new(move |x: &[f64], eta: &[f64]| t.iter().map(|t| t.eval(x, eta)).collect());
            return Ok(SystemCoefficients::quasilinear(n, m, field)?);
        }
        let a2 = self
            .a2
            .as_ref()
            .ok_or_else(|| anyhow!("field 'coefficients': missing 'A2' (or 'quasilinear')"))?;
        if a2.len() != pairs {
            bail!("field 'coefficients.A2': expected {pairs} matrices (j ≤ k), got {}", a2.len());
        }
        let second = tables(a2, m, x_scope, "coefficients.A2")?;
        let mut coeffs = match all_constant(&second) {
            Some(packed) => SystemCoefficients::constant(n, m, packed)?,
            None => SystemCoefficients::sampled(
                n,
                m,
                Arc::new(move |x: &[f64]| second.iter().map(|t| t.eval(x, &[])).collect()),
            )?,
        };
        if let Some(a1) = &self.a1 {
            if a1.len() != n {
                bail!("field 'coefficients.A1': expected {n} matrices, got {}", a1.len());
            }
            let first = tables(a1, m, x_scope, "coefficients.A1")?;
            coeffs = match all_constant(&first) {
                Some(f) => coeffs.with_first_order(f)?,
                None => coeffs.with_first_order_field(Arc::new(move |x: &[f64]| {
                    first.iter().map(|t| t.eval(x, &[])).collect()
                })),
            };
        }
        Ok(coeffs)
    }
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn required<'a, T>(value: &'a Option<T>, kind: BodyKind, name: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| anyhow!("field 'body.{name}' is required for kind {kind:?}"))
}

impl BodySpec {
    pub fn build(&self) -> Result<ConvexBody> {
        let kind = self.kind;
        let body = match kind {
            BodyKind::HalfSpace => ConvexBody::half_space(
                vector(required(&self.normal, kind, "normal")?),
                vector(required(&self.anchor, kind, "anchor")?),
            )?,
            BodyKind::Orthant => ConvexBody::orthant(required(&self.lower, kind, "lower")?),
            BodyKind::PolyhedralAngle => ConvexBody::polyhedral_angle(
                *required(&self.dim, kind, "dim")?,
                required(&self.indices, kind, "indices")?,
                required(&self.lower, kind, "lower")?,
            )?,
            BodyKind::PolyhedralCylinder => ConvexBody::polyhedral_cylinder(
                *required(&self.dim, kind, "dim")?,
                required(&self.indices, kind, "indices")?,
                required(&self.lower, kind, "lower")?,
                required(&self.upper, kind, "upper")?,
            )?,
            BodyKind::SphericalCylinder => ConvexBody::spherical_cylinder(
                *required(&self.dim, kind, "dim")?,
                *required(&self.k, kind, "k")?,
                *required(&self.radius, kind, "radius")?,
            )?,
            BodyKind::Cone => ConvexBody::cone(
                vector(required(&self.vertex, kind, "vertex")?),
                required(&self.normals, kind, "normals")?.iter().map(|v| vector(v)).collect(),
            )?,
            BodyKind::Polytope => ConvexBody::polytope(
                required(&self.facets, kind, "facets")?
                    .iter()
                    .map(|f| (vector(&f.normal), vector(&f.anchor)))
                    .collect(),
            )?,
            BodyKind::Ball => ConvexBody::ball(
                vector(required(&self.center, kind, "center")?),
                *required(&self.radius, kind, "radius")?,
            )?,
        };
        Ok(body)
    }
}

/// A numeric `m×m` matrix (expressions allowed if they are constant).
pub fn numeric_matrix(spec: &MatrixSpec, field: &str) -> Result<DMatrix<f64>> {
    let m = match spec {
        MatrixSpec::Rows(rows) => rows.len(),
        MatrixSpec::Flat(v) => (v.len() as f64).sqrt().round() as usize,
    };
    let table = MatrixTable::parse(spec, m, Scope { x: 0, eta: 0 }, field)?;
    Ok(table.eval(&[], &[]))
}

impl KernelSpec {
    pub fn build(&self) -> Result<DiscreteKernel> {
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                let nodes = p
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(ni, node)| {
                        let field = format!("kernel.points[{pi}].nodes[{ni}].K");
                        let table = MatrixTable::parse(&node.k, self.m, Scope { x: 0, eta: 0 }, &field)?;
                        Ok(KernelNode {
                            weight: node.w,
                            matrix: table.eval(&[], &[]),
                            position: node.y.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(KernelPoint { label: p.x.clone(), nodes })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteKernel::new(self.m, points)?)
    }
}

/// Parses one expression per component.
pub fn component_exprs(list: &[String], m: usize, vars: usize, field: &str) -> Result<Vec<Expr>> {
    if list.len() != m {
        bail!("field '{field}': expected {m} expressions, got {}", list.len());
    }
    list.iter()
        .enumerate()
        .map(|(i, s)| Expr::parse(s, Scope { x: vars, eta: 0 }).with_context(|| format!("field '{field}[{i}]'")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_tables_match_the_constant_path_bit_for_bit() {
        let numbers = r#"{"n":2,"m":2,"A2":[[[1.1,0.3],[0,0.7]],[[0.1,0],[0,0.2]],[[1,0],[0,1.3]]]}"#;
        let exprs = r#"{"n":2,"m":2,"A2":[[["1.1 + 0*x1","0.3"],["0","0.7"]],[["0.1","0"],["0","0.2"]],[["1","0"],["0","1.3"]]]}"#;
        let a: CoefficientsSpec = serde_json::from_str(numbers).unwrap();
        let b: CoefficientsSpec = serde_json::from_str(exprs).unwrap();
        let (a, b) = (a.build().unwrap(), b.build().unwrap());
        assert!(a.is_constant() && !b.is_constant());
        for x in [[0.0, 0.0], [0.3, -2.0]] {
            assert_eq!(a.second_order_at(&x).unwrap(), b.second_order_at(&x).unwrap());
        }
    }

    #[test]
    fn errors_name_the_field() {
        let text = "{\n  \"coefficients\": {\"n\": 2, \"m\": 1, \"A2\": [[[1]], [[0]], [[\"1 + y\"]]]}\n}";
        let bundle = parse_bundle(text, "b.json").unwrap();
        let err = bundle.coefficients.unwrap().build().unwrap_err().to_string();
        assert!(err.contains("coefficients.A2[2]") && err.contains("column 5"), "{err}");

        let err = parse_bundle("{\"body\": {\"kind\": \"orthant\", \"lower\": [0, \"a\"]}}", "b.json")
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("b.json:1:"), "{err}");
        assert!(err.contains("body"), "{err}");
    }
}
