//! Finite differences for the Dirichlet problem on boxes.
//!
//! The operator `Σ A_jk ∂_j∂_k u + Σ A_j ∂_j u` is discretized with central
//! differences: three-point second differences on the diagonal, the
//! four-point cross stencil for mixed derivatives and central first
//! differences. Unknowns are ordered node-major (lexicographic nodes with
//! axis 0 fastest) with the `m` components innermost. Boundary rows are
//! identity rows carrying the Dirichlet data.
//!
//! Quasilinear systems `Σ B_jk(x, D u) ∂_j∂_k u = 0` are solved by damped
//! Picard iteration on the frozen gradient.

mod audit;
mod grid;
pub mod sparse;

pub use audit::{audit_invariance, search_counterexample, AuditRecord, SearchConfig, SearchResult};
pub use grid::{BoxGrid, GridField};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::coefficients::SystemCoefficients;
use crate::error::{Error, Result};
use crate::linalg::packed_index;
use sparse::{bicgstab, gauss_seidel, BandedLu, BlockJacobi, CsrMatrix};

/// Band storage (in `f64`s) above which `Auto` switches to BiCGSTAB.
pub const BANDED_STORAGE_LIMIT: usize = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Banded LU when it fits [`BANDED_STORAGE_LIMIT`], BiCGSTAB otherwise.
    Auto,
    BandedLu,
    BiCgStab,
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Relative residual target for the iterative solvers.
    pub rtol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Auto,
            rtol: 1e-10,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardConfig {
    /// Damping `ω ∈ (0, 1]`.
    pub omega: f64,
    /// Stop when successive iterates differ by at most this in max norm.
    pub ptol: f64,
    pub max_iterations: usize,
    pub linear: SolverConfig,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            omega: 0.7,
            ptol: 1e-8,
            max_iterations: 200,
            linear: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub solver: SolverKind,
    /// Linear iterations of the last solve (1 for the direct solver).
    pub iterations: usize,
    /// Relative residual `‖b − A x‖ / ‖b‖` of the last linear solve.
    pub linear_residual: f64,
    pub picard_iterations: Option<usize>,
    pub picard_residual: Option<f64>,
    pub picard_history: Vec<f64>,
    pub audit: Option<AuditRecord>,
}

/// An assembled grid problem `A x = b`.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub grid: BoxGrid,
    pub m: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

type NodeCoefficients = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

fn assemble_matrix(
    grid: &BoxGrid,
    m: usize,
    coef: &dyn Fn(usize, &[f64]) -> Result<NodeCoefficients>,
) -> Result<CsrMatrix> {
    let n = grid.dim();
    let size = grid.node_count() * m;
    let h = grid.spacing();
    let mut trip = Vec::with_capacity(size * (1 + 2 * n * n) * m);
    for v in 0..grid.node_count() {
        if grid.is_boundary(v) {
            for p in 0..m {
                trip.push((v * m + p, v * m + p, 1.0));
            }
            continue;
        }
        let x = grid.coords(v);
        let (second, first) = coef(v, &x)?;
        let mut add = |node: usize, mat: &DMatrix<f64>, w: f64| {
            for p in 0..m {
                for q in 0..m {
                    let a = mat[(p, q)];
                    if a != 0.0 {
                        trip.push((v * m + p, node * m + q, w * a));
                    }
                }
            }
        };
        for j in 0..n {
            let sj = grid.stride(j);
            let ajj = &second[packed_index(n, j, j)];
            let w = 1.0 / (h[j] * h[j]);
            add(v + sj, ajj, w);
            add(v - sj, ajj, w);
            add(v, ajj, -2.0 * w);
            for k in j + 1..n {
                let sk = grid.stride(k);
                // 2 A_jk ∂_j∂_k with the four-point cross stencil
                let ajk = &second[packed_index(n, j, k)];
                let w = 2.0 / (4.0 * h[j] * h[k]);
                add(v + sj + sk, ajk, w);
                add(v - sj - sk, ajk, w);
                add(v + sj - sk, ajk, -w);
                add(v - sj + sk, ajk, -w);
            }
            if let Some(aj) = first.get(j) {
                let w = 1.0 / (2.0 * h[j]);
                add(v + sj, aj, w);
                add(v - sj, aj, -w);
            }
        }
    }
    Ok(CsrMatrix::from_triplets(size, trip))
}

fn check_shapes(coeffs: &SystemCoefficients, grid: &BoxGrid) -> Result<()> {
    if coeffs.n() != grid.dim() {
        return Err(Error::Dimension(format!(
            "coefficients have n = {} but the grid has dimension {}",
            coeffs.n(),
            grid.dim()
        )));
    }
    Ok(())
}

fn check_field(field: &GridField, grid: &BoxGrid, m: usize) -> Result<()> {
    if field.grid() != grid || field.m() != m {
        return Err(Error::Dimension("boundary field does not match grid and system size".into()));
    }
    Ok(())
}

fn linear_coefficients<'a>(coeffs: &'a SystemCoefficients) -> impl Fn(usize, &[f64]) -> Result<NodeCoefficients> + 'a {
    move |_, x| Ok((coeffs.second_order_at(x)?, coeffs.first_order_at(x)?))
}

fn rhs_for(grid: &BoxGrid, m: usize, interior: &[f64], boundary: &GridField) -> Vec<f64> {
    let mut rhs = interior.to_vec();
    for v in grid.boundary_nodes() {
        rhs[v * m..(v + 1) * m].copy_from_slice(boundary.at(v));
    }
    rhs
}

fn source_values(grid: &BoxGrid, m: usize, source: Option<&dyn Fn(&[f64]) -> Vec<f64>>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.node_count() * m];
    if let Some(f) = source {
        for v in grid.interior_nodes() {
            let s = f(&grid.coords(v));
            if s.len() != m {
                return Err(Error::Dimension("source value length differs from m".into()));
            }
            out[v * m..(v + 1) * m].copy_from_slice(&s);
        }
    }
    Ok(out)
}

/// Assembles the Dirichlet problem for `coeffs` with the boundary values of
/// `boundary` (interior values of `boundary` are ignored).
pub fn assemble_linear(coeffs: &SystemCoefficients, grid: &BoxGrid, boundary: &GridField) -> Result<LinearProblem> {
    assemble_linear_with_source(coeffs, grid, boundary, None)
}

/// As [`assemble_linear`] for `L u = f` with an interior source `f`.
pub fn assemble_linear_with_source(
    coeffs: &SystemCoefficients,
    grid: &BoxGrid,
    boundary: &GridField,
    source: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
) -> Result<LinearProblem> {
    check_shapes(coeffs, grid)?;
    let m = coeffs.m();
    check_field(boundary, grid, m)?;
    let matrix = assemble_matrix(grid, m, &linear_coefficients(coeffs))?;
    let interior = source_values(grid, m, source)?;
    Ok(LinearProblem {
        grid: grid.clone(),
        m,
        rhs: rhs_for(grid, m, &interior, boundary),
        matrix,
    })
}

enum Backend {
    Direct(BandedLu),
    Krylov(BlockJacobi),
    Sweeps,
}

/// A prepared operator that solves the same grid problem for many boundary
/// data; the banded factorization is computed once.
pub struct DirichletSolver {
    grid: BoxGrid,
    m: usize,
    matrix: CsrMatrix,
    interior_rhs: Vec<f64>,
    backend: Backend,
    kind: SolverKind,
    config: SolverConfig,
}

impl DirichletSolver {
    pub fn new(coeffs: &SystemCoefficients, grid: &BoxGrid, config: SolverConfig) -> Result<Self> {
        Self::with_source(coeffs, grid, config, None)
    }

    pub fn with_source(
        coeffs: &SystemCoefficients,
        grid: &BoxGrid,
        config: SolverConfig,
        source: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    ) -> Result<Self> {
        check_shapes(coeffs, grid)?;
        let m = coeffs.m();
        let matrix = assemble_matrix(grid, m, &linear_coefficients(coeffs))?;
        let interior_rhs = source_values(grid, m, source)?;
        Self::from_parts(grid.clone(), m, matrix, interior_rhs, config)
    }

    fn from_parts(grid: BoxGrid, m: usize, matrix: CsrMatrix, interior_rhs: Vec<f64>, config: SolverConfig) -> Result<Self> {
        let kind = match config.kind {
            SolverKind::Auto => {
                let (kl, ku) = matrix.bandwidths();
                if BandedLu::storage(matrix.dim(), kl, ku) <= BANDED_STORAGE_LIMIT {
                    SolverKind::BandedLu
                } else {
                    SolverKind::BiCgStab
                }
            }
            k => k,
        };
        let backend = match kind {
            SolverKind::BandedLu => Backend::Direct(BandedLu::factor(&matrix)?),
            SolverKind::BiCgStab => Backend::Krylov(BlockJacobi::new(&matrix, m)?),
            _ => Backend::Sweeps,
        };
        Ok(DirichletSolver {
            grid,
            m,
            matrix,
            interior_rhs,
            backend,
            kind,
            config,
        })
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves with the boundary values of `boundary`.
    pub fn solve(&self, boundary: &GridField) -> Result<(GridField, SolveReport)> {
        check_field(boundary, &self.grid, self.m)?;
        let rhs = rhs_for(&self.grid, self.m, &self.interior_rhs, boundary);
        self.solve_rhs(&rhs)
    }

    fn solve_rhs(&self, rhs: &[f64]) -> Result<(GridField, SolveReport)> {
        let (mut x, iterations) = match &self.backend {
            Backend::Direct(lu) => (lu.solve(rhs), 1),
            Backend::Krylov(pre) => {
                let mut x = rhs.to_vec();
                let it = bicgstab(&self.matrix, pre, rhs, &mut x, self.config.rtol, self.config.max_iterations)?;
                (x, it)
            }
            Backend::Sweeps => {
                let mut x = rhs.to_vec();
                let it = gauss_seidel(&self.matrix, rhs, &mut x, self.config.rtol, self.config.max_iterations)?;
                (x, it)
            }
        };
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let linear_residual = self.matrix.residual_norm(&x, rhs) / bnorm;
        if !linear_residual.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                residual: linear_residual,
            });
        }
        // identity rows: pin the boundary to the data instead of the solver's roundoff
        for v in self.grid.boundary_nodes() {
            let r = v * self.m..(v + 1) * self.m;
            x[r.clone()].copy_from_slice(&rhs[r]);
        }
        let field = GridField::from_values(&self.grid, self.m, x)?;
        Ok((
            field,
            SolveReport {
                solver: self.kind,
                iterations,
                linear_residual,
                picard_iterations: None,
                picard_residual: None,
                picard_history: Vec::new(),
                audit: None,
            },
        ))
    }
}

/// Solves an assembled problem.
pub fn solve_linear(problem: &LinearProblem, config: SolverConfig) -> Result<(GridField, SolveReport)> {
    let zero = vec![0.0; problem.rhs.len()];
    let solver = DirichletSolver::from_parts(problem.grid.clone(), problem.m, problem.matrix.clone(), zero, config)?;
    solver.solve_rhs(&problem.rhs)
}

/// Damped Picard iteration for `Σ B_jk(x, D u) ∂_j∂_k u = 0`.
///
/// The first iterate solves the system frozen at `η = 0`; each step freezes
/// `η` at the central-difference gradient of the current iterate, solves,
/// and stops when the new solution is within `ptol` of the current iterate.
/// Otherwise the iterate moves to `(1 − ω) u + ω ũ`.
pub fn solve_quasilinear(
    coeffs: &SystemCoefficients,
    grid: &BoxGrid,
    boundary: &GridField,
    config: PicardConfig,
) -> Result<(GridField, SolveReport)> {
    if !coeffs.is_quasilinear() {
        return Err(Error::InvalidInput("coefficients have no quasilinear part".into()));
    }
    if !(config.omega > 0.0 && config.omega <= 1.0) {
        return Err(Error::InvalidInput(format!("damping ω = {} outside (0, 1]", config.omega)));
    }
    check_shapes(coeffs, grid)?;
    let m = coeffs.m();
    check_field(boundary, grid, m)?;
    let zeros = vec![0.0; grid.node_count() * m];
    let rhs = rhs_for(grid, m, &zeros, boundary);
    let frozen = |u: Option<&GridField>| -> Result<DirichletSolver> {
        let coef = |v: usize, x: &[f64]| -> Result<NodeCoefficients> {
            let eta = match u {
                Some(u) => u.gradient_at(v),
                None => vec![0.0; m * grid.dim()],
            };
            Ok((coeffs.quasilinear_at(x, &eta)?, Vec::new()))
        };
        let matrix = assemble_matrix(grid, m, &coef)?;
        DirichletSolver::from_parts(grid.clone(), m, matrix, zeros.clone(), config.linear)
    };
    let (mut u, mut report) = frozen(None)?.solve_rhs(&rhs)?;
    let mut history = Vec::new();
    for k in 1..=config.max_iterations {
        let (next, rep) = frozen(Some(&u))?.solve_rhs(&rhs)?;
        let diff = next.max_diff(&u);
        history.push(diff);
        report.iterations = rep.iterations;
        report.linear_residual = rep.linear_residual;
        if !diff.is_finite() {
            break;
        }
        if diff <= config.ptol {
            report.picard_iterations = Some(k);
            report.picard_residual = Some(diff);
            report.picard_history = history;
            return Ok((next, report));
        }
        let blended: Vec<f64> = u
            .values()
            .iter()
            .zip(next.values())
            .map(|(a, b)| (1.0 - config.omega) * a + config.omega * b)
            .collect();
        u = GridField::from_values(grid, m, blended)?;
    }
    Err(Error::PicardNoConvergence { history })
}
