use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{BoxGrid, DirichletSolver, GridField};
use crate::bodies::{ConvexBody, TOL_GEOM};
use crate::error::{Error, Result};

/// Outcome of checking a computed solution against a body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    pub passed: bool,
    /// Largest violation margin over interior nodes.
    pub max_margin: f64,
    pub worst_node: usize,
    pub worst_point: Vec<f64>,
    /// `C h²` with `h` the largest spacing.
    pub audit_tol: f64,
    pub tolerance_constant: f64,
    /// Largest excess of an interior component over its boundary range;
    /// non-positive when the discrete maximum principle holds componentwise.
    pub max_principle_margin: f64,
}

/// Audits `solution` against `body`: every boundary value must lie in the
/// body; the audit passes when no interior value is farther out than
/// `C h²`, with `C = 10 ‖u‖_∞` unless given.
///
/// Exact sign preservation is only expected for monotone stencils; mixed
/// derivatives can produce `O(h²)` excursions.
pub fn audit_invariance(solution: &GridField, body: &ConvexBody, constant: Option<f64>) -> Result<AuditRecord> {
    let grid = solution.grid();
    let m = solution.m();
    if body.dim() != m {
        return Err(Error::Dimension("body dimension differs from the number of components".into()));
    }
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for v in grid.boundary_nodes() {
        let u = DVector::from_column_slice(solution.at(v));
        let margin = body.violation_margin(&u);
        if margin > TOL_GEOM * (1.0 + u.norm()) {
            return Err(Error::BoundaryOutsideBody { node: v, margin });
        }
        for p in 0..m {
            lo[p] = lo[p].min(u[p]);
            hi[p] = hi[p].max(u[p]);
        }
    }
    let c = constant.unwrap_or(10.0 * solution.max_abs());
    let h = grid.max_spacing();
    let mut record = AuditRecord {
        passed: true,
        max_margin: f64::NEG_INFINITY,
        worst_node: 0,
        worst_point: Vec::new(),
        audit_tol: c * h * h,
        tolerance_constant: c,
        max_principle_margin: f64::NEG_INFINITY,
    };
    for v in grid.interior_nodes() {
        let u = DVector::from_column_slice(solution.at(v));
        let margin = body.violation_margin(&u);
        if margin > record.max_margin {
            record.max_margin = margin;
            record.worst_node = v;
        }
        for p in 0..m {
            let excess = (u[p] - hi[p]).max(lo[p] - u[p]);
            record.max_principle_margin = record.max_principle_margin.max(excess);
        }
    }
    record.worst_point = grid.coords(record.worst_node);
    record.passed = record.max_margin <= record.audit_tol;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    pub seed: u64,
    /// Maximum number of solves.
    pub budget: usize,
    /// Highest trigonometric frequency per axis.
    pub modes: usize,
    /// Bound on every trigonometric coefficient.
    pub amplitude: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            budget: 200,
            modes: 3,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub best_margin: f64,
    pub solves: usize,
    pub audit: AuditRecord,
    #[serde(skip)]
    pub boundary: GridField,
    #[serde(skip)]
    pub solution: GridField,
}

/// Boundary data `u_p(x) = Σ c_{p,k} Π_i cos(π k_i (x_i − lo_i)/(hi_i − lo_i))`
/// projected into the body.
fn trig_boundary(grid: &BoxGrid, body: &ConvexBody, coeffs: &[Vec<f64>], modes: usize) -> Result<GridField> {
    let n = grid.dim();
    let m = coeffs.len();
    let per = modes + 1;
    GridField::from_fn(grid, m, |x| {
        let mut u = DVector::zeros(m);
        for (p, c) in coeffs.iter().enumerate() {
            for (k, ck) in c.iter().enumerate() {
                let mut rest = k;
                let mut basis = 1.0;
                for i in 0..n {
                    let freq = (rest % per) as f64;
                    rest /= per;
                    let t = (x[i] - grid.lo()[i]) / (grid.hi()[i] - grid.lo()[i]);
                    basis *= (std::f64::consts::PI * freq * t).cos();
                }
                u[p] += ck * basis;
            }
        }
        body.project(&u).as_slice().to_vec()
    })
}

/// Seeded search for body-valued boundary data whose solution leaves the
/// body: random trigonometric coefficients (projected into the body),
/// followed by greedy amplification and perturbation of the best candidate.
/// Coefficients stay within `±amplitude` throughout.
pub fn search_counterexample(solver: &DirichletSolver, body: &ConvexBody, config: SearchConfig) -> Result<SearchResult> {
    if config.budget == 0 {
        return Err(Error::InvalidInput("search budget must be positive".into()));
    }
    let grid = solver.grid().clone();
    let m = solver.m();
    let terms = (config.modes + 1).pow(grid.dim() as u32);
    let amp = config.amplitude;
    let clamp = |v: f64| v.clamp(-amp, amp);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut solves = 0;
    let evaluate = |coeffs: &[Vec<f64>], solves: &mut usize| -> Result<(f64, GridField, GridField, AuditRecord)> {
        let bd = trig_boundary(&grid, body, coeffs, config.modes)?;
        let (u, _) = solver.solve(&bd)?;
        *solves += 1;
        let audit = audit_invariance(&u, body, None)?;
        Ok((audit.max_margin, bd, u, audit))
    };
    let random_coeffs = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| (0..terms).map(|_| config.amplitude * rng.random_range(-1.0..1.0)).collect())
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
    let mut step = 0.5 * config.amplitude;
    while solves < config.budget {
        let scaled: Vec<Vec<f64>> = best_coeffs
            .iter()
            .map(|c| c.iter().map(|v| clamp(v * 1.5)).collect())
            .collect();
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
    let (best_margin, boundary, solution, audit) = best;
    Ok(SearchResult {
        best_margin,
        solves,
        audit,
        boundary,
        solution,
    })
}
