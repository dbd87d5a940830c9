//! One function per subcommand. Each returns an [`Outcome`]; writing the
//! artifacts is left to the caller.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use convex_invariance::conditions::{
    check_theorem1_conditions, check_theorem2_conditions, default_eta_samples, DEFAULT_EIGEN_TOL,
};
use convex_invariance::fd::{
    audit_invariance, search_counterexample, solve_quasilinear, BoxGrid, DirichletSolver, GridField, PicardConfig,
    SearchConfig, SolverConfig,
};
use convex_invariance::halfspace::{
    audit_halfspace_invariance, kernel_normalization_check, search_halfspace_counterexample, HalfSpacePlan,
    PeriodicData,
};
use convex_invariance::structure::{admissible_family, classify_matrix, detect_factorization, RANK_ONE_TOL};
use convex_invariance::transform::{check_kernel_invariance, witness_for_first_failure};
use convex_invariance::transform::NORMALIZATION_TOL;
use convex_invariance::{ConvexBody, SystemCoefficients};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bundle::{component_exprs, numeric_matrix, Bundle};

pub const DEFAULT_NORMAL_BUDGET: usize = 64;
pub const DEFAULT_BOX_GRID: usize = 33;
pub const DEFAULT_NORMALIZATION_RESOLUTION: usize = 64;
pub const DEFAULT_ETA_MAGNITUDE: f64 = 1.0;

/// Flag values shared by all subcommands.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Options {
    pub tol: Option<f64>,
    pub seed: u64,
    pub budget: Option<usize>,
    pub grid: Option<usize>,
    pub heights: Option<Vec<f64>>,
}

/// What a subcommand found, before it is written to disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, String>,
    pub report: Vec<String>,
    /// `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
}

impl Outcome {
    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    fn label(&mut self, key: &str, value: impl Into<String>) {
        self.labels.insert(key.into(), value.into());
    }

    fn line(&mut self, text: impl Into<String>) {
        self.report.push(text.into());
    }

    fn json(&mut self, name: &str, seed: u64, detail: &impl Serialize) -> Result<()> {
        let body = json!({ "seed": seed, "detail": detail });
        self.artifacts.push((name.into(), serde_json::to_string_pretty(&body)? + "\n"));
        Ok(())
    }

    fn csv(&mut self, name: &str, seed: u64, table: &str) {
        self.artifacts.push((name.into(), format!("# seed: {seed}\n{table}")));
    }
}

fn coefficients(bundle: &Bundle) -> Result<SystemCoefficients> {
    bundle
        .coefficients
        .as_ref()
        .ok_or_else(|| anyhow!("bundle has no 'coefficients'"))?
        .build()
}

fn body(bundle: &Bundle) -> Result<ConvexBody> {
    bundle.body.as_ref().ok_or_else(|| anyhow!("bundle has no 'body'"))?.build()
}

fn x_samples(bundle: &Bundle, n: usize) -> Result<Vec<Vec<f64>>> {
    let xs = bundle.x_samples.clone().unwrap_or_else(|| vec![vec![0.0; n]]);
    if let Some(bad) = xs.iter().position(|x| x.len() != n) {
        bail!("field 'x_samples[{bad}]': expected {n} coordinates");
    }
    Ok(xs)
}

pub fn check_conditions(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let coeffs = coefficients(bundle)?;
    let body = body(bundle)?;
    let xs = x_samples(bundle, coeffs.n())?;
    let tol = opts.tol.unwrap_or(DEFAULT_EIGEN_TOL);
    let budget = opts.budget.unwrap_or(DEFAULT_NORMAL_BUDGET);
    let report = if coeffs.is_quasilinear() {
        let mags = bundle.eta_magnitudes.clone().unwrap_or_else(|| vec![DEFAULT_ETA_MAGNITUDE]);
        let etas = default_eta_samples(coeffs.m(), coeffs.n(), &mags);
        check_theorem2_conditions(&coeffs, &body, &xs, &etas, budget, tol)?
    } else {
        check_theorem1_conditions(&coeffs, &body, &xs, budget, tol)?
    };
    let mut out = Outcome { passed: report.passed, ..Outcome::default() };
    out.metric("delta_estimate", report.delta_estimate);
    out.metric("reduced_delta", report.reduced_delta.unwrap_or(f64::NAN));
    out.metric("failures", report.failures.len() as f64);
    out.metric("normals", report.normals.len() as f64);
    out.metric("tol", tol);
    out.label("body", body.kind());
    out.label("verification", report.verification.clone());
    out.line(format!("body: {}, normals sampled: {}", body.kind(), report.normals.len()));
    out.line(format!("x samples: {}, eta samples: {}", report.x_count, report.eta_count.unwrap_or(0)));
    out.line(format!("ellipticity estimate: {:.6e}", report.delta_estimate));
    if let Some(r) = report.reduced_delta {
        out.line(format!("reduced scalar ellipticity: {r:.6e}"));
    }
    for f in report.failures.iter().take(10) {
        out.line(format!(
            "failure {:?}: x index {:?}, normal index {:?}, coefficient {:?}, residual {:.3e}",
            f.kind, f.x_index, f.normal_index, f.coefficient, f.residual
        ));
    }
    if report.failures.len() > 10 {
        out.line(format!("... {} failures in conditions.json", report.failures.len()));
    }
    out.json("conditions.json", opts.seed, &report)?;
    Ok(out)
}

pub fn classify(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let body = body(bundle)?;
    let tol = opts.tol.unwrap_or(DEFAULT_EIGEN_TOL);
    let mut named = Vec::new();
    if let Some(spec) = &bundle.matrix {
        named.push(("matrix".to_string(), numeric_matrix(spec, "matrix")?));
    } else {
        let coeffs = coefficients(bundle)?;
        let second = coeffs
            .constant_second_order()
            .ok_or_else(|| anyhow!("classify needs a 'matrix' or constant 'A2' coefficients"))?;
        let n = coeffs.n();
        let mut q = 0;
        for j in 0..n {
            for k in j..n {
                named.push((format!("A2[{j},{k}]"), second[q].clone()));
                q += 1;
            }
        }
        for (j, a) in coeffs.first_order_at(&vec![0.0; n])?.into_iter().enumerate() {
            named.push((format!("A1[{j}]"), a));
        }
    }
    let family = admissible_family(&body);
    let mut out = Outcome { passed: true, ..Outcome::default() };
    let mut details = Vec::new();
    for (name, m) in &named {
        if m.nrows() != body.dim() {
            bail!("{name} is {}×{} but the body lives in dimension {}", m.nrows(), m.ncols(), body.dim());
        }
        let c = classify_matrix(m, &body, tol);
        out.passed &= c.is_some();
        match &c {
            Some(c) => out.line(format!("{name}: admissible, scalars {:?}", c.values)),
            None => out.line(format!("{name}: not admissible")),
        }
        details.push(json!({ "name": name, "admissible": c.is_some(), "classification": c }));
    }
    out.metric("matrices", named.len() as f64);
    out.metric("admissible", details.iter().filter(|d| d["admissible"] == true).count() as f64);
    out.metric("tol", tol);
    out.label("body", body.kind());
    out.line(format!("admissible family for {}: {}", body.kind(), serde_json::to_string(&family)?));
    out.json("classification.json", opts.seed, &json!({ "family": family, "matrices": details }))?;
    Ok(out)
}

pub fn detect(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let coeffs = coefficients(bundle)?;
    let tol = opts.tol.unwrap_or(RANK_ONE_TOL);
    let f = detect_factorization(&coeffs, tol);
    let kind = serde_json::to_value(f.kind)?.as_str().unwrap_or_default().to_string();
    let mut out = Outcome {
        passed: f.kind != convex_invariance::structure::FactorizationKind::None,
        ..Outcome::default()
    };
    out.label("kind", kind.clone());
    out.metric("residual", f.residual);
    out.metric("stacked_ratio", f.stacked_ratio);
    out.metric("max_column_ratio", f.max_column_ratio());
    out.metric("tol", tol);
    out.line(format!("kind: {kind}"));
    out.line(format!("sigma2/sigma1 of the stacked tensor: {:.6e}", f.stacked_ratio));
    out.line(format!("largest column sigma2/sigma1: {:.6e}", f.max_column_ratio()));
    if out.passed {
        out.line(format!("reconstruction residual: {:.3e}", f.residual));
    }
    if let Some(reason) = &f.reason {
        out.line(format!("reason: {reason}"));
    }
    out.json("factorization.json", opts.seed, &f)?;
    Ok(out)
}

fn kernel_parts(bundle: &Bundle) -> Result<(convex_invariance::transform::DiscreteKernel, ConvexBody)> {
    let kernel = bundle.kernel.as_ref().ok_or_else(|| anyhow!("bundle has no 'kernel'"))?.build()?;
    Ok((kernel, body(bundle)?))
}

pub fn check_transform(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let (kernel, body) = kernel_parts(bundle)?;
    let tol = opts.tol.unwrap_or(DEFAULT_EIGEN_TOL);
    let budget = opts.budget.unwrap_or(DEFAULT_NORMAL_BUDGET);
    let report = check_kernel_invariance(&kernel, &body, budget, tol)?;
    let mut out = Outcome { passed: report.passed, ..Outcome::default() };
    let min_g = report.g_table.iter().map(|e| e.g).fold(f64::INFINITY, f64::min);
    out.metric("failures", report.failures.len() as f64);
    out.metric("min_g", min_g);
    out.metric("tol", tol);
    out.label("body", body.kind());
    out.line(format!("evaluation points: {}, normals: {}", kernel.points().len(), report.normals.len()));
    for f in report.failures.iter().take(10) {
        out.line(format!(
            "failure {:?}: point {} node {} normal index {}, |f| = {:.3e}, g = {:.3e}",
            f.kind, f.label, f.node, f.normal_index, f.residual_norm, f.g
        ));
    }
    out.json("kernel_report.json", opts.seed, &report)?;
    Ok(out)
}

pub fn witness(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let (kernel, body) = kernel_parts(bundle)?;
    let tol = opts.tol.unwrap_or(DEFAULT_EIGEN_TOL);
    let budget = opts.budget.unwrap_or(DEFAULT_NORMAL_BUDGET);
    if check_kernel_invariance(&kernel, &body, budget, tol)?.passed {
        let mut out = Outcome { passed: true, ..Outcome::default() };
        out.line("kernel passes the invariance check; no witness exists");
        return Ok(out);
    }
    let w = witness_for_first_failure(&kernel, &body, budget, tol)?;
    let mut out = Outcome { passed: false, ..Outcome::default() };
    out.metric("image_margin", w.image_margin);
    out.metric("predicted_excess", w.predicted_excess);
    out.metric("x_index", w.x_index as f64);
    out.label("kind", serde_json::to_value(w.kind)?.as_str().unwrap_or_default());
    out.line(format!("witness at point {} for normal {:?}", w.x_index, w.normal));
    out.line(format!("image {:?} leaves the body by {:.6e}", w.image, w.image_margin));
    let mut table = String::from("node");
    for p in 0..kernel.m() {
        table += &format!(",u{}", p + 1);
    }
    table.push('\n');
    for (i, v) in w.values.iter().enumerate() {
        let row: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        table += &format!("{i},{}\n", row.join(","));
    }
    out.csv("witness.csv", opts.seed, &table);
    out.json("witness.json", opts.seed, &w)?;
    Ok(out)
}

fn box_grid(bundle: &Bundle, n: usize, opts: &Options) -> Result<BoxGrid> {
    let per_axis = opts.grid.unwrap_or(DEFAULT_BOX_GRID);
    let (lo, hi) = match &bundle.box_domain {
        Some(b) => (b.lo.clone(), b.hi.clone()),
        None => (vec![0.0; n], vec![1.0; n]),
    };
    Ok(BoxGrid::new(lo, hi, vec![per_axis; n])?)
}

fn box_solution(bundle: &Bundle, opts: &Options, out: &mut Outcome) -> Result<GridField> {
    let coeffs = coefficients(bundle)?;
    let (n, m) = (coeffs.n(), coeffs.m());
    let grid = box_grid(bundle, n, opts)?;
    let list = bundle.boundary.as_ref().ok_or_else(|| anyhow!("bundle has no 'boundary'"))?;
    let exprs = component_exprs(list, m, n, "boundary")?;
    let boundary = GridField::from_fn(&grid, m, |x| exprs.iter().map(|e| e.eval(x, &[])).collect())?;
    let (u, report) = if coeffs.is_quasilinear() {
        solve_quasilinear(&coeffs, &grid, &boundary, PicardConfig::default())?
    } else {
        DirichletSolver::new(&coeffs, &grid, SolverConfig::default())?.solve(&boundary)?
    };
    out.metric("linear_residual", report.linear_residual);
    out.metric("nodes", grid.node_count() as f64);
    if let Some(k) = report.picard_iterations {
        out.metric("picard_iterations", k as f64);
    }
    out.label("solver", serde_json::to_value(report.solver)?.as_str().unwrap_or_default());
    out.line(format!(
        "grid {:?} on [{:?}, {:?}], solver {:?}, relative residual {:.3e}",
        grid.nodes_per_axis(),
        grid.lo(),
        grid.hi(),
        report.solver,
        report.linear_residual
    ));
    out.csv("solution.csv", opts.seed, &u.to_csv());
    if n >= 2 {
        let mid = grid.nodes_per_axis()[1] / 2;
        out.csv("slice.csv", opts.seed, &u.slice_csv(1, mid));
    }
    Ok(u)
}

pub fn solve_box(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let mut out = Outcome { passed: true, ..Outcome::default() };
    box_solution(bundle, opts, &mut out)?;
    Ok(out)
}

fn halfspace_plan(bundle: &Bundle, opts: &Options) -> Result<(HalfSpacePlan, PeriodicData)> {
    let coeffs = coefficients(bundle)?;
    let spec = bundle.halfspace.as_ref().ok_or_else(|| anyhow!("bundle has no 'halfspace'"))?;
    let samples = opts.grid.unwrap_or(spec.samples);
    let heights = opts.heights.clone().unwrap_or_else(|| spec.heights.clone());
    let plan = HalfSpacePlan::new(&coeffs, samples, spec.cell, &heights)?;
    let list = bundle.data.as_ref().ok_or_else(|| anyhow!("bundle has no 'data'"))?;
    let d = coeffs.n() - 1;
    let exprs = component_exprs(list, coeffs.m(), d, "data")?;
    let data = PeriodicData::from_fn(d, samples, spec.cell, coeffs.m(), |y| {
        exprs.iter().map(|e| e.eval(y, &[])).collect()
    })?;
    Ok((plan, data))
}

fn halfspace_solution(bundle: &Bundle, opts: &Options, out: &mut Outcome) -> Result<(HalfSpacePlan, PeriodicData)> {
    let (plan, data) = halfspace_plan(bundle, opts)?;
    let sol = plan.solve(&data)?;
    out.metric("delta", plan.delta());
    out.metric("max_imag", sol.max_imag);
    out.metric("samples", plan.samples() as f64);
    let min_re = plan.modes().iter().map(|m| m.min_abs_re).fold(f64::INFINITY, f64::min);
    out.metric("min_abs_re", min_re);
    out.line(format!(
        "N = {}, L = {}, heights {:?}, smallest |Re lambda| {:.3e}",
        plan.samples(),
        plan.cell(),
        plan.heights(),
        min_re
    ));
    for h in 0..plan.heights().len() {
        out.csv(&format!("halfspace_h{h}.csv"), opts.seed, &sol.to_csv(h));
    }
    let modes: Vec<Value> = plan
        .modes()
        .iter()
        .map(|m| json!({ "xi": m.xi, "stable": m.stable_exponents, "min_abs_re": m.min_abs_re }))
        .collect();
    out.json("modes.json", opts.seed, &modes)?;
    Ok((plan, data))
}

pub fn solve_halfspace(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let mut out = Outcome { passed: true, ..Outcome::default() };
    halfspace_solution(bundle, opts, &mut out)?;
    Ok(out)
}

fn search_config(opts: &Options, budget: usize) -> SearchConfig {
    SearchConfig {
        seed: opts.seed,
        budget,
        ..SearchConfig::default()
    }
}

/// Solves and audits against the body; with `--budget N` also runs a seeded
/// search over body-valued data.
pub fn audit(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let body = body(bundle)?;
    let mut out = Outcome { passed: true, ..Outcome::default() };
    out.label("body", body.kind());
    if bundle.halfspace.is_some() {
        let (plan, data) = halfspace_solution(bundle, opts, &mut out)?;
        let record = audit_halfspace_invariance(&plan, &body, &[data])?;
        out.passed = record.passed;
        out.metric("max_margin", record.max_margin);
        out.metric("audit_tol", record.tol);
        out.line(format!(
            "audit: max margin {:.6e} (tolerance {:.1e}) at height {} point {:?}",
            record.max_margin, record.tol, record.worst_height, record.worst_point
        ));
        out.json("audit.json", opts.seed, &record)?;
        if let Some(budget) = opts.budget.filter(|&b| b > 0) {
            let found = search_halfspace_counterexample(&plan, &body, search_config(opts, budget))?;
            out.passed &= found.best_margin <= record.tol;
            out.metric("search_margin", found.best_margin);
            out.metric("search_solves", found.solves as f64);
            out.line(format!(
                "search: best margin {:.6e} after {} solves at height {} point {:?}",
                found.best_margin, found.solves, found.height, found.point
            ));
            let mut table = (1..=found.data.tangential_dim).map(|i| format!("y{i}")).collect::<Vec<_>>();
            table.extend((1..=found.data.m).map(|p| format!("u{p}")));
            let mut csv = table.join(",") + "\n";
            for node in 0..found.data.node_count() {
                let row: Vec<String> = found
                    .data
                    .coords(node)
                    .iter()
                    .chain(found.data.at(node))
                    .map(|v| format!("{v:e}"))
                    .collect();
                csv += &(row.join(",") + "\n");
            }
            out.csv("counterexample_data.csv", opts.seed, &csv);
        }
        return Ok(out);
    }
    let u = box_solution(bundle, opts, &mut out)?;
    let record = audit_invariance(&u, &body, bundle.audit_constant)?;
    out.passed = record.passed;
    out.metric("max_margin", record.max_margin);
    out.metric("audit_tol", record.audit_tol);
    out.metric("max_principle_margin", record.max_principle_margin);
    out.line(format!(
        "audit: max margin {:.6e} (tolerance {:.3e}) at node {} point {:?}",
        record.max_margin, record.audit_tol, record.worst_node, record.worst_point
    ));
    out.json("audit.json", opts.seed, &record)?;
    if let Some(budget) = opts.budget.filter(|&b| b > 0) {
        let coeffs = coefficients(bundle)?;
        let grid = u.grid().clone();
        let solver = DirichletSolver::new(&coeffs, &grid, SolverConfig::default())?;
        let found = search_counterexample(&solver, &body, search_config(opts, budget))?;
        out.passed &= found.audit.passed;
        out.metric("search_margin", found.best_margin);
        out.metric("search_solves", found.solves as f64);
        out.line(format!(
            "search: best margin {:.6e} after {} solves at node {} point {:?}",
            found.best_margin, found.solves, found.audit.worst_node, found.audit.worst_point
        ));
        out.csv("counterexample_boundary.csv", opts.seed, &found.boundary.to_csv());
        out.csv("counterexample_solution.csv", opts.seed, &found.solution.to_csv());
    }
    Ok(out)
}

pub fn normalization_check(bundle: &Bundle, opts: &Options) -> Result<Outcome> {
    let coeffs = coefficients(bundle)?;
    let resolution = opts.grid.unwrap_or(DEFAULT_NORMALIZATION_RESOLUTION);
    let tol = opts.tol.unwrap_or(NORMALIZATION_TOL);
    let defect = kernel_normalization_check(&coeffs, resolution)?;
    let mut out = Outcome { passed: defect <= tol, ..Outcome::default() };
    out.metric("defect", defect);
    out.metric("tol", tol);
    out.metric("resolution", resolution as f64);
    out.line(format!("normalization defect {defect:.3e} (tolerance {tol:.1e}) at N = {resolution}"));
    Ok(out)
}
