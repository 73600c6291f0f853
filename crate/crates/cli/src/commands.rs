//! The four experiment commands. Each returns an [`Outcome`]; errors mean
//! the configuration or the inputs were unusable.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use singular_obstacle::energy::{
    check_structural_bounds, convexity_gap, derivative_check, halton_pairs, halton_points, log_spaced,
    ConvexityGap, DensityKind, DerivativeCheck, GrowthParams, StructuralReport,
};
use singular_obstacle::freeboundary::{classify_field, gradient_match, FbSide};
use singular_obstacle::regularity::{
    campanato_exponent, dyadic_decay_check, growth_exponent, nodal_gradient, radius_ladder, theoretical_exponents,
    CampanatoFit, DyadicReport, ExponentFit, ExponentPrediction,
};
use singular_obstacle::solver::{el_residual, LinfCheck, StageTrace};
use singular_obstacle::{solve, Domain, EnergyDensity, Error, GridField, Profile, ProblemSpec, Result, Vec2};

use crate::config::{AnalysisConfig, ExperimentConfig, ProblemConfig};

/// What a command concluded; `pass` selects exit code 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub message: String,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub problem: ProblemConfig,
    pub density: DensityKind,
    pub converged: bool,
    pub linf: LinfCheck,
    pub final_energy: f64,
    pub exact_energy: f64,
    pub kkt_max: f64,
    pub tol_kkt: f64,
    pub iterations: usize,
    pub polish_moves: usize,
    pub contact_nodes: usize,
    pub prediction: ExponentPrediction,
    /// Max-norm error against the closed form when the data come from the
    /// dead-core profile over a zero obstacle.
    pub benchmark_error: Option<f64>,
    /// Euler–Lagrange residual away from contact and boundary.
    pub el_residual: Option<f64>,
    pub stages: Vec<StageTrace>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointFit {
    pub node: usize,
    pub x: [f64; 2],
    pub side: FbSide,
    pub mismatch: f64,
    pub fit: ExponentFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignatedFit {
    pub x0: [f64; 2],
    pub plane_gradient: [f64; 2],
    pub fit: ExponentFit,
    pub campanato: Option<CampanatoFit>,
    pub dyadic: Option<DyadicReport>,
    pub slope: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentsReport {
    pub prediction: ExponentPrediction,
    pub predicted_slope: f64,
    pub tolerance: f64,
    pub tol_detach: f64,
    pub radii: Vec<f64>,
    pub gradient_match: Option<f64>,
    /// `None` when the free boundary is empty.
    pub designated: Option<DesignatedFit>,
    pub free_boundary: Vec<PointFit>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub gamma: f64,
    pub beta: f64,
    pub h: f64,
    pub tau_pred: Option<f64>,
    pub slope: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeSummary {
    pub points: usize,
    pub skipped_singular: usize,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
    pub worst: Option<DerivativeCheck>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyWorstPoints {
    #[serde(flatten)]
    pub structural: singular_obstacle::energy::StructuralWorstPoints,
    pub convexity: ConvexityGap,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub kind: DensityKind,
    pub params: GrowthParams,
    pub dim: usize,
    #[serde(rename = "Upsilon_hat")]
    pub upsilon_hat: f64,
    #[serde(rename = "Lambda_hat")]
    pub lambda_upper_hat: f64,
    pub lambda_hat: f64,
    pub min_gap: f64,
    pub worst_points: EnergyWorstPoints,
    pub structural_samples: usize,
    pub convexity_pairs: usize,
    pub derivatives: DerivativeSummary,
    pub pass: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    use std::io::Write;
    writeln!(w)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))
}

fn density_kind(spec: &ProblemSpec) -> DensityKind {
    spec.density.kind.clone()
}

fn prediction(problem: &ProblemConfig, spec: &ProblemSpec) -> Result<ExponentPrediction> {
    Ok(theoretical_exponents(problem.p, problem.gamma, problem.beta, problem.sigma)?.with_growth(&spec.density.growth))
}

/// Solves the configured problem and writes `solution.csv` and `result.json`.
pub fn cmd_solve(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let problem = config.require_problem()?;
    let spec = problem.spec(config.density.as_ref())?;
    prepare_dir(out)?;
    let result = solve(&spec, &config.solver)?;
    let benchmark_error = (problem.boundary.is_dead_core() && problem.obstacle == Profile::Zero).then(|| {
        let exact = problem.boundary.sample(&spec.grid, problem.p, problem.gamma)?;
        Ok::<f64, Error>(
            result.u.values().iter().zip(exact.values()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())),
        )
    });
    let benchmark_error = benchmark_error.transpose()?;
    let el = if result.converged { el_residual(&result, &spec)?.summary } else { None };
    let report = SolveReport {
        problem: problem.clone(),
        density: density_kind(&spec),
        converged: result.converged,
        linf: result.linf,
        final_energy: result.final_energy,
        exact_energy: result.exact_energy,
        kkt_max: result.kkt_max,
        tol_kkt: result.tol_kkt,
        iterations: result.iterations,
        polish_moves: result.polish_moves,
        contact_nodes: result.contact.iter().filter(|c| **c).count(),
        prediction: prediction(problem, &spec)?,
        benchmark_error,
        el_residual: el,
        stages: result.stages.clone(),
    };
    let solution = out.join("solution.csv");
    result.u.write_csv(create(&solution)?)?;
    let json = out.join("result.json");
    write_json(&json, &report)?;
    let pass = result.converged && result.linf.ok;
    let mut message = format!(
        "converged: {}, kkt {:.3e} (tol {:.3e}), L-infinity bound {}",
        result.converged,
        result.kkt_max,
        result.tol_kkt,
        if result.linf.ok { "holds" } else { "violated" }
    );
    if let Some(e) = benchmark_error {
        message.push_str(&format!(", max error vs closed form {e:.3e}"));
    }
    Ok(Outcome { pass, message, artifacts: vec![solution, json] })
}

/// Reads a `x1[,x2],value` CSV written by `solve` onto the grid of `spec`.
pub fn read_solution(spec: &ProblemSpec, path: &Path) -> Result<GridField> {
    let grid = &spec.grid;
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut values = vec![None; grid.node_count()];
    let expected = grid.dim() + 1;
    for record in reader.records() {
        let record = record?;
        if record.len() != expected {
            return Err(Error::Usage(format!("{}: expected {expected} columns", path.display())));
        }
        let nums: Vec<f64> = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        let x = if grid.dim() == 1 { Vec2::new(nums[0], 0.0) } else { Vec2::new(nums[0], nums[1]) };
        let k = grid
            .node_at(x)
            .ok_or_else(|| Error::Usage(format!("{}: point {:?} is not a grid node", path.display(), &nums[..grid.dim()])))?;
        values[k] = Some(nums[grid.dim()]);
    }
    let values: Option<Vec<f64>> = values.into_iter().collect();
    let values = values.ok_or_else(|| Error::Usage(format!("{}: some grid nodes are missing", path.display())))?;
    GridField::new(grid.clone(), values)
}

fn domain_center(domain: &Domain) -> Vec2 {
    match *domain {
        Domain::Interval { a, b } => Vec2::new(0.5 * (a + b), 0.0),
        Domain::Rectangle { x, y } => Vec2::new(0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1])),
        Domain::Disc { .. } => Vec2::zeros(),
    }
}

/// Growth fits at every free-boundary node and the full analysis at the
/// designated point.
pub fn analyze(
    spec: &ProblemSpec,
    problem: &ProblemConfig,
    u: &GridField,
    analysis: &AnalysisConfig,
    tol_contact: f64,
) -> Result<ExponentsReport> {
    let prediction = prediction(problem, spec)?;
    let predicted_slope = prediction.growth_slope();
    let h = spec.grid.spacing();
    let tol_detach = analysis.tol_detach.unwrap_or(h.powf(1.0 + prediction.tau));
    let radii = match &analysis.radii {
        Some(r) => r.clone(),
        None => radius_ladder(analysis.rho_max, analysis.levels, 4.0 * h),
    };
    let classification = classify_field(spec, u, tol_detach)?;
    let mut free_boundary = Vec::with_capacity(classification.free_boundary.len());
    for f in &classification.free_boundary {
        let x = Vec2::from(f.x);
        let fit = growth_exponent(u, x, nodal_gradient(&spec.obstacle, x), &radii)?;
        free_boundary.push(PointFit { node: f.node, x: f.x, side: f.side, mismatch: f.mismatch, fit });
    }
    // Nodes within h^{1+τ} of the obstacle may lie a cell or two past the
    // front; the designated point is taken from the exact contact set.
    let exact_contact = classify_field(spec, u, tol_contact)?;
    let designated_point = match analysis.x0 {
        Some(x0) => (!classification.free_boundary.is_empty()).then(|| Vec2::from(x0)),
        None => exact_contact
            .nearest(domain_center(spec.grid.domain()), Some(FbSide::Contact))
            .or_else(|| classification.nearest(domain_center(spec.grid.domain()), Some(FbSide::Contact)))
            .map(|f| Vec2::from(f.x)),
    };
    let designated = match designated_point {
        None => None,
        Some(x0) => {
            let gradient = nodal_gradient(&spec.obstacle, x0);
            let fit = growth_exponent(u, x0, gradient, &radii)?;
            let q = analysis.q.unwrap_or(prediction.q);
            let campanato = campanato_exponent(u, q, x0, &radii).ok();
            let u0 = u.interpolate(x0)?;
            let detachment = u.map_with_coords(|x, v| v - u0 - gradient.dot(&(x - x0)))?;
            let dyadic = dyadic_decay_check(&detachment, x0, prediction.tau, analysis.k_max, analysis.dyadic_base).ok();
            let pass = fit.usable && fit.slope.is_some_and(|s| (s - predicted_slope).abs() <= analysis.tolerance);
            Some(DesignatedFit {
                x0: [x0[0], x0[1]],
                plane_gradient: [gradient[0], gradient[1]],
                slope: fit.slope,
                fit,
                campanato,
                dyadic,
                pass,
            })
        }
    };
    let pass = designated.as_ref().is_some_and(|d| d.pass);
    Ok(ExponentsReport {
        prediction,
        predicted_slope,
        tolerance: analysis.tolerance,
        tol_detach,
        radii,
        gradient_match: gradient_match(&classification),
        designated,
        free_boundary,
        pass,
    })
}

/// Fits the growth exponent at the free boundary of a solution, either read
/// with `from` or computed inline.
pub fn cmd_exponents(config: &ExperimentConfig, out: &Path, from: Option<&Path>) -> Result<Outcome> {
    let problem = config.require_problem()?;
    let spec = problem.spec(config.density.as_ref())?;
    prepare_dir(out)?;
    let u = match from {
        Some(path) => read_solution(&spec, path)?,
        None => {
            let result = solve(&spec, &config.solver)?;
            if !result.converged {
                return Ok(Outcome {
                    pass: false,
                    message: format!("solver did not converge (kkt {:.3e}, tol {:.3e})", result.kkt_max, result.tol_kkt),
                    artifacts: vec![],
                });
            }
            result.u
        }
    };
    let report = analyze(&spec, problem, &u, &config.analysis, config.solver.tol_contact)?;
    let json = out.join("exponents.json");
    write_json(&json, &report)?;
    let mut artifacts = vec![json];
    let classification = classify_field(&spec, &u, report.tol_detach)?;
    let class_csv = out.join("classification.csv");
    classification.write_csv(create(&class_csv)?)?;
    artifacts.push(class_csv);
    let Some(d) = &report.designated else {
        return Ok(Outcome { pass: false, message: "vacuous: no free boundary found".into(), artifacts });
    };
    let fit_csv = out.join("fit.csv");
    d.fit.write_csv(create(&fit_csv)?)?;
    artifacts.push(fit_csv);
    let slope = d.slope.map_or("none".to_string(), |s| format!("{s:.4}"));
    let message = format!(
        "slope {slope} at {:?}, predicted {:.4}, tolerance {}",
        &d.x0[..spec.grid.dim()],
        report.predicted_slope,
        report.tolerance
    );
    Ok(Outcome { pass: report.pass, message, artifacts })
}

fn sweep_cells(config: &ExperimentConfig, problem: &ProblemConfig) -> Result<Vec<(f64, f64, f64, f64)>> {
    let sweep = config.sweep.as_ref().ok_or_else(|| Error::Usage("the config has no [sweep] block".into()))?;
    if sweep.p.is_empty() && sweep.gamma.is_empty() && sweep.beta.is_empty() && sweep.h.is_empty() && sweep.pairs.is_empty() {
        return Err(Error::Usage("the sweep grid is empty".into()));
    }
    let or_default = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let pg: Vec<(f64, f64)> = if sweep.pairs.is_empty() {
        let gammas = or_default(&sweep.gamma, problem.gamma);
        or_default(&sweep.p, problem.p)
            .into_iter()
            .flat_map(|p| gammas.iter().map(move |&g| (p, g)))
            .collect()
    } else {
        if !sweep.p.is_empty() || !sweep.gamma.is_empty() {
            return Err(Error::Usage("sweep.pairs excludes sweep.p and sweep.gamma".into()));
        }
        sweep.pairs.iter().map(|pg| (pg[0], pg[1])).collect()
    };
    let betas = or_default(&sweep.beta, problem.beta);
    let hs = or_default(&sweep.h, problem.h);
    let mut cells = Vec::new();
    for &(p, g) in &pg {
        for &b in &betas {
            for &h in &hs {
                cells.push((p, g, b, h));
            }
        }
    }
    Ok(cells)
}

fn run_cell(config: &ExperimentConfig, base: &ProblemConfig, cell: (f64, f64, f64, f64)) -> SweepRow {
    let (p, gamma, beta, h) = cell;
    let problem = ProblemConfig { p, gamma, beta, h, ..base.clone() };
    let mut row = SweepRow { p, gamma, beta, h, tau_pred: None, slope: None, pass: false, error: None };
    let outcome = (|| -> Result<ExponentsReport> {
        let density = config.density.as_ref().filter(|k| k.p() == p);
        if config.density.is_some() && density.is_none() {
            return Err(Error::Usage("the density block fixes p; sweep p must match it".into()));
        }
        let spec = problem.spec(density)?;
        let result = solve(&spec, &config.solver)?;
        if !result.converged {
            return Err(Error::Usage(format!("solver did not converge (kkt {:.3e})", result.kkt_max)));
        }
        analyze(&spec, &problem, &result.u, &config.analysis, config.solver.tol_contact)
    })();
    match outcome {
        Ok(report) => {
            row.tau_pred = Some(report.prediction.tau);
            row.slope = report.designated.as_ref().and_then(|d| d.slope);
            row.pass = report.pass;
            if report.designated.is_none() {
                row.error = Some("vacuous: no free boundary found".into());
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs the exponent analysis on every cell of the parameter grid.
pub fn cmd_sweep(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let problem = config.require_problem()?;
    let cells = sweep_cells(config, problem)?;
    prepare_dir(out)?;
    let rows: Vec<SweepRow> = cells.par_iter().map(|&c| run_cell(config, problem, c)).collect();
    let csv_path = out.join("sweep.csv");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    w.write_record(["p", "gamma", "beta", "h", "tau_pred", "slope", "pass"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.p.to_string(),
            r.gamma.to_string(),
            r.beta.to_string(),
            r.h.to_string(),
            opt(r.tau_pred),
            opt(r.slope),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    let json = out.join("sweep.json");
    write_json(&json, &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    Ok(Outcome {
        pass: failed == 0,
        message: format!("{} cells, {failed} failed", rows.len()),
        artifacts: vec![csv_path, json],
    })
}

/// Structural constants, convexity gap and derivative cross-checks of the
/// configured density.
pub fn energy_report(kind: &DensityKind, dim: usize, analysis: &AnalysisConfig) -> Result<EnergyReport> {
    let density = EnergyDensity::from_kind(kind, dim)?;
    let radii = log_spaced(analysis.energy_radius_min, analysis.energy_radius_max, analysis.energy_radii);
    let structural: StructuralReport = check_structural_bounds(&density, &radii, analysis.energy_directions)?;
    let pairs = halton_pairs(dim, analysis.convexity_pairs, analysis.pair_radius);
    let gap = convexity_gap(&density, &pairs)?;
    let mut summary = DerivativeSummary {
        points: 0,
        skipped_singular: 0,
        max_gradient_error: 0.0,
        max_hessian_error: 0.0,
        worst: None,
        tolerance: analysis.derivative_tolerance,
        pass: true,
    };
    for xi in halton_points(dim, analysis.derivative_points, analysis.pair_radius, 0) {
        let check = match derivative_check(&density, xi, analysis.derivative_step) {
            Some(c) if !density.jet(xi).singular => c,
            _ => {
                summary.skipped_singular += 1;
                continue;
            }
        };
        summary.points += 1;
        let err = check.gradient_error.max(check.hessian_error);
        if err > summary.max_gradient_error.max(summary.max_hessian_error) {
            summary.worst = Some(check);
        }
        summary.max_gradient_error = summary.max_gradient_error.max(check.gradient_error);
        summary.max_hessian_error = summary.max_hessian_error.max(check.hessian_error);
    }
    summary.pass = summary.max_gradient_error <= summary.tolerance && summary.max_hessian_error <= summary.tolerance;
    let pass = structural.ellipticity > 0.0 && gap.min_ratio > 0.0 && summary.pass;
    Ok(EnergyReport {
        kind: kind.clone(),
        params: density.growth,
        dim,
        upsilon_hat: structural.gradient_bound,
        lambda_upper_hat: structural.hessian_bound,
        lambda_hat: structural.ellipticity,
        min_gap: gap.min_ratio,
        worst_points: EnergyWorstPoints { structural: structural.worst_points, convexity: gap },
        structural_samples: structural.samples,
        convexity_pairs: pairs.len(),
        derivatives: summary,
        pass,
    })
}

pub fn cmd_check_energy(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let kind = config.density.as_ref().ok_or_else(|| Error::Usage("the config has no [density] block".into()))?;
    let dim = config.problem.as_ref().map_or(2, |p| p.domain.dim());
    prepare_dir(out)?;
    let report = energy_report(kind, dim, &config.analysis)?;
    let json = out.join("energy.json");
    write_json(&json, &report)?;
    let message = if report.pass {
        format!("convex: lambda_hat {:.4e}, min gap {:.4e}", report.lambda_hat, report.min_gap)
    } else {
        let w = &report.worst_points;
        format!(
            "non-convex regime: lambda_hat {:.4e} at {:?}, min gap {:.4e} at {:?}",
            report.lambda_hat, w.structural.ellipticity.xi, report.min_gap, w.convexity.worst_pair
        )
    };
    Ok(Outcome { pass: report.pass, message, artifacts: vec![json] })
}
