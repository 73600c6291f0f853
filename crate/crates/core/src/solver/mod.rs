//! Constrained minimization of the discrete singular obstacle energy.
//!
//! A solve starts from the convex `δ = 0` obstacle problem, raises `δ` along a
//! schedule and, at every `δ`, lowers the regularization `ε` of the singular
//! term along its own schedule. Each stage runs a two-metric projected Newton
//! method: nodes sitting on the obstacle with a pushing gradient move along a
//! diagonally scaled gradient, the others along a Newton (or majorizing)
//! direction, and the step is chosen by Armijo backtracking along the
//! projection arc `max(φ, v + t·d)`.
//!
//! Every contact configuration is a local minimizer of the discrete problem,
//! so continuation alone can stop with a contact set that is too small or too
//! large. A final polish therefore searches over contact sets by attaching or
//! detaching free-boundary nodes, re-solving each candidate with an
//! active-set Newton method and keeping strict energy decreases only.

mod band;
mod objective;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyDensity;
use crate::error::{domain, usage, Error, Result};
use crate::grid::{Grid, GridField};
use crate::regularity::theoretical_exponents;

use objective::{Objective, VarMap};

/// Data of one obstacle problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: Arc<Grid>,
    pub density: EnergyDensity,
    pub p: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Hölder exponent of the obstacle gradient; only used for predictions.
    pub beta: f64,
    pub obstacle: GridField,
    /// Dirichlet data; only boundary entries are read.
    pub boundary: GridField,
}

impl ProblemSpec {
    /// Builds a spec with the p-power density.
    pub fn new(
        grid: Arc<Grid>,
        p: f64,
        gamma: f64,
        beta: f64,
        delta: f64,
        obstacle: GridField,
        boundary: GridField,
    ) -> Result<Self> {
        let density = EnergyDensity::p_power(p, grid.dim())?;
        let spec = Self { grid, density, p, gamma, delta, beta, obstacle, boundary };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_density(mut self, density: EnergyDensity) -> Result<Self> {
        self.density = density;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let spec = Self { delta, ..self.clone() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(domain(format!("gamma = {} must lie in (0,1)", self.gamma)));
        }
        if !(self.p >= 2.0) || !self.p.is_finite() {
            return Err(domain(format!("p = {} must satisfy p >= 2", self.p)));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(domain(format!("delta = {} must lie in [0,1]", self.delta)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(domain(format!("beta = {} must lie in (0,1]", self.beta)));
        }
        self.density.validate()?;
        if self.density.dim != self.grid.dim() {
            return Err(usage("density and grid dimensions differ"));
        }
        for f in [&self.obstacle, &self.boundary] {
            if **f.grid() != *self.grid {
                return Err(usage("obstacle and boundary data must live on the problem grid"));
            }
        }
        for k in self.grid.boundary_nodes() {
            if self.boundary.value(k) < self.obstacle.value(k) {
                return Err(Error::Infeasible(format!(
                    "boundary value {} lies below the obstacle {} at {:?}",
                    self.boundary.value(k),
                    self.obstacle.value(k),
                    self.grid.coords(k).as_slice()
                )));
            }
        }
        Ok(())
    }

    /// Detachment threshold `h^{1+τ}` with the predicted exponent `τ`.
    pub fn default_tol_detach(&self) -> Result<f64> {
        let tau = theoretical_exponents(self.p, self.gamma, self.beta, None)?.tau;
        Ok(self.grid.spacing().powf(1.0 + tau))
    }

    fn objective(&self, delta: f64, eps: f64, metric_floor: f64) -> Objective<'_> {
        let floor = if self.density.p() > 2.0 {
            (self.density.p() - 1.0) * metric_floor.powf(self.density.p() - 2.0)
        } else {
            0.0
        };
        Objective {
            grid: &self.grid,
            density: &self.density,
            obstacle: self.obstacle.values(),
            delta,
            gamma: self.gamma,
            eps,
            metric_floor: floor,
        }
    }
}

/// Parameters of the continuation and of the descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Strictly decreasing regularizations of the singular term.
    pub eps_schedule: Vec<f64>,
    /// Nondecreasing `δ` values from 0 to the target; geometric
    /// `{0, δ/8, δ/4, δ/2, δ}` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_schedule: Option<Vec<f64>>,
    pub armijo_sigma: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// `tol_kkt = tol_kkt_rel · (1 + |E|)`.
    pub tol_kkt_rel: f64,
    pub tol_contact: f64,
    /// Iteration cap per stage.
    pub max_iterations: usize,
    /// Run the contact-set search after continuation.
    pub polish: bool,
    pub polish_max_rounds: usize,
    /// Try single-node moves when the free boundary has at most this many nodes.
    pub single_move_limit: usize,
    /// Gradient magnitude at which the p-power Hessian is floored in the
    /// descent metric (ignored for p = 2).
    pub metric_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_schedule: (2..=8).map(|k| 10f64.powi(-k)).collect(),
            delta_schedule: None,
            armijo_sigma: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            tol_kkt_rel: 1e-8,
            tol_contact: 1e-12,
            max_iterations: 20_000,
            polish: true,
            polish_max_rounds: 4096,
            single_move_limit: 16,
            metric_floor: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_schedule.is_empty() {
            return Err(usage("the regularization schedule must not be empty"));
        }
        if self.eps_schedule.iter().any(|e| !(*e > 0.0)) || self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(usage("the regularization schedule must be positive and strictly decreasing"));
        }
        if let Some(d) = &self.delta_schedule {
            if d.is_empty() || d[0] != 0.0 || d.windows(2).any(|w| w[1] < w[0]) {
                return Err(usage("the delta schedule must start at 0 and be nondecreasing"));
            }
        }
        if !(self.armijo_sigma > 0.0 && self.armijo_sigma < 0.5) {
            return Err(usage("armijo_sigma must lie in (0, 1/2)"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(usage("backtrack_factor must lie in (0, 1)"));
        }
        if !(self.tol_kkt_rel > 0.0 && self.tol_contact > 0.0 && self.metric_floor > 0.0) {
            return Err(usage("tolerances must be positive"));
        }
        if self.max_iterations == 0 || self.max_backtracks == 0 {
            return Err(usage("iteration caps must be positive"));
        }
        Ok(())
    }

    /// The `δ` schedule for a target value.
    pub fn delta_schedule_for(&self, target: f64) -> Result<Vec<f64>> {
        match &self.delta_schedule {
            Some(d) => {
                if (d[d.len() - 1] - target).abs() > 1e-15 {
                    return Err(usage(format!("delta schedule ends at {} but the target is {target}", d[d.len() - 1])));
                }
                Ok(d.clone())
            }
            None if target == 0.0 => Ok(vec![0.0]),
            None => Ok(vec![0.0, target / 8.0, target / 4.0, target / 2.0, target]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Continuation,
    /// Contact-set search; one energy entry per accepted move.
    Polish,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub kind: StageKind,
    pub delta: f64,
    pub eps_reg: f64,
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinfCheck {
    pub max_u: f64,
    pub min_u: f64,
    /// `max(max|g|, max|φ|)`.
    pub bound: f64,
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: GridField,
    pub stages: Vec<StageTrace>,
    /// Energy at the last regularization.
    pub final_energy: f64,
    /// Energy with the exact singular term.
    pub exact_energy: f64,
    pub contact: Vec<bool>,
    pub kkt_residual: Vec<f64>,
    pub kkt_max: f64,
    pub tol_kkt: f64,
    pub iterations: usize,
    pub converged: bool,
    pub linf: LinfCheck,
    pub polish_moves: usize,
}

/// `Σ_cells H(Dv)hⁿ + δ Σ_nodes [((v−φ)+ε)^γ − ε^γ] hⁿ`.
pub fn discrete_energy(spec: &ProblemSpec, v: &GridField, eps_reg: f64) -> Result<f64> {
    check_admissible(spec, v, SolverConfig::default().tol_contact)?;
    if !(eps_reg >= 0.0) {
        return Err(usage("eps_reg must be nonnegative"));
    }
    Ok(spec.objective(spec.delta, eps_reg, 1.0).energy(v.values()))
}

fn check_admissible(spec: &ProblemSpec, v: &GridField, tol_contact: f64) -> Result<()> {
    if **v.grid() != *spec.grid {
        return Err(usage("field does not live on the problem grid"));
    }
    for k in spec.grid.boundary_nodes() {
        let g = spec.boundary.value(k);
        if (v.value(k) - g).abs() > 1e-12 * (1.0 + g.abs()) {
            return Err(usage(format!("field differs from the boundary data at node {k}")));
        }
    }
    for k in 0..v.values().len() {
        if v.value(k) < spec.obstacle.value(k) - tol_contact {
            return Err(Error::ConstraintViolation(format!(
                "v = {} lies below the obstacle {} at {:?}",
                v.value(k),
                spec.obstacle.value(k),
                spec.grid.coords(k).as_slice()
            )));
        }
    }
    Ok(())
}

struct StageOutcome {
    energies: Vec<f64>,
    iterations: usize,
    converged: bool,
    kkt: f64,
}

/// KKT residual per node: `|min(g,0)|` on contact, `|g|` on free interior nodes.
fn kkt_field(v: &[f64], grad: &[f64], obstacle: &[f64], interior: &[bool], tol_contact: f64) -> Vec<f64> {
    (0..v.len())
        .map(|k| {
            if !interior[k] {
                0.0
            } else if v[k] - obstacle[k] <= tol_contact {
                (-grad[k]).max(0.0)
            } else {
                grad[k].abs()
            }
        })
        .collect()
}

fn kkt_max(v: &[f64], grad: &[f64], obstacle: &[f64], interior: &[bool], tol_contact: f64) -> f64 {
    kkt_field(v, grad, obstacle, interior, tol_contact).into_iter().fold(0.0, f64::max)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Metric {
    Newton,
    Majorizer,
    Diagonal,
}

/// Binding nodes are moved at most this far from the obstacle.
const BINDING_THRESHOLD: f64 = 1e-3;

/// Energy changes below this are rounding; full steps within it are accepted
/// so Newton can reduce the gradient past the resolution of the energy.
fn rounding_noise(e: f64) -> f64 {
    1e-13 * (1.0 + e.abs())
}

/// One continuation stage of two-metric projected Newton. The stationarity
/// tolerance follows the current energy.
fn projected_newton(obj: &Objective, v: &mut [f64], interior: &[bool], cfg: &SolverConfig) -> StageOutcome {
    let n = v.len();
    let phi = obj.obstacle;
    let mut grad = vec![0.0; n];
    let mut e = obj.energy_gradient(v, &mut grad);
    let mut energies = vec![e];
    let mut trial = v.to_vec();
    for it in 0..cfg.max_iterations {
        let kkt = kkt_max(v, &grad, phi, interior, cfg.tol_contact);
        if kkt <= cfg.tol_kkt_rel * (1.0 + e.abs()) {
            return StageOutcome { energies, iterations: it, converged: true, kkt };
        }
        let diag = obj.principal_diagonal(v);
        let mut w2 = 0.0;
        for k in 0..n {
            if interior[k] {
                let step = (v[k] - grad[k] / diag[k]).max(phi[k]) - v[k];
                w2 += step * step;
            }
        }
        let threshold = BINDING_THRESHOLD.min(w2.sqrt());
        let binding: Vec<bool> =
            (0..n).map(|k| interior[k] && v[k] - phi[k] <= threshold && grad[k] > 0.0).collect();
        let vars = VarMap::new(obj.grid, |k| interior[k] && !binding[k]);

        let mut accepted = None;
        for metric in [Metric::Newton, Metric::Majorizer, Metric::Diagonal] {
            let Some(d) = direction(obj, v, &grad, &diag, &vars, &binding, metric) else {
                continue;
            };
            if let Some(et) = arc_search(obj, v, &grad, &d, e, interior, cfg, &mut trial) {
                accepted = Some(et);
                break;
            }
        }
        match accepted {
            Some(et) => {
                v.copy_from_slice(&trial);
                e = obj.energy_gradient(v, &mut grad);
                debug_assert!(e <= et + 1e-12 * et.abs().max(1.0));
                energies.push(e);
            }
            None => {
                return StageOutcome { energies, iterations: it, converged: false, kkt };
            }
        }
    }
    let kkt = kkt_max(v, &grad, phi, interior, cfg.tol_contact);
    StageOutcome { energies, iterations: cfg.max_iterations, converged: kkt <= cfg.tol_kkt_rel * (1.0 + e.abs()), kkt }
}

/// Descent direction: metric step on `vars`, scaled gradient on binding nodes.
fn direction(
    obj: &Objective,
    v: &[f64],
    grad: &[f64],
    diag: &[f64],
    vars: &VarMap,
    binding: &[bool],
    metric: Metric,
) -> Option<Vec<f64>> {
    let mut d = vec![0.0; v.len()];
    for k in 0..v.len() {
        if binding[k] {
            d[k] = -grad[k] / diag[k];
        }
    }
    if vars.len() == 0 {
        return Some(d);
    }
    match metric {
        Metric::Diagonal => {
            for &k in &vars.nodes {
                d[k] = -grad[k] / diag[k];
            }
        }
        _ => {
            let hess = obj.hessian(v, vars, metric == Metric::Newton);
            let ldl = hess.factor()?;
            let rhs: Vec<f64> = vars.nodes.iter().map(|&k| -grad[k]).collect();
            for (x, &k) in ldl.solve(&rhs).into_iter().zip(&vars.nodes) {
                d[k] = x;
            }
        }
    }
    Some(d)
}

/// Armijo backtracking along `t ↦ max(φ, v + t d)`; writes the accepted
/// point into `trial` and returns its energy.
#[allow(clippy::too_many_arguments)]
fn arc_search(
    obj: &Objective,
    v: &[f64],
    grad: &[f64],
    d: &[f64],
    e: f64,
    interior: &[bool],
    cfg: &SolverConfig,
    trial: &mut [f64],
) -> Option<f64> {
    let phi = obj.obstacle;
    let mut t = 1.0;
    for _ in 0..cfg.max_backtracks {
        let mut predicted = 0.0;
        for k in 0..v.len() {
            trial[k] = if interior[k] { (v[k] + t * d[k]).max(phi[k]) } else { v[k] };
            predicted += grad[k] * (v[k] - trial[k]);
        }
        if predicted > 0.0 {
            let et = obj.energy(trial);
            let slack = if t == 1.0 { rounding_noise(e) } else { 0.0 };
            if et <= e - cfg.armijo_sigma * predicted + slack {
                return Some(et);
            }
        }
        t *= cfg.backtrack_factor;
    }
    None
}

/// Newton iteration on the free nodes with the contact set frozen; nodes
/// that reach the obstacle join the contact set. Fails when the iteration
/// stalls before reaching `tol`.
fn active_set_newton(obj: &Objective, v: &mut [f64], interior: &[bool], cfg: &SolverConfig, tol: f64) -> Option<f64> {
    let n = v.len();
    let phi = obj.obstacle;
    let mut contact: Vec<bool> = (0..n).map(|k| interior[k] && v[k] - phi[k] <= cfg.tol_contact).collect();
    for k in 0..n {
        if contact[k] {
            v[k] = phi[k];
        }
    }
    let mut grad = vec![0.0; n];
    let mut e = obj.energy_gradient(v, &mut grad);
    let mut trial = v.to_vec();
    for _ in 0..200 {
        let free = |k: usize| interior[k] && !contact[k];
        let gmax = (0..n).filter(|&k| free(k)).fold(0.0_f64, |m, k| m.max(grad[k].abs()));
        if gmax <= tol {
            return Some(e);
        }
        let vars = VarMap::new(obj.grid, free);
        let hess = obj.hessian(v, &vars, true);
        let ldl = match hess.factor() {
            Some(l) => l,
            None => obj.hessian(v, &vars, false).factor()?,
        };
        let rhs: Vec<f64> = vars.nodes.iter().map(|&k| -grad[k]).collect();
        let step = ldl.solve(&rhs);
        let mut t_max = f64::INFINITY;
        for (dk, &k) in step.iter().zip(&vars.nodes) {
            if *dk < 0.0 {
                t_max = t_max.min((v[k] - phi[k]) / -dk);
            }
        }
        let slope: f64 = step.iter().zip(&vars.nodes).map(|(dk, &k)| dk * grad[k]).sum();
        if !(slope < 0.0) {
            return None;
        }
        let mut t = t_max.min(1.0);
        let mut accepted = false;
        for _ in 0..cfg.max_backtracks {
            trial.copy_from_slice(v);
            for (dk, &k) in step.iter().zip(&vars.nodes) {
                trial[k] = (v[k] + t * dk).max(phi[k]);
            }
            let et = obj.energy(&trial);
            let slack = if t == t_max.min(1.0) { rounding_noise(e) } else { 0.0 };
            if et <= e + cfg.armijo_sigma * t * slope + slack {
                accepted = true;
                break;
            }
            t *= cfg.backtrack_factor;
        }
        if !accepted {
            return None;
        }
        v.copy_from_slice(&trial);
        for &k in &vars.nodes {
            if v[k] - phi[k] <= cfg.tol_contact {
                v[k] = phi[k];
                contact[k] = true;
            }
        }
        e = obj.energy_gradient(v, &mut grad);
    }
    None
}

/// Contact-set search at the final stage. Returns the accepted energies.
fn polish(obj: &Objective, v: &mut [f64], interior: &[bool], cfg: &SolverConfig, tol: f64) -> Vec<f64> {
    let n = v.len();
    let phi = obj.obstacle;
    let grid = obj.grid;
    let mut e = obj.energy(v);
    let mut energies = vec![e];
    for _ in 0..cfg.polish_max_rounds {
        let in_contact = |w: &[f64], k: usize| w[k] - phi[k] <= cfg.tol_contact;
        let mut attach = Vec::new();
        let mut detach = Vec::new();
        for k in (0..n).filter(|&k| interior[k]) {
            let contact = in_contact(v, k);
            if grid.neighbors(k).any(|m| in_contact(v, m) != contact) {
                if contact {
                    detach.push(k);
                } else {
                    attach.push(k);
                }
            }
        }
        if attach.is_empty() && detach.is_empty() {
            // No contact at all: offer the lowest free node.
            if let Some(k) = (0..n)
                .filter(|&k| interior[k] && !in_contact(v, k))
                .min_by(|a, b| (v[*a] - phi[*a]).total_cmp(&(v[*b] - phi[*b])))
            {
                attach.push(k);
            }
        }
        let mut moves: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        if !attach.is_empty() {
            moves.push((attach.clone(), vec![]));
        }
        if !detach.is_empty() {
            moves.push((vec![], detach.clone()));
        }
        if attach.len() + detach.len() <= cfg.single_move_limit && attach.len() + detach.len() > 1 {
            moves.extend(attach.iter().map(|&k| (vec![k], vec![])));
            moves.extend(detach.iter().map(|&k| (vec![], vec![k])));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (up, down) in moves {
            let mut w = v.to_vec();
            for &k in &up {
                w[k] = phi[k];
            }
            for &k in &down {
                let lifts: Vec<f64> =
                    grid.neighbors(k).filter(|&m| !in_contact(v, m)).map(|m| v[m] - phi[m]).collect();
                let mean = lifts.iter().sum::<f64>() / lifts.len().max(1) as f64;
                w[k] = phi[k] + 0.4 * mean.max(cfg.tol_contact * 10.0);
            }
            if let Some(ew) = active_set_newton(obj, &mut w, interior, cfg, tol) {
                if best.as_ref().map_or(true, |(eb, _)| ew < *eb) {
                    best = Some((ew, w));
                }
            }
        }
        match best {
            Some((eb, w)) if eb < e - 1e-14 * e.abs().max(1.0) => {
                v.copy_from_slice(&w);
                e = eb;
                energies.push(e);
            }
            _ => break,
        }
    }
    energies
}

fn initial_guess(spec: &ProblemSpec) -> Vec<f64> {
    let grid = &spec.grid;
    let bnodes: Vec<usize> = grid.boundary_nodes().collect();
    let mean = bnodes.iter().map(|&k| spec.boundary.value(k)).sum::<f64>() / bnodes.len().max(1) as f64;
    (0..grid.node_count())
        .map(|k| {
            if grid.is_boundary(k) {
                spec.boundary.value(k)
            } else {
                mean.max(spec.obstacle.value(k))
            }
        })
        .collect()
}

/// Minimizes the discrete energy of `spec` by continuation.
pub fn solve(spec: &ProblemSpec, config: &SolverConfig) -> Result<SolveResult> {
    spec.validate()?;
    config.validate()?;
    solve_from(spec, config, initial_guess(spec))
}

/// Same as [`solve`] from a caller-supplied admissible start.
pub fn solve_from(spec: &ProblemSpec, config: &SolverConfig, start: Vec<f64>) -> Result<SolveResult> {
    spec.validate()?;
    config.validate()?;
    let grid = &spec.grid;
    let n = grid.node_count();
    if start.len() != n {
        return Err(usage("initial guess has the wrong length"));
    }
    let phi = spec.obstacle.values();
    let interior: Vec<bool> = (0..n).map(|k| !grid.is_boundary(k)).collect();
    let mut v: Vec<f64> = (0..n)
        .map(|k| if interior[k] { start[k].max(phi[k]) } else { spec.boundary.value(k) })
        .collect();
    let deltas = config.delta_schedule_for(spec.delta)?;
    let eps_last = *config.eps_schedule.last().expect("validated nonempty");
    let mut stages = Vec::new();
    let tol_for = |e: f64| config.tol_kkt_rel * (1.0 + e.abs());

    for &delta in &deltas {
        let eps_list: Vec<f64> = if delta == 0.0 { vec![eps_last] } else { config.eps_schedule.clone() };
        for eps in eps_list {
            let obj = spec.objective(delta, eps, config.metric_floor);
            let out = projected_newton(&obj, &mut v, &interior, config);
            log::debug!("stage delta={delta} eps={eps}: {} iterations, kkt {:.3e}", out.iterations, out.kkt);
            stages.push(StageTrace {
                kind: StageKind::Continuation,
                delta,
                eps_reg: eps,
                energies: out.energies,
                iterations: out.iterations,
                converged: out.converged,
                kkt: out.kkt,
            });
        }
    }

    let obj = spec.objective(spec.delta, eps_last, config.metric_floor);
    let mut polish_moves = 0;
    if config.polish && spec.delta > 0.0 {
        // Candidates are compared without regularization: the shift ε^γ per
        // detached node is large enough to bias the contact set for small γ.
        let exact = spec.objective(spec.delta, 0.0, config.metric_floor);
        let tol = tol_for(exact.energy(&v));
        let energies = polish(&exact, &mut v, &interior, config, tol);
        polish_moves = energies.len() - 1;
        stages.push(StageTrace {
            kind: StageKind::Polish,
            delta: spec.delta,
            eps_reg: eps_last,
            iterations: polish_moves,
            converged: true,
            kkt: f64::NAN,
            energies,
        });
        let out = projected_newton(&obj, &mut v, &interior, config);
        stages.push(StageTrace {
            kind: StageKind::Final,
            delta: spec.delta,
            eps_reg: eps_last,
            energies: out.energies,
            iterations: out.iterations,
            converged: out.converged,
            kkt: out.kkt,
        });
    }

    let mut grad = vec![0.0; n];
    let final_energy = obj.energy_gradient(&v, &mut grad);
    let tol_kkt = tol_for(final_energy);
    let kkt_residual = kkt_field(&v, &grad, phi, &interior, config.tol_contact);
    let kkt_max = kkt_residual.iter().copied().fold(0.0, f64::max);
    let exact_energy = spec.objective(spec.delta, 0.0, 1.0).energy(&v);
    let contact = (0..n).map(|k| v[k] - phi[k] <= config.tol_contact).collect();
    let iterations = stages.iter().filter(|s| s.kind != StageKind::Polish).map(|s| s.iterations).sum();

    let bound = spec.boundary.values().iter().enumerate()
        .filter(|(k, _)| grid.is_boundary(*k))
        .fold(0.0_f64, |m, (_, g)| m.max(g.abs()))
        .max(spec.obstacle.max_abs());
    let max_u = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_u = v.iter().copied().fold(f64::INFINITY, f64::min);
    let linf = LinfCheck {
        max_u,
        min_u,
        bound,
        tolerance: tol_kkt,
        ok: max_u <= bound + tol_kkt && min_u >= -spec.obstacle.max_abs() - tol_kkt,
    };
    let u = GridField::new(grid.clone(), v)?;
    Ok(SolveResult {
        u,
        stages,
        final_energy,
        exact_energy,
        contact,
        kkt_residual,
        kkt_max,
        tol_kkt,
        iterations,
        converged: kkt_max <= tol_kkt,
        linf,
        polish_moves,
    })
}

/// Euler–Lagrange residual on the strictly detached set.
#[derive(Debug, Clone, PartialEq)]
pub struct ElResidual {
    /// Residual at interior nodes with `u − φ > tol_detach`.
    pub values: Vec<Option<f64>>,
    /// Max over nodes at distance ≥ `buffer` from contact and boundary;
    /// `None` when no node qualifies.
    pub summary: Option<f64>,
    pub nodes_used: usize,
    pub tol_detach: f64,
    pub buffer: f64,
}

impl ElResidual {
    pub fn is_vacuous(&self) -> bool {
        self.summary.is_none()
    }
}

/// [`el_residual_field`] on a converged solve with the default threshold
/// `h^{1+τ}` and a buffer of three cells.
pub fn el_residual(result: &SolveResult, spec: &ProblemSpec) -> Result<ElResidual> {
    if !result.converged {
        return Err(usage("el_residual needs a converged solve"));
    }
    el_residual_field(spec, &result.u, spec.default_tol_detach()?, 3.0 * spec.grid.spacing())
}

/// `div_h ∇H(Du) − δγ(u−φ)^{γ−1}` at detached nodes of any admissible field.
pub fn el_residual_field(spec: &ProblemSpec, u: &GridField, tol_detach: f64, buffer: f64) -> Result<ElResidual> {
    check_admissible(spec, u, SolverConfig::default().tol_contact)?;
    let grid = &spec.grid;
    let n = grid.node_count();
    let obj = spec.objective(spec.delta, 0.0, 1.0);
    let mut grad = vec![0.0; n];
    obj.principal_gradient(u.values(), &mut grad);
    let vol = grid.cell_volume();
    let phi = spec.obstacle.values();
    let gap: Vec<f64> = (0..n).map(|k| u.value(k) - phi[k]).collect();
    let values: Vec<Option<f64>> = (0..n)
        .map(|k| {
            (!grid.is_boundary(k) && gap[k] > tol_detach).then(|| {
                -grad[k] / vol - spec.delta * spec.gamma * gap[k].powf(spec.gamma - 1.0)
            })
        })
        .collect();
    let blockers: Vec<usize> =
        (0..n).filter(|&k| grid.is_boundary(k) || gap[k] <= tol_detach).collect();
    let mut summary: Option<f64> = None;
    let mut used = 0;
    for k in 0..n {
        let Some(r) = values[k] else { continue };
        let x = grid.coords(k);
        let far = blockers.iter().all(|&b| (grid.coords(b) - x).norm() >= buffer * (1.0 - 1e-12));
        if far {
            used += 1;
            summary = Some(summary.unwrap_or(0.0).max(r.abs()));
        }
    }
    Ok(ElResidual { values, summary, nodes_used: used, tol_detach, buffer })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub deltas: Vec<f64>,
    /// Exact discrete energies of the computed minimizers, in input order.
    pub energies: Vec<f64>,
    pub tolerance: f64,
    pub monotone: bool,
}

/// Solves every spec (concurrently) and checks that the minimal energies
/// are nondecreasing in `δ`.
pub fn min_energy_monotonicity_check(specs: &[ProblemSpec], config: &SolverConfig) -> Result<MonotonicityReport> {
    if specs.is_empty() {
        return Err(usage("monotonicity check needs at least one spec"));
    }
    let first = &specs[0];
    for s in specs {
        let same = *s.grid == *first.grid
            && s.p == first.p
            && s.gamma == first.gamma
            && s.density == first.density
            && s.obstacle.values() == first.obstacle.values()
            && s.boundary.values() == first.boundary.values();
        if !same {
            return Err(usage("monotonicity specs must agree except for delta"));
        }
    }
    let energies: Vec<f64> = specs
        .par_iter()
        .map(|s| solve(s, config).map(|r| r.exact_energy))
        .collect::<Result<_>>()?;
    let deltas: Vec<f64> = specs.iter().map(|s| s.delta).collect();
    let scale = energies.iter().fold(1.0_f64, |m, e| m.max(e.abs()));
    let tolerance = 1e-9 * scale;
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.sort_by(|a, b| deltas[*a].total_cmp(&deltas[*b]));
    let monotone = order.windows(2).all(|w| energies[w[1]] >= energies[w[0]] - tolerance);
    Ok(MonotonicityReport { deltas, energies, tolerance, monotone })
}
