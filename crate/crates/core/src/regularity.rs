//! Predicted exponents, log-log exponent fits, the dyadic decay ladder,
//! blow-up rescaling and the exact rescaling identity of the energy.

use serde::Serialize;

use crate::energy::{DensityKind, GrowthParams, Vec2};
use crate::error::{domain, usage, Result};
use crate::grid::{make_grid, sup_on_ball, Domain, Grid, GridField};
use crate::solver::ProblemSpec;

/// Exponents predicted from the problem parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentPrediction {
    pub p: f64,
    pub gamma: f64,
    pub beta: f64,
    pub sigma: Option<f64>,
    /// Oscillation exponent (2 without the power growth term, p otherwise).
    pub q: f64,
    /// Sharp growth exponent `min(β, γ/(p−γ))`; growth is `ρ^{1+τ}`.
    pub tau: f64,
    /// `min(σ, γ/(p−γ), β/(p−1))`.
    pub alpha_bound: f64,
    /// Set when `σ` was not supplied, so the bound ignores it.
    pub alpha_is_upper_bound: bool,
    /// `min(1+β, 2/(2−γ))`, as stated for the flat-obstacle improvement.
    pub theta: f64,
}

pub fn theoretical_exponents(p: f64, gamma: f64, beta: f64, sigma: Option<f64>) -> Result<ExponentPrediction> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(domain(format!("p = {p} must satisfy p >= 2")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(domain(format!("gamma = {gamma} must lie in (0,1)")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain(format!("beta = {beta} must lie in (0,1]")));
    }
    if let Some(s) = sigma {
        if !(s > 0.0 && s <= 1.0) {
            return Err(domain(format!("sigma = {s} must lie in (0,1]")));
        }
    }
    let gamma_branch = gamma / (p - gamma);
    let mut alpha_bound = gamma_branch.min(beta / (p - 1.0));
    if let Some(s) = sigma {
        alpha_bound = alpha_bound.min(s);
    }
    Ok(ExponentPrediction {
        p,
        gamma,
        beta,
        sigma,
        q: p,
        tau: beta.min(gamma_branch),
        alpha_bound,
        alpha_is_upper_bound: sigma.is_none(),
        theta: (1.0 + beta).min(2.0 / (2.0 - gamma)),
    })
}

impl ExponentPrediction {
    /// Takes the oscillation exponent from the density growth.
    pub fn with_growth(mut self, growth: &GrowthParams) -> Self {
        self.q = growth.oscillation_exponent();
        self
    }

    /// Predicted growth slope `1 + τ`.
    pub fn growth_slope(&self) -> f64 {
        1.0 + self.tau
    }
}

/// Least-squares line through `(ln radius, ln value)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    /// `(radius, value)` samples above the noise floor, radii decreasing.
    pub samples: Vec<(f64, f64)>,
    /// Radii whose value fell below the noise floor.
    pub excluded: Vec<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    /// At least four samples spanning at least one decade.
    pub usable: bool,
}

impl ExponentFit {
    fn from_samples(radii: &[f64], values: &[f64], floor: f64) -> Self {
        let mut samples = Vec::new();
        let mut excluded = Vec::new();
        for (&r, &v) in radii.iter().zip(values) {
            if v > floor {
                samples.push((r, v));
            } else {
                excluded.push(r);
            }
        }
        let (slope, intercept, r_squared) = if samples.len() >= 2 {
            let (s, i, r2) = least_squares(&samples);
            (Some(s), Some(i), Some(r2))
        } else {
            (None, None, None)
        };
        let span = match (samples.first(), samples.last()) {
            (Some(a), Some(b)) => a.0 / b.0,
            _ => 0.0,
        };
        let usable = samples.len() >= 4 && span >= 10.0 * (1.0 - 1e-12);
        Self { samples, excluded, slope, intercept, r_squared, usable }
    }

    /// Writes `radius,value` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["radius", "value"])?;
        for (r, v) in &self.samples {
            w.write_record([r.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn least_squares(samples: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Geometric ladder `rho_max·2^{−k}`, `k = 0..=levels`, cut at `min_radius`.
pub fn radius_ladder(rho_max: f64, levels: usize, min_radius: f64) -> Vec<f64> {
    (0..=levels)
        .map(|k| rho_max * 0.5f64.powi(k as i32))
        .take_while(|r| *r >= min_radius * (1.0 - 1e-12))
        .collect()
}

fn check_radii(radii: &[f64], grid: &Grid) -> Result<()> {
    if radii.is_empty() {
        return Err(usage("at least one radius is required"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(usage("radii must be strictly decreasing"));
    }
    let min = radii[radii.len() - 1];
    if min < 4.0 * grid.spacing() * (1.0 - 1e-12) {
        return Err(usage(format!("smallest radius {min} is below four grid cells")));
    }
    Ok(())
}

/// `x ↦ u(x) − u(x₀) − g·(x − x₀)`.
fn plane_subtracted(u: &GridField, x0: Vec2, gradient: Vec2) -> Result<GridField> {
    let u0 = u.interpolate(x0)?;
    u.map_with_coords(|x, v| v - u0 - gradient.dot(&(x - x0)))
}

/// Fits `sup_{B_ρ(x₀)} |u − u(x₀) − g·(x−x₀)| ~ ρ^{slope}`.
pub fn growth_exponent(u: &GridField, x0: Vec2, gradient_at_x0: Vec2, radii: &[f64]) -> Result<ExponentFit> {
    check_radii(radii, u.grid())?;
    let w = plane_subtracted(u, x0, gradient_at_x0)?;
    let values = radii.iter().map(|&r| sup_on_ball(&w, x0, r)).collect::<Result<Vec<_>>>()?;
    let floor = 10.0 * f64::EPSILON * u.max_abs().max(f64::MIN_POSITIVE);
    Ok(ExponentFit::from_samples(radii, &values, floor))
}

/// Campanato fit together with the inferred gradient Hölder exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampanatoFit {
    pub fit: ExponentFit,
    pub q: f64,
    /// `(slope − n)/q`.
    pub alpha: Option<f64>,
}

/// Fits `∫_{B_r}|∇u − (∇u)_r|^q ~ r^{n + qα}`.
pub fn campanato_exponent(u: &GridField, q: f64, center: Vec2, radii: &[f64]) -> Result<CampanatoFit> {
    check_radii(radii, u.grid())?;
    if !(q >= 1.0) {
        return Err(usage("oscillation exponent q must be at least 1"));
    }
    let values = radii
        .iter()
        .map(|&r| crate::grid::oscillation_integral(u, center, r, q))
        .collect::<Result<Vec<_>>>()?;
    let grid = u.grid();
    let gmax = crate::grid::discrete_gradient(u).values.iter().fold(0.0_f64, |m, g| m.max(g.norm()));
    let scale = gmax.powf(q) * (2.0 * radii[0]).powi(grid.dim() as i32);
    let floor = 10.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let fit = ExponentFit::from_samples(radii, &values, floor);
    let n = grid.dim() as f64;
    let alpha = fit.slope.map(|s| (s - n) / q);
    Ok(CampanatoFit { fit, q, alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicStep {
    pub k: usize,
    pub radius: f64,
    pub sup: f64,
    /// `sup · base^{(1+τ)k}`.
    pub constant: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicReport {
    pub tau: f64,
    pub base: f64,
    pub steps: Vec<DyadicStep>,
    /// Smallest `C` with `S_k ≤ C·base^{−(1+τ)k}` on the kept steps.
    pub c_fitted: f64,
    pub truncated: Vec<usize>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Allowed growth of the per-step constant relative to the first step.
pub const DYADIC_SPREAD: f64 = 0.5;

/// Dyadic ladder `S_k = sup_{B_{base^{−k}}(x₀)} |u|` for `k = 1..=k_max`.
///
/// Steps whose radius is below four cells are dropped with a warning. A step
/// passes when its constant stays within `1 + DYADIC_SPREAD` of the first.
pub fn dyadic_decay_check(u: &GridField, x0: Vec2, tau: f64, k_max: usize, base: f64) -> Result<DyadicReport> {
    if !(base > 1.0) {
        return Err(usage("dyadic base must exceed 1"));
    }
    let h = u.grid().spacing();
    let mut steps = Vec::new();
    let mut truncated = Vec::new();
    let mut warnings = Vec::new();
    for k in 1..=k_max {
        let radius = base.powi(-(k as i32));
        if radius < 4.0 * h * (1.0 - 1e-12) {
            let msg = format!("step k = {k} (radius {radius:.3e}) is below four cells of size {h:.3e}; dropped");
            log::warn!("{msg}");
            warnings.push(msg);
            truncated.push(k);
            continue;
        }
        let sup = sup_on_ball(u, x0, radius)?;
        steps.push(DyadicStep { k, radius, sup, constant: sup * base.powf((1.0 + tau) * k as f64), pass: true });
    }
    let reference = steps.first().map_or(0.0, |s| s.constant);
    for s in &mut steps {
        s.pass = s.constant <= (1.0 + DYADIC_SPREAD) * reference + f64::MIN_POSITIVE;
    }
    let c_fitted = steps.iter().fold(0.0_f64, |m, s| m.max(s.constant));
    let pass = steps.iter().all(|s| s.pass);
    Ok(DyadicReport { tau, base, steps, c_fitted, truncated, warnings, pass })
}

/// Relative spread `(max − min)/min` of fitted constants across reports.
pub fn dyadic_constant_spread(reports: &[DyadicReport]) -> f64 {
    let cs: Vec<f64> = reports.iter().map(|r| r.c_fitted).collect();
    let max = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = cs.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        (max - min) / min
    }
}

/// Centered-difference gradient of `u` at the node nearest `x0`.
pub fn nodal_gradient(u: &GridField, x0: Vec2) -> Vec2 {
    let grid = u.grid();
    let k = grid.nearest_node(x0);
    let h = grid.spacing();
    let slots = grid.neighbor_slots(k);
    let mut g = Vec2::zeros();
    for axis in 0..grid.dim() {
        let (lo, hi) = (slots[2 * axis], slots[2 * axis + 1]);
        g[axis] = match (lo, hi) {
            (Some(a), Some(b)) => (u.value(b) - u.value(a)) / (2.0 * h),
            (None, Some(b)) => (u.value(b) - u.value(k)) / h,
            (Some(a), None) => (u.value(k) - u.value(a)) / h,
            (None, None) => 0.0,
        };
    }
    g
}

/// `x ↦ (u(x₀+λx) − u(x₀) − ∇u(x₀)·λx) / λ^{exponent}` sampled on a grid of
/// spacing `unit_spacing` over the unit interval (1-d) or unit disc (2-d).
///
/// The plane uses `plane_gradient` when given, otherwise a centered
/// difference at `x₀`.
pub fn blowup_rescale(
    u: &GridField,
    x0: Vec2,
    lambda: f64,
    exponent: f64,
    plane_gradient: Option<Vec2>,
    unit_spacing: f64,
) -> Result<GridField> {
    if !(lambda > 0.0) {
        return Err(usage("blow-up scale must be positive"));
    }
    let domain = if u.grid().dim() == 1 { Domain::Interval { a: -1.0, b: 1.0 } } else { Domain::Disc { radius: 1.0 } };
    let unit = make_grid(domain, unit_spacing)?;
    let gradient = plane_gradient.unwrap_or_else(|| nodal_gradient(u, x0));
    let u0 = u.interpolate(x0)?;
    let mut values = Vec::with_capacity(unit.node_count());
    for k in 0..unit.node_count() {
        let x = unit.coords(k);
        let ux = u
            .interpolate(x0 + lambda * x)
            .map_err(|_| usage(format!("blow-up ball of radius {lambda} escapes the domain")))?;
        values.push((ux - u0 - lambda * gradient.dot(&x)) / lambda.powf(exponent));
    }
    GridField::new(unit, values)
}

/// Both sides of the rescaling identity of the ball energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingCheck {
    pub j: u32,
    pub tau: f64,
    /// Energy of the rescaled field on the unit ball with the rescaled `δ`.
    pub rescaled_energy: f64,
    /// Energy of the original field on `B_{8^{−j}}`.
    pub original_energy: f64,
    /// `8^{(n+τp)j}`.
    pub factor: f64,
    pub rescaled_delta: f64,
    pub discrepancy: f64,
}

/// `Σ_cells |Dv|^p/p hⁿ + δ Σ_nodes (v−φ)₊^γ hⁿ` over the closed ball of
/// radius `radius` about the origin; a cell counts when all corners do.
fn ball_energy(grid: &Grid, v: &[f64], phi: &[f64], radius: f64, p: f64, gamma: f64, delta: f64) -> f64 {
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let r = radius * (1.0 + 1e-12);
    let inside = |k: usize| grid.coords(k).norm() <= r;
    let mut gradient_part = 0.0;
    for c in grid.cells() {
        let corners = [Some(c.base), Some(c.east), c.north, c.north_east];
        if corners.iter().flatten().all(|&k| inside(k)) {
            gradient_part += c.gradient(v, h).norm().powf(p) / p;
        }
    }
    let singular: f64 = (0..grid.node_count()).filter(|&k| inside(k)).map(|k| (v[k] - phi[k]).max(0.0).powf(gamma)).sum();
    (gradient_part + delta * singular) * vol
}

/// Checks `I_{δ̃}(ṽ; B₁) = 8^{(n+τp)j} I_δ(v; B_{8^{−j}})` for
/// `ṽ(x) = 8^{(1+τ)j} v(8^{−j}x)` (same for the obstacle) and
/// `δ̃ = δ·8^{(τp − (1+τ)γ)j}`.
///
/// The rescaled field lives on the square (or interval) `[−1,1]ⁿ` with spacing
/// `8^j h`; every node of the unit ball must map onto a node of the original grid.
pub fn energy_scaling_identity_check(spec: &ProblemSpec, v: &GridField, j: u32, tau: f64) -> Result<ScalingCheck> {
    let p = match spec.density.kind {
        DensityKind::PPower { p } => p,
        _ => return Err(usage("the scaling identity is stated for the p-power density")),
    };
    if **v.grid() != *spec.grid {
        return Err(usage("field does not live on the problem grid"));
    }
    let grid = &spec.grid;
    let n = grid.dim();
    let zoom = 8f64.powi(j as i32);
    let radius = 1.0 / zoom;
    let probe = if n == 1 { vec![Vec2::new(radius, 0.0), Vec2::new(-radius, 0.0)] } else {
        (0..16).map(|i| {
            let t = std::f64::consts::TAU * i as f64 / 16.0;
            radius * Vec2::new(t.cos(), t.sin())
        }).collect()
    };
    if probe.iter().any(|x| !grid.domain().contains(*x)) {
        return Err(usage(format!("ball of radius {radius} leaves the domain")));
    }
    let coarse_h = zoom * grid.spacing();
    let domain = if n == 1 { Domain::Interval { a: -1.0, b: 1.0 } } else { Domain::Rectangle { x: [-1.0, 1.0], y: [-1.0, 1.0] } };
    let unit = make_grid(domain, coarse_h).map_err(|e| usage(format!("grids not nested under the 8^-j map: {e}")))?;
    let lift = zoom.powf(1.0 + tau);
    let mut vt = vec![0.0; unit.node_count()];
    let mut pt = vec![0.0; unit.node_count()];
    for k in 0..unit.node_count() {
        let x = unit.coords(k);
        if x.norm() > 1.0 + 1e-12 {
            continue;
        }
        let m = grid
            .node_at(x / zoom)
            .ok_or_else(|| usage(format!("grids not nested under the 8^-j map at {:?}", x.as_slice())))?;
        vt[k] = lift * v.value(m);
        pt[k] = lift * spec.obstacle.value(m);
    }
    let rescaled_delta = spec.delta * zoom.powf(tau * p - (1.0 + tau) * spec.gamma);
    let rescaled_energy = ball_energy(&unit, &vt, &pt, 1.0, p, spec.gamma, rescaled_delta);
    let original_energy = ball_energy(grid, v.values(), spec.obstacle.values(), radius, p, spec.gamma, spec.delta);
    let factor = zoom.powf(n as f64 + tau * p);
    let expected = factor * original_energy;
    let scale = rescaled_energy.abs().max(expected.abs());
    let discrepancy = if scale == 0.0 { 0.0 } else { (rescaled_energy - expected).abs() / scale };
    Ok(ScalingCheck { j, tau, rescaled_energy, original_energy, factor, rescaled_delta, discrepancy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    #[test]
    fn prediction_examples() {
        let e = theoretical_exponents(2.0, 0.5, 1.0, None).unwrap();
        assert_relative_eq!(e.tau, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(e.theta, 4.0 / 3.0, max_relative = 1e-15);
        assert!(e.alpha_is_upper_bound);
        let e = theoretical_exponents(3.0, 0.5, 0.2, None).unwrap();
        assert_relative_eq!(e.tau, 0.2, max_relative = 1e-15);
        let e = theoretical_exponents(2.0, 1.0 - 1e-12, 1.0, None).unwrap();
        assert!((e.tau - 1.0).abs() < 1e-11);
        assert!(theoretical_exponents(2.0, 1.5, 1.0, None).is_err());
        assert!(theoretical_exponents(1.5, 0.5, 1.0, None).is_err());
        assert!(theoretical_exponents(2.0, 0.5, 0.0, None).is_err());
        let e = theoretical_exponents(2.0, 0.5, 1.0, Some(0.1)).unwrap();
        assert_eq!(e.alpha_bound, 0.1);
        assert!(!e.alpha_is_upper_bound);
    }

    #[test]
    fn ladder_stops_at_resolution() {
        let r = radius_ladder(0.5, 6, 4.0 / 512.0);
        assert_eq!(r.len(), 7);
        assert_eq!(radius_ladder(0.5, 6, 0.05).len(), 4);
    }

    #[test]
    fn least_squares_recovers_power_law() {
        let radii = [0.4, 0.2, 0.1, 0.05, 0.025];
        let values: Vec<f64> = radii.iter().map(|r: &f64| 3.0 * r.powf(1.7)).collect();
        let fit = ExponentFit::from_samples(&radii, &values, 0.0);
        assert_relative_eq!(fit.slope.unwrap(), 1.7, max_relative = 1e-12);
        assert_relative_eq!(fit.intercept.unwrap(), 3f64.ln(), max_relative = 1e-12);
        assert!(fit.usable);
        assert_relative_eq!(fit.r_squared.unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn radii_must_decrease_and_resolve() {
        let g = make_grid(Domain::Interval { a: -1.0, b: 1.0 }, 0.01).unwrap();
        let u = GridField::from_fn(g, |x| x[0] * x[0]).unwrap();
        assert!(growth_exponent(&u, Vec2::zeros(), Vec2::zeros(), &[0.1, 0.2]).is_err());
        assert!(growth_exponent(&u, Vec2::zeros(), Vec2::zeros(), &[0.1, 0.02]).is_err());
    }
}
