#![allow(dead_code)]

use std::sync::Arc;

use singular_obstacle::{make_grid, Domain, Grid, GridField, ProblemSpec};

/// `(9/8)^{2/3}`, the dead-core constant for p = 2, γ = 1/2, computed from
/// `c^{p−γ} κ^{p−1} (κ−1)(p−1) = γ` with `κ = p/(p−γ)`.
pub fn dead_core_c(p: f64, gamma: f64) -> f64 {
    let k = p / (p - gamma);
    (gamma / (k.powf(p - 1.0) * (k - 1.0) * (p - 1.0))).powf(1.0 / (p - gamma))
}

pub fn dead_core(p: f64, gamma: f64) -> impl Fn(f64) -> f64 {
    let c = dead_core_c(p, gamma);
    let k = p / (p - gamma);
    move |x| c * x.max(0.0).powf(k)
}

pub fn interval(a: f64, b: f64, h: f64) -> Arc<Grid> {
    make_grid(Domain::Interval { a, b }, h).unwrap()
}

/// Zero obstacle on `[a, 1]` with dead-core boundary data.
pub fn benchmark(a: f64, h: f64, p: f64, gamma: f64) -> ProblemSpec {
    let grid = interval(a, 1.0, h);
    let u = dead_core(p, gamma);
    let boundary = GridField::from_fn(grid.clone(), |x| u(x[0])).unwrap();
    let obstacle = GridField::constant(grid.clone(), 0.0).unwrap();
    ProblemSpec::new(grid, p, gamma, 1.0, 1.0, obstacle, boundary).unwrap()
}

pub fn exact_field(grid: &Arc<Grid>, p: f64, gamma: f64) -> GridField {
    let u = dead_core(p, gamma);
    GridField::from_fn(grid.clone(), |x| u(x[0])).unwrap()
}

pub fn max_error(u: &GridField, exact: &GridField) -> f64 {
    u.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
