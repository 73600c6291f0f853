//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::Instant;

use common::{benchmark, dead_core_c, exact_field, max_error};
use singular_obstacle::energy::{
    check_structural_bounds, convexity_gap, derivative_check, halton_pairs, halton_points, log_spaced,
    operative_bump_weight,
};
use singular_obstacle::freeboundary::{classify_field, FbSide};
use singular_obstacle::regularity::{
    campanato_exponent, dyadic_constant_spread, dyadic_decay_check, energy_scaling_identity_check, growth_exponent,
    nodal_gradient, radius_ladder, theoretical_exponents,
};
use singular_obstacle::solver::min_energy_monotonicity_check;
use singular_obstacle::{
    make_grid, solve, DensityKind, Domain, EnergyDensity, GridField, ProblemSpec, SolveResult, SolverConfig, Vec2,
};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, title: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} [{id}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

/// `max |u| ≤ max(max|g|, max|φ|) + tol_kkt`, evaluated from the data.
fn linf_holds(spec: &ProblemSpec, r: &SolveResult) -> bool {
    let g = spec.grid.boundary_nodes().map(|k| spec.boundary.value(k).abs()).fold(0.0, f64::max);
    let bound = g.max(spec.obstacle.max_abs());
    r.converged && r.u.max_abs() <= bound + r.tol_kkt
}

/// Growth fit at the contact-side front node nearest `center`, or at `x0`.
fn designated_slope(spec: &ProblemSpec, u: &GridField, x0: Option<Vec2>, rho_max: f64) -> Option<(Vec2, f64)> {
    let h = spec.grid.spacing();
    let x0 = match x0 {
        Some(x) => x,
        None => {
            let exact = classify_field(spec, u, SolverConfig::default().tol_contact).ok()?;
            Vec2::from(exact.nearest(Vec2::zeros(), Some(FbSide::Contact))?.x)
        }
    };
    let radii = radius_ladder(rho_max, 6, 4.0 * h);
    let fit = growth_exponent(u, x0, nodal_gradient(&spec.obstacle, x0), &radii).ok()?;
    fit.usable.then_some((x0, fit.slope?))
}

fn main() {
    let config = SolverConfig::default();
    let mut report = Report { failures: 0 };
    let mut linf_checked = 0;
    let mut linf_violations = 0;

    // 1. Closed-form benchmark.
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [64.0, 128.0, 256.0] {
        let h = 1.0 / n;
        let spec = benchmark(-1.0, h, 2.0, 0.5);
        let r = solve(&spec, &config).expect("benchmark solve");
        let err = max_error(&r.u, &exact_field(&spec.grid, 2.0, 0.5));
        let bound = 0.5 * h.powf(0.9);
        ok &= r.converged && err <= bound;
        linf_checked += 1;
        linf_violations += usize::from(!linf_holds(&spec, &r));
        detail.push(format!("h=1/{n}: err {err:.3e} <= {bound:.3e}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 30.0;
    detail.push(format!("time {elapsed:.2}s < 30s"));
    report.line(1, "benchmark convergence", ok, detail.join(", "));

    // 2. Sharp exponent of the gamma branch.
    let h = 1.0 / 256.0;
    let mut ok = true;
    let mut detail = Vec::new();
    for (p, gamma) in [(2.0, 0.25), (2.0, 0.5), (2.0, 0.75), (3.0, 0.5)] {
        let predicted = 1.0 + gamma / (p - gamma);
        let spec = benchmark(-1.0, h, p, gamma);
        let r = solve(&spec, &config).expect("exponent solve");
        linf_checked += 1;
        linf_violations += usize::from(!linf_holds(&spec, &r));
        match designated_slope(&spec, &r.u, None, 0.5) {
            Some((x0, slope)) if r.converged => {
                ok &= (slope - predicted).abs() <= 0.1;
                detail.push(format!("(p={p}, g={gamma}) slope {slope:.4} vs {predicted:.4} at x0={:.4}", x0[0]));
            }
            _ => {
                ok = false;
                detail.push(format!("(p={p}, g={gamma}) no usable fit"));
            }
        }
    }
    report.line(2, "sharp exponent, gamma branch", ok, detail.join(", "));

    // 3. Obstacle-limited exponent.
    let grid = make_grid(Domain::Interval { a: -1.0, b: 1.0 }, h).unwrap();
    let obstacle = GridField::from_fn(grid.clone(), |x| -x.norm().powf(1.3)).unwrap();
    let boundary = GridField::constant(grid.clone(), -0.7).unwrap();
    let spec = ProblemSpec::new(grid, 2.0, 0.75, 0.3, 1.0, obstacle, boundary).unwrap();
    let predicted = theoretical_exponents(2.0, 0.75, 0.3, None).unwrap().growth_slope();
    let r = solve(&spec, &config).expect("obstacle-limited solve");
    linf_checked += 1;
    linf_violations += usize::from(!linf_holds(&spec, &r));
    let origin_contact = r.u.value(spec.grid.nearest_node(Vec2::zeros())) - spec.obstacle.value(spec.grid.nearest_node(Vec2::zeros()));
    let (ok, detail) = match designated_slope(&spec, &r.u, Some(Vec2::zeros()), 0.25) {
        Some((_, slope)) => (
            r.converged && origin_contact <= config.tol_contact && (slope - 1.3).abs() <= 0.1,
            format!("slope {slope:.4} vs 1.3 (predicted {predicted:.4}), gap at 0 {origin_contact:.1e}"),
        ),
        None => (false, "no usable fit".to_string()),
    };
    report.line(3, "obstacle-limited exponent", ok, detail);

    // 4. L-infinity bound on every solve above.
    report.line(
        4,
        "L-infinity bound",
        linf_violations == 0 && linf_checked == 8,
        format!("{linf_violations} violations over {linf_checked} solves"),
    );

    // 5. Dyadic ladder across refinements.
    let mut reports = Vec::new();
    let mut detail = Vec::new();
    for n in [256.0, 512.0] {
        let spec = benchmark(-1.0, 1.0 / n, 2.0, 0.5);
        let r = solve(&spec, &config).expect("dyadic solve");
        let exact = classify_field(&spec, &r.u, config.tol_contact).unwrap();
        let x0 = Vec2::from(exact.nearest(Vec2::zeros(), Some(FbSide::Contact)).expect("front").x);
        let u0 = r.u.interpolate(x0).unwrap();
        let g = nodal_gradient(&spec.obstacle, x0);
        let w = r.u.map_with_coords(|x, v| v - u0 - g.dot(&(x - x0))).unwrap();
        let d = dyadic_decay_check(&w, x0, 1.0 / 3.0, 3, 8.0).unwrap();
        detail.push(format!("h=1/{n}: C {:.4} (truncated k {:?})", d.c_fitted, d.truncated));
        reports.push(d);
    }
    let spread = dyadic_constant_spread(&reports);
    detail.push(format!("spread {spread:.4} < 0.2, closed form {:.4}", dead_core_c(2.0, 0.5)));
    report.line(5, "dyadic ladder", spread < 0.2, detail.join(", "));

    // 6. Exact rescaling identity.
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for p in [2.0, 3.0] {
        let spec = benchmark(-1.0, 1.0 / 512.0, p, 0.5);
        let r = solve(&spec, &config).expect("scaling solve");
        for tau in [1.0 / 3.0, 0.2] {
            for j in [0, 1] {
                match energy_scaling_identity_check(&spec, &r.u, j, tau) {
                    Ok(c) => worst = worst.max(c.discrepancy),
                    Err(_) => ok = false,
                }
            }
        }
    }
    report.line(6, "scaling identity", ok && worst <= 1e-12, format!("max discrepancy {worst:.2e} <= 1e-12"));

    // 7. Energy-density suite.
    let pairs = halton_pairs(2, 10_000, 2.0);
    let nu = operative_bump_weight(3.0, 1.0, 2).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    let mut gap_densities: Vec<(String, EnergyDensity)> = [2.0, 3.0, 4.0]
        .iter()
        .map(|&p| (format!("p={p}"), EnergyDensity::p_power(p, 2).unwrap()))
        .collect();
    gap_densities.push((
        format!("convexified nu={nu:.4}"),
        EnergyDensity::convexified(3.0, 1.0, [0.0, 0.0], 1.0, nu, 2).unwrap(),
    ));
    for (name, d) in &gap_densities {
        let gap = convexity_gap(d, &pairs).unwrap().min_ratio;
        ok &= gap > 0.0;
        detail.push(format!("{name} gap {gap:.4}"));
    }
    let nonconvex = EnergyDensity::convexified(3.0, 1.0, [0.0, 0.0], 1.0, 1.5, 2).unwrap();
    let lambda = check_structural_bounds(&nonconvex, &log_spaced(1e-3, 1e3, 241), 64).unwrap().ellipticity;
    ok &= lambda <= 0.0;
    detail.push(format!("nu=1.5 lambda_hat {lambda:.4} <= 0 over {} pairs", pairs.len()));
    report.line(7, "energy-density suite", ok && pairs.len() == 10_000, detail.join(", "));

    // 8. Analytic derivatives against central differences.
    let kinds = [
        DensityKind::PPower { p: 2.0 },
        DensityKind::PPower { p: 3.0 },
        DensityKind::PPower { p: 4.0 },
        DensityKind::Quadratic,
        DensityKind::Tilted { p: 3.0, scale: 0.5, tilt: [0.4, 0.0] },
        DensityKind::Convexified { p: 3.0, scale: 1.0, tilt: [0.0, 0.0], bump_radius: 1.0, bump_weight: nu },
    ];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for kind in &kinds {
        for dim in [1, 2] {
            let d = EnergyDensity::from_kind(kind, dim).unwrap();
            for xi in halton_points(dim, 1000, 2.0, 0) {
                let Some(c) = derivative_check(&d, xi, 1e-3).filter(|_| !d.jet(xi).singular) else {
                    skipped += 1;
                    continue;
                };
                worst = worst.max(c.gradient_error).max(c.hessian_error);
                checked += 1;
            }
        }
    }
    report.line(8, "derivative cross-checks", worst <= 1e-6, format!("max relative error {worst:.2e} over {checked} points, {skipped} on the non-smooth set skipped"));

    // 9. Invariance suite.
    let spec = benchmark(-1.0, 1.0 / 256.0, 2.0, 0.5);
    let r = solve(&spec, &config).expect("invariance solve");
    let radii = radius_ladder(0.5, 6, 4.0 * spec.grid.spacing());
    let x0 = Vec2::zeros();
    let (a, b) = (0.7, -0.3);
    let shifted = r.u.map_with_coords(|x, v| v + a * x[0] + b).unwrap();
    let scaled = r.u.map_with_coords(|_, v| 3.7 * v).unwrap();
    let base_fit = growth_exponent(&r.u, x0, Vec2::zeros(), &radii).unwrap().slope.unwrap();
    let shift_fit = growth_exponent(&shifted, x0, Vec2::new(a, 0.0), &radii).unwrap().slope.unwrap();
    let scale_fit = growth_exponent(&scaled, x0, Vec2::zeros(), &radii).unwrap().slope.unwrap();
    let base_camp = campanato_exponent(&r.u, 2.0, x0, &radii).unwrap().alpha.unwrap();
    let shift_camp = campanato_exponent(&shifted, 2.0, x0, &radii).unwrap().alpha.unwrap();
    let affine_dev = (shift_fit - base_fit).abs().max((shift_camp - base_camp).abs());
    let scale_dev = (scale_fit - base_fit).abs();
    let specs: Vec<ProblemSpec> = [0.0, 0.25, 0.5, 1.0].iter().map(|d| spec.with_delta(*d).unwrap()).collect();
    let mono = min_energy_monotonicity_check(&specs, &config).unwrap();
    let energies: Vec<String> = mono.energies.iter().map(|e| format!("{e:.6}")).collect();
    report.line(
        9,
        "invariance suite",
        affine_dev <= 1e-10 && scale_dev <= 1e-12 && mono.monotone,
        format!(
            "affine deviation {affine_dev:.1e}, scaling deviation {scale_dev:.1e}, energies over delta {{0, .25, .5, 1}}: {}",
            energies.join(" <= ")
        ),
    );

    println!("{} of 9 criteria passed", 9 - report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
