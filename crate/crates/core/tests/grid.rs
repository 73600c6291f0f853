mod common;

use approx::assert_relative_eq;
use common::interval;
use proptest::prelude::*;
use singular_obstacle::grid::{discrete_gradient, oscillation_integral, sup_on_ball};
use singular_obstacle::{make_grid, Domain, Error, GridField, Vec2};

#[test]
fn node_counts() {
    let g = interval(-1.0, 1.0, 0.5);
    assert_eq!((g.node_count(), g.boundary_nodes().count()), (5, 2));
    let g = make_grid(Domain::Rectangle { x: [0.0, 1.0], y: [0.0, 1.0] }, 0.5).unwrap();
    assert_eq!((g.node_count(), g.boundary_nodes().count()), (9, 8));
}

#[test]
fn disc_interior_is_the_lattice_inside_the_disc() {
    let g = make_grid(Domain::Disc { radius: 1.0 }, 0.4).unwrap();
    let mut inside: Vec<(i64, i64)> = Vec::new();
    for i in -3i64..=3 {
        for j in -3i64..=3 {
            if ((i * i + j * j) as f64) * 0.16 <= 1.0 {
                inside.push((i, j));
            }
        }
    }
    let mut found: Vec<(i64, i64)> = g
        .interior_nodes()
        .map(|k| {
            let x = g.coords(k) / 0.4;
            (x[0].round() as i64, x[1].round() as i64)
        })
        .collect();
    found.sort();
    inside.sort();
    assert_eq!(found, inside);
}

#[test]
fn forward_differences_of_a_parabola() {
    let g = interval(0.0, 1.0, 0.25);
    let f = GridField::from_fn(g, |x| x[0] * x[0]).unwrap();
    let d = discrete_gradient(&f);
    let got: Vec<f64> = d.values.iter().map(|v| v[0]).collect();
    for (a, b) in got.iter().zip([0.25, 0.75, 1.25, 1.75]) {
        assert_relative_eq!(*a, b, max_relative = 1e-14);
    }
}

#[test]
fn constant_fields_have_zero_gradient() {
    let g = make_grid(Domain::Disc { radius: 1.0 }, 0.1).unwrap();
    let f = GridField::constant(g, 2.5).unwrap();
    assert!(discrete_gradient(&f).values.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn ball_suprema() {
    let g = interval(-1.0, 1.0, 0.125);
    let zero = GridField::constant(g.clone(), 0.0).unwrap();
    assert_eq!(sup_on_ball(&zero, Vec2::zeros(), 0.3).unwrap(), 0.0);
    let abs = GridField::from_fn(g.clone(), |x| x[0].abs()).unwrap();
    assert_eq!(sup_on_ball(&abs, Vec2::zeros(), 0.5).unwrap(), 0.5);
    assert_eq!(sup_on_ball(&abs, Vec2::zeros(), 0.3).unwrap(), 0.25);

    let g = interval(-1.0, 1.0, 0.01);
    let sq = GridField::from_fn(g, |x| x[0] * x[0]).unwrap();
    let s = sup_on_ball(&sq, Vec2::zeros(), 0.3).unwrap();
    assert!((s - 0.09).abs() <= 2.0 * 0.3 * 0.01);

    let g = interval(-1.0, 1.0, 0.125);
    let f = GridField::constant(g, 1.0).unwrap();
    assert!(matches!(sup_on_ball(&f, Vec2::new(0.06, 0.0), 0.01), Err(Error::Usage(_))));
}

#[test]
fn parabola_oscillation_matches_integral() {
    let g = interval(-1.0, 1.0, 0.01);
    let f = GridField::from_fn(g, |x| 0.5 * x[0] * x[0]).unwrap();
    let osc = oscillation_integral(&f, Vec2::zeros(), 0.5, 2.0).unwrap();
    assert_relative_eq!(osc, 1.0 / 12.0, max_relative = 0.02);
}

#[test]
fn empty_ball_is_a_usage_error() {
    let g = interval(-1.0, 1.0, 0.25);
    let f = GridField::constant(g, 1.0).unwrap();
    assert!(matches!(oscillation_integral(&f, Vec2::new(0.0, 0.0), 0.01, 2.0), Err(Error::Usage(_))));
}

#[test]
fn spacing_must_resolve_the_domain() {
    assert!(make_grid(Domain::Interval { a: 0.0, b: 1.0 }, 2.0).is_err());
    assert!(make_grid(Domain::Interval { a: 0.0, b: 1.0 }, 0.3).is_err());
}

proptest! {
    #[test]
    fn affine_fields_have_exact_cell_gradients(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64) {
        let g = make_grid(Domain::Rectangle { x: [0.0, 1.0], y: [-1.0, 1.0] }, 0.125).unwrap();
        let f = GridField::from_fn(g, |x| a * x[0] + b * x[1] + c).unwrap();
        for v in discrete_gradient(&f).values {
            prop_assert!((v - Vec2::new(a, b)).norm() <= 1e-12 * (1.0 + a.abs() + b.abs() + c.abs()) * 8.0);
        }
        prop_assert!(oscillation_integral(&f, Vec2::new(0.5, 0.0), 0.4, 2.0).unwrap() < 1e-20);
    }

    #[test]
    fn ball_sup_is_monotone_in_radius(seed in 0u64..1000, r in 0.1..0.5f64, dr in 0.0..0.4f64) {
        let g = make_grid(Domain::Disc { radius: 1.0 }, 0.0625).unwrap();
        let f = GridField::from_fn(g, |x| ((x[0] * 13.0 + seed as f64).sin() * (x[1] * 7.0).cos())).unwrap();
        let small = sup_on_ball(&f, Vec2::zeros(), r).unwrap();
        let large = sup_on_ball(&f, Vec2::zeros(), r + dr).unwrap();
        prop_assert!(small <= large);
    }

    #[test]
    fn interpolation_reproduces_bilinear_fields(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, x in -0.9..0.9f64, y in -0.9..0.9f64) {
        let g = make_grid(Domain::Rectangle { x: [-1.0, 1.0], y: [-1.0, 1.0] }, 0.25).unwrap();
        let f = GridField::from_fn(g, |p| a * p[0] + b * p[1] + c * p[0] * p[1]).unwrap();
        let got = f.interpolate(Vec2::new(x, y)).unwrap();
        prop_assert!((got - (a * x + b * y + c * x * y)).abs() < 1e-12);
    }
}
