//! Uniform Cartesian grids on intervals, rectangles and disc masks.
//!
//! Fields live on nodes; gradients live on cells as forward differences from
//! the lower-left corner, so a cell is active only when all of its corners are.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::Vec2;
use crate::error::{usage, Result};

/// Relative slack used for ball membership and lattice matching.
const GEOMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { x: [f64; 2], y: [f64; 2] },
    /// Disc of the given radius centered at the origin.
    Disc { radius: f64 },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Whether `x` lies in the closed domain (up to a relative tolerance).
    pub fn contains(&self, x: Vec2) -> bool {
        let tol = GEOMETRY_TOL * (1.0 + x.norm());
        match *self {
            Domain::Interval { a, b } => x[0] >= a - tol && x[0] <= b + tol,
            Domain::Rectangle { x: xr, y: yr } => {
                x[0] >= xr[0] - tol && x[0] <= xr[1] + tol && x[1] >= yr[0] - tol && x[1] <= yr[1] + tol
            }
            Domain::Disc { radius } => x.norm() <= radius * (1.0 + GEOMETRY_TOL),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Interval { a, b } => a.is_finite() && b.is_finite() && b > a,
            Domain::Rectangle { x, y } => {
                x.iter().chain(y.iter()).all(|v| v.is_finite()) && x[1] > x[0] && y[1] > y[0]
            }
            Domain::Disc { radius } => radius.is_finite() && radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(usage(format!("domain {self:?} must have positive extents")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

/// A gradient cell, addressed by the active indices of its corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub base: usize,
    pub east: usize,
    /// Only present in two dimensions.
    pub north: Option<usize>,
    pub north_east: Option<usize>,
    pub center: Vec2,
}

impl Cell {
    /// Forward-difference gradient of `values` on this cell.
    #[inline]
    pub fn gradient(&self, values: &[f64], h: f64) -> Vec2 {
        let b = values[self.base];
        let gy = match self.north {
            Some(n) => (values[n] - b) / h,
            None => 0.0,
        };
        Vec2::new((values[self.east] - b) / h, gy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    h: f64,
    shape: [usize; 2],
    origin: [f64; 2],
    lattice_class: Vec<NodeClass>,
    lattice_to_active: Vec<Option<usize>>,
    active: Vec<usize>,
    coords: Vec<Vec2>,
    class: Vec<NodeClass>,
    neighbors: Vec<[Option<usize>; 4]>,
    cells: Vec<Cell>,
}

fn lattice_count(extent: f64, h: f64) -> Result<usize> {
    let n = (extent / h).round();
    if (n * h - extent).abs() > 1e-9 * extent {
        return Err(usage(format!("spacing {h} does not divide the extent {extent}")));
    }
    Ok(n as usize)
}

/// Builds the grid of spacing `h` on `domain`.
pub fn make_grid(domain: Domain, h: f64) -> Result<Arc<Grid>> {
    domain.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(usage(format!("grid spacing must be positive, got {h}")));
    }
    let (shape, origin, lattice_class) = match domain {
        Domain::Interval { a, b } => {
            if h > 0.5 * (b - a) {
                return Err(usage("grid spacing exceeds half the interval length"));
            }
            let n = lattice_count(b - a, h)?;
            let class = (0..=n)
                .map(|i| if i == 0 || i == n { NodeClass::Boundary } else { NodeClass::Interior })
                .collect();
            ([n + 1, 1], [a, 0.0], class)
        }
        Domain::Rectangle { x, y } => {
            if h > 0.5 * (x[1] - x[0]).min(y[1] - y[0]) {
                return Err(usage("grid spacing exceeds half the rectangle width"));
            }
            let (nx, ny) = (lattice_count(x[1] - x[0], h)?, lattice_count(y[1] - y[0], h)?);
            let mut class = Vec::with_capacity((nx + 1) * (ny + 1));
            for j in 0..=ny {
                for i in 0..=nx {
                    let edge = i == 0 || i == nx || j == 0 || j == ny;
                    class.push(if edge { NodeClass::Boundary } else { NodeClass::Interior });
                }
            }
            ([nx + 1, ny + 1], [x[0], y[0]], class)
        }
        Domain::Disc { radius } => {
            if h > radius {
                return Err(usage("grid spacing exceeds the disc radius"));
            }
            let k = (radius / h * (1.0 + GEOMETRY_TOL)).floor() as usize + 1;
            let n = 2 * k + 1;
            let at = |i: usize, j: usize| Vec2::new((i as f64 - k as f64) * h, (j as f64 - k as f64) * h);
            let inside: Vec<bool> = (0..n * n)
                .map(|l| at(l % n, l / n).norm() <= radius * (1.0 + GEOMETRY_TOL))
                .collect();
            let mut class = vec![NodeClass::Exterior; n * n];
            for l in 0..n * n {
                let (i, j) = (l % n, l / n);
                if inside[l] {
                    class[l] = NodeClass::Interior;
                } else {
                    let touches = (i > 0 && inside[l - 1])
                        || (i + 1 < n && inside[l + 1])
                        || (j > 0 && inside[l - n])
                        || (j + 1 < n && inside[l + n]);
                    if touches {
                        class[l] = NodeClass::Boundary;
                    }
                }
            }
            let o = -(k as f64) * h;
            ([n, n], [o, o], class)
        }
    };
    Ok(Arc::new(Grid::assemble(domain, h, shape, origin, lattice_class)))
}

impl Grid {
    fn assemble(domain: Domain, h: f64, shape: [usize; 2], origin: [f64; 2], lattice_class: Vec<NodeClass>) -> Self {
        let [nx, ny] = shape;
        let dim = domain.dim();
        let mut lattice_to_active = vec![None; nx * ny];
        let mut active = Vec::new();
        for (l, c) in lattice_class.iter().enumerate() {
            if *c != NodeClass::Exterior {
                lattice_to_active[l] = Some(active.len());
                active.push(l);
            }
        }
        let position = |l: usize| {
            let (i, j) = (l % nx, l / nx);
            Vec2::new(origin[0] + i as f64 * h, if dim == 1 { 0.0 } else { origin[1] + j as f64 * h })
        };
        let coords = active.iter().map(|&l| position(l)).collect();
        let class = active.iter().map(|&l| lattice_class[l]).collect();
        let neighbors = active
            .iter()
            .map(|&l| {
                let (i, j) = (l % nx, l / nx);
                [
                    if i > 0 { lattice_to_active[l - 1] } else { None },
                    if i + 1 < nx { lattice_to_active[l + 1] } else { None },
                    if j > 0 { lattice_to_active[l - nx] } else { None },
                    if j + 1 < ny { lattice_to_active[l + nx] } else { None },
                ]
            })
            .collect();
        let mut cells = Vec::new();
        let jmax = if dim == 1 { 1 } else { ny - 1 };
        for j in 0..jmax {
            for i in 0..nx - 1 {
                let l = i + nx * j;
                let (Some(base), Some(east)) = (lattice_to_active[l], lattice_to_active[l + 1]) else {
                    continue;
                };
                let mut half = Vec2::new(0.5 * h, 0.0);
                let (north, north_east) = if dim == 2 {
                    let (Some(n), Some(ne)) = (lattice_to_active[l + nx], lattice_to_active[l + nx + 1]) else {
                        continue;
                    };
                    half[1] = 0.5 * h;
                    (Some(n), Some(ne))
                } else {
                    (None, None)
                };
                cells.push(Cell { base, east, north, north_east, center: position(l) + half });
            }
        }
        Grid { domain, h, shape, origin, lattice_class, lattice_to_active, active, coords, class, neighbors, cells }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `hⁿ`, the quadrature weight of a node or a cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Number of active (interior or boundary) nodes.
    pub fn node_count(&self) -> usize {
        self.active.len()
    }

    /// Number of lattice points, exterior ones included.
    pub fn lattice_size(&self) -> usize {
        self.lattice_class.len()
    }

    pub fn coords(&self, node: usize) -> Vec2 {
        self.coords[node]
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.class[node]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.class[node] == NodeClass::Boundary
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&k| self.class[k] == NodeClass::Interior)
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&k| self.class[k] == NodeClass::Boundary)
    }

    /// Active lattice neighbours (west, east, south, north) of a node.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[node].iter().flatten().copied()
    }

    /// Active neighbours in fixed (west, east, south, north) slots.
    pub fn neighbor_slots(&self, node: usize) -> [Option<usize>; 4] {
        self.neighbors[node]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Active node at lattice position `point`, if `point` is (up to rounding)
    /// a lattice point.
    pub fn node_at(&self, point: Vec2) -> Option<usize> {
        let [nx, ny] = self.shape;
        let fi = (point[0] - self.origin[0]) / self.h;
        let fj = if self.dim() == 1 { 0.0 } else { (point[1] - self.origin[1]) / self.h };
        let (ri, rj) = (fi.round(), fj.round());
        if (fi - ri).abs() > 1e-9 || (fj - rj).abs() > 1e-9 || ri < 0.0 || rj < 0.0 {
            return None;
        }
        let (i, j) = (ri as usize, rj as usize);
        if i >= nx || j >= ny {
            return None;
        }
        self.lattice_to_active[i + nx * j]
    }

    /// Active node closest to `point`.
    pub fn nearest_node(&self, point: Vec2) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, x) in self.coords.iter().enumerate() {
            let d = (x - point).norm_squared();
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    /// Nodes of the closed ball `|x − center| ≤ radius`.
    pub fn nodes_in_ball(&self, center: Vec2, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let r = radius * (1.0 + GEOMETRY_TOL) + GEOMETRY_TOL * self.h;
        (0..self.node_count()).filter(move |&k| (self.coords[k] - center).norm() <= r)
    }

    /// Cells whose centers lie in the closed ball.
    pub fn cells_in_ball(&self, center: Vec2, radius: f64) -> impl Iterator<Item = &Cell> + '_ {
        let r = radius * (1.0 + GEOMETRY_TOL) + GEOMETRY_TOL * self.h;
        self.cells.iter().filter(move |c| (c.center - center).norm() <= r)
    }

    /// Lattice cell containing `point` with its local coordinates in `[0,1]ⁿ`.
    fn locate(&self, point: Vec2) -> Option<([usize; 4], [f64; 2])> {
        let [nx, ny] = self.shape;
        let dim = self.dim();
        let mut idx = [0usize; 2];
        let mut frac = [0.0; 2];
        for axis in 0..dim {
            let n = if axis == 0 { nx } else { ny };
            let f = (point[axis] - self.origin[axis]) / self.h;
            if f < -1e-9 || f > (n - 1) as f64 + 1e-9 {
                return None;
            }
            let i = (f.floor().max(0.0) as usize).min(n - 2);
            idx[axis] = i;
            frac[axis] = (f - i as f64).clamp(0.0, 1.0);
        }
        let l = idx[0] + nx * idx[1];
        let lookup = |l: usize| self.lattice_to_active[l];
        let corners = if dim == 1 {
            [lookup(l)?, lookup(l + 1)?, usize::MAX, usize::MAX]
        } else {
            [lookup(l)?, lookup(l + 1)?, lookup(l + nx)?, lookup(l + nx + 1)?]
        };
        Some((corners, frac))
    }
}

/// Scalar values on the active nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(usage(format!(
                "field has {} values but the grid has {} active nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(usage("field values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Vec2) -> f64) -> Result<Self> {
        let values = (0..grid.node_count()).map(|k| f(grid.coords(k))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Result<Self> {
        Self::from_fn(grid, |_| value)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && *self.grid != *other.grid {
            return Err(usage("fields live on different grids"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        GridField::new(self.grid.clone(), values)
    }

    /// Applies `f(x, value)` node by node.
    pub fn map_with_coords(&self, f: impl Fn(Vec2, f64) -> f64) -> Result<GridField> {
        let values = self.values.iter().enumerate().map(|(k, v)| f(self.grid.coords(k), *v)).collect();
        GridField::new(self.grid.clone(), values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Linear (1-d) or bilinear (2-d) interpolation at `point`.
    pub fn interpolate(&self, point: Vec2) -> Result<f64> {
        let (c, [s, t]) = self
            .grid
            .locate(point)
            .ok_or_else(|| usage(format!("point {:?} is outside the active grid", point.as_slice())))?;
        let v = &self.values;
        Ok(if self.grid.dim() == 1 {
            (1.0 - s) * v[c[0]] + s * v[c[1]]
        } else {
            (1.0 - t) * ((1.0 - s) * v[c[0]] + s * v[c[1]]) + t * ((1.0 - s) * v[c[2]] + s * v[c[3]])
        })
    }

    /// Writes `x1[,x2],value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.grid.dim() == 1 {
            w.write_record(["x1", "value"])?;
        } else {
            w.write_record(["x1", "x2", "value"])?;
        }
        for (k, v) in self.values.iter().enumerate() {
            let x = self.grid.coords(k);
            if self.grid.dim() == 1 {
                w.write_record([x[0].to_string(), v.to_string()])?;
            } else {
                w.write_record([x[0].to_string(), x[1].to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// A vector per active cell, aligned with [`Grid::cells`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub grid: Arc<Grid>,
    pub values: Vec<Vec2>,
}

impl CellField {
    pub fn centers(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.grid.cells().iter().map(|c| c.center)
    }
}

/// Forward-difference gradient on every active cell.
pub fn discrete_gradient(f: &GridField) -> CellField {
    let h = f.grid.spacing();
    let values = f.grid.cells().iter().map(|c| c.gradient(&f.values, h)).collect();
    CellField { grid: f.grid.clone(), values }
}

/// `max |f|` over active nodes of the closed ball.
pub fn sup_on_ball(f: &GridField, center: Vec2, rho: f64) -> Result<f64> {
    let mut found = false;
    let mut best = 0.0_f64;
    for k in f.grid.nodes_in_ball(center, rho) {
        found = true;
        best = best.max(f.values[k].abs());
    }
    if found {
        Ok(best)
    } else {
        Err(usage(format!("ball of radius {rho} contains no grid node")))
    }
}

/// Average cell gradient over cells centered in the ball.
pub fn mean_gradient_on_ball(f: &GridField, center: Vec2, r: f64) -> Result<Vec2> {
    let h = f.grid.spacing();
    let (mut sum, mut count) = (Vec2::zeros(), 0usize);
    for c in f.grid.cells_in_ball(center, r) {
        sum += c.gradient(&f.values, h);
        count += 1;
    }
    if count == 0 {
        return Err(usage(format!("ball of radius {r} contains no gradient cell")));
    }
    Ok(sum / count as f64)
}

/// `Σ |∇f − mean|^q hⁿ` over cells centered in the ball.
pub fn oscillation_integral(f: &GridField, center: Vec2, r: f64, q: f64) -> Result<f64> {
    let mean = mean_gradient_on_ball(f, center, r)?;
    let h = f.grid.spacing();
    let sum: f64 = f
        .grid
        .cells_in_ball(center, r)
        .map(|c| (c.gradient(&f.values, h) - mean).norm().powf(q))
        .sum();
    Ok(sum * f.grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn interval(a: f64, b: f64, h: f64) -> Arc<Grid> {
        make_grid(Domain::Interval { a, b }, h).unwrap()
    }

    #[test]
    fn counting_examples() {
        let g = interval(-1.0, 1.0, 0.5);
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.boundary_nodes().count(), 2);
        let g = make_grid(Domain::Rectangle { x: [0.0, 1.0], y: [0.0, 1.0] }, 0.5).unwrap();
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.boundary_nodes().count(), 8);
        assert_eq!(g.cells().len(), 4);
    }

    #[test]
    fn disc_interior_matches_point_in_disc() {
        let g = make_grid(Domain::Disc { radius: 1.0 }, 0.4).unwrap();
        let mut brute = 0;
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                if ((i * i + j * j) as f64).sqrt() * 0.4 <= 1.0 {
                    brute += 1;
                }
            }
        }
        assert_eq!(g.interior_nodes().count(), brute);
        for k in g.boundary_nodes() {
            assert!(g.coords(k).norm() > 1.0);
            assert!(g.neighbors(k).any(|n| g.class(n) == NodeClass::Interior));
        }
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(make_grid(Domain::Interval { a: 0.0, b: 1.0 }, 0.75).is_err());
        assert!(make_grid(Domain::Interval { a: 0.0, b: 1.0 }, 0.3).is_err());
        assert!(make_grid(Domain::Interval { a: 0.0, b: 1.0 }, -0.1).is_err());
        assert!(make_grid(Domain::Disc { radius: 1.0 }, 1.5).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = make_grid(Domain::Rectangle { x: [0.0, 1.0], y: [-1.0, 1.0] }, 0.25).unwrap();
        let f = GridField::from_fn(g.clone(), |x| 3.0 * x[0] - 2.0 * x[1]).unwrap();
        for v in discrete_gradient(&f).values {
            assert_relative_eq!(v, Vec2::new(3.0, -2.0), epsilon = 1e-12);
        }
        let g = interval(0.0, 1.0, 0.25);
        let f = GridField::from_fn(g, |x| x[0] * x[0]).unwrap();
        let d: Vec<f64> = discrete_gradient(&f).values.iter().map(|v| v[0]).collect();
        for (got, want) in d.iter().zip([0.25, 0.75, 1.25, 1.75]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn ball_sup_examples() {
        let g = interval(-1.0, 1.0, 0.01);
        let f = GridField::from_fn(g.clone(), |x| x[0].abs()).unwrap();
        assert_relative_eq!(sup_on_ball(&f, Vec2::zeros(), 0.5).unwrap(), 0.5, epsilon = 1e-12);
        let f = GridField::from_fn(g.clone(), |x| x[0] * x[0]).unwrap();
        assert!((sup_on_ball(&f, Vec2::zeros(), 0.3).unwrap() - 0.09).abs() <= 2.0 * 0.3 * 0.01);
        assert!(sup_on_ball(&f, Vec2::new(5.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn oscillation_of_parabola() {
        let g = interval(-1.0, 1.0, 0.01);
        let f = GridField::from_fn(g, |x| 0.5 * x[0] * x[0]).unwrap();
        assert!(mean_gradient_on_ball(&f, Vec2::zeros(), 0.5).unwrap().norm() < 0.01);
        let osc = oscillation_integral(&f, Vec2::zeros(), 0.5, 2.0).unwrap();
        assert!((osc - 1.0 / 12.0).abs() < 0.02 / 12.0);
    }

    #[test]
    fn interpolation_is_exact_on_bilinear_fields() {
        let g = make_grid(Domain::Disc { radius: 1.0 }, 0.125).unwrap();
        let f = GridField::from_fn(g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]).unwrap();
        let p = Vec2::new(0.3, -0.41);
        assert_relative_eq!(f.interpolate(p).unwrap(), 1.0 + 0.6 + 0.41 - 0.5 * 0.3 * 0.41, epsilon = 1e-12);
        assert!(f.interpolate(Vec2::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn csv_has_documented_columns() {
        let g = interval(0.0, 1.0, 0.5);
        let f = GridField::from_fn(g, |x| x[0]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,value\n0,0\n0.5,0.5\n"));
    }
}
