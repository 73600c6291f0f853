//! The discrete energy `Σ_cells H(Dv)hⁿ + δ Σ_nodes [((v−φ)+ε)^γ − ε^γ] hⁿ`
//! with its gradient and banded Hessians.

use crate::energy::{EnergyDensity, Mat2, Vec2};
use crate::grid::Grid;

use super::band::BandMatrix;

pub(crate) struct Objective<'a> {
    pub grid: &'a Grid,
    pub density: &'a EnergyDensity,
    pub obstacle: &'a [f64],
    pub delta: f64,
    pub gamma: f64,
    pub eps: f64,
    /// Added to every cell Hessian (times the identity) when the principal
    /// part degenerates, as it does for p > 2 at zero gradient.
    pub metric_floor: f64,
}

/// Which nodes are unknowns, and their compact numbering.
pub(crate) struct VarMap {
    pub index: Vec<Option<usize>>,
    pub nodes: Vec<usize>,
    pub bandwidth: usize,
}

impl VarMap {
    pub fn new(grid: &Grid, is_var: impl Fn(usize) -> bool) -> Self {
        let mut index = vec![None; grid.node_count()];
        let mut nodes = Vec::new();
        for k in 0..grid.node_count() {
            if is_var(k) {
                index[k] = Some(nodes.len());
                nodes.push(k);
            }
        }
        let mut bandwidth = 0;
        for c in grid.cells() {
            let corners = [Some(c.base), Some(c.east), c.north];
            for a in corners.iter().flatten() {
                for b in corners.iter().flatten() {
                    if let (Some(i), Some(j)) = (index[*a], index[*b]) {
                        bandwidth = bandwidth.max(i.abs_diff(j));
                    }
                }
            }
        }
        Self { index, nodes, bandwidth }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

impl<'a> Objective<'a> {
    #[inline]
    fn gap(&self, v: &[f64], k: usize) -> f64 {
        (v[k] - self.obstacle[k]).max(0.0)
    }

    #[inline]
    pub fn singular(&self, s: f64) -> f64 {
        if self.eps == 0.0 {
            s.powf(self.gamma)
        } else {
            (s + self.eps).powf(self.gamma) - self.eps.powf(self.gamma)
        }
    }

    #[inline]
    pub fn singular_slope(&self, s: f64) -> f64 {
        self.gamma * (s + self.eps).powf(self.gamma - 1.0)
    }

    #[inline]
    pub fn singular_curvature(&self, s: f64) -> f64 {
        self.gamma * (self.gamma - 1.0) * (s + self.eps).powf(self.gamma - 2.0)
    }

    pub fn principal_energy(&self, v: &[f64]) -> f64 {
        let h = self.grid.spacing();
        let sum: f64 = self.grid.cells().iter().map(|c| self.density.value(c.gradient(v, h))).sum();
        sum * self.grid.cell_volume()
    }

    pub fn energy(&self, v: &[f64]) -> f64 {
        let mut e = self.principal_energy(v);
        if self.delta > 0.0 {
            let s: f64 = (0..v.len()).map(|k| self.singular(self.gap(v, k))).sum();
            e += self.delta * s * self.grid.cell_volume();
        }
        e
    }

    /// Gradient of the principal part alone, written into `grad`.
    pub fn principal_gradient(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        let h = self.grid.spacing();
        let vol = self.grid.cell_volume();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut e = 0.0;
        for c in self.grid.cells() {
            let (val, dh) = self.density.value_and_gradient(c.gradient(v, h));
            e += val;
            let fx = dh[0] * vol / h;
            grad[c.east] += fx;
            grad[c.base] -= fx;
            if let Some(n) = c.north {
                let fy = dh[1] * vol / h;
                grad[n] += fy;
                grad[c.base] -= fy;
            }
        }
        e * vol
    }

    /// Energy and full gradient.
    pub fn energy_gradient(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        let mut e = self.principal_gradient(v, grad);
        if self.delta > 0.0 {
            let vol = self.grid.cell_volume();
            let mut s_sum = 0.0;
            for k in 0..v.len() {
                let s = self.gap(v, k);
                s_sum += self.singular(s);
                grad[k] += self.delta * self.singular_slope(s) * vol;
            }
            e += self.delta * s_sum * vol;
        }
        e
    }

    fn cell_metric(&self, xi: Vec2) -> Mat2 {
        let dj = self.density.jet(xi);
        let mut m = if dj.singular { Mat2::zeros() } else { dj.jet.hessian };
        if self.grid.dim() == 1 {
            m[(0, 1)] = 0.0;
            m[(1, 0)] = 0.0;
            m[(1, 1)] = 0.0;
        }
        m + self.metric_floor * Mat2::identity()
    }

    /// Diagonal of the principal-part Hessian (with floor) at every node.
    pub fn principal_diagonal(&self, v: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        let w = self.grid.cell_volume() / (h * h);
        let mut diag = vec![0.0; v.len()];
        for c in self.grid.cells() {
            let m = self.cell_metric(c.gradient(v, h));
            diag[c.east] += m[(0, 0)] * w;
            match c.north {
                Some(n) => {
                    diag[n] += m[(1, 1)] * w;
                    diag[c.base] += (m[(0, 0)] + 2.0 * m[(0, 1)] + m[(1, 1)]) * w;
                }
                None => diag[c.base] += m[(0, 0)] * w,
            }
        }
        diag
    }

    /// Hessian restricted to `vars`; the singular curvature is included when
    /// `with_singular` is set.
    pub fn hessian(&self, v: &[f64], vars: &VarMap, with_singular: bool) -> BandMatrix {
        let h = self.grid.spacing();
        let w = self.grid.cell_volume() / (h * h);
        let mut a = BandMatrix::zeros(vars.len(), vars.bandwidth);
        for c in self.grid.cells() {
            let (base, east, north) = (vars.index[c.base], vars.index[c.east], c.north.and_then(|n| vars.index[n]));
            if base.is_none() && east.is_none() && north.is_none() {
                continue;
            }
            let m = self.cell_metric(c.gradient(v, h));
            // Columns of the local difference operator for (base, east, north).
            let cols: [(Option<usize>, Vec2); 3] = if c.north.is_some() {
                [(base, Vec2::new(-1.0, -1.0)), (east, Vec2::new(1.0, 0.0)), (north, Vec2::new(0.0, 1.0))]
            } else {
                [(base, Vec2::new(-1.0, 0.0)), (east, Vec2::new(1.0, 0.0)), (None, Vec2::zeros())]
            };
            for (i, ci) in cols.iter() {
                let Some(i) = i else { continue };
                let mci = m * ci;
                for (j, cj) in cols.iter() {
                    let Some(j) = j else { continue };
                    if j <= i {
                        a.add(*i, *j, cj.dot(&mci) * w);
                    }
                }
            }
        }
        if with_singular && self.delta > 0.0 {
            let vol = self.grid.cell_volume();
            for (i, &k) in vars.nodes.iter().enumerate() {
                a.add(i, i, self.delta * self.singular_curvature(self.gap(v, k)) * vol);
            }
        }
        a
    }
}
