//! Contact set, free boundary and first-order matching of `u` and `φ` there.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::energy::Vec2;
use crate::error::{usage, Result};
use crate::grid::{Grid, GridField};
use crate::solver::{ProblemSpec, SolveResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FbSide {
    /// A contact node with a detached neighbour.
    Contact,
    /// A detached node with a contact neighbour.
    Detached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbNode {
    pub node: usize,
    pub x: [f64; 2],
    pub side: FbSide,
    pub grad_u: [f64; 2],
    pub grad_obstacle: [f64; 2],
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactClassification {
    pub grid: Arc<Grid>,
    pub tol_detach: f64,
    /// `u − φ ≤ tol_detach`, per active node.
    pub contact: Vec<bool>,
    /// Interior nodes with an interior neighbour of the opposite class.
    pub free_boundary: Vec<FbNode>,
}

/// Classifies a converged solve.
pub fn classify_contact(result: &SolveResult, spec: &ProblemSpec, tol_detach: f64) -> Result<ContactClassification> {
    if !result.converged {
        return Err(usage("classify_contact needs a converged solve"));
    }
    classify_field(spec, &result.u, tol_detach)
}

/// Classifies any field on the problem grid.
pub fn classify_field(spec: &ProblemSpec, u: &GridField, tol_detach: f64) -> Result<ContactClassification> {
    if **u.grid() != *spec.grid {
        return Err(usage("field does not live on the problem grid"));
    }
    if !(tol_detach >= 0.0) {
        return Err(usage("tol_detach must be nonnegative"));
    }
    let grid = spec.grid.clone();
    let phi = spec.obstacle.values();
    let n = grid.node_count();
    let contact: Vec<bool> = (0..n).map(|k| u.value(k) - phi[k] <= tol_detach).collect();
    let interior = |k: usize| !grid.is_boundary(k);
    let mut free_boundary = Vec::new();
    for k in (0..n).filter(|&k| interior(k)) {
        if !grid.neighbors(k).any(|m| interior(m) && contact[m] != contact[k]) {
            continue;
        }
        let gu = one_sided_gradient(&grid, u.values(), &contact, k);
        let gp = one_sided_gradient(&grid, phi, &contact, k);
        let x = grid.coords(k);
        free_boundary.push(FbNode {
            node: k,
            x: [x[0], x[1]],
            side: if contact[k] { FbSide::Contact } else { FbSide::Detached },
            grad_u: [gu[0], gu[1]],
            grad_obstacle: [gp[0], gp[1]],
            mismatch: (gu - gp).norm(),
        });
    }
    Ok(ContactClassification { grid, tol_detach, contact, free_boundary })
}

/// Per-axis difference at `k`: second-order one-sided into the detached
/// region when a detached neighbour exists along the axis, centered otherwise.
fn one_sided_gradient(grid: &Grid, f: &[f64], contact: &[bool], k: usize) -> Vec2 {
    let h = grid.spacing();
    let slots = grid.neighbor_slots(k);
    let mut g = Vec2::zeros();
    for axis in 0..grid.dim() {
        let (lo, hi) = (slots[2 * axis], slots[2 * axis + 1]);
        let further = |m: usize, upward: bool| grid.neighbor_slots(m)[2 * axis + upward as usize];
        let detached = |m: Option<usize>| m.is_some_and(|m| !contact[m]);
        g[axis] = if detached(hi) {
            let a = hi.unwrap();
            match further(a, true) {
                Some(b) => (-3.0 * f[k] + 4.0 * f[a] - f[b]) / (2.0 * h),
                None => (f[a] - f[k]) / h,
            }
        } else if detached(lo) {
            let a = lo.unwrap();
            match further(a, false) {
                Some(b) => (3.0 * f[k] - 4.0 * f[a] + f[b]) / (2.0 * h),
                None => (f[k] - f[a]) / h,
            }
        } else {
            match (lo, hi) {
                (Some(a), Some(b)) => (f[b] - f[a]) / (2.0 * h),
                (None, Some(b)) => (f[b] - f[k]) / h,
                (Some(a), None) => (f[k] - f[a]) / h,
                (None, None) => 0.0,
            }
        };
    }
    g
}

/// `max |∇u − ∇φ|` over free-boundary nodes; `None` (vacuous) when the free
/// boundary is empty.
pub fn gradient_match(classification: &ContactClassification) -> Option<f64> {
    classification.free_boundary.iter().map(|f| f.mismatch).reduce(f64::max)
}

impl ContactClassification {
    pub fn is_free_boundary(&self, node: usize) -> bool {
        self.free_boundary.iter().any(|f| f.node == node)
    }

    /// Free-boundary node nearest `point`, optionally restricted to one side.
    pub fn nearest(&self, point: Vec2, side: Option<FbSide>) -> Option<&FbNode> {
        self.free_boundary
            .iter()
            .filter(|f| side.map_or(true, |s| f.side == s))
            .min_by(|a, b| {
                let da = (Vec2::from(a.x) - point).norm();
                let db = (Vec2::from(b.x) - point).norm();
                da.total_cmp(&db)
            })
    }

    /// Writes `node,x1[,x2],contact,fb,mismatch` rows (mismatch empty off the
    /// free boundary).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let two_d = self.grid.dim() == 2;
        let mut header = vec!["node", "x1"];
        if two_d {
            header.push("x2");
        }
        header.extend(["contact", "fb", "mismatch"]);
        w.write_record(&header)?;
        for k in 0..self.grid.node_count() {
            let x = self.grid.coords(k);
            let fb = self.free_boundary.iter().find(|f| f.node == k);
            let mut row = vec![k.to_string(), x[0].to_string()];
            if two_d {
                row.push(x[1].to_string());
            }
            row.push((self.contact[k] as u8).to_string());
            row.push((fb.is_some() as u8).to_string());
            row.push(fb.map(|f| f.mismatch.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
