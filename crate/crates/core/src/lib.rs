//! Numerical laboratory for the singular obstacle problem
//!
//! ```text
//! minimize  ∫_Ω H(∇v) + δ (v − φ)^γ   over  v ≥ φ,  v = g on ∂Ω
//! ```
//!
//! with `p ≥ 2`, `0 < γ < 1`, `0 ≤ δ ≤ 1` on intervals, rectangles and discs.
//!
//! * [`energy`]: densities, growth function, structural and convexity checks.
//! * [`grid`]: grids, fields and the discrete operators on them.
//! * [`solver`]: discrete energy, continuation solver and residual diagnostics.
//! * [`freeboundary`]: contact set and free-boundary gradient matching.
//! * [`regularity`]: predicted exponents, exponent fits, dyadic and scaling checks.
//! * [`profiles`]: named obstacle and boundary functions.

pub mod energy;
pub mod error;
pub mod freeboundary;
pub mod grid;
pub mod profiles;
pub mod regularity;
pub mod solver;

pub use energy::{DensityKind, EnergyDensity, GrowthParams, Jet2, Vec2};
pub use error::{Error, Result};
pub use grid::{make_grid, Domain, Grid, GridField};
pub use profiles::Profile;
pub use solver::{solve, ProblemSpec, SolveResult, SolverConfig};
