//! Named catalog of obstacle and boundary functions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::Vec2;
use crate::error::{domain, Result};
use crate::grid::{Grid, GridField};

/// A scalar function of position chosen by name with numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + slope·|x|`.
    Cone {
        #[serde(default = "one")]
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset − amplitude·|x|^{1+beta}`.
    Power {
        amplitude: f64,
        beta: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `slope·x − amplitude·|x|^{1+beta}`.
    Tilted {
        slope: [f64; 2],
        amplitude: f64,
        beta: f64,
    },
    /// One-dimensional dead-core solution `c·(x₁ − front)₊^{p/(p−γ)}`, exact in
    /// any dimension. Missing `p`, `gamma` are taken from the problem.
    DeadCore {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default)]
        front: f64,
    },
    /// Radial dead-core profile `c_n·|x|^{p/(p−γ)}` with the dimension-dependent
    /// constant. It solves the Euler–Lagrange equation away from the origin but
    /// for n ≥ 2 it need not minimize: at p = 2, γ = 1/2 on the unit disc a
    /// positive competitor has lower energy.
    RadialDeadCore {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

/// Growth exponent `p/(p−γ)` of the dead-core profile.
pub fn dead_core_exponent(p: f64, gamma: f64) -> f64 {
    p / (p - gamma)
}

/// Constant `c` of the dead-core profile `c·r^κ`, from
/// `c^{p−γ} κ^{p−1} [(κ−1)(p−1) + (n−1)] = γ` (`n = 1` for the planar profile).
pub fn dead_core_constant(p: f64, gamma: f64, dim: usize) -> Result<f64> {
    if !(p >= 2.0) || !(gamma > 0.0 && gamma < 1.0) || !(dim == 1 || dim == 2) {
        return Err(domain("dead-core profile needs p >= 2, gamma in (0,1) and dimension 1 or 2"));
    }
    let k = dead_core_exponent(p, gamma);
    let bracket = (k - 1.0) * (p - 1.0) + (dim - 1) as f64;
    Ok((gamma / (k.powf(p - 1.0) * bracket)).powf(1.0 / (p - gamma)))
}

impl Profile {
    /// Evaluates the profile; `p` and `gamma` fill missing dead-core parameters.
    pub fn evaluator(&self, p: f64, gamma: f64, dim: usize) -> Result<Box<dyn Fn(Vec2) -> f64 + Send + Sync>> {
        Ok(match *self {
            Profile::Zero => Box::new(|_| 0.0),
            Profile::Constant { value } => Box::new(move |_| value),
            Profile::Cone { slope, offset } => Box::new(move |x| offset + slope * x.norm()),
            Profile::Power { amplitude, beta, offset } => {
                check_beta(beta)?;
                Box::new(move |x| offset - amplitude * x.norm().powf(1.0 + beta))
            }
            Profile::Tilted { slope, amplitude, beta } => {
                check_beta(beta)?;
                let q = Vec2::from(slope);
                Box::new(move |x| q.dot(&x) - amplitude * x.norm().powf(1.0 + beta))
            }
            Profile::DeadCore { p: pp, gamma: gg, front } => {
                let (p, gamma) = (pp.unwrap_or(p), gg.unwrap_or(gamma));
                let c = dead_core_constant(p, gamma, 1)?;
                let k = dead_core_exponent(p, gamma);
                Box::new(move |x| c * (x[0] - front).max(0.0).powf(k))
            }
            Profile::RadialDeadCore { p: pp, gamma: gg } => {
                let (p, gamma) = (pp.unwrap_or(p), gg.unwrap_or(gamma));
                let c = dead_core_constant(p, gamma, dim)?;
                let k = dead_core_exponent(p, gamma);
                Box::new(move |x| c * x.norm().powf(k))
            }
        })
    }

    /// Samples the profile on every active node.
    pub fn sample(&self, grid: &Arc<Grid>, p: f64, gamma: f64) -> Result<GridField> {
        let f = self.evaluator(p, gamma, grid.dim())?;
        GridField::from_fn(grid.clone(), f)
    }

    /// Whether this is an exact dead-core solution (used to report errors
    /// against a closed form).
    pub fn is_dead_core(&self) -> bool {
        matches!(self, Profile::DeadCore { .. })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("obstacle smoothness beta = {beta} must lie in (0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dead_core_constant_for_quadratic_growth() {
        assert_relative_eq!(dead_core_constant(2.0, 0.5, 1).unwrap(), (9.0f64 / 8.0).powf(2.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn dead_core_constant_solves_its_equation() {
        for (p, g, n) in [(2.0, 0.25, 1), (3.0, 0.5, 1), (2.5, 0.7, 2)] {
            let c = dead_core_constant(p, g, n).unwrap();
            let k = dead_core_exponent(p, g);
            let lhs = c.powf(p - g) * k.powf(p - 1.0) * ((k - 1.0) * (p - 1.0) + (n - 1) as f64);
            assert_relative_eq!(lhs, g, max_relative = 1e-12);
        }
    }

    #[test]
    fn catalog_values() {
        let x = Vec2::new(0.5, 0.0);
        let f = Profile::Power { amplitude: 2.0, beta: 1.0, offset: 0.0 }.evaluator(2.0, 0.5, 1).unwrap();
        assert_relative_eq!(f(x), -0.5);
        let f = Profile::Tilted { slope: [1.0, 0.0], amplitude: 1.0, beta: 1.0 }.evaluator(2.0, 0.5, 1).unwrap();
        assert_relative_eq!(f(x), 0.25);
        let f = Profile::DeadCore { p: None, gamma: None, front: 0.0 }.evaluator(2.0, 0.5, 1).unwrap();
        assert_eq!(f(Vec2::new(-0.3, 0.0)), 0.0);
        assert!(Profile::Power { amplitude: 1.0, beta: 1.5, offset: 0.0 }.evaluator(2.0, 0.5, 1).is_err());
    }
}
