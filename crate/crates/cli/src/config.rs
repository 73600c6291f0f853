//! Experiment configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use singular_obstacle::energy::DensityKind;
use singular_obstacle::regularity::theoretical_exponents;
use singular_obstacle::{make_grid, Domain, EnergyDensity, Error, Profile, ProblemSpec, Result, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    /// Integrand; the p-power density of the problem when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityKind>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: Domain,
    pub h: f64,
    pub p: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub delta: f64,
    /// Gradient Hölder exponent of solutions without the singular term; an
    /// opaque input that only tightens the predicted α.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub obstacle: Profile,
    pub boundary: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Designated free-boundary point; the contact-side free-boundary node
    /// nearest the domain center when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 2]>,
    /// Explicit fit radii, strictly decreasing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Ladder `rho_max·2^{−k}`, `k = 0..=levels`, cut at four cells.
    pub rho_max: f64,
    pub levels: usize,
    /// Oscillation exponent of the Campanato fit; the growth exponent of the
    /// density when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub k_max: usize,
    pub dyadic_base: f64,
    /// Allowed `|slope − (1+τ)|`.
    pub tolerance: f64,
    /// Contact threshold; `h^{1+τ}` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_detach: Option<f64>,
    /// Structural sampling radii of `check-energy`.
    pub energy_radius_min: f64,
    pub energy_radius_max: f64,
    pub energy_radii: usize,
    pub energy_directions: usize,
    pub convexity_pairs: usize,
    pub pair_radius: f64,
    pub derivative_points: usize,
    pub derivative_step: f64,
    pub derivative_tolerance: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            x0: None,
            radii: None,
            rho_max: 0.5,
            levels: 6,
            q: None,
            k_max: 3,
            dyadic_base: 8.0,
            tolerance: 0.1,
            tol_detach: None,
            energy_radius_min: 1e-3,
            energy_radius_max: 1e3,
            energy_radii: 241,
            energy_directions: 64,
            convexity_pairs: 10_000,
            pair_radius: 2.0,
            derivative_points: 1_000,
            derivative_step: 1e-3,
            derivative_tolerance: 1e-6,
        }
    }
}

/// Parameter grid; absent lists keep the problem value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<f64>,
    /// `[p, gamma]` pairs used instead of the product of `p` and `gamma`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn one() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Usage(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Usage(format!("cannot serialize config: {e}")))
    }

    /// Checks every block against the preconditions of the operations that
    /// will consume it.
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let a = &self.analysis;
        if !(a.tolerance > 0.0) {
            return Err(Error::Usage("analysis.tolerance must be positive".into()));
        }
        if !(a.rho_max > 0.0) || !(a.dyadic_base > 1.0) {
            return Err(Error::Usage("analysis.rho_max must be positive and dyadic_base above 1".into()));
        }
        if let Some(q) = a.q {
            if !(q >= 1.0) {
                return Err(Error::Usage("analysis.q must be at least 1".into()));
            }
        }
        if let Some(problem) = &self.problem {
            problem.spec(self.density.as_ref())?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.pairs.iter().any(|pg| !pg.iter().all(|v| v.is_finite())) {
                return Err(Error::Usage("sweep pairs must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn require_problem(&self) -> Result<&ProblemConfig> {
        self.problem.as_ref().ok_or_else(|| Error::Usage("the config has no [problem] block".into()))
    }
}

impl ProblemConfig {
    /// Builds and validates the discrete problem.
    pub fn spec(&self, density: Option<&DensityKind>) -> Result<ProblemSpec> {
        theoretical_exponents(self.p, self.gamma, self.beta, self.sigma)?;
        let grid = make_grid(self.domain.clone(), self.h)?;
        let obstacle = self.obstacle.sample(&grid, self.p, self.gamma)?;
        let boundary = self.boundary.sample(&grid, self.p, self.gamma)?;
        let spec = ProblemSpec::new(grid, self.p, self.gamma, self.beta, self.delta, obstacle, boundary)?;
        let Some(kind) = density else { return Ok(spec) };
        if kind.p() != self.p {
            return Err(Error::Usage(format!(
                "density exponent {} differs from problem p = {}",
                kind.p(),
                self.p
            )));
        }
        spec.with_density(EnergyDensity::from_kind(kind, self.domain.dim())?)
    }
}
