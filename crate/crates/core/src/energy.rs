//! Energy densities, the growth function `ω` with its primitive, and
//! sampling-based checks of the structural bounds and of the convexity gap.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Safety margin applied to the sampled critical bump weight so the
/// operative weight leaves a strictly convex profile.
const BUMP_WEIGHT_MARGIN: f64 = 0.9;
const BUMP_WEIGHT_SAMPLES: usize = 8192;

/// Coefficients of the growth function `ω(z) = power_weight·z^{p−1} + linear_weight·z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub power_weight: f64,
    pub linear_weight: f64,
    pub p: f64,
}

impl GrowthParams {
    pub fn new(power_weight: f64, linear_weight: f64, p: f64) -> Result<Self> {
        if !(power_weight >= 0.0 && linear_weight >= 0.0) {
            return Err(domain("growth weights must be nonnegative"));
        }
        if power_weight + linear_weight <= 0.0 {
            return Err(domain("growth weights must not both vanish"));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(domain(format!("growth exponent p = {p} must satisfy p >= 2")));
        }
        Ok(Self { power_weight, linear_weight, p })
    }

    pub fn p_power(p: f64) -> Result<Self> {
        Self::new(1.0, 0.0, p)
    }

    pub fn quadratic() -> Self {
        Self { power_weight: 0.0, linear_weight: 1.0, p: 2.0 }
    }

    /// `ω(z)`.
    pub fn omega(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(domain(format!("omega needs z >= 0, got {z}")));
        }
        Ok(self.power_weight * z.powf(self.p - 1.0) + self.linear_weight * z)
    }

    /// The primitive `G(z) = ∫₀^z ω`.
    pub fn primitive(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(domain(format!("primitive needs z >= 0, got {z}")));
        }
        Ok(self.power_weight * z.powf(self.p) / self.p + self.linear_weight * z * z / 2.0)
    }

    /// Integrability exponent of the Campanato oscillation: 2 without the
    /// power term, p otherwise.
    pub fn oscillation_exponent(&self) -> f64 {
        if self.power_weight == 0.0 {
            2.0
        } else {
            self.p
        }
    }
}

/// Value, gradient and Hessian of a function of `ξ ∈ ℝⁿ`, `n ∈ {1, 2}`.
///
/// One-dimensional jets are stored embedded in the plane with a zero second
/// coordinate; only the leading `dim × dim` block is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub dim: usize,
    pub value: f64,
    pub gradient: Vec2,
    pub hessian: Mat2,
}

impl Jet2 {
    pub fn gradient_components(&self) -> &[f64] {
        &self.gradient.as_slice()[..self.dim]
    }

    /// Eigenvalues of the active Hessian block in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.hessian[(0, 0)]];
        }
        let (a, b, c) = (self.hessian[(0, 0)], self.hessian[(0, 1)], self.hessian[(1, 1)]);
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        vec![mid - rad, mid + rad]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0_f64, |m, l| m.max(l.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.hessian[(0, 1)] - self.hessian[(1, 0)]).abs()
            <= tol * (1.0 + self.hessian.amax())
    }
}

/// A jet together with the evaluation flags of the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityJet {
    pub jet: Jet2,
    /// The Hessian has no finite limit representative here (p-power, 2 < p < 4, ξ = 0).
    pub singular: bool,
    /// The bump weight exceeds the validated convex range.
    pub nonconvex_warning: bool,
}

/// The supported integrands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityKind {
    /// `|ξ|^p / p`.
    PPower { p: f64 },
    /// `|ξ|² / 2`.
    Quadratic,
    /// Second-order remainder of `|·|^p` at `tilt`, sampled at scale `scale`.
    Tilted { p: f64, scale: f64, tilt: [f64; 2] },
    /// Same remainder taken of the bumped profile
    /// `|z|^p + bump_weight·|z|²(bump_radius² − |z|²)³` (bump supported in `|z| ≤ bump_radius`).
    Convexified {
        p: f64,
        scale: f64,
        tilt: [f64; 2],
        bump_radius: f64,
        bump_weight: f64,
    },
}

impl DensityKind {
    pub fn name(&self) -> &'static str {
        match self {
            DensityKind::PPower { .. } => "p_power",
            DensityKind::Quadratic => "quadratic",
            DensityKind::Tilted { .. } => "tilted",
            DensityKind::Convexified { .. } => "convexified",
        }
    }

    pub fn p(&self) -> f64 {
        match *self {
            DensityKind::PPower { p }
            | DensityKind::Tilted { p, .. }
            | DensityKind::Convexified { p, .. } => p,
            DensityKind::Quadratic => 2.0,
        }
    }
}

/// An energy density in dimension `dim` with its growth constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDensity {
    pub kind: DensityKind,
    pub growth: GrowthParams,
    pub dim: usize,
    /// Cached operative bump weight for the convexified kind.
    #[serde(skip)]
    bump_limit: Option<f64>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(domain(format!("dimension must be 1 or 2, got {dim}")))
    }
}

fn check_tilt(scale: f64, tilt: [f64; 2], dim: usize) -> Result<()> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(domain(format!("scale must lie in (0, 1], got {scale}")));
    }
    if dim == 1 && tilt[1] != 0.0 {
        return Err(domain("a one-dimensional tilt must have zero second component"));
    }
    if !tilt.iter().all(|t| t.is_finite()) {
        return Err(domain("tilt must be finite"));
    }
    Ok(())
}

impl EnergyDensity {
    pub fn p_power(p: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { kind: DensityKind::PPower { p }, growth: GrowthParams::p_power(p)?, dim, bump_limit: None })
    }

    pub fn quadratic(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { kind: DensityKind::Quadratic, growth: GrowthParams::quadratic(), dim, bump_limit: None })
    }

    /// Default growth: `power_weight = scale^{p−2}`, `linear_weight = |tilt|^{p−2}`
    /// (plus one when the tilt vanishes, so the weights never both vanish).
    pub fn tilted(p: f64, scale: f64, tilt: [f64; 2], dim: usize) -> Result<Self> {
        check_dim(dim)?;
        check_tilt(scale, tilt, dim)?;
        let growth = default_tilt_growth(p, scale, tilt)?;
        Ok(Self { kind: DensityKind::Tilted { p, scale, tilt }, growth, dim, bump_limit: None })
    }

    pub fn convexified(
        p: f64,
        scale: f64,
        tilt: [f64; 2],
        bump_radius: f64,
        bump_weight: f64,
        dim: usize,
    ) -> Result<Self> {
        check_dim(dim)?;
        check_tilt(scale, tilt, dim)?;
        if !(bump_radius > 0.0) || !(bump_weight > 0.0) {
            return Err(domain("bump radius and weight must be positive"));
        }
        let growth = default_tilt_growth(p, scale, tilt)?;
        Ok(Self {
            kind: DensityKind::Convexified { p, scale, tilt, bump_radius, bump_weight },
            growth,
            dim,
            bump_limit: Some(operative_bump_weight(p, bump_radius, dim)?),
        })
    }

    /// Builds any kind with its default growth.
    pub fn from_kind(kind: &DensityKind, dim: usize) -> Result<Self> {
        match *kind {
            DensityKind::PPower { p } => Self::p_power(p, dim),
            DensityKind::Quadratic => Self::quadratic(dim),
            DensityKind::Tilted { p, scale, tilt } => Self::tilted(p, scale, tilt, dim),
            DensityKind::Convexified { p, scale, tilt, bump_radius, bump_weight } => {
                Self::convexified(p, scale, tilt, bump_radius, bump_weight, dim)
            }
        }
    }

    pub fn with_growth(mut self, growth: GrowthParams) -> Self {
        self.growth = growth;
        self
    }

    pub fn p(&self) -> f64 {
        self.kind.p()
    }

    /// Checks the parameters, for densities built by hand or deserialized.
    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim)?;
        GrowthParams::new(self.growth.power_weight, self.growth.linear_weight, self.growth.p)?;
        match self.kind {
            DensityKind::PPower { p } => GrowthParams::p_power(p).map(|_| ()),
            DensityKind::Quadratic => Ok(()),
            DensityKind::Tilted { p, scale, tilt } => {
                GrowthParams::p_power(p)?;
                check_tilt(scale, tilt, self.dim)
            }
            DensityKind::Convexified { p, scale, tilt, bump_radius, bump_weight } => {
                GrowthParams::p_power(p)?;
                check_tilt(scale, tilt, self.dim)?;
                if bump_radius > 0.0 && bump_weight > 0.0 {
                    Ok(())
                } else {
                    Err(domain("bump radius and weight must be positive"))
                }
            }
        }
    }

    /// Distance from `ξ` to the points where the density is not three times
    /// differentiable or its Hessian degenerates: the origin of `|·|^p`
    /// (`p ≠ 2`) seen through the tilt, and the edge of the bump. Infinite for
    /// quadratic densities.
    pub fn smoothness_radius(&self, xi: Vec2) -> f64 {
        let kink = |p: f64, z: Vec2, scale: f64| if p == 2.0 { f64::INFINITY } else { z.norm() / scale };
        match self.kind {
            DensityKind::PPower { p } => kink(p, xi, 1.0),
            DensityKind::Quadratic => f64::INFINITY,
            DensityKind::Tilted { p, scale, tilt } => kink(p, scale * xi + Vec2::from(tilt), scale),
            DensityKind::Convexified { p, scale, tilt, bump_radius, .. } => {
                let z = scale * xi + Vec2::from(tilt);
                kink(p, z, scale).min((z.norm() - bump_radius).abs() / scale)
            }
        }
    }

    /// `H(ξ)`; cheaper than [`EnergyDensity::jet`].
    pub fn value(&self, xi: Vec2) -> f64 {
        match self.kind {
            DensityKind::PPower { p } => xi.norm().powf(p) / p,
            DensityKind::Quadratic => 0.5 * xi.norm_squared(),
            DensityKind::Tilted { p, scale, tilt } => {
                let a = Vec2::from(tilt);
                let z = scale * xi + a;
                let na = a.norm();
                (z.norm().powf(p) - na.powf(p) - p * scale * pow_or_zero(na, p - 2.0) * a.dot(&xi))
                    / (p * scale * scale)
            }
            DensityKind::Convexified { p, scale, tilt, bump_radius, bump_weight } => {
                let a = Vec2::from(tilt);
                let z = scale * xi + a;
                let hz = bumped_power_jet(p, bump_radius, bump_weight, z, 2).value;
                let ha = bumped_power_jet(p, bump_radius, bump_weight, a, 2);
                (hz - ha.value - scale * ha.gradient.dot(&xi)) / (p * scale * scale)
            }
        }
    }

    /// `(H(ξ), ∇H(ξ))`.
    pub fn value_and_gradient(&self, xi: Vec2) -> (f64, Vec2) {
        match self.kind {
            DensityKind::PPower { p } => {
                let r = xi.norm();
                if r == 0.0 {
                    return (0.0, Vec2::zeros());
                }
                let rp2 = r.powf(p - 2.0);
                (rp2 * r * r / p, rp2 * xi)
            }
            DensityKind::Quadratic => (0.5 * xi.norm_squared(), xi),
            _ => {
                let j = self.jet(xi).jet;
                (j.value, j.gradient)
            }
        }
    }

    /// Full jet with evaluation flags.
    pub fn jet(&self, xi: Vec2) -> DensityJet {
        let dim = self.dim;
        match self.kind {
            DensityKind::PPower { p } => {
                let (jet, singular) = power_jet(p, xi, dim);
                let jet = Jet2 { value: jet.value / p, gradient: jet.gradient / p, hessian: jet.hessian / p, ..jet };
                DensityJet { jet, singular, nonconvex_warning: false }
            }
            DensityKind::Quadratic => DensityJet {
                jet: Jet2 { dim, value: 0.5 * xi.norm_squared(), gradient: xi, hessian: Mat2::identity() },
                singular: false,
                nonconvex_warning: false,
            },
            DensityKind::Tilted { p, scale, tilt } => {
                let a = Vec2::from(tilt);
                let z = scale * xi + a;
                let (jz, singular) = power_jet(p, z, dim);
                let (ja, _) = power_jet(p, a, dim);
                let s2 = scale * scale;
                let jet = Jet2 {
                    dim,
                    value: (jz.value - ja.value - scale * ja.gradient.dot(&xi)) / (p * s2),
                    gradient: (jz.gradient - ja.gradient) / (p * scale),
                    hessian: jz.hessian / p,
                };
                DensityJet { jet, singular, nonconvex_warning: false }
            }
            DensityKind::Convexified { p, scale, tilt, bump_radius, bump_weight } => {
                let a = Vec2::from(tilt);
                let z = scale * xi + a;
                let jz = bumped_power_jet(p, bump_radius, bump_weight, z, dim);
                let ja = bumped_power_jet(p, bump_radius, bump_weight, a, dim);
                let s2 = scale * scale;
                let jet = Jet2 {
                    dim,
                    value: (jz.value - ja.value - scale * ja.gradient.dot(&xi)) / (p * s2),
                    gradient: (jz.gradient - ja.gradient) / (p * scale),
                    hessian: jz.hessian / p,
                };
                let singular = z.norm() == 0.0 && p > 2.0 && p < 4.0;
                let limit = match self.bump_limit {
                    Some(l) => l,
                    None => operative_bump_weight(p, bump_radius, dim).unwrap_or(0.0),
                };
                let nonconvex_warning = bump_weight > limit;
                DensityJet { jet, singular, nonconvex_warning }
            }
        }
    }
}

fn default_tilt_growth(p: f64, scale: f64, tilt: [f64; 2]) -> Result<GrowthParams> {
    let na = Vec2::from(tilt).norm();
    let linear = if na > 0.0 { na.powf(p - 2.0) } else { 1.0 };
    GrowthParams::new(scale.powf(p - 2.0), linear, p)
}

fn pow_or_zero(r: f64, e: f64) -> f64 {
    if r == 0.0 {
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        r.powf(e)
    }
}

/// Jet of `|z|^p` and whether its Hessian is singular at `z`.
fn power_jet(p: f64, z: Vec2, dim: usize) -> (Jet2, bool) {
    let r = z.norm();
    if r == 0.0 {
        let hessian = if p == 2.0 { 2.0 * Mat2::identity() } else { Mat2::zeros() };
        let singular = p > 2.0 && p < 4.0;
        return (Jet2 { dim, value: 0.0, gradient: Vec2::zeros(), hessian }, singular);
    }
    let rp2 = r.powf(p - 2.0);
    let e = z / r;
    let hessian = p * rp2 * (Mat2::identity() + (p - 2.0) * e * e.transpose());
    (Jet2 { dim, value: rp2 * r * r, gradient: p * rp2 * z, hessian }, false)
}

/// Jet of the bumped profile `|z|^p + weight·|z|²(radius² − |z|²)³` (bump only
/// for `|z| ≤ radius`).
pub fn bumped_power_jet(p: f64, radius: f64, weight: f64, z: Vec2, dim: usize) -> Jet2 {
    let (mut jet, _) = power_jet(p, z, dim);
    let s = z.norm_squared();
    let k2 = radius * radius;
    if s <= k2 {
        let gap = k2 - s;
        jet.value += weight * s * gap.powi(3);
        let radial = 2.0 * weight * (k2 - 4.0 * s) * gap * gap;
        jet.gradient += radial * z;
        jet.hessian += radial * Mat2::identity()
            - 24.0 * weight * (k2 * k2 - 3.0 * k2 * s + 2.0 * s * s) * z * z.transpose();
    }
    jet
}

/// Closed-form bump-weight threshold `(p/152)(radius/4)^{p−8}`.
pub fn admissible_nu(p: f64, radius: f64) -> Result<f64> {
    if !(p >= 2.0) || !(radius > 0.0) {
        return Err(domain("admissible_nu needs p >= 2 and a positive radius"));
    }
    Ok(p / 152.0 * (radius / 4.0).powf(p - 8.0))
}

/// Largest bump weight keeping every sampled Hessian eigenvalue of the
/// bumped profile nonnegative.
///
/// Each eigenvalue is affine in the weight, `base(r) + weight·slope(r)`, with
/// a radial and (in the plane) a tangential branch, so the threshold is the
/// minimum of `−base/slope` over samples with negative slope.
pub fn critical_bump_weight(p: f64, radius: f64, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    if !(p >= 2.0) || !(radius > 0.0) {
        return Err(domain("critical_bump_weight needs p >= 2 and a positive radius"));
    }
    let k2 = radius * radius;
    let mut best = f64::INFINITY;
    for i in 1..=BUMP_WEIGHT_SAMPLES {
        let r = radius * i as f64 / BUMP_WEIGHT_SAMPLES as f64;
        let s = r * r;
        let rp2 = r.powf(p - 2.0);
        let tangential_slope = 2.0 * (k2 - 4.0 * s) * (k2 - s).powi(2);
        let radial_slope = tangential_slope - 24.0 * (k2 * k2 - 3.0 * k2 * s + 2.0 * s * s) * s;
        let mut branches = vec![(p * (p - 1.0) * rp2, radial_slope)];
        if dim == 2 {
            branches.push((p * rp2, tangential_slope));
        }
        for (base, slope) in branches {
            if slope < 0.0 {
                best = best.min(-base / slope);
            }
        }
    }
    Ok(best)
}

/// The bump weight used in practice: the closed-form threshold clamped by the
/// sampled convexity limit (with a 10% margin).
pub fn operative_bump_weight(p: f64, radius: f64, dim: usize) -> Result<f64> {
    Ok(admissible_nu(p, radius)?.min(BUMP_WEIGHT_MARGIN * critical_bump_weight(p, radius, dim)?))
}

/// A sampled point and the ratio it attains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstPoint {
    pub xi: [f64; 2],
    pub ratio: f64,
}

/// Empirical structural constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralReport {
    pub kind: DensityKind,
    pub growth: GrowthParams,
    /// `max |∇H| / ω(|ξ|)`.
    #[serde(rename = "Upsilon_hat")]
    pub gradient_bound: f64,
    /// `max ‖D²H‖ / (ω(|ξ|)/|ξ|)`.
    #[serde(rename = "Lambda_hat")]
    pub hessian_bound: f64,
    /// `min ηᵀD²Hη / (ω(|ξ|)/|ξ|)`.
    #[serde(rename = "lambda_hat")]
    pub ellipticity: f64,
    pub worst_points: StructuralWorstPoints,
    pub samples: usize,
    pub skipped_singular: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralWorstPoints {
    pub gradient_bound: WorstPoint,
    pub hessian_bound: WorstPoint,
    pub ellipticity: WorstPoint,
}

/// Directions used for structural sampling: `±1` on the line, `count`
/// equally spaced angles in the plane.
pub fn sample_directions(dim: usize, count: usize) -> Vec<Vec2> {
    if dim == 1 {
        return vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)];
    }
    (0..count)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / count as f64;
            Vec2::new(t.cos(), t.sin())
        })
        .collect()
}

/// `count` log-spaced radii in `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

pub fn check_structural_bounds(
    density: &EnergyDensity,
    sample_radii: &[f64],
    samples_per_radius: usize,
) -> Result<StructuralReport> {
    if sample_radii.is_empty() || (density.dim == 2 && samples_per_radius == 0) {
        return Err(usage("structural check needs a nonempty sample set"));
    }
    if sample_radii.iter().any(|r| !(*r > 0.0)) {
        return Err(usage("sample radii must be positive"));
    }
    let directions = sample_directions(density.dim, samples_per_radius);
    let mut worst_grad = WorstPoint { xi: [0.0; 2], ratio: f64::NEG_INFINITY };
    let mut worst_hess = worst_grad;
    let mut worst_ell = WorstPoint { xi: [0.0; 2], ratio: f64::INFINITY };
    let (mut samples, mut skipped) = (0, 0);
    for &r in sample_radii {
        let omega = density.growth.omega(r)?;
        for d in &directions {
            let xi = r * d;
            let dj = density.jet(xi);
            if dj.singular {
                skipped += 1;
                continue;
            }
            samples += 1;
            let at = [xi[0], xi[1]];
            let g = dj.jet.gradient_components().iter().map(|c| c * c).sum::<f64>().sqrt() / omega;
            let scale = omega / r;
            let hn = dj.jet.spectral_norm() / scale;
            let ell = dj.jet.min_eigenvalue() / scale;
            if g > worst_grad.ratio {
                worst_grad = WorstPoint { xi: at, ratio: g };
            }
            if hn > worst_hess.ratio {
                worst_hess = WorstPoint { xi: at, ratio: hn };
            }
            if ell < worst_ell.ratio {
                worst_ell = WorstPoint { xi: at, ratio: ell };
            }
        }
    }
    if samples == 0 {
        return Err(usage("every structural sample was a singular point"));
    }
    Ok(StructuralReport {
        kind: density.kind.clone(),
        growth: density.growth,
        gradient_bound: worst_grad.ratio,
        hessian_bound: worst_hess.ratio,
        ellipticity: worst_ell.ratio,
        worst_points: StructuralWorstPoints {
            gradient_bound: worst_grad,
            hessian_bound: worst_hess,
            ellipticity: worst_ell,
        },
        samples,
        skipped_singular: skipped,
    })
}

/// Minimum of the normalized Bregman remainder over a sample of pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityGap {
    pub min_ratio: f64,
    pub worst_pair: ([f64; 2], [f64; 2]),
}

/// `min [H(x) − H(y) − ∇H(y)·(x−y)] / G(|x−y|)` over `pairs`.
pub fn convexity_gap(density: &EnergyDensity, pairs: &[(Vec2, Vec2)]) -> Result<ConvexityGap> {
    if pairs.is_empty() {
        return Err(usage("convexity gap needs at least one pair"));
    }
    let mut best = ConvexityGap { min_ratio: f64::INFINITY, worst_pair: ([0.0; 2], [0.0; 2]) };
    for (x, y) in pairs {
        let d = x - y;
        if d.norm() == 0.0 {
            return Err(usage("convexity gap is undefined for coincident points"));
        }
        let (hy, gy) = density.value_and_gradient(*y);
        let ratio = (density.value(*x) - hy - gy.dot(&d)) / density.growth.primitive(d.norm())?;
        if ratio < best.min_ratio {
            best = ConvexityGap { min_ratio: ratio, worst_pair: ([x[0], x[1]], [y[0], y[1]]) };
        }
    }
    Ok(best)
}

/// Radical inverse of `index` in `base`, the building block of Halton points.
fn radical_inverse(mut index: usize, base: usize) -> f64 {
    let (mut result, mut f) = (0.0, 1.0 / base as f64);
    while index > 0 {
        result += f * (index % base) as f64;
        index /= base;
        f /= base as f64;
    }
    result
}

/// Deterministic low-discrepancy points in the ball of radius `radius`.
pub fn halton_points(dim: usize, count: usize, radius: f64, offset: usize) -> Vec<Vec2> {
    let bases = [[2, 3], [5, 7]][offset % 2];
    let mut out = Vec::with_capacity(count);
    let mut i = 1 + offset / 2 * 7919;
    while out.len() < count {
        let u = 2.0 * radical_inverse(i, bases[0]) - 1.0;
        let v = if dim == 2 { 2.0 * radical_inverse(i, bases[1]) - 1.0 } else { 0.0 };
        i += 1;
        let pt = Vec2::new(u, v);
        if pt.norm() <= 1.0 {
            out.push(radius * pt);
        }
    }
    out
}

/// Deterministic sample pairs in the ball of radius `radius`, with coincident
/// pairs dropped.
pub fn halton_pairs(dim: usize, count: usize, radius: f64) -> Vec<(Vec2, Vec2)> {
    let xs = halton_points(dim, count, radius, 0);
    let ys = halton_points(dim, count, radius, 1);
    xs.into_iter().zip(ys).filter(|(x, y)| x != y).collect()
}

/// Relative discrepancies between analytic derivatives and central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub xi: [f64; 2],
    pub gradient_error: f64,
    pub hessian_error: f64,
}

/// Compares `∇H` with fourth-order central differences of `H`, and `D²H`
/// with those of `∇H`.
///
/// The step is `step·min(1, r)` with `r` the [smoothness
/// radius](EnergyDensity::smoothness_radius), so the truncation error stays
/// relative near the kink of `|·|^p` and the bump edge. Points on those sets
/// (`r = 0`) are not checked and give `None`. Gradient errors are relative to
/// `max(|∇H|, step·|D²H|)`, which stays positive where a remainder density is
/// stationary.
pub fn derivative_check(density: &EnergyDensity, xi: Vec2, step: f64) -> Option<DerivativeCheck> {
    let r = density.smoothness_radius(xi);
    if r == 0.0 {
        return None;
    }
    let step = step * r.min(1.0);
    let dj = density.jet(xi).jet;
    let mut grad_err: f64 = 0.0;
    let mut hess_err: f64 = 0.0;
    let hess_scale = dj.hessian.amax().max(f64::MIN_POSITIVE);
    let grad_scale = dj.gradient.amax().max(step * hess_scale);
    let stencil = |f: &dyn Fn(Vec2) -> f64, e: Vec2| {
        (8.0 * (f(xi + e) - f(xi - e)) - (f(xi + 2.0 * e) - f(xi - 2.0 * e))) / (12.0 * step)
    };
    for k in 0..density.dim {
        let mut e = Vec2::zeros();
        e[k] = step;
        let fd = stencil(&|x| density.value(x), e);
        grad_err = grad_err.max((fd - dj.gradient[k]).abs());
        for l in 0..density.dim {
            let fd = stencil(&|x| density.value_and_gradient(x).1[l], e);
            hess_err = hess_err.max((fd - dj.hessian[(l, k)]).abs());
        }
    }
    Some(DerivativeCheck {
        xi: [xi[0], xi[1]],
        gradient_error: grad_err / grad_scale,
        hessian_error: hess_err / hess_scale,
    })
}
