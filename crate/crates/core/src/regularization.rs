//! Mollifiers, their realization as zonal kernels on the sphere, and cutoff schedules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harmonics::{degree_of, HarmonicsError, SpectralField};
use crate::quadrature::composite_gauss;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularizationError {
    #[error("mollification scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("support radius must be positive and finite, got {0}")]
    InvalidSupport(f64),
    #[error("kernel normalization is degenerate ({0:e})")]
    DegenerateNormalization(f64),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("kernel has band limit {kernel}, field has {field}")]
    BandLimitMismatch { kernel: usize, field: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierProfile {
    /// `exp(−1 / (1 − r²))` for `r < 1`.
    StandardBump,
}

/// A positive, smooth, compactly supported radial profile on `ℝ^D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub profile: MollifierProfile,
    pub support_radius: f64,
}

impl Default for MollifierSpec {
    fn default() -> Self {
        Self {
            profile: MollifierProfile::StandardBump,
            support_radius: 1.0,
        }
    }
}

impl MollifierSpec {
    pub fn new(
        profile: MollifierProfile,
        support_radius: f64,
    ) -> Result<Self, RegularizationError> {
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(RegularizationError::InvalidSupport(support_radius));
        }
        Ok(Self {
            profile,
            support_radius,
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let t = r.abs() / self.support_radius;
        match self.profile {
            MollifierProfile::StandardBump => standard_bump(t),
        }
    }
}

pub fn standard_bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Degree multipliers `c_l` of a zonal convolution, `c_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalKernel {
    multipliers: Vec<f64>,
    lambda: f64,
    radius: f64,
    support_angle: f64,
    resolved: bool,
}

impl ZonalKernel {
    /// The identity kernel, `c_l = 1`.
    pub fn identity(l_max: usize) -> Self {
        Self {
            multipliers: vec![1.0; l_max + 1],
            lambda: f64::INFINITY,
            radius: f64::NAN,
            support_angle: 0.0,
            resolved: true,
        }
    }

    pub fn from_multipliers(multipliers: Vec<f64>) -> Self {
        Self {
            multipliers,
            lambda: f64::NAN,
            radius: f64::NAN,
            support_angle: f64::NAN,
            resolved: true,
        }
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn l_max(&self) -> usize {
        self.multipliers.len() - 1
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Angular support radius of the pulled-back kernel, measured from its centre.
    pub fn support_angle(&self) -> f64 {
        self.support_angle
    }

    /// False when the kernel is narrower than the node spacing of the transform grid;
    /// the multipliers are then all close to one and the cutoff is effectively the band limit.
    pub fn is_resolved(&self) -> bool {
        self.resolved
    }
}

fn angular_spacing(dim: usize, l_max: usize) -> f64 {
    match dim {
        1 => 2.0 * PI / (2 * l_max + 3) as f64,
        _ => PI / (l_max + 1) as f64,
    }
}

/// Multipliers of the normalized zonal kernel `θ ↦ h(Λ·𝔰(θ))` centred at the south pole,
/// by Funk–Hecke: `c_l ∝ ∫ K(β) P_l(cos β) sin^{D−1}β dβ` (for D = 1, `cos(lβ)`).
pub fn build_kernel(
    spec: &MollifierSpec,
    lambda: f64,
    radius: f64,
    dim: usize,
    l_max: usize,
) -> Result<ZonalKernel, RegularizationError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(RegularizationError::InvalidScale(lambda));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(RegularizationError::InvalidSupport(radius));
    }
    if dim != 1 && dim != 2 {
        return Err(RegularizationError::UnsupportedDimension(dim));
    }
    let beta_s = 2.0 * (spec.support_radius / (2.0 * radius * lambda)).atan();
    let panels = ((beta_s * (l_max + 1) as f64 / 2.0).ceil() as usize).max(32);
    let (beta, w) = composite_gauss(0.0, beta_s, panels, 16);
    let kernel: Vec<f64> = beta
        .iter()
        .zip(&w)
        .map(|(b, wi)| {
            let r = lambda * 2.0 * radius * (b / 2.0).tan();
            let jac = if dim == 1 { 1.0 } else { b.sin() };
            wi * spec.eval(r) * jac
        })
        .collect();
    let mut raw = vec![0.0; l_max + 1];
    match dim {
        1 => {
            for (l, c) in raw.iter_mut().enumerate() {
                *c = beta
                    .iter()
                    .zip(&kernel)
                    .map(|(b, k)| k * (l as f64 * b).cos())
                    .sum();
            }
        }
        _ => {
            for (b, k) in beta.iter().zip(&kernel) {
                let z = b.cos();
                let (mut p0, mut p1) = (1.0, z);
                raw[0] += k;
                if l_max >= 1 {
                    raw[1] += k * z;
                }
                for (l, c) in raw.iter_mut().enumerate().skip(2) {
                    let lf = l as f64;
                    let p2 = ((2.0 * lf - 1.0) * z * p1 - (lf - 1.0) * p0) / lf;
                    p0 = p1;
                    p1 = p2;
                    *c += k * p2;
                }
            }
        }
    }
    let norm = raw[0];
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(RegularizationError::DegenerateNormalization(norm));
    }
    let mut multipliers: Vec<f64> = raw.iter().map(|c| c / norm).collect();
    multipliers[0] = 1.0;
    let resolved = beta_s >= angular_spacing(dim, l_max);
    if !resolved {
        log::debug!("kernel support {beta_s:e} rad is below the node spacing at l_max = {l_max}");
    }
    Ok(ZonalKernel {
        multipliers,
        lambda,
        radius,
        support_angle: beta_s,
        resolved,
    })
}

/// `φ_{l,m} ↦ c_l φ_{l,m}`.
pub fn mollify(
    phi: &SpectralField,
    kernel: &ZonalKernel,
) -> Result<SpectralField, RegularizationError> {
    if kernel.l_max() != phi.l_max() {
        return Err(RegularizationError::BandLimitMismatch {
            kernel: kernel.l_max(),
            field: phi.l_max(),
        });
    }
    let mut out = phi.clone();
    let d = phi.dim();
    for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
        *c *= kernel.multipliers[degree_of(d, i)];
    }
    Ok(out)
}

/// `n ↦ coeff · n^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub coeff: f64,
    pub power: f64,
}

impl PowerLaw {
    pub fn new(coeff: f64, power: f64) -> Self {
        Self { coeff, power }
    }

    pub fn eval(&self, n: u32) -> f64 {
        let nf = n as f64;
        let p = if self.power.fract() == 0.0 && self.power.abs() < 64.0 {
            nf.powi(self.power as i32)
        } else {
            nf.powf(self.power)
        };
        self.coeff * p
    }
}

/// Sequences `R_n`, `Λ_n`, `𝔐_n` and the collar constant `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSchedule {
    pub dim: usize,
    pub radius: PowerLaw,
    pub lambda: PowerLaw,
    pub sup_bound: PowerLaw,
    pub alpha: f64,
}

pub const DEFAULT_ALPHA: f64 = 4.0;

impl CutoffSchedule {
    /// `R_n = n`, `Λ_n = n^{D+2}`, `𝔐_n = n`, so the ratio is `1/n`.
    pub fn default_for(dim: usize) -> Self {
        Self {
            dim,
            radius: PowerLaw::new(1.0, 1.0),
            lambda: PowerLaw::new(1.0, dim as f64 + 2.0),
            sup_bound: PowerLaw::new(1.0, 1.0),
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<(), RegularizationError> {
        let bad = |msg: &str| Err(RegularizationError::InvalidSchedule(msg.to_string()));
        if self.dim < 1 {
            return bad("dimension must be at least 1");
        }
        if !(self.radius.coeff > 0.0 && self.radius.power > 0.0) {
            return bad("radius must be a positive, increasing power law");
        }
        if !(self.lambda.coeff > 0.0 && self.lambda.power > 0.0) {
            return bad("mollification scale must be a positive, increasing power law");
        }
        if !(self.sup_bound.coeff >= 0.0) {
            return bad("sup bound coefficient must be non-negative");
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return bad("collar constant must be at least 1");
        }
        for v in [self.radius, self.lambda, self.sup_bound] {
            if !(v.coeff.is_finite() && v.power.is_finite()) {
                return bad("power-law parameters must be finite");
            }
        }
        Ok(())
    }

    pub fn radius_at(&self, n: u32) -> f64 {
        self.radius.eval(n)
    }

    pub fn lambda_at(&self, n: u32) -> f64 {
        self.lambda.eval(n)
    }

    pub fn sup_bound_at(&self, n: u32) -> f64 {
        self.sup_bound.eval(n)
    }

    /// `δ_n = 1/Λ_n`.
    pub fn delta_at(&self, n: u32) -> f64 {
        1.0 / self.lambda_at(n)
    }

    /// Collar half-width `α δ_n`.
    pub fn collar_at(&self, n: u32) -> f64 {
        self.alpha * self.delta_at(n)
    }

    /// Exponent of `n` in `𝔐_n R_n^D / Λ_n`.
    pub fn ratio_exponent(&self) -> f64 {
        self.sup_bound.power + self.dim as f64 * self.radius.power - self.lambda.power
    }

    /// Whether the ratio tends to zero.
    pub fn is_rp_valid(&self) -> bool {
        self.validate().is_ok() && (self.sup_bound.coeff == 0.0 || self.ratio_exponent() < 0.0)
    }
}

/// `𝔐_n R_n^D / Λ_n`.
pub fn ratio(schedule: &CutoffSchedule, n: u32) -> f64 {
    let r = schedule.radius_at(n);
    schedule.sup_bound_at(n) * r.powi(schedule.dim as i32) / schedule.lambda_at(n)
}
