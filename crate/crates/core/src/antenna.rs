//! Antenna gain models: the UAV's conical aperture, the uptilted
//! tri-sector pattern used for sub-6GHz ground stations, and the
//! beamforming main-lobe model used at millimeter-wave.
//!
//! Gains are linear power ratios everywhere; dB appears only at the
//! config/report boundary. The vertical-pattern formula works in degrees
//! by definition, so the degree/radian conversion is localized here.

use crate::error::{Error, Result};
use crate::geometry::Deployment;

/// Uptilted tri-sector GS antenna (sub-6GHz backhaul).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LteAntenna {
    /// Constant horizontal gain, linear (from a non-positive dB figure).
    pub mu_h: f64,
    /// Vertical uptilt angle, degrees.
    pub phi_t: f64,
}

impl LteAntenna {
    pub fn new(mu_h: f64, phi_t: f64) -> Result<Self> {
        if !(mu_h > 0.0 && mu_h <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mu_h must lie in (0, 1] (got {mu_h})"
            )));
        }
        if !(0.0..=90.0).contains(&phi_t) {
            return Err(Error::InvalidArgument(format!(
                "phi_t must lie in [0, 90] degrees (got {phi_t})"
            )));
        }
        Ok(Self { mu_h, phi_t })
    }
}

/// Beamforming GS antenna (millimeter-wave backhaul).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmwaveAntenna {
    /// Main-lobe gain, linear.
    pub mu_m: f64,
    /// GS beamwidth, radians.
    pub omega_g: f64,
    /// Probability that an interfering GS beam happens to point at the UAV.
    pub zeta: f64,
}

impl MmwaveAntenna {
    pub fn new(mu_m: f64, omega_g: f64, zeta: f64) -> Result<Self> {
        if !(mu_m > 0.0) {
            return Err(Error::InvalidArgument(format!("mu_m must be > 0 (got {mu_m})")));
        }
        if !(omega_g > 0.0 && omega_g < 2.0 * std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!(
                "omega_g must lie in (0, 2pi) (got {omega_g})"
            )));
        }
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::InvalidArgument(format!(
                "zeta must lie in [0, 1] (got {zeta})"
            )));
        }
        Ok(Self { mu_m, omega_g, zeta })
    }
}

/// UAV aperture described by its beamwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavAperture {
    /// Horizontal and vertical beamwidth, radians.
    pub omega: f64,
}

impl UavAperture {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 2.0 * std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!(
                "omega must lie in (0, 2pi) (got {omega})"
            )));
        }
        Ok(Self { omega })
    }

    /// Main-lobe gain of this aperture.
    pub fn gain(&self) -> f64 {
        aperture_gain(self.omega)
    }
}

/// Main-lobe gain of a rectangular-pattern aperture of beamwidth `omega`:
/// 16 pi / omega^2. The gain outside the main lobe is zero by the callers'
/// contract.
pub fn aperture_gain(omega: f64) -> f64 {
    debug_assert!(omega > 0.0 && omega < 2.0 * std::f64::consts::PI);
    16.0 * std::f64::consts::PI / (omega * omega)
}

/// Vertical gain of the uptilted pattern at vertical angle `phi` degrees,
/// for uptilt `phi_t` degrees: 10^(-min(12 ((phi - phi_t)/10)^2, 20)/10).
pub fn lte_vertical_gain(phi_deg: f64, phi_t_deg: f64) -> f64 {
    let x = (phi_deg - phi_t_deg) / 10.0;
    let att_db = (12.0 * x * x).min(20.0);
    10f64.powf(-att_db / 10.0)
}

/// Total gain of the tri-sector antenna at vertical angle `phi` degrees:
/// max(mu_h * mu_v(phi), 10^-2.5).
pub fn lte_total_gain(phi_deg: f64, ant: &LteAntenna) -> f64 {
    (ant.mu_h * lte_vertical_gain(phi_deg, ant.phi_t)).max(10f64.powf(-2.5))
}

/// Gain of a millimeter-wave GS towards the UAV: the full main-lobe gain
/// when the beam is aligned with the UAV, zero otherwise. The serving GS
/// is always aligned.
pub fn mmwave_gain(aligned: bool, ant: &MmwaveAntenna) -> f64 {
    if aligned {
        ant.mu_m
    } else {
        0.0
    }
}

/// Uptilt angle aimed at the mean serving distance:
/// atan(dgamma / E[R1]) with E[R1] = 1/(2 sqrt(lambda)), in degrees.
///
/// Derived, never configured; recompute whenever lambda or a height changes.
pub fn derived_uptilt_deg(dep: &Deployment) -> f64 {
    f64::atan2(dep.height_diff(), dep.mean_serving_distance()).to_degrees()
}

// ---------------------------------------------------------------------------
