//! Urban environment model and 3D link geometry: building-blockage LOS
//! probability, the ring-sector beam footprint on the ground plane, and
//! the nearest-station distance law.
//!
//! All quantities are SI internally: meters, per-square-meter densities,
//! radians. Config-facing unit conversion happens at parse time.

use crate::error::{Error, Result};

/// Urban building statistics governing LOS blockage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    /// Building density in buildings per square meter.
    pub beta: f64,
    /// Fraction of ground area occupied by buildings, in (0, 1).
    pub delta: f64,
    /// Rayleigh scale of the building-height distribution, meters.
    pub kappa: f64,
}

impl Environment {
    pub fn new(beta: f64, delta: f64, kappa: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be > 0 (got {beta})")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 1) (got {delta})"
            )));
        }
        if !(kappa > 0.0) {
            return Err(Error::InvalidArgument(format!("kappa must be > 0 (got {kappa})")));
        }
        Ok(Self { beta, delta, kappa })
    }

    /// Width of one blockage cell, 1/sqrt(beta*delta), meters.
    pub fn cell_width(&self) -> f64 {
        1.0 / (self.beta * self.delta).sqrt()
    }
}

/// Ground-station deployment: PPP intensity and endpoint heights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deployment {
    /// GS intensity in stations per square meter.
    pub lambda: f64,
    /// GS height above ground, meters.
    pub gamma_g: f64,
    /// UAV height above ground, meters.
    pub gamma: f64,
}

impl Deployment {
    pub fn new(lambda: f64, gamma_g: f64, gamma: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be > 0 (got {lambda})"
            )));
        }
        if !(gamma_g >= 0.0) || !(gamma >= 0.0) {
            return Err(Error::InvalidArgument(
                "heights must be non-negative".into(),
            ));
        }
        Ok(Self { lambda, gamma_g, gamma })
    }

    /// Height difference gamma - gamma_g, meters (signed).
    pub fn height_diff(&self) -> f64 {
        self.gamma - self.gamma_g
    }

    /// Mean horizontal distance to the nearest station, 1/(2 sqrt(lambda)).
    pub fn mean_serving_distance(&self) -> f64 {
        1.0 / (2.0 * self.lambda.sqrt())
    }
}

/// Ring-sector ground region illuminated by the UAV antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamFootprint {
    /// Minor radius w, meters.
    pub inner: f64,
    /// Major radius v, meters; `f64::INFINITY` when unbounded.
    pub outer: f64,
    /// Arc angle (the antenna beamwidth), radians.
    pub arc: f64,
}

impl BeamFootprint {
    /// Whether a point at horizontal distance `r` and azimuth offset
    /// `psi` (radians, relative to the beam axis) falls inside the sector.
    pub fn contains(&self, r: f64, psi: f64) -> bool {
        let wrapped = wrap_angle(psi).abs();
        wrapped <= self.arc / 2.0 && r >= self.inner && r <= self.outer
    }
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x > std::f64::consts::PI {
        x -= two_pi;
    } else if x < -std::f64::consts::PI {
        x += two_pi;
    }
    x
}

/// Vertical angle atan(dgamma / r) from the UAV to a point at horizontal
/// distance `r`, radians, signed like the height difference. At r = 0 the
/// limit convention sign(dgamma) * pi/2 applies.
pub fn vertical_angle(r: f64, dep: &Deployment) -> f64 {
    debug_assert!(r >= 0.0);
    f64::atan2(dep.height_diff(), r)
}

/// Number of potentially blocking buildings crossed over a horizontal
/// distance `r`: floor(r * sqrt(beta * delta)).
pub fn building_count(r: f64, env: &Environment) -> u64 {
    debug_assert!(r >= 0.0);
    (r * (env.beta * env.delta).sqrt()).floor().max(0.0) as u64
}

/// Probability that the link over horizontal distance `r` is line-of-sight,
/// per the grid-of-buildings blockage model with Rayleigh-distributed
/// building heights. When no building is crossed the link is LOS surely.
pub fn los_probability(r: f64, dep: &Deployment, env: &Environment) -> f64 {
    let d = building_count(r, env);
    if d == 0 {
        return 1.0;
    }
    let high = dep.gamma.max(dep.gamma_g);
    let dg = dep.height_diff().abs();
    let two_kappa_sq = 2.0 * env.kappa * env.kappa;
    let mut p = 1.0;
    for n in 0..d {
        let h = high - (n as f64 + 0.5) * dg / d as f64;
        p *= 1.0 - (-h * h / two_kappa_sq).exp();
        if p == 0.0 {
            break;
        }
    }
    p
}

/// Ring-sector footprint of a beam of width `omega` aimed at the serving
/// station at horizontal distance `r1`.
///
/// Covers every branch of the major/minor radius definitions, including
/// v = infinity for omega >= pi/2 or a serving angle inside the half-beam,
/// and w = 0 once the beam reaches past nadir. A level geometry
/// (dgamma = 0) degenerates smoothly to w = 0, v = infinity.
pub fn footprint(r1: f64, omega: f64, dep: &Deployment) -> BeamFootprint {
    debug_assert!(r1 >= 0.0);
    debug_assert!(omega > 0.0 && omega < 2.0 * std::f64::consts::PI);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let abs_dg = dep.height_diff().abs();
    let abs_phi = vertical_angle(r1, dep).abs();

    let outer = if omega >= half_pi || abs_phi <= omega / 2.0 {
        f64::INFINITY
    } else if abs_phi < half_pi - omega / 2.0 {
        abs_dg / (abs_phi - omega / 2.0).tan()
    } else {
        abs_dg / (half_pi - omega).tan()
    };

    let inner = if abs_phi < half_pi - omega / 2.0 {
        abs_dg / (abs_phi + omega / 2.0).tan()
    } else {
        0.0
    };

    BeamFootprint { inner, outer, arc: omega }
}

/// Density of the horizontal distance to the nearest station of a PPP of
/// intensity lambda: 2 pi lambda r exp(-pi lambda r^2), the Rayleigh law.
pub fn serving_distance_pdf(r1: f64, dep: &Deployment) -> f64 {
    debug_assert!(r1 >= 0.0);
    let pl = std::f64::consts::PI * dep.lambda;
    2.0 * pl * r1 * (-pl * r1 * r1).exp()
}

/// Per-cell cache of the LOS probability.
///
/// The blockage model is piecewise constant in the crossed-building count,
/// so the probability only changes at multiples of the cell width. Values
/// are precomputed once per (deployment, environment) pair; radii beyond
/// the table fall back to direct evaluation.
#[derive(Debug, Clone)]
pub struct LosTable {
    dep: Deployment,
    env: Environment,
    cell: f64,
    values: Vec<f64>,
}

impl LosTable {
    /// Build a table covering radii up to `max_radius` meters.
    pub fn new(dep: &Deployment, env: &Environment, max_radius: f64) -> Self {
        let cell = env.cell_width();
        let cells = ((max_radius / cell).ceil() as usize + 2).min(2_000_000);
        let values = (0..cells)
            .map(|j| los_probability((j as f64 + 0.5) * cell, dep, env))
            .collect();
        Self { dep: *dep, env: *env, cell, values }
    }

    /// LOS probability at horizontal distance `r`.
    pub fn at(&self, r: f64) -> f64 {
        let idx = building_count(r, &self.env) as usize;
        match self.values.get(idx) {
            Some(v) => *v,
            None => los_probability(r, &self.dep, &self.env),
        }
    }

    /// Width of one blockage cell, meters.
    pub fn cell_width(&self) -> f64 {
        self.cell
    }
}

// ---------------------------------------------------------------------------
