//! Evaluation toolkit for the wireless backhaul of low-altitude UAVs
//! served by a network of dedicated ground stations in an urban
//! environment.
//!
//! The crate computes the probability that a UAV establishes a backhaul
//! link of sufficient SINR, and the expected backhaul rate, two ways:
//!
//! - analytically, through interference Laplace transforms over a
//!   Poisson field of ground stations with building-blockage LOS
//!   thinning and Nakagami-m fading ([`analytics`]);
//! - by seeded, reproducible Monte Carlo simulation of the same model
//!   ([`montecarlo`]), which serves as an independent cross-check.
//!
//! Sub-6GHz (LTE-style) and millimeter-wave radio configurations are
//! both supported; [`config`] resolves flat key-value files against the
//! built-in defaults, and [`sweep`] drives parameter sweeps, figure
//! presets and the analytic-vs-MC validation gate.

pub mod antenna;
pub mod config;
pub mod error;
pub mod geometry;
pub mod montecarlo;
pub mod numerics;
pub mod sweep;

pub mod analytics;

pub use error::{Error, Result};
