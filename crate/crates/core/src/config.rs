//! Flat key-value configuration files.
//!
//! Format: UTF-8 lines of `key = value [unit]`, grouped under the
//! sections `[environment]`, `[deployment]`, `[radio]` and `[mc]`;
//! `#` starts a comment. Unset keys fall back to the built-in defaults
//! of the selected technology column. Accepted units: `/km2`, `m`,
//! `deg`, `dB`, `dBm`, `W`, `MHz`, `GHz`; a bare number is read in the
//! key's default unit (the unit its default value is quoted in).
//!
//! ```text
//! [deployment]
//! lambda  = 1.25 /km2
//! gamma   = 100 m    # UAV height
//! gamma_g = 30 m
//!
//! [radio]
//! tech  = mmwave
//! theta = 10 dB
//! ```
//!
//! Everything is converted to SI (meters, per-m2, watts, hertz, radians,
//! linear ratios) at parse time. Unknown keys, malformed values,
//! out-of-range values and misplaced units are errors that name the line.

use crate::analytics::{RadioTech, Scenario, TechKind};
use crate::antenna::{LteAntenna, MmwaveAntenna, UavAperture};
use crate::error::{Error, Result};
use crate::geometry::{Deployment, Environment};
use crate::montecarlo::TrialConfig;

/// Default urban environment (both technology columns).
pub fn default_env() -> Environment {
    Environment {
        beta: 300.0 * 1e-6,
        delta: 0.5,
        kappa: 20.0,
    }
}

/// Default deployment: 1.25 GS per km2, 30 m GS height, 100 m UAV height.
pub fn default_dep() -> Deployment {
    Deployment {
        lambda: 1.25e-6,
        gamma_g: 30.0,
        gamma: 100.0,
    }
}

/// Default radio column for the given technology.
pub fn default_radio(kind: TechKind) -> RadioTech {
    match kind {
        TechKind::Lte => RadioTech {
            kind,
            power: 40.0,
            near_field: db_to_linear(-38.4),
            bandwidth: 20e6,
            alpha_los: 2.1,
            alpha_nlos: 4.0,
            m_los: 1,
            m_nlos: 1,
            sigma2: 8e-13,
            theta: db_to_linear(10.0),
            uav: UavAperture {
                omega: 30f64.to_radians(),
            },
            lte: Some(LteAntenna {
                mu_h: db_to_linear(-5.0),
                phi_t: 0.0, // derived at scenario build
            }),
            mmw: None,
        },
        TechKind::Mmwave => RadioTech {
            kind,
            power: 10.0,
            near_field: db_to_linear(-69.7),
            bandwidth: 1000e6,
            alpha_los: 2.0,
            alpha_nlos: 3.5,
            m_los: 3,
            m_nlos: 1,
            sigma2: 4e-11,
            theta: db_to_linear(10.0),
            uav: UavAperture {
                omega: 10f64.to_radians(),
            },
            lte: None,
            mmw: Some(MmwaveAntenna {
                mu_m: db_to_linear(32.0),
                omega_g: 10f64.to_radians(),
                zeta: 0.0,
            }),
        },
    }
}

/// Default scenario for the given technology.
pub fn default_scenario(kind: TechKind) -> Scenario {
    Scenario::new(default_env(), default_dep(), default_radio(kind)).expect("defaults are valid")
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Parse a config document; the technology is taken from the `tech` key
/// (default `lte`).
pub fn parse_config(text: &str) -> Result<(Scenario, TrialConfig)> {
    parse_config_with_tech(text, None)
}

/// Parse a config document with an externally selected technology
/// (e.g. a CLI flag), which takes precedence over the `tech` key.
pub fn parse_config_with_tech(
    text: &str,
    tech_override: Option<TechKind>,
) -> Result<(Scenario, TrialConfig)> {
    let lines = scan_lines(text)?;

    // the technology decides the default column, so resolve it first
    let mut tech_kind = TechKind::Lte;
    for line in &lines {
        if line.section == "radio" && line.key == "tech" {
            tech_kind = match line.raw_value.as_str() {
                "lte" => TechKind::Lte,
                "mmwave" => TechKind::Mmwave,
                other => {
                    return Err(Error::Parse {
                        line: line.number,
                        msg: format!("unknown tech '{other}' (expected lte or mmwave)"),
                    })
                }
            };
        }
    }
    if let Some(t) = tech_override {
        tech_kind = t;
    }

    let mut env = default_env();
    let mut dep = default_dep();
    let mut radio = default_radio(tech_kind);
    let mut mc = TrialConfig::default();

    for line in &lines {
        apply_key(line, &mut env, &mut dep, &mut radio, &mut mc)?;
    }

    let env = Environment::new(env.beta, env.delta, env.kappa)
        .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let dep = Deployment::new(dep.lambda, dep.gamma_g, dep.gamma)
        .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let scenario = Scenario::new(env, dep, radio)?;
    mc.validate()?;
    Ok((scenario, mc))
}

struct Line {
    number: usize,
    section: String,
    key: String,
    raw_value: String,
    unit: Option<String>,
}

fn scan_lines(text: &str) -> Result<Vec<Line>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                number_msg(number, "unterminated section header")
            })?;
            let name = name.trim();
            if !matches!(name, "environment" | "deployment" | "radio" | "mc") {
                return Err(Error::Parse {
                    line: number,
                    msg: format!("unknown section '[{name}]'"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| Error::Parse {
            line: number,
            msg: format!("expected 'key = value', got '{stripped}'"),
        })?;
        if section.is_empty() {
            return Err(Error::Parse {
                line: number,
                msg: format!("key '{}' outside any section", key.trim()),
            });
        }
        let mut parts = value.split_whitespace();
        let raw_value = parts
            .next()
            .ok_or_else(|| Error::Parse {
                line: number,
                msg: format!("key '{}' has no value", key.trim()),
            })?
            .to_string();
        let unit = parts.next().map(|s| s.to_string());
        if let Some(extra) = parts.next() {
            return Err(Error::Parse {
                line: number,
                msg: format!("trailing junk '{extra}' after value"),
            });
        }
        out.push(Line {
            number,
            section: section.clone(),
            key: key.trim().to_string(),
            raw_value,
            unit,
        });
    }
    Ok(out)
}

fn number_msg(_line: usize, _msg: &str) -> (usize, String) {
    unreachable!()
}

/// How a key's value is interpreted: its dimension and default unit.
enum UnitClass {
    /// Accepts `/km2` (the default); stored per m2.
    DensityPerKm2,
    /// Accepts `m` (the default); stored in meters.
    Meters,
    /// Accepts `deg` (the default); stored in radians.
    Degrees,
    /// Accepts `dB` (the default); stored as a linear ratio.
    Decibels,
    /// Accepts `W` (the default) or `dBm`; stored in watts.
    Watts,
    /// Accepts `MHz` (the default) or `GHz`; stored in hertz.
    Megahertz,
    /// No unit allowed.
    Bare,
}

fn convert(line: &Line, class: UnitClass) -> Result<f64> {
    let v: f64 = line.raw_value.parse().map_err(|_| Error::Parse {
        line: line.number,
        msg: format!("key '{}': '{}' is not a number", line.key, line.raw_value),
    })?;
    let unit = line.unit.as_deref();
    let bad_unit = |u: &str| Error::Parse {
        line: line.number,
        msg: format!("key '{}': unit '{u}' not valid here", line.key),
    };
    Ok(match class {
        UnitClass::DensityPerKm2 => match unit {
            None | Some("/km2") => v * 1e-6,
            Some(u) => return Err(bad_unit(u)),
        },
        UnitClass::Meters => match unit {
            None | Some("m") => v,
            Some(u) => return Err(bad_unit(u)),
        },
        UnitClass::Degrees => match unit {
            None | Some("deg") => v.to_radians(),
            Some(u) => return Err(bad_unit(u)),
        },
        UnitClass::Decibels => match unit {
            None | Some("dB") => db_to_linear(v),
            Some(u) => return Err(bad_unit(u)),
        },
        UnitClass::Watts => match unit {
            None | Some("W") => v,
            Some("dBm") => dbm_to_watt(v),
            Some(u) => return Err(bad_unit(u)),
        },
        UnitClass::Megahertz => match unit {
            None | Some("MHz") => v * 1e6,
            Some("GHz") => v * 1e9,
            Some(u) => return Err(bad_unit(u)),
        },
        UnitClass::Bare => match unit {
            None => v,
            Some(u) => return Err(bad_unit(u)),
        },
    })
}

fn convert_integer(line: &Line) -> Result<u64> {
    if line.unit.is_some() {
        return Err(Error::Parse {
            line: line.number,
            msg: format!("key '{}' takes a bare integer", line.key),
        });
    }
    line.raw_value.parse().map_err(|_| Error::Parse {
        line: line.number,
        msg: format!(
            "key '{}': '{}' is not a non-negative integer",
            line.key, line.raw_value
        ),
    })
}

fn range_check(line: &Line, ok: bool, requirement: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Parse {
            line: line.number,
            msg: format!(
                "key '{}': value {} out of range ({requirement})",
                line.key, line.raw_value
            ),
        })
    }
}

fn apply_key(
    line: &Line,
    env: &mut Environment,
    dep: &mut Deployment,
    radio: &mut RadioTech,
    mc: &mut TrialConfig,
) -> Result<()> {
    let unknown = || Error::Parse {
        line: line.number,
        msg: format!("unknown key '{}' in section [{}]", line.key, line.section),
    };
    let wrong_tech = |want: &str| Error::Parse {
        line: line.number,
        msg: format!("key '{}' applies to the {want} technology only", line.key),
    };
    match (line.section.as_str(), line.key.as_str()) {
        ("environment", "beta") => {
            let v = convert(line, UnitClass::DensityPerKm2)?;
            range_check(line, v > 0.0, "beta > 0")?;
            env.beta = v;
        }
        ("environment", "delta") => {
            let v = convert(line, UnitClass::Bare)?;
            range_check(line, v > 0.0 && v < 1.0, "0 < delta < 1")?;
            env.delta = v;
        }
        ("environment", "kappa") => {
            let v = convert(line, UnitClass::Meters)?;
            range_check(line, v > 0.0, "kappa > 0")?;
            env.kappa = v;
        }
        ("deployment", "lambda") => {
            let v = convert(line, UnitClass::DensityPerKm2)?;
            range_check(line, v > 0.0, "lambda > 0")?;
            dep.lambda = v;
        }
        ("deployment", "gamma_g") => {
            let v = convert(line, UnitClass::Meters)?;
            range_check(line, v >= 0.0, "gamma_g >= 0")?;
            dep.gamma_g = v;
        }
        ("deployment", "gamma") => {
            let v = convert(line, UnitClass::Meters)?;
            range_check(line, v >= 0.0, "gamma >= 0")?;
            dep.gamma = v;
        }
        ("radio", "tech") => {} // resolved in the first pass
        ("radio", "p") => {
            let v = convert(line, UnitClass::Watts)?;
            range_check(line, v > 0.0, "p > 0")?;
            radio.power = v;
        }
        ("radio", "c") => {
            radio.near_field = convert(line, UnitClass::Decibels)?;
        }
        ("radio", "bandwidth") => {
            let v = convert(line, UnitClass::Megahertz)?;
            range_check(line, v > 0.0, "bandwidth > 0")?;
            radio.bandwidth = v;
        }
        ("radio", "alpha_l") => {
            let v = convert(line, UnitClass::Bare)?;
            range_check(line, v >= 2.0, "alpha_l >= 2")?;
            radio.alpha_los = v;
        }
        ("radio", "alpha_n") => {
            let v = convert(line, UnitClass::Bare)?;
            range_check(line, v >= 2.0, "alpha_n >= 2")?;
            radio.alpha_nlos = v;
        }
        ("radio", "m_l") => {
            let v = convert_integer(line)?;
            range_check(line, v >= 1, "m_l >= 1")?;
            radio.m_los = v as u32;
        }
        ("radio", "m_n") => {
            let v = convert_integer(line)?;
            range_check(line, v >= 1, "m_n >= 1")?;
            radio.m_nlos = v as u32;
        }
        ("radio", "sigma2") => {
            let v = convert(line, UnitClass::Watts)?;
            range_check(line, v > 0.0, "sigma2 > 0")?;
            radio.sigma2 = v;
        }
        ("radio", "theta") => {
            let v = convert(line, UnitClass::Decibels)?;
            range_check(line, v > 0.0, "theta > 0 linear")?;
            radio.theta = v;
        }
        ("radio", "omega") => {
            let v = convert(line, UnitClass::Degrees)?;
            range_check(
                line,
                v > 0.0 && v < 2.0 * std::f64::consts::PI,
                "0 < omega < 360 deg",
            )?;
            radio.uav.omega = v;
        }
        ("radio", "mu_h") => {
            let ant = radio.lte.as_mut().ok_or_else(|| wrong_tech("lte"))?;
            let v = convert(line, UnitClass::Decibels)?;
            range_check(line, v > 0.0 && v <= 1.0, "mu_h <= 0 dB")?;
            ant.mu_h = v;
        }
        ("radio", "mu_m") => {
            let ant = radio.mmw.as_mut().ok_or_else(|| wrong_tech("mmwave"))?;
            let v = convert(line, UnitClass::Decibels)?;
            range_check(line, v > 0.0, "mu_m > 0")?;
            ant.mu_m = v;
        }
        ("radio", "omega_g") => {
            let ant = radio.mmw.as_mut().ok_or_else(|| wrong_tech("mmwave"))?;
            let v = convert(line, UnitClass::Degrees)?;
            range_check(
                line,
                v > 0.0 && v < 2.0 * std::f64::consts::PI,
                "0 < omega_g < 360 deg",
            )?;
            ant.omega_g = v;
        }
        ("radio", "zeta") => {
            let ant = radio.mmw.as_mut().ok_or_else(|| wrong_tech("mmwave"))?;
            let v = convert(line, UnitClass::Bare)?;
            range_check(line, (0.0..=1.0).contains(&v), "0 <= zeta <= 1")?;
            ant.zeta = v;
        }
        ("mc", "trials") => {
            let v = convert_integer(line)?;
            range_check(line, v >= 1, "trials >= 1")?;
            mc.trials = v;
        }
        ("mc", "seed") => {
            mc.seed = convert_integer(line)?;
        }
        ("mc", "region_radius") => {
            // meters; accepts the `m` unit tag
            if !matches!(line.unit.as_deref(), None | Some("m")) {
                return Err(Error::Parse {
                    line: line.number,
                    msg: format!("key '{}' is in meters", line.key),
                });
            }
            let v: f64 = line.raw_value.parse().map_err(|_| Error::Parse {
                line: line.number,
                msg: format!("key '{}': '{}' is not a number", line.key, line.raw_value),
            })?;
            range_check(line, v > 0.0, "region_radius > 0")?;
            mc.region_radius_m = v.round() as u64;
        }
        ("mc", "block_size") => {
            let v = convert_integer(line)?;
            range_check(line, v >= 1, "block_size >= 1")?;
            mc.block_size = v;
        }
        _ => return Err(unknown()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
