//! Analytical backhaul performance: interference Laplace transforms over
//! the Poisson field of ground stations, the conditional backhaul
//! probability under Nakagami-m fading, deconditioning over the serving
//! distance and LOS state, and the expected backhaul rate.
//!
//! The aggregate interference seen through the UAV beam is a shot-noise
//! functional of a thinned PPP restricted to the beam footprint; its
//! Laplace transform has the exponential form L(s) = exp(-J(s)) with
//!
//! J(s) = lambda' * omega * int_{r1}^{v} (1 - (m / (g(r,s) + m))^m) P(r) r dr,
//!
//! g(r,s) = s * mu(r) * (r^2 + dgamma^2)^(-alpha/2), where P(r) is the
//! LOS (or complement) thinning weight and lambda' carries the alignment
//! probability for millimeter-wave interferers. The conditional backhaul
//! probability assembles derivatives of two such transforms through the
//! exponential-composition recursion; for millimeter-wave the constant
//! interferer gain additionally admits a closed form per blockage cell in
//! terms of the Gauss hypergeometric function.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::antenna::{derived_uptilt_deg, lte_total_gain, LteAntenna, MmwaveAntenna, UavAperture};
use crate::error::{Error, Result};
use crate::geometry::{
    footprint, serving_distance_pdf, vertical_angle, Deployment, Environment, LosTable,
};
use crate::numerics::{
    binomial, compositions, gauss_2f1, integrate, laplace_derivatives, LaplaceExponent,
    QuadratureSpec,
};

/// Backhaul radio technology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TechKind {
    Lte,
    Mmwave,
}

impl TechKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TechKind::Lte => "lte",
            TechKind::Mmwave => "mmwave",
        }
    }
}

/// Propagation state of a link (serving or interfering).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Los,
    Nlos,
}

/// Per-technology radio parameters, all in SI / linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioTech {
    pub kind: TechKind,
    /// GS transmit power, watts.
    pub power: f64,
    /// Near-field pathloss, linear ratio.
    pub near_field: f64,
    /// Channel bandwidth, hertz.
    pub bandwidth: f64,
    /// LOS pathloss exponent.
    pub alpha_los: f64,
    /// NLOS pathloss exponent.
    pub alpha_nlos: f64,
    /// Nakagami order of the LOS channel.
    pub m_los: u32,
    /// Nakagami order of the NLOS channel.
    pub m_nlos: u32,
    /// Noise power, watts.
    pub sigma2: f64,
    /// SINR threshold, linear ratio.
    pub theta: f64,
    /// UAV aperture.
    pub uav: UavAperture,
    /// GS antenna for an LTE backhaul.
    pub lte: Option<LteAntenna>,
    /// GS antenna for a millimeter-wave backhaul.
    pub mmw: Option<MmwaveAntenna>,
}

impl RadioTech {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TechKind::Lte => {
                if self.lte.is_none() || self.mmw.is_some() {
                    return Err(Error::InvalidArgument(
                        "LTE tech requires exactly the LTE antenna".into(),
                    ));
                }
            }
            TechKind::Mmwave => {
                if self.mmw.is_none() || self.lte.is_some() {
                    return Err(Error::InvalidArgument(
                        "mmWave tech requires exactly the mmWave antenna".into(),
                    ));
                }
            }
        }
        if !(self.alpha_los >= 2.0) || !(self.alpha_nlos >= 2.0) {
            return Err(Error::InvalidArgument(
                "pathloss exponents must be >= 2".into(),
            ));
        }
        if self.m_los < 1 || self.m_nlos < 1 {
            return Err(Error::InvalidArgument("fading orders must be >= 1".into()));
        }
        for (name, v) in [
            ("power", self.power),
            ("near_field", self.near_field),
            ("bandwidth", self.bandwidth),
            ("sigma2", self.sigma2),
            ("theta", self.theta),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be > 0 (got {v})"
                )));
            }
        }
        Ok(())
    }

    pub fn fading_order(&self, branch: Branch) -> u32 {
        match branch {
            Branch::Los => self.m_los,
            Branch::Nlos => self.m_nlos,
        }
    }

    pub fn pathloss_exponent(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Los => self.alpha_los,
            Branch::Nlos => self.alpha_nlos,
        }
    }

    /// Gain of the serving GS towards the UAV at vertical angle `phi1` (degrees).
    pub fn serving_gain(&self, phi1_deg: f64) -> f64 {
        match self.kind {
            TechKind::Lte => lte_total_gain(phi1_deg, self.lte.as_ref().expect("validated")),
            TechKind::Mmwave => self.mmw.as_ref().expect("validated").mu_m,
        }
    }

    /// Thinning factor applied to the interferer intensity (beam alignment).
    pub fn interferer_intensity_scale(&self) -> f64 {
        match self.kind {
            TechKind::Lte => 1.0,
            TechKind::Mmwave => self.mmw.as_ref().expect("validated").zeta,
        }
    }
}

/// A full evaluation scenario: environment, deployment and radio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub env: Environment,
    pub dep: Deployment,
    pub tech: RadioTech,
}

impl Scenario {
    /// Validate all composed invariants and recompute the derived uptilt
    /// angle from the current deployment. Always rebuild scenarios through
    /// here when deployment parameters change.
    pub fn new(env: Environment, dep: Deployment, mut tech: RadioTech) -> Result<Self> {
        if let Some(ant) = tech.lte.as_mut() {
            ant.phi_t = derived_uptilt_deg(&dep);
        }
        tech.validate()?;
        Ok(Self { env, dep, tech })
    }

    /// Stable hash of every resolved SI parameter; 16 hex chars.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let mut put = |tag: &str, v: f64| {
            hasher.update(tag.as_bytes());
            hasher.update(v.to_bits().to_le_bytes());
        };
        put("beta", self.env.beta);
        put("delta", self.env.delta);
        put("kappa", self.env.kappa);
        put("lambda", self.dep.lambda);
        put("gamma_g", self.dep.gamma_g);
        put("gamma", self.dep.gamma);
        put("power", self.tech.power);
        put("near_field", self.tech.near_field);
        put("bandwidth", self.tech.bandwidth);
        put("alpha_los", self.tech.alpha_los);
        put("alpha_nlos", self.tech.alpha_nlos);
        put("m_los", self.tech.m_los as f64);
        put("m_nlos", self.tech.m_nlos as f64);
        put("sigma2", self.tech.sigma2);
        put("theta", self.tech.theta);
        put("omega", self.tech.uav.omega);
        match self.tech.kind {
            TechKind::Lte => {
                let ant = self.tech.lte.as_ref().expect("validated");
                put("tech", 0.0);
                put("mu_h", ant.mu_h);
                put("phi_t", ant.phi_t);
            }
            TechKind::Mmwave => {
                let ant = self.tech.mmw.as_ref().expect("validated");
                put("tech", 1.0);
                put("mu_m", ant.mu_m);
                put("omega_g", ant.omega_g);
                put("zeta", ant.zeta);
            }
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Serving-link state the coverage probability is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub t1: Branch,
    /// Serving horizontal distance, meters.
    pub r1: f64,
}

/// Quadrature tolerances and truncation policy for the analytic pipeline.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticOptions {
    /// Spec for the interference integrals (per blockage cell).
    pub inner: QuadratureSpec,
    /// Spec for the serving-distance integral.
    pub outer: QuadratureSpec,
    /// Spec for the rate (threshold-axis) integral.
    pub rate_axis: QuadratureSpec,
    /// Stop extending an unbounded interference integral once a cell
    /// contributes less than this fraction of the accumulated value.
    pub tail_rel_cut: f64,
    /// Hard cap on the interference integration radius, meters.
    pub tail_cap: f64,
    /// Rate integration stops where the coverage integrand drops below this.
    pub rate_cutoff: f64,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        Self {
            inner: QuadratureSpec {
                rel_tol: 1e-9,
                abs_tol: 1e-13,
                max_depth: 30,
            },
            outer: QuadratureSpec {
                rel_tol: 1e-8,
                abs_tol: 1e-11,
                max_depth: 24,
            },
            rate_axis: QuadratureSpec {
                rel_tol: 1e-4,
                abs_tol: 1e-7,
                max_depth: 18,
            },
            tail_rel_cut: 1e-9,
            tail_cap: 50_000.0,
            rate_cutoff: 1e-6,
        }
    }
}

impl AnalyticOptions {
    /// Relaxed tolerances for rate integration, where the threshold-axis
    /// quadrature already dominates the error budget.
    pub fn rate_default() -> Self {
        Self {
            inner: QuadratureSpec {
                rel_tol: 1e-6,
                abs_tol: 1e-10,
                max_depth: 24,
            },
            outer: QuadratureSpec {
                rel_tol: 1e-5,
                abs_tol: 1e-8,
                max_depth: 20,
            },
            ..Self::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Interference Laplace transform
// ---------------------------------------------------------------------------

/// Exponent J of one interference Laplace transform L(s) = exp(-J(s)),
/// for a fixed serving distance and interferer set (LOS or NLOS).
///
/// Implements [`LaplaceExponent`]: order 0 evaluates J by cell-wise
/// quadrature; higher orders use the closed-form s-derivatives of the
/// integrand, which is rational in g and therefore differentiates under
/// the integral sign.
#[derive(Debug, Clone)]
pub struct InterferenceLaplace {
    tech: RadioTech,
    los: Arc<LosTable>,
    branch: Branch,
    r1: f64,
    /// Effective upper integration radius: min(v, tail cap).
    upper: f64,
    /// Whether the footprint's major radius was unbounded.
    unbounded: bool,
    /// Thinned interferer intensity lambda', per square meter.
    lambda_eff: f64,
    dg: f64,
    opts: AnalyticOptions,
}

impl InterferenceLaplace {
    fn new(
        scenario: &Scenario,
        los: Arc<LosTable>,
        r1: f64,
        branch: Branch,
        opts: AnalyticOptions,
    ) -> Self {
        let fp = footprint(r1, scenario.tech.uav.omega, &scenario.dep);
        let unbounded = fp.outer.is_infinite();
        Self {
            tech: scenario.tech,
            los,
            branch,
            r1,
            upper: fp.outer.min(opts.tail_cap),
            unbounded,
            lambda_eff: scenario.dep.lambda * scenario.tech.interferer_intensity_scale(),
            dg: scenario.dep.height_diff(),
            opts,
        }
    }

    fn weight(&self, r: f64) -> f64 {
        match self.branch {
            Branch::Los => self.los.at(r),
            Branch::Nlos => 1.0 - self.los.at(r),
        }
    }

    /// mu(r) (r^2 + dgamma^2)^(-alpha/2): the s-coefficient of g. The LTE
    /// interferer gain is re-evaluated per radius since the vertical angle
    /// changes along the integration path.
    fn g_coeff(&self, r: f64, alpha: f64) -> f64 {
        let mu = match self.tech.kind {
            TechKind::Lte => {
                let phi_deg = f64::atan2(self.dg, r).to_degrees();
                lte_total_gain(phi_deg, self.tech.lte.as_ref().expect("validated"))
            }
            TechKind::Mmwave => self.tech.mmw.as_ref().expect("validated").mu_m,
        };
        mu * (r * r + self.dg * self.dg).powf(-alpha / 2.0)
    }

    /// Cell-wise integration of `base(r) * weight(r) * r` from r1 to the
    /// effective upper radius, with the tail policy for unbounded footprints.
    fn integrate_cells<F: Fn(f64) -> f64>(&self, base: F) -> Result<f64> {
        let lo = self.r1;
        let hi = self.upper;
        if hi <= lo {
            return Ok(0.0);
        }
        let cell = self.los.cell_width();
        let f = |r: f64| base(r) * self.weight(r) * r;
        let mut acc = 0.0;
        let mut small_in_a_row = 0;
        let mut a = lo;
        let mut j = (lo / cell).floor() as u64;
        loop {
            let b = ((j + 1) as f64 * cell).min(hi);
            if b > a {
                let part = integrate(&f, a, b, &self.opts.inner)?;
                acc += part;
                if self.unbounded {
                    if acc != 0.0 && part.abs() < self.opts.tail_rel_cut * acc.abs() {
                        small_in_a_row += 1;
                        if small_in_a_row >= 3 {
                            break;
                        }
                    } else {
                        small_in_a_row = 0;
                    }
                }
            }
            if b >= hi {
                break;
            }
            a = b;
            j += 1;
        }
        Ok(acc)
    }
}

impl LaplaceExponent for InterferenceLaplace {
    fn exponent_derivative(&self, order: u32, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Laplace argument must be >= 0 (got {s})"
            )));
        }
        if self.lambda_eff == 0.0 || (order == 0 && s == 0.0) {
            return Ok(0.0);
        }
        let m_int = self.tech.fading_order(self.branch);
        let m = m_int as f64;
        let alpha = self.tech.pathloss_exponent(self.branch);
        let omega = self.tech.uav.omega;

        let integral = if order == 0 {
            // 1 - (m/(g+m))^m via expm1, accurate for small g
            self.integrate_cells(|r| {
                let g = s * self.g_coeff(r, alpha);
                -(-m * (g / m).ln_1p()).exp_m1()
            })?
        } else {
            // d^j/ds^j [1 - (m/(g+m))^m] = (-1)^(j+1) m^m (m)_j k^j (g+m)^-(m+j)
            let mut rising = 1.0;
            for i in 0..order {
                rising *= m + i as f64;
            }
            let scale = m.powi(m_int as i32) * rising;
            let neg_exp = -((m_int + order) as i32);
            let sign = if order % 2 == 1 { 1.0 } else { -1.0 };
            sign * scale
                * self.integrate_cells(|r| {
                    let k = self.g_coeff(r, alpha);
                    let g = s * k;
                    k.powi(order as i32) * (g + m).powi(neg_exp)
                })?
        };
        Ok(self.lambda_eff * omega * integral)
    }
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

/// Analytic evaluator holding the per-scenario LOS cache.
///
/// The free functions in this module build a fresh evaluator per call;
/// construct one explicitly to amortize the cache across many calls or to
/// override tolerances.
#[derive(Debug, Clone)]
pub struct Evaluator {
    scenario: Scenario,
    opts: AnalyticOptions,
    los: Arc<LosTable>,
}

impl Evaluator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::with_options(scenario, AnalyticOptions::default())
    }

    pub fn with_options(scenario: &Scenario, opts: AnalyticOptions) -> Result<Self> {
        scenario.tech.validate()?;
        let los = Arc::new(LosTable::new(
            &scenario.dep,
            &scenario.env,
            opts.tail_cap * 1.1,
        ));
        Ok(Self {
            scenario: *scenario,
            opts,
            los,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// The exponent of an interference Laplace transform, for derivative
    /// work through [`crate::numerics::laplace_derivative`].
    pub fn interference_exponent(&self, r1: f64, branch: Branch) -> InterferenceLaplace {
        InterferenceLaplace::new(&self.scenario, Arc::clone(&self.los), r1, branch, self.opts)
    }

    /// Laplace transform of the aggregate interference from the `branch`
    /// interferer set, by direct quadrature of the exponent integral.
    pub fn laplace_interference(&self, s: f64, r1: f64, branch: Branch) -> Result<f64> {
        let ev = self.interference_exponent(r1, branch);
        Ok((-ev.exponent_derivative(0, s)?).exp())
    }

    /// Same transform through the per-cell closed form: the LOS thinning
    /// weight is constant on each blockage cell, so each cell integral
    /// reduces to hypergeometric endpoint terms. Millimeter-wave only
    /// (the interferer gain must not vary with distance).
    pub fn laplace_mmwave_closed(&self, s: f64, r1: f64, branch: Branch) -> Result<f64> {
        if self.scenario.tech.kind != TechKind::Mmwave {
            return Err(Error::InvalidArgument(
                "closed-form transform applies to the mmWave backhaul only".into(),
            ));
        }
        if s < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Laplace argument must be >= 0 (got {s})"
            )));
        }
        let ant = self.scenario.tech.mmw.as_ref().expect("validated");
        let lambda_eff = self.scenario.dep.lambda * ant.zeta;
        if lambda_eff == 0.0 || s == 0.0 {
            return Ok(1.0);
        }

        let dep = &self.scenario.dep;
        let fp = footprint(r1, self.scenario.tech.uav.omega, dep);
        let upper = fp.outer.min(self.opts.tail_cap);
        if upper <= r1 {
            return Ok(1.0);
        }
        let m_int = self.scenario.tech.fading_order(branch);
        let alpha = self.scenario.tech.pathloss_exponent(branch);
        let dg2 = dep.height_diff() * dep.height_diff();
        let cell = self.los.cell_width();

        let mut acc = 0.0;
        let mut small_in_a_row = 0;
        let mut l = r1;
        let mut j = (r1 / cell).floor() as u64;
        loop {
            let u = ((j + 1) as f64 * cell).min(upper);
            if u > l {
                // the thinning weight is constant across the cell
                let weight = match self.branch_weight(branch, 0.5 * (l + u)) {
                    w if w == 0.0 => 0.0,
                    w => w,
                };
                let part = if weight == 0.0 {
                    0.0
                } else {
                    weight * segment_closed_form(l, u, s, m_int, alpha, ant.mu_m, dg2)?
                };
                acc += part;
                if fp.outer.is_infinite() {
                    if acc != 0.0 && part.abs() < self.opts.tail_rel_cut * acc.abs() {
                        small_in_a_row += 1;
                        if small_in_a_row >= 3 {
                            break;
                        }
                    } else {
                        small_in_a_row = 0;
                    }
                }
            }
            if u >= upper {
                break;
            }
            l = u;
            j += 1;
        }
        Ok((-self.scenario.tech.uav.omega * lambda_eff * acc).exp())
    }

    fn branch_weight(&self, branch: Branch, r: f64) -> f64 {
        match branch {
            Branch::Los => self.los.at(r),
            Branch::Nlos => 1.0 - self.los.at(r),
        }
    }

    /// P(SINR >= theta | r1, t1): the Nakagami coverage sum over
    /// derivative compositions of the two interference transforms.
    pub fn conditional_backhaul_prob(&self, link: &LinkState) -> Result<f64> {
        if !(link.r1 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "serving distance must be >= 0 (got {})",
                link.r1
            )));
        }
        let tech = &self.scenario.tech;
        let dep = &self.scenario.dep;
        let dg = dep.height_diff();
        let m_t = tech.fading_order(link.t1);
        let alpha_t = tech.pathloss_exponent(link.t1);
        let mu = tech.serving_gain(vertical_angle(link.r1, dep).to_degrees());
        let s = m_t as f64 * tech.theta * (link.r1 * link.r1 + dg * dg).powf(alpha_t / 2.0) / mu;
        if s == 0.0 {
            return Ok(1.0);
        }
        let inv_pec = 1.0 / (tech.power * tech.uav.gain() * tech.near_field);
        let x = inv_pec * s * tech.sigma2;

        let lambda_eff = dep.lambda * tech.interferer_intensity_scale();
        let p = if lambda_eff == 0.0 {
            // no interference: the coverage reduces to the Gamma CCDF
            gamma_ccdf(m_t, x)
        } else {
            let max_order = m_t - 1;
            let d_los = laplace_derivatives(
                &self.interference_exponent(link.r1, Branch::Los),
                max_order,
                s,
            )?;
            let d_nlos = laplace_derivatives(
                &self.interference_exponent(link.r1, Branch::Nlos),
                max_order,
                s,
            )?;
            let noise_exp = (-x).exp();
            let mut total = 0.0;
            let mut s_pow = 1.0; // s^n / n!
            for n in 0..=max_order {
                if n > 0 {
                    s_pow *= s / n as f64;
                }
                let outer = s_pow * if n % 2 == 0 { 1.0 } else { -1.0 };
                let mut inner = 0.0;
                for c in compositions(n) {
                    let mult = multinomial3(n, c.i_l, c.i_n, c.i_sigma);
                    inner += mult
                        * (-inv_pec * tech.sigma2).powi(c.i_sigma as i32)
                        * d_los[c.i_l as usize]
                        * d_nlos[c.i_n as usize];
                }
                total += outer * inner * noise_exp;
            }
            total
        };

        let slack = (self.opts.inner.rel_tol * 1e3).max(1e-9);
        if p < -slack || p > 1.0 + slack {
            return Err(Error::Consistency(format!(
                "conditional backhaul probability {p} outside [0, 1] beyond slack {slack}"
            )));
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// P(SINR >= theta): the conditional probability deconditioned over
    /// the serving LOS state and the Rayleigh serving-distance law.
    pub fn backhaul_probability(&self) -> Result<f64> {
        let dep = self.scenario.dep;
        let r_max = ((1e9f64).ln() / (std::f64::consts::PI * dep.lambda)).sqrt();
        let points = self.outer_breakpoints(r_max);

        let err_slot: Mutex<Option<Error>> = Mutex::new(None);
        let integrand = |r1: f64| -> f64 {
            let inner = || -> Result<f64> {
                let p_los = self.los.at(r1);
                let mut v = 0.0;
                if p_los > 0.0 {
                    v += p_los
                        * self.conditional_backhaul_prob(&LinkState {
                            t1: Branch::Los,
                            r1,
                        })?;
                }
                if p_los < 1.0 {
                    v += (1.0 - p_los)
                        * self.conditional_backhaul_prob(&LinkState {
                            t1: Branch::Nlos,
                            r1,
                        })?;
                }
                Ok(v * serving_distance_pdf(r1, &dep))
            };
            match inner() {
                Ok(v) => v,
                Err(e) => {
                    err_slot.lock().unwrap().get_or_insert(e);
                    0.0
                }
            }
        };

        // The result is a probability, so an absolute per-panel budget is
        // meaningful; panels refine independently and sum in axis order.
        let n_panels = (points.len() - 1).max(1);
        let panel_spec = QuadratureSpec {
            rel_tol: self.opts.outer.rel_tol,
            abs_tol: (self.opts.outer.rel_tol / n_panels as f64).max(self.opts.outer.abs_tol),
            max_depth: self.opts.outer.max_depth,
        };
        let panels: Vec<Result<f64>> = points
            .par_windows(2)
            .map(|w| integrate(&integrand, w[0], w[1], &panel_spec))
            .collect();
        let mut total = 0.0;
        for p in panels {
            total += p?;
        }
        if let Some(e) = err_slot.into_inner().unwrap() {
            return Err(e);
        }
        let slack = (self.opts.outer.rel_tol * 1e3).max(1e-9);
        if total < -slack || total > 1.0 + slack {
            return Err(Error::Consistency(format!(
                "backhaul probability {total} outside [0, 1] beyond slack {slack}"
            )));
        }
        Ok(total.clamp(0.0, 1.0))
    }

    /// Expected backhaul rate, bits/s: bandwidth times the layer-cake
    /// integral of the coverage over the rate axis.
    pub fn expected_rate(&self) -> Result<f64> {
        let b = self.scenario.tech.bandwidth;
        if b == 0.0 {
            return Ok(0.0);
        }
        let coverage = |t: f64| -> Result<f64> {
            if t == 0.0 {
                return Ok(1.0);
            }
            let mut scenario = self.scenario;
            scenario.tech.theta = (2f64).powf(t) - 1.0;
            let ev = Evaluator {
                scenario,
                opts: self.opts,
                los: Arc::clone(&self.los),
            };
            ev.backhaul_probability()
        };

        // Find where the coverage drops below the cutoff, by doubling.
        let mut t_hi = 1.0;
        while coverage(t_hi)? >= self.opts.rate_cutoff && t_hi < 64.0 {
            t_hi *= 2.0;
        }

        let err_slot: Mutex<Option<Error>> = Mutex::new(None);
        let f = |t: f64| match coverage(t) {
            Ok(v) => v,
            Err(e) => {
                err_slot.lock().unwrap().get_or_insert(e);
                0.0
            }
        };
        let integral = integrate(&f, 0.0, t_hi, &self.opts.rate_axis)?;
        if let Some(e) = err_slot.into_inner().unwrap() {
            return Err(e);
        }
        Ok(b * integral)
    }

    /// Forced panel splits for the serving-distance integral: the blockage
    /// cell lattice plus the footprint branch-change radii.
    fn outer_breakpoints(&self, r_max: f64) -> Vec<f64> {
        let cell = self.los.cell_width();
        let mut pts = Vec::new();
        let mut r = 0.0;
        while r < r_max {
            pts.push(r);
            r += cell;
        }
        let dg = self.scenario.dep.height_diff().abs();
        let omega = self.scenario.tech.uav.omega;
        if dg > 0.0 && omega < std::f64::consts::PI {
            let half_tan = (omega / 2.0).tan();
            for candidate in [dg / half_tan, dg * half_tan] {
                if candidate > 0.0 && candidate < r_max {
                    pts.push(candidate);
                }
            }
        }
        pts.push(r_max);
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        pts
    }
}

/// One blockage cell of the closed-form transform: the radial integral of
/// (1 - (m/(g+m))^m) r over [l, u] in terms of 2F1 endpoint evaluations.
fn segment_closed_form(
    l: f64,
    u: f64,
    s: f64,
    m_int: u32,
    alpha: f64,
    mu: f64,
    dg2: f64,
) -> Result<f64> {
    let m = m_int as f64;
    let b = 2.0 / alpha;
    let c = 1.0 + b;
    let z_at = |t: f64| -(m * (t * t + dg2).powf(alpha / 2.0)) / (mu * s);
    let zu = z_at(u);
    let zl = z_at(l);
    let mut total = 0.0;
    for k in 1..=m_int {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let coeff = sign * binomial(m_int as usize, k as usize);
        let fu = gauss_2f1(k as f64, b, c, zu)?;
        let fl = gauss_2f1(k as f64, b, c, zl)?;
        total += coeff * ((u * u + dg2) * fu - (l * l + dg2) * fl);
    }
    Ok(0.5 * total)
}

/// CCDF of a unit-mean Gamma power of integer order m at threshold x:
/// e^(-x) * sum_{n<m} x^n / n!.
fn gamma_ccdf(m: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..m {
        term *= x / n as f64;
        sum += term;
    }
    ((-x).exp() * sum).clamp(0.0, 1.0)
}

fn multinomial3(n: u32, i_l: u32, i_n: u32, _i_sigma: u32) -> f64 {
    binomial(n as usize, i_l as usize) * binomial((n - i_l) as usize, i_n as usize)
}

// ---------------------------------------------------------------------------
// Free-function API
// ---------------------------------------------------------------------------

/// Laplace transform of the aggregate `branch` interference by direct
/// quadrature of the footprint integral.
pub fn laplace_interference(s: f64, r1: f64, branch: Branch, scenario: &Scenario) -> Result<f64> {
    Evaluator::new(scenario)?.laplace_interference(s, r1, branch)
}

/// Closed-form millimeter-wave Laplace transform (per-cell hypergeometric
/// endpoint sums). Equivalent to [`laplace_interference`] on mmWave scenarios.
pub fn laplace_mmwave_closed(s: f64, r1: f64, branch: Branch, scenario: &Scenario) -> Result<f64> {
    Evaluator::new(scenario)?.laplace_mmwave_closed(s, r1, branch)
}

/// Conditional backhaul probability given the serving link state.
pub fn conditional_backhaul_prob(link: &LinkState, scenario: &Scenario) -> Result<f64> {
    Evaluator::new(scenario)?.conditional_backhaul_prob(link)
}

/// Probability that the UAV establishes a backhaul of SINR above threshold.
pub fn backhaul_probability(scenario: &Scenario) -> Result<f64> {
    Evaluator::new(scenario)?.backhaul_probability()
}

/// Expected backhaul rate, bits/s. Uses relaxed quadrature tolerances
/// suited to the rate integral; build an [`Evaluator`] directly for
/// custom precision.
pub fn expected_rate(scenario: &Scenario) -> Result<f64> {
    Evaluator::with_options(scenario, AnalyticOptions::rate_default())?.expected_rate()
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::laplace_derivative;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn env_default() -> Environment {
        Environment::new(300e-6, 0.5, 20.0).unwrap()
    }

    pub(crate) fn lte_scenario(lambda_km2: f64, gamma: f64) -> Scenario {
        let env = env_default();
        let dep = Deployment::new(lambda_km2 * 1e-6, 30.0, gamma).unwrap();
        let tech = RadioTech {
            kind: TechKind::Lte,
            power: 40.0,
            near_field: 10f64.powf(-38.4 / 10.0),
            bandwidth: 20e6,
            alpha_los: 2.1,
            alpha_nlos: 4.0,
            m_los: 1,
            m_nlos: 1,
            sigma2: 8e-13,
            theta: 10.0,
            uav: UavAperture::new(30f64.to_radians()).unwrap(),
            lte: Some(LteAntenna {
                mu_h: 10f64.powf(-0.5),
                phi_t: 0.0,
            }),
            mmw: None,
        };
        Scenario::new(env, dep, tech).unwrap()
    }

    pub(crate) fn mmwave_scenario(lambda_km2: f64, gamma: f64, zeta: f64) -> Scenario {
        let env = env_default();
        let dep = Deployment::new(lambda_km2 * 1e-6, 30.0, gamma).unwrap();
        let tech = RadioTech {
            kind: TechKind::Mmwave,
            power: 10.0,
            near_field: 10f64.powf(-69.7 / 10.0),
            bandwidth: 1000e6,
            alpha_los: 2.0,
            alpha_nlos: 3.5,
            m_los: 3,
            m_nlos: 1,
            sigma2: 4e-11,
            theta: 10.0,
            uav: UavAperture::new(10f64.to_radians()).unwrap(),
            lte: None,
            mmw: Some(MmwaveAntenna::new(10f64.powf(3.2), 10f64.to_radians(), zeta).unwrap()),
        };
        Scenario::new(env, dep, tech).unwrap()
    }

    fn s_value(sc: &Scenario, link: &LinkState) -> f64 {
        let tech = &sc.tech;
        let dep = &sc.dep;
        let dg = dep.height_diff();
        let mu = tech.serving_gain(vertical_angle(link.r1, dep).to_degrees());
        tech.fading_order(link.t1) as f64
            * tech.theta
            * (link.r1 * link.r1 + dg * dg).powf(tech.pathloss_exponent(link.t1) / 2.0)
            / mu
    }

    // -- Laplace transforms ---------------------------------------------------

    #[test]
    fn laplace_at_zero_is_one() {
        let sc = lte_scenario(1.25, 100.0);
        for branch in [Branch::Los, Branch::Nlos] {
            assert_eq!(laplace_interference(0.0, 400.0, branch, &sc).unwrap(), 1.0);
        }
    }

    #[test]
    fn laplace_with_unaligned_interferers_is_one() {
        let sc = mmwave_scenario(1.25, 100.0, 0.0);
        for s in [0.0, 1.0, 1e4] {
            assert_eq!(laplace_interference(s, 300.0, Branch::Los, &sc).unwrap(), 1.0);
            assert_eq!(laplace_mmwave_closed(s, 300.0, Branch::Los, &sc).unwrap(), 1.0);
        }
    }

    #[test]
    fn laplace_nonincreasing_in_s_and_in_unit_interval() {
        let sc = lte_scenario(1.25, 100.0);
        let ev = Evaluator::new(&sc).unwrap();
        let link = LinkState {
            t1: Branch::Los,
            r1: 400.0,
        };
        let s_ref = s_value(&sc, &link);
        for branch in [Branch::Los, Branch::Nlos] {
            let mut prev = 1.0 + 1e-12;
            for mult in [0.0, 0.1, 0.3, 1.0, 3.0, 10.0] {
                let v = ev.laplace_interference(mult * s_ref, 400.0, branch).unwrap();
                assert!(v > 0.0 && v <= 1.0, "L = {v}");
                assert!(v <= prev + 1e-12, "not nonincreasing at mult={mult}");
                prev = v;
            }
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let sc = mmwave_scenario(1.25, 100.0, 0.1);
        let ev = Evaluator::new(&sc).unwrap();
        for r1 in [150.0, 320.0, 500.0] {
            let link = LinkState { t1: Branch::Los, r1 };
            let s_ref = s_value(&sc, &link);
            for mult in [0.1, 1.0, 10.0] {
                for branch in [Branch::Los, Branch::Nlos] {
                    let s = mult * s_ref;
                    let direct = ev.laplace_interference(s, r1, branch).unwrap();
                    let closed = ev.laplace_mmwave_closed(s, r1, branch).unwrap();
                    assert!(
                        (direct - closed).abs() <= 1e-6 * direct.abs(),
                        "r1={r1} mult={mult} {branch:?}: {direct} vs {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_form_single_segment() {
        // v below one cell width at r1 = 0: exactly one hypergeometric segment
        let mut sc = mmwave_scenario(1.25, 100.0, 0.5);
        sc.tech.uav.omega = 20f64.to_radians();
        let ev = Evaluator::new(&sc).unwrap();
        let fp = footprint(0.0, sc.tech.uav.omega, &sc.dep);
        assert!(fp.outer < sc.env.cell_width(), "v = {}", fp.outer);
        let s = 1e3;
        let direct = ev.laplace_interference(s, 0.0, Branch::Los).unwrap();
        let closed = ev.laplace_mmwave_closed(s, 0.0, Branch::Los).unwrap();
        assert!(close(direct, closed, 1e-9), "{direct} vs {closed}");
    }

    #[test]
    fn closed_form_rejects_lte() {
        let sc = lte_scenario(1.25, 100.0);
        assert!(laplace_mmwave_closed(1.0, 300.0, Branch::Los, &sc).is_err());
    }

    // -- derivative machinery --------------------------------------------------

    pub(crate) fn central_difference<F: Fn(f64) -> f64>(
        f: &F,
        s: f64,
        h: f64,
        order: u32,
    ) -> f64 {
        let n = order as i32;
        let mut acc = 0.0;
        for k in 0..=n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign
                * binomial(n as usize, k as usize)
                * f(s + (n as f64 / 2.0 - k as f64) * h);
        }
        acc / h.powi(n)
    }

    #[test]
    fn interference_derivatives_match_finite_differences() {
        let sc = mmwave_scenario(1.25, 100.0, 0.2);
        let ev = Evaluator::with_options(
            &sc,
            AnalyticOptions {
                inner: QuadratureSpec {
                    rel_tol: 1e-13,
                    abs_tol: 1e-16,
                    max_depth: 40,
                },
                ..AnalyticOptions::default()
            },
        )
        .unwrap();
        let r1 = 300.0;
        let exponent = ev.interference_exponent(r1, Branch::Los);
        let link = LinkState {
            t1: Branch::Los,
            r1,
        };
        let s = s_value(&sc, &link);
        let l = |s: f64| (-exponent.exponent_derivative(0, s).unwrap()).exp();

        for order in [1u32, 2] {
            let got = laplace_derivative(&exponent, order, s).unwrap();
            let h = 1e-4 * s;
            let stencil = |h: f64| central_difference(&l, s, h, order);
            let fd = (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0;
            assert!(
                (got - fd).abs() <= 1e-6 * fd.abs(),
                "order {order}: {got} vs {fd}"
            );
        }
    }

    #[test]
    fn zero_intensity_kills_derivatives() {
        let sc = mmwave_scenario(1.25, 100.0, 0.0);
        let ev = Evaluator::new(&sc).unwrap();
        let exponent = ev.interference_exponent(250.0, Branch::Los);
        for order in 1..=4 {
            assert_eq!(laplace_derivative(&exponent, order, 123.0).unwrap(), 0.0);
        }
    }

    // -- conditional probability ------------------------------------------------

    #[test]
    fn rayleigh_case_reduces_to_transform_product() {
        // m = 1 evaluated through the composition machinery must equal the
        // single-term product to machine precision.
        let sc = lte_scenario(1.25, 100.0);
        let ev = Evaluator::new(&sc).unwrap();
        for r1 in [120.0, 400.0, 900.0] {
            for t1 in [Branch::Los, Branch::Nlos] {
                let link = LinkState { t1, r1 };
                let p = ev.conditional_backhaul_prob(&link).unwrap();
                let s = s_value(&sc, &link);
                let inv_pec = 1.0 / (sc.tech.power * sc.tech.uav.gain() * sc.tech.near_field);
                let direct = (-inv_pec * s * sc.tech.sigma2).exp()
                    * ev.laplace_interference(s, r1, Branch::Los).unwrap()
                    * ev.laplace_interference(s, r1, Branch::Nlos).unwrap();
                assert!(
                    (p - direct).abs() < 1e-12,
                    "r1={r1} {t1:?}: {p} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn no_interference_reduces_to_gamma_ccdf() {
        // zeta = 0 with m_los = 3: only the noise terms of the sum survive
        let sc = mmwave_scenario(1.25, 100.0, 0.0);
        let ev = Evaluator::new(&sc).unwrap();
        for r1 in [100.0, 447.0, 1200.0] {
            let link = LinkState {
                t1: Branch::Los,
                r1,
            };
            let p = ev.conditional_backhaul_prob(&link).unwrap();
            let s = s_value(&sc, &link);
            let x = s * sc.tech.sigma2 / (sc.tech.power * sc.tech.uav.gain() * sc.tech.near_field);
            let want = (-x).exp() * (1.0 + x + x * x / 2.0);
            assert!((p - want).abs() < 1e-9, "r1={r1}: {p} vs {want}");
        }
    }

    #[test]
    fn gamma_ccdf_path_agrees_with_composition_machinery() {
        // A vanishing interferer intensity must approach the zeta = 0 value.
        let sc0 = mmwave_scenario(1.25, 100.0, 0.0);
        let sc1 = mmwave_scenario(1.25, 100.0, 1e-12);
        let link = LinkState {
            t1: Branch::Los,
            r1: 400.0,
        };
        let p0 = conditional_backhaul_prob(&link, &sc0).unwrap();
        let p1 = conditional_backhaul_prob(&link, &sc1).unwrap();
        assert!((p0 - p1).abs() < 1e-6, "{p0} vs {p1}");
    }

    #[test]
    fn conditional_is_one_without_noise_and_interference() {
        let mut sc = mmwave_scenario(1.25, 100.0, 0.0);
        sc.tech.sigma2 = 1e-300;
        let p = conditional_backhaul_prob(
            &LinkState {
                t1: Branch::Nlos,
                r1: 500.0,
            },
            &sc,
        )
        .unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_nonincreasing_in_threshold() {
        let base = lte_scenario(1.25, 100.0);
        let mut prev = 1.0;
        for theta_db in [0.0, 3.0, 6.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
            let mut sc = base;
            sc.tech.theta = 10f64.powf(theta_db / 10.0);
            let p = conditional_backhaul_prob(
                &LinkState {
                    t1: Branch::Los,
                    r1: 400.0,
                },
                &sc,
            )
            .unwrap();
            assert!(p <= prev + 1e-9, "increase at {theta_db} dB");
            prev = p;
        }
    }

    // -- backhaul probability -----------------------------------------------------

    #[test]
    fn backhaul_probability_reaches_one_without_noise() {
        let mut sc = mmwave_scenario(1.25, 100.0, 0.0);
        sc.tech.sigma2 = 1e-300;
        let p = backhaul_probability(&sc).unwrap();
        assert!((p - 1.0).abs() < 1e-9, "got {p}");
    }

    #[test]
    fn backhaul_probability_nondecreasing_in_density_mmwave() {
        let mut prev = 0.0;
        for lambda in [0.25, 0.75, 1.25, 2.5, 5.0] {
            let p = backhaul_probability(&mmwave_scenario(lambda, 100.0, 0.0)).unwrap();
            assert!(p >= prev - 1e-9, "drop at lambda={lambda}: {p} < {prev}");
            prev = p;
        }
    }

    #[test]
    fn backhaul_probability_nondecreasing_in_gs_height_mmwave() {
        let mut prev = 0.0;
        for gamma_g in [10.0, 20.0, 30.0, 40.0, 50.0, 60.0] {
            let base = mmwave_scenario(1.25, 100.0, 0.0);
            let dep = Deployment::new(1.25e-6, gamma_g, 100.0).unwrap();
            let sc = Scenario::new(base.env, dep, base.tech).unwrap();
            let p = backhaul_probability(&sc).unwrap();
            assert!(p >= prev - 1e-9, "drop at gamma_g={gamma_g}");
            prev = p;
        }
    }

    // -- expected rate ----------------------------------------------------------

    #[test]
    fn rate_is_zero_for_zero_bandwidth() {
        let mut sc = mmwave_scenario(1.25, 100.0, 0.0);
        sc.tech.bandwidth = 0.0;
        let ev = Evaluator::with_options(&sc, AnalyticOptions::rate_default()).unwrap();
        assert_eq!(ev.expected_rate().unwrap(), 0.0);
    }

    #[test]
    fn rate_layer_cake_on_degenerate_coverage() {
        // For a constant SINR sbar the coverage is a step and the layer-cake
        // integral must give b log2(1 + sbar).
        let sbar: f64 = 30.0;
        let t_edge = (1.0 + sbar).log2();
        let spec = QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_depth: 40,
        };
        let coverage = |t: f64| if (2f64).powf(t) - 1.0 <= sbar { 1.0 } else { 0.0 };
        let b = 20e6;
        let got = b * crate::numerics::integrate_segments(
            coverage,
            &[0.0, t_edge, 2.0 * t_edge],
            &spec,
        )
        .unwrap();
        assert!(close(got, b * (1.0 + sbar).log2(), 1e-9));
    }

    // -- properties ----------------------------------------------------------------

    #[test]
    fn closed_form_equivalence_on_randomized_scenarios() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..6 {
            let lambda = rng.random_range(0.5..4.0);
            let gamma = rng.random_range(60.0..120.0);
            let zeta = rng.random_range(0.05..0.5);
            let sc = mmwave_scenario(lambda, gamma, zeta);
            let ev = Evaluator::new(&sc).unwrap();
            let r1 = rng.random_range(100.0..600.0);
            let branch = if rng.random::<bool>() {
                Branch::Los
            } else {
                Branch::Nlos
            };
            let link = LinkState {
                t1: Branch::Los,
                r1,
            };
            let s = s_value(&sc, &link) * rng.random_range(0.2..5.0);
            let direct = ev.laplace_interference(s, r1, branch).unwrap();
            let closed = ev.laplace_mmwave_closed(s, r1, branch).unwrap();
            assert!(
                (direct - closed).abs() <= 1e-6 * direct.abs(),
                "trial {trial}: {direct} vs {closed}"
            );
        }
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = lte_scenario(1.25, 100.0);
        let b = lte_scenario(1.25, 100.0);
        let c = lte_scenario(2.5, 100.0);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn scenario_recomputes_uptilt() {
        let sc = lte_scenario(1.25, 100.0);
        let phi_t = sc.tech.lte.unwrap().phi_t;
        assert!(close(phi_t, 8.896025825607328, 1e-12), "got {phi_t}");
    }
}
