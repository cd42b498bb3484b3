//! Numerical machinery: adaptive Gauss-Kronrod quadrature, the Gauss
//! hypergeometric function for non-positive arguments, composition
//! enumeration, and high-order derivatives of exponential-form Laplace
//! transforms.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Tolerances and subdivision limit for adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Relative tolerance on the integral value.
    pub rel_tol: f64,
    /// Absolute tolerance floor.
    pub abs_tol: f64,
    /// Maximum bisection depth per interval.
    pub max_depth: u32,
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_depth: u32) -> Result<Self> {
        if !(rel_tol > 0.0) || !(abs_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if max_depth < 1 {
            return Err(Error::InvalidArgument(
                "quadrature max_depth must be >= 1".into(),
            ));
        }
        Ok(Self {
            rel_tol,
            abs_tol,
            max_depth,
        })
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_depth: 40,
        }
    }
}

// 15-point Kronrod abscissae with embedded 7-point Gauss rule (positive half).
const XGK15: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK15: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG7: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Gauss-Kronrod 15/7 panel; returns (integral, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut res_kronrod = f_center * WGK15[7];
    let mut res_gauss = f_center * WG7[3];
    let mut res_abs = res_kronrod.abs();
    let mut fv = [0.0f64; 14];

    for j in 0..7 {
        let dx = half * XGK15[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[7 + j] = f2;
        res_kronrod += WGK15[j] * (f1 + f2);
        res_abs += WGK15[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_gauss += WG7[j / 2] * (f1 + f2);
        }
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK15[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK15[j] * ((fv[j] - mean).abs() + (fv[7 + j] - mean).abs());
    }

    let integral = res_kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();

    // QUADPACK-style rescaled error estimate.
    let mut err = ((res_kronrod - res_gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (integral, err)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (value, err) = gk15(f, a, b);
    if err <= tol || (b - a).abs() < f64::EPSILON * (a.abs() + b.abs() + 1.0) {
        return Ok(value);
    }
    if depth == 0 {
        return Err(Error::QuadratureDepth { lo: a, hi: b, err });
    }
    let mid = 0.5 * (a + b);
    let half_tol = 0.5 * tol;
    Ok(adapt(f, a, mid, half_tol, depth - 1)? + adapt(f, mid, b, half_tol, depth - 1)?)
}

/// Adaptive estimate of the integral of `f` over the finite interval `[lo, hi]`.
///
/// Deterministic for identical inputs. Infinite upper limits are the
/// caller's responsibility: truncate per whatever tail bound applies
/// (see [`integrate_tail`]).
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64> {
    if lo == hi {
        return Ok(0.0);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(
            "integrate requires finite bounds".into(),
        ));
    }
    let (rough, _) = gk15(&f, lo, hi);
    let tol = spec.abs_tol.max(spec.rel_tol * rough.abs());
    adapt(&f, lo, hi, tol, spec.max_depth)
}

/// Integral over `[points[0], points[n-1]]` with forced panel splits at
/// every interior point. Meant for piecewise-smooth integrands whose
/// kinks or jumps are known in advance.
pub fn integrate_segments<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    if points.len() < 2 {
        return Ok(0.0);
    }
    let mut panels = Vec::with_capacity(points.len() - 1);
    let mut rough = 0.0;
    for pair in points.windows(2) {
        let (v, e) = gk15(&f, pair[0], pair[1]);
        rough += v;
        panels.push((pair[0], pair[1], v, e));
    }
    let tol = spec.abs_tol.max(spec.rel_tol * rough.abs()) / panels.len() as f64;
    let mut total = 0.0;
    for (a, b, v, e) in panels {
        total += if e <= tol {
            v
        } else {
            adapt(&f, a, b, tol, spec.max_depth)?
        };
    }
    Ok(total)
}

/// Semi-infinite integral of a decaying integrand from `lo`.
///
/// Accumulates windows of geometrically growing width and stops once a
/// window contributes less than `rel_cut` of the running total (two
/// consecutive windows, to tolerate local zeros) or the hard cap on the
/// upper limit is reached.
pub fn integrate_tail<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    first_window: f64,
    spec: &QuadratureSpec,
    rel_cut: f64,
    cap: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut a = lo;
    let mut width = first_window.max(1e-6);
    let mut small_in_a_row = 0;
    while a < cap {
        let b = (a + width).min(cap);
        let part = integrate(&f, a, b, spec)?;
        acc += part;
        if part.abs() < rel_cut * acc.abs() {
            small_in_a_row += 1;
            if small_in_a_row >= 2 {
                break;
            }
        } else {
            small_in_a_row = 0;
        }
        a = b;
        width *= 2.0;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Gauss hypergeometric function
// ---------------------------------------------------------------------------

const HYP2F1_MAX_ITER: usize = 4_000_000;
const HYP2F1_EPS: f64 = 1e-15;

/// Direct power series for 2F1(a, b; c; z); caller guarantees |z| < 1.
fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for n in 0..HYP2F1_MAX_ITER {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (1.0 + nf)) * z;
        sum += term;
        if term == 0.0 || (term.abs() <= HYP2F1_EPS * sum.abs() && n > 2) {
            return Ok(sum);
        }
    }
    Err(Error::HypergeometricDivergence { a, b, c, z })
}

/// Gauss hypergeometric function 2F1(a, b; c; z) for z <= 0 and c > 0.
///
/// Arguments in (-0.5, 0] are summed directly; more negative arguments
/// go through the Pfaff transformation
/// 2F1(a, b; c; z) = (1-z)^(-a) 2F1(a, c-b; c; z/(z-1)),
/// which maps z < 0 into (0, 1) where the series converges.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gauss_2f1 requires c > 0 (got c={c})"
        )));
    }
    if z > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gauss_2f1 supports z <= 0 only (got z={z})"
        )));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z > -0.5 {
        hyp2f1_series(a, b, c, z)
    } else {
        let w = z / (z - 1.0);
        Ok((1.0 - z).powf(-a) * hyp2f1_series(a, c - b, c, w)?)
    }
}

// ---------------------------------------------------------------------------
// Composition enumeration
// ---------------------------------------------------------------------------

/// One way of splitting a derivative order n into LOS, NLOS and noise parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Composition3 {
    pub i_l: u32,
    pub i_n: u32,
    pub i_sigma: u32,
}

/// All triples of non-negative integers (i_l, i_n, i_sigma) summing to `n`,
/// in lexicographic order; there are (n+1)(n+2)/2 of them.
pub fn compositions(n: u32) -> Vec<Composition3> {
    let mut out = Vec::with_capacity(((n + 1) * (n + 2) / 2) as usize);
    for i_l in 0..=n {
        for i_n in 0..=(n - i_l) {
            out.push(Composition3 {
                i_l,
                i_n,
                i_sigma: n - i_l - i_n,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Derivatives of exponential-form Laplace transforms
// ---------------------------------------------------------------------------

/// A Laplace transform of the form L(s) = exp(-J(s)), described through
/// the derivatives of its exponent J.
///
/// `exponent_derivative(0, s)` is J(s) itself; order m >= 1 is the m-th
/// s-derivative of J.
pub trait LaplaceExponent {
    fn exponent_derivative(&self, order: u32, s: f64) -> Result<f64>;
}

/// L(s) = exp(-J(s)).
pub fn laplace_value<E: LaplaceExponent + ?Sized>(ev: &E, s: f64) -> Result<f64> {
    Ok((-ev.exponent_derivative(0, s)?).exp())
}

/// Derivatives d^k L / ds^k for k = 0..=max_order, via the recursion
/// L^(n) = -sum_{k=0}^{n-1} C(n-1, k) J^(n-k) L^(k).
pub fn laplace_derivatives<E: LaplaceExponent + ?Sized>(
    ev: &E,
    max_order: u32,
    s: f64,
) -> Result<Vec<f64>> {
    let n = max_order as usize;
    let mut d = vec![0.0f64; n + 1];
    d[0] = laplace_value(ev, s)?;
    if n == 0 {
        return Ok(d);
    }
    let mut j_der = vec![0.0f64; n + 1];
    for m in 1..=n {
        j_der[m] = ev.exponent_derivative(m as u32, s)?;
    }
    for order in 1..=n {
        let mut acc = 0.0;
        for k in 0..order {
            acc += binomial(order - 1, k) * j_der[order - k] * d[k];
        }
        d[order] = -acc;
    }
    Ok(d)
}

/// The n-th derivative of L(s) = exp(-J(s)) at `s`.
pub fn laplace_derivative<E: LaplaceExponent + ?Sized>(ev: &E, order: u32, s: f64) -> Result<f64> {
    Ok(laplace_derivatives(ev, order, s)?[order as usize])
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

// ---------------------------------------------------------------------------
