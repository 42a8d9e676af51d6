//! Shear profiles on the half-line, their assumption checks and the class-K⁺
//! classification.

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_ORDER};
use crate::numerics::brent_root;
use crate::quad::{integrate, QuadOptions};
use std::fmt;
use std::sync::Arc;

/// Default truncation of half-line computations.
pub const Y_MAX: f64 = 40.0;

/// `[U, U', ..., U^(MAX_ORDER)]` at one point.
pub type Derivs = [f64; MAX_ORDER + 1];

type Shape = dyn Fn(f64, usize) -> Derivs + Send + Sync;

/// Smooth velocity profile `U_s : [0, ∞) → ℝ`.
///
/// `shape(y, order)` must fill entries `0..=order`; higher entries are ignored.
#[derive(Clone)]
pub struct ShearProfile {
    name: String,
    params: Vec<(String, f64)>,
    u_infinity: f64,
    d_max: usize,
    flat: bool,
    shape: Arc<Shape>,
}

impl fmt::Debug for ShearProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShearProfile")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("u_infinity", &self.u_infinity)
            .field("d_max", &self.d_max)
            .field("flat", &self.flat)
            .finish()
    }
}

impl ShearProfile {
    /// Wraps an arbitrary derivative evaluator. `flat` declares that every
    /// derivative vanishes at `y = 0`.
    pub fn from_fn<F>(name: &str, params: Vec<(String, f64)>, u_infinity: f64, d_max: usize, flat: bool, shape: F) -> Self
    where
        F: Fn(f64, usize) -> Derivs + Send + Sync + 'static,
    {
        ShearProfile {
            name: name.to_string(),
            params,
            u_infinity,
            d_max: d_max.min(MAX_ORDER),
            flat,
            shape: Arc::new(shape),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    /// Name plus parameters, e.g. `gevrey(rho=2)`.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return self.name.clone();
        }
        let p: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.name, p.join(";"))
    }

    pub fn u_infinity(&self) -> f64 {
        self.u_infinity
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn value(&self, y: f64) -> f64 {
        (self.shape)(y, 0)[0]
    }

    /// `U^(k)(y)`.
    pub fn derivative(&self, k: usize, y: f64) -> Result<f64> {
        if k > self.d_max {
            return Err(Error::UnsupportedOrder { requested: k, max: self.d_max });
        }
        Ok((self.shape)(y, k)[k])
    }

    /// All derivatives up to `order` (clamped to `d_max`).
    pub fn derivs(&self, y: f64, order: usize) -> Derivs {
        (self.shape)(y, order.min(self.d_max))
    }

    /// `U` and `U''` together, the pair every Rayleigh evaluation needs.
    pub fn value_and_second(&self, y: f64) -> (f64, f64) {
        let d = (self.shape)(y, 2);
        (d[0], d[2])
    }

    /// The profile multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ShearProfile {
        let inner = self.shape.clone();
        let mut params = self.params.clone();
        params.push(("scale".into(), s));
        ShearProfile {
            name: self.name.clone(),
            params,
            u_infinity: s * self.u_infinity,
            d_max: self.d_max,
            flat: self.flat,
            shape: Arc::new(move |y, order| {
                let mut d = inner(y, order);
                for v in d.iter_mut() {
                    *v *= s;
                }
                d
            }),
        }
    }

    /// Grid estimate of `sup |U^(k)|` on `[0, y_max]`.
    pub fn sup_abs(&self, k: usize, y_max: f64) -> f64 {
        let n = 4000;
        (0..=n)
            .map(|i| {
                let y = y_max * i as f64 / n as f64;
                (self.shape)(y, k)[k].abs()
            })
            .fold(0.0, f64::max)
    }
}

fn zeros() -> Derivs {
    [0.0; MAX_ORDER + 1]
}

/// `U(y) = exp(-y^{-1/(ρ-1)})`, flat at 0 and Gevrey of order ρ.
pub fn gevrey(rho: f64) -> Result<ShearProfile> {
    if !(rho > 1.0) || !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("gevrey profile needs rho > 1, got {rho}")));
    }
    let q = 1.0 / (rho - 1.0);
    let shape = move |y: f64, order: usize| -> Derivs {
        if y < 1e-12 {
            return zeros();
        }
        let psi = y.powf(-q);
        if psi > 700.0 {
            return zeros();
        }
        let mut d = if order > 3 {
            let x = Jet::variable(y, order);
            (-x.powf(-q)).exp().derivatives()
        } else {
            zeros()
        };
        let e = (-psi).exp();
        let r1 = rho - 1.0;
        let w = y.powf(q);
        d[0] = e;
        if order >= 1 {
            d[1] = y.powf(-rho / r1) * e / r1;
        }
        if order >= 2 {
            d[2] = (1.0 - rho * w) / (r1 * r1 * y.powf(2.0 * rho / r1)) * e;
        }
        if order >= 3 {
            d[3] = (1.0 + 2.0 * rho * rho * w * w - rho * w * (3.0 + w)) / (r1.powi(3) * y.powf(3.0 * rho / r1)) * e;
        }
        d
    };
    Ok(ShearProfile::from_fn("gevrey", vec![("rho".into(), rho)], 1.0, MAX_ORDER, true, shape))
}

/// Flat `exp(-1/s)` glue, 0 for `s ≤ 0`.
fn glue_jet(s: Jet) -> Jet {
    if s.value() <= 0.0 {
        return Jet::constant(0.0, s.order());
    }
    (-s.recip()).exp()
}

/// Smooth step on `[0, 1]`: 0 below, 1 above, `C^∞` in between.
pub(crate) fn smooth_step_jet(s: Jet) -> Jet {
    let v = s.value();
    if v <= 0.0 {
        return Jet::constant(0.0, s.order());
    }
    if v >= 1.0 {
        return Jet::constant(1.0, s.order());
    }
    let a = glue_jet(s);
    let b = glue_jet(-s.add_const(-1.0));
    a * (a + b).recip()
}

/// A positive profile with exactly two inflection points `y1 < y2` sharing
/// one inflection value, `U(0) = U_∞ = 0`, flat at 0.
///
/// Built as `A exp(L(x))` with `x = (y - m)/m`, `m = (y1 + y2)/2`. On the left
/// and through the core `L = -κ/(1 - x²)`, which is even in `x`, so the
/// inflection points `m(1 ± x*)` carry identical values. Past the right
/// inflection `L` is blended into its own second-order Taylor polynomial,
/// which gives a Gaussian tail.
pub fn two_inflection(y1: f64, y2: f64, amplitude: f64) -> Result<ShearProfile> {
    if !(y1 > 0.0 && y2 > y1 && y2.is_finite()) {
        return Err(Error::InvalidParameter(format!("two-inflection profile needs 0 < y1 < y2, got ({y1}, {y2})")));
    }
    if !(amplitude > 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude must be positive, got {amplitude}")));
    }
    let m = 0.5 * (y1 + y2);
    let xs = (y2 - y1) / (y2 + y1);
    let kappa = (1.0 + 2.0 * xs * xs - 3.0 * xs.powi(4)) / (2.0 * xs * xs);
    let xg = xs + 0.1 * (1.0 - xs);
    let xh = xs + 0.3 * (1.0 - xs);
    let core = move |x: Jet| -> Jet { (-(x.square()).add_const(-1.0)).recip().scale(-kappa) };
    let tangent = core(Jet::variable(xg, 2)).derivatives();
    let tail = move |x: Jet| -> Jet {
        let d = x.add_const(-xg);
        d.square().scale(0.5 * tangent[2]) + d.scale(tangent[1]).add_const(tangent[0])
    };
    let shape = move |y: f64, order: usize| -> Derivs {
        if y <= 0.0 {
            return zeros();
        }
        let x = Jet::variable(y, order).add_const(-m).scale(1.0 / m);
        let xv = x.value();
        let l = if xv <= xg {
            if 1.0 - xv * xv <= 0.0 {
                return zeros();
            }
            core(x)
        } else if xv >= xh {
            tail(x)
        } else {
            let s = smooth_step_jet(x.add_const(-xg).scale(1.0 / (xh - xg)));
            let one_minus = (-s).add_const(1.0);
            one_minus * core(x) + s * tail(x)
        };
        if l.value() < -740.0 {
            return zeros();
        }
        l.exp().scale(amplitude).derivatives()
    };
    Ok(ShearProfile::from_fn(
        "two-inflection",
        vec![("y1".into(), y1), ("y2".into(), y2), ("amplitude".into(), amplitude)],
        0.0,
        MAX_ORDER,
        true,
        shape,
    ))
}

/// `e^{-y}` without any cutoff; not flat (`U(0) = 1`). Test input only.
pub fn exp_decay_raw() -> ShearProfile {
    ShearProfile::from_fn("exp-raw", vec![], 0.0, MAX_ORDER, false, |y, order| {
        let mut d = zeros();
        let e = (-y).exp();
        for (k, v) in d.iter_mut().enumerate().take(order + 1) {
            *v = if k % 2 == 0 { e } else { -e };
        }
        d
    })
}

/// `e^{-y} χ(y)` with a flat step `χ` (0 at 0, 1 on `[1, ∞)`).
pub fn exp_decay_flat() -> ShearProfile {
    ShearProfile::from_fn("exp-flat", vec![], 0.0, MAX_ORDER, true, |y, order| {
        if y <= 0.0 {
            return zeros();
        }
        let x = Jet::variable(y, order);
        ((-x).exp() * smooth_step_jet(x)).derivatives()
    })
}

/// `U ≡ c0`. Flat only when `c0 = 0`.
pub fn constant(c0: f64) -> ShearProfile {
    ShearProfile::from_fn("constant", vec![("value".into(), c0)], c0, MAX_ORDER, c0 == 0.0, move |_, _| {
        let mut d = zeros();
        d[0] = c0;
        d
    })
}

/// `U = s·y`, whose second derivative vanishes identically. Test input only.
pub fn linear_ramp(slope: f64) -> ShearProfile {
    ShearProfile::from_fn("linear-ramp", vec![("slope".into(), slope)], f64::INFINITY, MAX_ORDER, false, move |y, _| {
        let mut d = zeros();
        d[0] = slope * y;
        d[1] = slope;
        d
    })
}

/// Builds a catalog profile from its name and parameters.
pub fn by_name(name: &str, get: &dyn Fn(&str, f64) -> f64) -> Result<ShearProfile> {
    match name {
        "gevrey" => gevrey(get("rho", 2.0)),
        "two-inflection" => two_inflection(get("y1", 1.0), get("y2", 3.0), get("amplitude", 1.0)),
        "exp-flat" => Ok(exp_decay_flat()),
        "exp-raw" => Ok(exp_decay_raw()),
        "constant" => Ok(constant(get("value", 1.0))),
        other => Err(Error::InvalidParameter(format!("unknown profile '{other}'"))),
    }
}

/// Integrability regime of the assumption dichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Derivatives of order ≥ 1 must be integrable.
    GammaAboveHalf,
    /// Derivatives of order ≥ 0 must be integrable.
    GammaBelowHalf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Entry {
    pub order: usize,
    /// `∫_0^{Y_MAX} |U^(k)|`.
    pub integral: f64,
    /// Local power-law decay exponent at `Y_MAX`.
    pub tail_exponent: f64,
    /// Bound on `∫_{Y_MAX}^∞ |U^(k)|`; infinite when not integrable.
    pub tail_bound: f64,
    pub integrable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub regime: Regime,
    pub derivative_at_zero: Vec<f64>,
    pub max_derivative_at_zero: f64,
    pub derivatives_vanish_at_zero: bool,
    pub l1: Vec<L1Entry>,
    pub k_max: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks flatness at 0 and integrability of the required derivative orders.
pub fn check_assumptions(profile: &ShearProfile, regime: Regime, k_max: usize, tol: f64) -> Result<AssumptionReport> {
    if k_max > profile.d_max() {
        return Err(Error::UnsupportedOrder { requested: k_max, max: profile.d_max() });
    }
    let at_zero: Vec<f64> = (0..=k_max).map(|k| profile.derivs(0.0, k)[k].abs()).collect();
    let max0 = at_zero.iter().copied().fold(0.0, f64::max);
    let first = match regime {
        Regime::GammaAboveHalf => 1,
        Regime::GammaBelowHalf => 0,
    };
    let mut l1 = Vec::new();
    for k in first..=k_max {
        let f = |y: f64| profile.derivs(y, k)[k].abs();
        let mut pts: Vec<f64> = vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, Y_MAX];
        pts.dedup();
        let mut integral = 0.0;
        for w in pts.windows(2) {
            integral += integrate(f, w[0], w[1], QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 2000 })?.value;
        }
        let f_end = f(Y_MAX);
        let f_half = f(0.5 * Y_MAX);
        let (p, tail) = if f_end < 1e-300 {
            (f64::INFINITY, 0.0)
        } else if f_half <= 0.0 {
            (0.0, f64::INFINITY)
        } else {
            let p = (f_half / f_end).ln() / 2f64.ln();
            if p > 1.05 {
                (p, f_end * Y_MAX / (p - 1.0))
            } else {
                (p, f64::INFINITY)
            }
        };
        let integrable = tail.is_finite() || f_end < tol;
        l1.push(L1Entry { order: k, integral, tail_exponent: p, tail_bound: tail, integrable });
    }
    let vanish = max0 < tol;
    let pass = vanish && l1.iter().all(|e| e.integrable);
    Ok(AssumptionReport {
        regime,
        derivative_at_zero: at_zero,
        max_derivative_at_zero: max0,
        derivatives_vanish_at_zero: vanish,
        l1,
        k_max,
        tolerance: tol,
        pass,
    })
}

/// Uniform probe grid on `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        ProbeGrid { start: 1e-3, end: Y_MAX, points: 8001 }
    }
}

impl ProbeGrid {
    pub fn nodes(&self) -> Vec<f64> {
        crate::numerics::linspace(self.start, self.end, self.points)
    }
}

/// Derivatives of `U` at one inflection point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflectionPoint {
    pub y: f64,
    pub derivs: Derivs,
}

#[derive(Debug, Clone)]
pub struct InflectionData {
    pub inflection_points: Vec<InflectionPoint>,
    /// `U₀`, the common value at the inflection points.
    pub inflection_value: f64,
    pub kplus: bool,
    pub k_sup: f64,
    pub k_inf_interior: f64,
    /// `(y, K(y))` on the probe grid.
    pub k_samples: Vec<(f64, f64)>,
    profile: ShearProfile,
}

/// Distance from an inflection point inside which `K` uses its Taylor quotient.
const REMOVABLE_WINDOW: f64 = 1e-4;

impl InflectionData {
    pub fn points(&self) -> Vec<f64> {
        self.inflection_points.iter().map(|p| p.y).collect()
    }

    /// `K(y) = -U''(y) / (U(y) - U₀)`, continuous through inflection points.
    pub fn k(&self, y: f64) -> f64 {
        potential_at(&self.profile, self.inflection_value, &self.inflection_points, y)
    }

    pub fn profile(&self) -> &ShearProfile {
        &self.profile
    }
}

fn potential_at(profile: &ShearProfile, u0: f64, points: &[InflectionPoint], y: f64) -> f64 {
    if let Some(p) = points.iter().min_by(|a, b| (a.y - y).abs().total_cmp(&(b.y - y).abs())) {
        let d = y - p.y;
        if d.abs() < REMOVABLE_WINDOW {
            let u = &p.derivs;
            let num = u[3] + u[4] * d / 2.0 + u[5] * d * d / 6.0;
            let den = u[1] + u[2] * d / 2.0 + u[3] * d * d / 6.0 + u[4] * d.powi(3) / 24.0;
            return -num / den;
        }
    }
    let dv = profile.derivs(y, 3);
    let gap = dv[0] - u0;
    if gap.abs() < 1e-10 {
        if dv[1] == 0.0 {
            return 0.0;
        }
        return -dv[3] / dv[1];
    }
    -dv[2] / gap
}

/// Locates inflection points on `grid`, evaluates `K` and classifies the
/// profile. Profiles without inflection points return `kplus = false`.
pub fn inflection_data(profile: &ShearProfile, grid: ProbeGrid) -> Result<InflectionData> {
    if profile.d_max() < 5 {
        return Err(Error::UnsupportedOrder { requested: 5, max: profile.d_max() });
    }
    let nodes = grid.nodes();
    let second: Vec<f64> = nodes.iter().map(|&y| profile.derivs(y, 2)[2]).collect();
    let mut roots = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for (&y, &s) in nodes.iter().zip(&second) {
        if s == 0.0 {
            continue;
        }
        if let Some((yl, sl)) = last {
            if sl.signum() != s.signum() {
                let r = brent_root(|t| profile.derivs(t, 2)[2], yl, y, 1e-15)?;
                roots.push(r);
            }
        }
        last = Some((y, s));
    }
    let empty = |profile: &ShearProfile| InflectionData {
        inflection_points: vec![],
        inflection_value: f64::NAN,
        kplus: false,
        k_sup: f64::NAN,
        k_inf_interior: f64::NAN,
        k_samples: vec![],
        profile: profile.clone(),
    };
    if roots.is_empty() {
        return Ok(empty(profile));
    }
    let points: Vec<InflectionPoint> = roots
        .iter()
        .map(|&y| InflectionPoint { y, derivs: profile.derivs(y, 5) })
        .collect();
    let u0 = points[0].derivs[0];
    let values_agree = points.iter().all(|p| (p.derivs[0] - u0).abs() <= 1e-6 * (1.0 + u0.abs()));
    let k_samples: Vec<(f64, f64)> = nodes.iter().map(|&y| (y, potential_at(profile, u0, &points, y))).collect();
    let k_sup = k_samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = 0.5 * points[0].y;
    let hi = 2.0 * points[points.len() - 1].y;
    let k_inf_interior = k_samples
        .iter()
        .filter(|s| s.0 >= lo && s.0 <= hi)
        .map(|s| s.1)
        .fold(f64::INFINITY, f64::min);
    let nonnegative = k_samples.iter().all(|s| s.1.is_finite() && s.1 >= -1e-12);
    let kplus = values_agree && nonnegative && k_inf_interior > 0.0 && k_sup.is_finite() && k_sup < 1e12;
    Ok(InflectionData {
        inflection_points: points,
        inflection_value: u0,
        kplus,
        k_sup,
        k_inf_interior,
        k_samples,
        profile: profile.clone(),
    })
}
