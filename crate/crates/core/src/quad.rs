//! Adaptive Gauss-Kronrod quadrature.
//!
//! Globally adaptive bisection driven by the 7-point Gauss / 15-point Kronrod
//! pair. Semi-infinite ranges are mapped onto `(0, 1]` with `x = a + (1-s)/s`.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights attached to XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and subdivision budget.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

impl QuadOptions {
    pub fn with_abs(abs_tol: f64) -> Self {
        QuadOptions { abs_tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let s = f(center - dx) + f(center + dx);
        res_k += WGK[j] * s;
        if j % 2 == 1 {
            res_g += WG[j / 2] * s;
        }
    }
    let value = res_k * half;
    let error = ((res_k - res_g) * half).abs();
    (value, error)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]` (finite). A reversed range flips the sign.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("integration bounds must be finite: [{a}, {b}]")));
    }
    let (e, converged) = adapt(&f, a, b, opts);
    if converged {
        Ok(e)
    } else {
        Err(Error::NotConverged(format!("quadrature on [{a}, {b}]: error {:e} after {} evaluations", e.error, e.evaluations)))
    }
}

/// Like [`integrate`] but returns the best estimate even when the budget runs
/// out; for use inside other integrands, where `error` is the only signal.
pub fn integrate_best<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Estimate {
    adapt(&f, a, b, opts).0
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: QuadOptions) -> (Estimate, bool) {
    if a == b {
        return (Estimate { value: 0.0, error: 0.0, evaluations: 0 }, true);
    }
    if b < a {
        let (e, ok) = adapt(f, b, a, opts);
        return (Estimate { value: -e.value, ..e }, ok);
    }
    let (v, e) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    let mut evaluations = 15;
    let mut converged = true;
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if heap.len() >= opts.max_intervals {
            // Roundoff floor: accept when the residual error is at double precision.
            converged = total_err <= 1e3 * f64::EPSILON * total.abs().max(opts.abs_tol);
            break;
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        if heap.len() % 64 == 0 {
            // Re-sum to keep the running totals free of drift.
            let mut parts: Vec<Segment> = heap.iter().copied().collect();
            parts.sort_by(|p, q| p.a.total_cmp(&q.a));
            total = pairwise_sum(&parts.iter().map(|s| s.value).collect::<Vec<_>>());
            total_err = parts.iter().map(|s| s.error).sum();
        }
    }
    let mut parts: Vec<Segment> = heap.into_vec();
    parts.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = pairwise_sum(&parts.iter().map(|s| s.value).collect::<Vec<_>>());
    let error = parts.iter().map(|s| s.error).sum();
    (Estimate { value, error, evaluations }, converged)
}

/// Integrates over consecutive pieces `[p0,p1], [p1,p2], ...`; breakpoints
/// should sit on kinks or sharp features of the integrand.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], opts: QuadOptions) -> Result<Estimate> {
    let mut value = Vec::with_capacity(points.len());
    let mut error = 0.0;
    let mut evaluations = 0;
    for w in points.windows(2) {
        let e = integrate(&f, w[0], w[1], opts)?;
        value.push(e.value);
        error += e.error;
        evaluations += e.evaluations;
    }
    Ok(Estimate { value: pairwise_sum(&value), error, evaluations })
}

/// Integrates `f` over `[a, ∞)` through the map `x = a + (1-s)/s`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<Estimate> {
    let g = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let x = a + (1.0 - s) / s;
        let v = f(x) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, opts)
}

/// Pairwise (cascade) summation; deterministic for a fixed input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => {
            let m = n / 2;
            pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
        }
    }
}
