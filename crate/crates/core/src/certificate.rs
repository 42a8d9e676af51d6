//! Variational instability certificate for class `K⁺` profiles.
//!
//! With `K = -U''/(U - U₀)` and the profile shifted so that its inflection
//! point `y₀` sits at `η`,
//!
//! ```text
//! Q(η) = ∫_η^∞ |U'(y + y₀ - η)|² - K(y) |U(y + y₀ - η) - U₀|² dy
//! ```
//!
//! vanishes at `η = y₀` and has slope `U'(y₀)² > 0` there, so it is negative
//! just below `y₀`. Cutting the shifted profile off at scale `n` gives an
//! `H¹₀` function with negative quadratic form, hence a negative eigenvalue
//! of `-∂_yy - K`. `K` is always the unshifted potential.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::numerics::{geomspace, solve_tridiagonal};
use crate::profile::{inflection_data, smooth_step_jet, InflectionData, ProbeGrid, ShearProfile, Y_MAX};
use crate::quad::{integrate_pieces, integrate_to_infinity, QuadOptions};
use std::sync::Arc;

/// Threshold below which `Q(η)` counts as negative in the line search.
pub const TOL_CERT: f64 = 1e-6;
/// Number of downward line-search steps per `y₀`.
pub const LINE_STEPS: usize = 64;
/// Largest cutoff scale tried before giving up.
pub const MAX_CUTOFF: usize = 1 << 20;
/// Interior nodes of the default Schrödinger discretization.
pub const EIG_NODES: usize = 4000;

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 20_000 }
}

/// A candidate `φ ∈ H¹₀(ℝ₊)`, zero outside `[support[0], support.last()]`.
#[derive(Clone)]
pub struct TestFunction {
    /// `(φ(y), φ'(y))`.
    pub eval: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
    /// Increasing breakpoints; quadrature splits at each.
    pub support: Vec<f64>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction").field("support", &self.support).finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new<F>(support: Vec<f64>, eval: F) -> Result<Self>
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        if support.len() < 2 || support[0] < 0.0 || support.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("test-function support must be increasing and in [0, ∞)".into()));
        }
        Ok(TestFunction { eval: Arc::new(eval), support })
    }

    pub fn value(&self, y: f64) -> f64 {
        if y < self.support[0] || y > self.support[self.support.len() - 1] {
            return 0.0;
        }
        (self.eval)(y).0
    }

    /// `‖φ‖²_{L²}`.
    pub fn norm_sq(&self) -> Result<f64> {
        Ok(integrate_pieces(|y| (self.eval)(y).0.powi(2), &self.support, quad_opts())?.value)
    }
}

/// `∫ |φ'|² - K|φ|²`. `φ` must vanish at the left end of its support, which
/// is where it meets the wall or the zero extension.
pub fn quadratic_form(data: &InflectionData, phi: &TestFunction) -> Result<f64> {
    let (v0, d0) = (phi.eval)(phi.support[0]);
    let scale = 1.0 + d0.abs();
    if v0.abs() > 1e-10 * scale {
        return Err(Error::Precondition(format!("test function is {v0:e} at the left end of its support")));
    }
    let f = |y: f64| {
        let (v, d) = (phi.eval)(y);
        d * d - data.k(y) * v * v
    };
    Ok(integrate_pieces(f, &phi.support, quad_opts())?.value)
}

/// The inflection point `y₀` and value `U₀` used by the certificate: the
/// first inflection point of a class `K⁺` profile.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub data: InflectionData,
    pub y0: f64,
    pub u0: f64,
}

/// Inflection data of a class `K⁺` profile. No inflection point is a
/// certificate failure; an inflection point outside `K⁺` breaks the
/// precondition.
pub fn anchor(profile: &ShearProfile) -> Result<Anchor> {
    let data = inflection_data(profile, ProbeGrid::default())?;
    let Some(first) = data.inflection_points.first() else {
        return Err(Error::CertificateFailed(format!("{} has no inflection point", profile.label())));
    };
    if !data.kplus {
        return Err(Error::Precondition(format!("{} is not in class K+", profile.label())));
    }
    let y0 = first.y;
    let u0 = data.inflection_value;
    Ok(Anchor { data, y0, u0 })
}

/// `Q(η)`, on the substituted variable `x = y + y₀ - η ∈ [y₀, ∞)`.
pub fn q_of_eta(anchor: &Anchor, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let shift = anchor.y0 - eta;
    let profile = anchor.data.profile();
    let f = |x: f64| {
        let d = profile.derivs(x, 1);
        let w = d[0] - anchor.u0;
        d[1] * d[1] - anchor.data.k(x - shift) * w * w
    };
    // Split near the inflection point, where the integrand varies fastest.
    let mid = anchor.y0 + 4.0 * anchor.y0.max(1.0);
    let near = integrate_pieces(f, &[anchor.y0, anchor.y0 + 0.5 * anchor.y0, mid], quad_opts())?.value;
    let far = integrate_to_infinity(f, mid, quad_opts())?.value;
    Ok(near + far)
}

/// Fourth-order central difference of `Q` at `η`.
pub fn q_prime(anchor: &Anchor, eta: f64) -> Result<f64> {
    let h = 1e-3 * anchor.y0;
    let q = |e: f64| q_of_eta(anchor, e);
    Ok((q(eta - 2.0 * h)? - 8.0 * q(eta - h)? + 8.0 * q(eta + h)? - q(eta + 2.0 * h)?) / (12.0 * h))
}

/// Flat cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`, with its derivative.
pub fn cutoff(s: f64) -> (f64, f64) {
    let j = smooth_step_jet(Jet::variable(s - 1.0, 1));
    (1.0 - j.value(), -j.derivative(1))
}

/// `w_η^n(y) = (U(y + y₀ - η) - U₀) χ(y/n)` on `[η, 2n]`, zero elsewhere.
pub fn build_test_function(anchor: &Anchor, eta: f64, n: usize) -> Result<TestFunction> {
    if n == 0 {
        return Err(Error::InvalidParameter("cutoff scale n must be >= 1".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let nf = n as f64;
    if 2.0 * nf <= eta {
        return Err(Error::InvalidParameter(format!("cutoff scale {n} leaves no support beyond eta = {eta}")));
    }
    let profile = anchor.data.profile().clone();
    let (shift, u0) = (anchor.y0 - eta, anchor.u0);
    let eval = move |y: f64| {
        let d = profile.derivs(y + shift, 1);
        let (c, dc) = cutoff(y / nf);
        ((d[0] - u0) * c, d[1] * c + (d[0] - u0) * dc / nf)
    };
    let mut support = vec![eta];
    let first = eta + anchor.y0.max(0.5);
    if first < nf {
        support.extend(geomspace(first, nf, 2 + (nf / first).log2().ceil() as usize));
    }
    support.push(2.0 * nf);
    support.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    TestFunction::new(support, eval)
}

/// Smallest eigenvalue of a potential's Dirichlet problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    /// Same on the mesh halved once more.
    pub refined: f64,
    /// Interior nodes behind `value`.
    pub nodes: usize,
}

/// Smallest eigenvalue of `-∂_yy - V` on `[0, y_max]` with Dirichlet ends,
/// three-point stencil on `nodes` interior points. Sturm bisection brackets
/// the ground state; inverse iteration with Rayleigh-quotient shifts polishes
/// it.
pub fn min_eig_tridiagonal(potential: &dyn Fn(f64) -> f64, y_max: f64, nodes: usize) -> Result<f64> {
    if nodes < 3 || !(y_max > 0.0) {
        return Err(Error::InvalidParameter(format!("need >= 3 nodes on a positive interval, got {nodes} on {y_max}")));
    }
    let h = y_max / (nodes + 1) as f64;
    let off = -1.0 / (h * h);
    let diag: Vec<f64> = (1..=nodes).map(|i| 2.0 / (h * h) - potential(i as f64 * h)).collect();
    // Eigenvalues below x, from the signs of the LDLᵀ pivots of A - x.
    let count_below = |x: f64| -> usize {
        let mut q = 1.0;
        let mut count = 0;
        for (i, &d) in diag.iter().enumerate() {
            q = d - x - if i == 0 { 0.0 } else { off * off / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + off.abs());
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    // Gershgorin bounds.
    let mut lo = diag.iter().map(|d| d - 2.0 * off.abs()).fold(f64::INFINITY, f64::min);
    let mut hi = diag.iter().map(|d| d + 2.0 * off.abs()).fold(f64::NEG_INFINITY, f64::max);
    while hi - lo > 1e-9 * (1.0 + lo.abs().min(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut mu = 0.5 * (lo + hi);
    let offs = vec![off; nodes];
    let mut v = vec![1.0; nodes];
    for _ in 0..50 {
        let d: Vec<f64> = diag.iter().map(|d| d - mu).collect();
        let mut w = v.clone();
        if solve_tridiagonal(&offs, &d, &offs, &mut w).is_err() {
            // Shift landed on an eigenvalue to working precision.
            break;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        v = w.iter().map(|x| x / norm).collect();
        let av: f64 = (0..nodes)
            .map(|i| {
                let left = if i > 0 { off * v[i - 1] } else { 0.0 };
                let right = if i + 1 < nodes { off * v[i + 1] } else { 0.0 };
                v[i] * (diag[i] * v[i] + left + right)
            })
            .sum();
        let step = (av - mu).abs();
        mu = av;
        if step <= 1e-14 * (1.0 + mu.abs()) {
            break;
        }
    }
    let slack = 1e-8 * (1.0 + mu.abs());
    if count_below(mu - slack) != 0 || count_below(mu + slack) < 1 {
        return Err(Error::Numerical(format!("inverse iteration left the ground state (mu = {mu})")));
    }
    Ok(mu)
}

/// Ground state of `-∂_yy - K` on `[0, Y_MAX]`, starting from `EIG_NODES`
/// nodes.
pub fn min_eig_schrodinger(data: &InflectionData) -> Result<EigenEstimate> {
    min_eig_with(&|y| data.k(y), Y_MAX, EIG_NODES)
}

/// Halves the mesh until two consecutive levels agree to `1e-4`; `value` is
/// the coarser of the two.
pub fn min_eig_with(potential: &dyn Fn(f64) -> f64, y_max: f64, nodes: usize) -> Result<EigenEstimate> {
    let mut nodes = nodes;
    let mut value = min_eig_tridiagonal(potential, y_max, nodes)?;
    for _ in 0..MAX_HALVINGS {
        // 2N + 1 interior nodes halve h = y_max / (N + 1) exactly.
        let refined = min_eig_tridiagonal(potential, y_max, 2 * nodes + 1)?;
        if (value - refined).abs() <= 1e-4 {
            return Ok(EigenEstimate { value, refined, nodes });
        }
        nodes = 2 * nodes + 1;
        value = refined;
    }
    Err(Error::InsufficientResolution(format!("ground state still moving at {nodes} nodes")))
}

const MAX_HALVINGS: usize = 5;

/// Outcome of [`certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub profile: String,
    pub eta0: f64,
    pub n: usize,
    /// `Q(w_{η₀}^n)`.
    pub q_value: f64,
    /// `Q(η₀)`, the `n → ∞` limit of `q_value`.
    pub q_eta0: f64,
    pub y0: f64,
    pub q_at_y0: f64,
    pub q_prime_at_y0: f64,
    pub min_eig: f64,
    /// `q_value / ‖w‖²`, an upper bound for `min_eig`.
    pub rayleigh_quotient: f64,
}

impl Certificate {
    pub fn pass(&self) -> bool {
        self.q_value < 0.0 && self.min_eig < 0.0 && self.q_at_y0.abs() < 1e-6 * (1.0 + self.q_prime_at_y0.abs())
    }
}

/// Runs the full certificate: checks `Q(y₀) = 0` and `Q'(y₀) > 0`, searches
/// `η₀ < y₀` with `Q(η₀) < -TOL_CERT`, doubles `n` until `Q(w_{η₀}^n) < 0`
/// and computes the ground state of `-∂_yy - K`.
pub fn certify(profile: &ShearProfile) -> Result<Certificate> {
    let anchor = anchor(profile)?;
    let y0 = anchor.y0;
    let q_at_y0 = q_of_eta(&anchor, y0)?;
    let q_prime_at_y0 = q_prime(&anchor, y0)?;
    if q_prime_at_y0 <= 0.0 {
        return Err(Error::Inconsistent(format!("Q'(y0) = {q_prime_at_y0:e} is not positive")));
    }
    let step = y0 / LINE_STEPS as f64;
    let mut found = None;
    for i in 1..LINE_STEPS {
        let eta = y0 - i as f64 * step;
        let q = q_of_eta(&anchor, eta)?;
        if q < -TOL_CERT {
            found = Some((eta, q));
            break;
        }
    }
    let Some((eta0, q_eta0)) = found else {
        return Err(Error::CertificateFailed(format!("Q(eta) >= -{TOL_CERT:e} on (0, y0) for {}", profile.label())));
    };
    let mut n = 1usize;
    while 2.0 * (n as f64) <= eta0 + y0 {
        n *= 2;
    }
    let (q_value, w) = loop {
        let w = build_test_function(&anchor, eta0, n)?;
        let q = quadratic_form(&anchor.data, &w)?;
        if q < 0.0 {
            break (q, w);
        }
        if n >= MAX_CUTOFF {
            return Err(Error::CertificateFailed(format!("Q(w^n) >= 0 up to n = {n}")));
        }
        n *= 2;
    };
    let rayleigh_quotient = q_value / w.norm_sq()?;
    let min_eig = min_eig_schrodinger(&anchor.data)?.value;
    Ok(Certificate {
        profile: profile.label(),
        eta0,
        n,
        q_value,
        q_eta0,
        y0,
        q_at_y0,
        q_prime_at_y0,
        min_eig,
        rayleigh_quotient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{constant, gevrey, two_inflection};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gevrey_anchor() -> Anchor {
        anchor(&gevrey(2.0).unwrap()).unwrap()
    }

    #[test]
    fn q_vanishes_at_inflection_with_printed_slope() {
        let a = gevrey_anchor();
        assert_relative_eq!(a.y0, 0.5, epsilon = 1e-12);
        assert!(q_of_eta(&a, a.y0).unwrap().abs() < 1e-9);
        let expected = 16.0 * (-4.0f64).exp();
        assert_relative_eq!(q_prime(&a, a.y0).unwrap(), expected, max_relative = 1e-6);
    }

    #[test]
    fn first_line_search_step_is_negative() {
        let a = gevrey_anchor();
        let eta = a.y0 * (1.0 - 1.0 / LINE_STEPS as f64);
        let q = q_of_eta(&a, eta).unwrap();
        // First-order prediction -Q'(y₀) y₀/64.
        let predicted = -16.0 * (-4.0f64).exp() * a.y0 / LINE_STEPS as f64;
        assert!(q < -TOL_CERT);
        assert!((q - predicted).abs() < 0.05 * predicted.abs(), "{q} vs {predicted}");
    }

    #[test]
    fn zero_function_has_zero_form() {
        let a = gevrey_anchor();
        let z = TestFunction::new(vec![0.0, 10.0], |_| (0.0, 0.0)).unwrap();
        assert_eq!(quadratic_form(&a.data, &z).unwrap(), 0.0);
        let bad = TestFunction::new(vec![0.0, 10.0], |y| (1.0 + y, 1.0)).unwrap();
        assert!(matches!(quadratic_form(&a.data, &bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn narrow_oscillation_is_positive() {
        let a = gevrey_anchor();
        let w = 0.05;
        let phi = TestFunction::new(vec![1.0, 1.0 + w], move |y| {
            let s = PI * (y - 1.0) / w;
            (s.sin().powi(2), 2.0 * s.sin() * s.cos() * PI / w)
        })
        .unwrap();
        assert!(quadratic_form(&a.data, &phi).unwrap() > 0.0);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5), (1.0, 0.0));
        assert_eq!(cutoff(2.5), (0.0, 0.0));
        let (v, d) = cutoff(1.5);
        assert_relative_eq!(v, 0.5, epsilon = 1e-12);
        assert!(d < 0.0);
        let a = gevrey_anchor();
        let w = build_test_function(&a, 0.45, 8).unwrap();
        assert!(w.value(0.45).abs() < 1e-14);
        assert_eq!(w.value(16.0), 0.0);
        assert_eq!(w.value(20.0), 0.0);
    }

    #[test]
    fn cutoff_error_decays_like_one_over_n() {
        let a = gevrey_anchor();
        let eta = a.y0;
        let limit = q_of_eta(&a, eta).unwrap();
        let gap = |n: usize| quadratic_form(&a.data, &build_test_function(&a, eta, n).unwrap()).unwrap() - limit;
        let (g1, g2) = (gap(64), gap(128));
        assert!(g1 > 0.0 && g2 > 0.0);
        assert_relative_eq!(g1 / g2, 2.0, max_relative = 0.05);
        assert!(gap(1 << 15) < 1e-4);
    }

    #[test]
    fn laplacian_ground_state() {
        let e = min_eig_with(&|_| 0.0, Y_MAX, EIG_NODES).unwrap();
        assert_relative_eq!(e.value, (PI / Y_MAX).powi(2), max_relative = 1e-6);
        // Harmonic oscillator -φ'' + y²φ restricted to odd states: ground 3.
        let e = min_eig_with(&|y| -y * y, 10.0, 4000).unwrap();
        assert_relative_eq!(e.value, 3.0, max_relative = 1e-4);
    }

    #[test]
    fn gevrey_certificate() {
        let c = certify(&gevrey(2.0).unwrap()).unwrap();
        assert!(c.pass());
        assert!(c.eta0 < 0.5 && c.eta0 > 0.0);
        assert!(c.q_value < 0.0 && c.q_eta0 < 0.0);
        assert!(c.min_eig < 0.0);
        assert!(c.min_eig <= c.rayleigh_quotient + 1e-6);
    }

    #[test]
    fn two_inflection_certificate() {
        let c = certify(&two_inflection(1.0, 3.0, 1.0).unwrap()).unwrap();
        assert!(c.pass());
    }

    #[test]
    fn constant_profile_fails() {
        assert!(matches!(certify(&constant(1.0)), Err(Error::CertificateFailed(_))));
    }

    #[test]
    fn certificate_sign_is_scale_invariant() {
        let g = gevrey(2.0).unwrap();
        let base = certify(&g).unwrap();
        for s in [0.5, 3.0] {
            let c = certify(&g.scaled(s)).unwrap();
            assert!(c.pass());
            assert_relative_eq!(c.min_eig, base.min_eig, max_relative = 1e-9);
            assert_relative_eq!(c.q_prime_at_y0, s * s * base.q_prime_at_y0, max_relative = 1e-6);
        }
    }

    #[test]
    fn q_is_lipschitz_below_inflection() {
        let a = gevrey_anchor();
        let coarse: Vec<f64> = (0..=16).map(|i| a.y0 * (0.5 + i as f64 / 32.0)).collect();
        let qc: Vec<f64> = coarse.iter().map(|&e| q_of_eta(&a, e).unwrap()).collect();
        let lip = qc.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max) / (coarse[1] - coarse[0]);
        let fine: Vec<f64> = (0..=128).map(|i| a.y0 * (0.5 + i as f64 / 256.0)).collect();
        let qf: Vec<f64> = fine.iter().map(|&e| q_of_eta(&a, e).unwrap()).collect();
        let d = fine[1] - fine[0];
        assert!(qf.windows(2).all(|w| (w[1] - w[0]).abs() <= 1.5 * lip * d));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn ground_state_bounds_rayleigh_quotients(
            amps in prop::collection::vec(-1.0f64..1.0, 3),
            centers in prop::collection::vec(0.3f64..6.0, 3),
            widths in prop::collection::vec(0.2f64..2.0, 3),
        ) {
            let a = gevrey_anchor();
            let e = min_eig_schrodinger(&a.data).unwrap().value;
            let bumps: Vec<(f64, f64, f64)> = (0..3).map(|i| (amps[i], centers[i], widths[i])).collect();
            // (1 - e^{-y}) Σ a e^{-((y-c)/s)²} vanishes at the wall.
            let phi = TestFunction::new(vec![0.0, 1.0, 5.0, 15.0, Y_MAX], move |y| {
                let (mut g, mut dg) = (0.0, 0.0);
                for &(a, c, s) in &bumps {
                    let z = (y - c) / s;
                    let b = a * (-z * z).exp();
                    g += b;
                    dg += -2.0 * z / s * b;
                }
                let m = 1.0 - (-y).exp();
                (m * g, (-y).exp() * g + m * dg)
            }).unwrap();
            let norm = phi.norm_sq().unwrap();
            prop_assume!(norm > 1e-8);
            let rq = quadratic_form(&a.data, &phi).unwrap() / norm;
            prop_assert!(e <= rq + 1e-6, "{} > {}", e, rq);
        }
    }
}
