//! Exponent and timing bookkeeping for the boundary-layer expansion around a
//! viscosity-dependent shear family, and the leading wall corrector.
//!
//! Exponents are exact rationals. A real `γ` is converted by continued
//! fractions, so `0.6` becomes `3/5` rather than the nearest binary fraction.

use crate::error::{Error, Result};
use crate::jet::MAX_ORDER;
use crate::numerics::{brent_root, fit_line};
use crate::profile::{Derivs, ShearProfile};
use crate::rayleigh::RayleighMode;
use crate::robin::{extend, solve_extended, solve_inhomogeneous_dirichlet, Coefficient, SpaceGrid};
use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use std::fmt;

pub type Rational = Ratio<i128>;

/// Largest expansion order; keeps `2^n` exact in `i128` products.
pub const MAX_N: u32 = 60;
/// Largest denominator accepted when rationalizing `γ`.
const MAX_DENOM: i128 = 1_000_000_000;

fn q(num: i128, den: i128) -> Rational {
    Ratio::new(num, den)
}

/// Continued-fraction rationalization of `x` to relative accuracy `1e-12`.
pub fn rationalize(x: f64) -> Result<Rational> {
    if !x.is_finite() || x.abs() > 1e9 {
        return Err(Error::InvalidParameter(format!("cannot rationalize {x}")));
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let ai = a as i128;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > MAX_DENOM {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - x).abs() <= 1e-12 * x.abs().max(1.0) {
            break;
        }
        let frac = r - a;
        if frac < 1e-15 {
            break;
        }
        r = 1.0 / frac;
    }
    Ok(Ratio::new(h1, k1))
}

fn half() -> Rational {
    q(1, 2)
}

fn three_quarters() -> Rational {
    q(3, 4)
}

fn quarter() -> Rational {
    q(1, 4)
}

/// Instability exponent: `1/4` above `3/4`, `γ - 1/2` between, `0` below `1/2`.
pub fn theta_exact(gamma: Rational) -> Rational {
    if gamma >= three_quarters() {
        quarter()
    } else if gamma > half() {
        gamma - half()
    } else {
        Rational::zero()
    }
}

/// Boundary-layer amplitude exponent; `a + θ = 1/4` by construction of each branch.
pub fn amplitude_exact(gamma: Rational) -> Rational {
    let a = if gamma >= three_quarters() {
        Rational::zero()
    } else if gamma > half() {
        three_quarters() - gamma
    } else {
        quarter()
    };
    debug_assert_eq!(a + theta_exact(gamma), quarter());
    a
}

pub fn theta_of_gamma(gamma: f64) -> Result<Rational> {
    Ok(theta_exact(rationalize(gamma)?))
}

pub fn amplitude_a(gamma: f64) -> Result<Rational> {
    Ok(amplitude_exact(rationalize(gamma)?))
}

/// Wall condition obeyed by the leading boundary-layer term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `u^b = -u^I` at the wall.
    Dirichlet,
    /// `∂_Y u^b - u^b = u^I` at the wall.
    Robin,
    /// `∂_Y u^b = u^I` at the wall.
    NeumannMid,
    /// `∂_Y u^b = -∂_y u^I` at the wall.
    NeumannLow,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Dirichlet => "dirichlet",
            Regime::Robin => "robin",
            Regime::NeumannMid => "neumann-mid",
            Regime::NeumannLow => "neumann-low",
        })
    }
}

fn reject_half(gamma: Rational) -> Result<()> {
    if gamma == half() {
        return Err(Error::OutOfScope("gamma = 1/2 is the classical scaling and has no expansion plan".into()));
    }
    Ok(())
}

pub fn bc_regime_exact(gamma: Rational) -> Result<Regime> {
    reject_half(gamma)?;
    Ok(if gamma > three_quarters() {
        Regime::Dirichlet
    } else if gamma == three_quarters() {
        Regime::Robin
    } else if gamma > half() {
        Regime::NeumannMid
    } else {
        Regime::NeumannLow
    })
}

pub fn bc_regime(gamma: f64) -> Result<Regime> {
    bc_regime_exact(rationalize(gamma)?)
}

/// Expansion order and an optional note on boundary handling.
pub fn choose_n_exact(gamma: Rational) -> Result<(u32, Option<String>)> {
    reject_half(gamma)?;
    let (bound, note) = if gamma > three_quarters() {
        (gamma - three_quarters(), None)
    } else if gamma == three_quarters() {
        (quarter(), Some("gamma = 3/4: the first inequality is vacuous; n taken from the middle branch".to_string()))
    } else if gamma > half() {
        (gamma - half(), None)
    } else {
        ((half() - gamma) / 2, None)
    };
    for n in 2..=MAX_N {
        if q(1, 1i128 << n) <= bound {
            return Ok((n, note));
        }
    }
    Err(Error::InvalidParameter(format!("gamma = {gamma} needs n > {MAX_N}")))
}

pub fn choose_n(gamma: f64) -> Result<u32> {
    choose_n_exact(rationalize(gamma)?).map(|(n, _)| n)
}

/// `ν`-exponents of the neglected terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainderOrders {
    /// Interior remainder `R^I`.
    pub interior: Rational,
    /// Boundary-layer remainder `R^b`.
    pub boundary: Rational,
    /// Exponent printed in front of the last corrector in the tangential
    /// wall error; `None` when the wall condition is met exactly.
    pub wall_tangential_printed: Option<Rational>,
    /// The printed exponent plus the `N + a` prefactor of the corrector.
    pub wall_tangential_total: Option<Rational>,
    /// Normal-velocity wall error.
    pub wall_normal: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPlan {
    pub gamma: Rational,
    pub order: u32,
    pub terms: u32,
    pub n: u32,
    pub theta: Rational,
    pub amplitude_a: Rational,
    pub regime: Regime,
    /// `k_j = 1 + j/(2ⁿN)` for `j = 0..=M`.
    pub k_table: Vec<Rational>,
    /// `P = 1 + (M+1)/(2ⁿN)`.
    pub p: Rational,
    pub remainder_orders: RemainderOrders,
    pub notes: Vec<String>,
}

impl ExpansionPlan {
    /// `2^{-n}`.
    pub fn step(&self) -> Rational {
        q(1, 1i128 << self.n)
    }

    /// `k_j` for any `j ≥ 0`, not only the tabulated ones.
    pub fn k(&self, j: u64) -> Rational {
        Rational::one() + q(j as i128, (1i128 << self.n) * self.order as i128)
    }

    /// `ν`-order of the `j`-th interior term: `N + j 2^{-n} = N k_j`.
    pub fn interior_order(&self, j: u64) -> Rational {
        Rational::from_integer(self.order as i128) + self.step() * j as i128
    }

    /// `ν`-order of the `j`-th boundary term, carrying the amplitude `ν^a`.
    pub fn boundary_order(&self, j: u64) -> Rational {
        self.interior_order(j) + self.amplitude_a
    }

    /// Rows `(j, k_j, order of u^I_j, order of u^b_j)`.
    pub fn order_table(&self) -> Vec<(u64, Rational, Rational, Rational)> {
        (0..=self.terms as u64).map(|j| (j, self.k(j), self.interior_order(j), self.boundary_order(j))).collect()
    }

    /// Human-readable dump of every field.
    pub fn dump(&self) -> String {
        let r = &self.remainder_orders;
        let opt = |v: &Option<Rational>| v.map_or("none".to_string(), |x| x.to_string());
        let ks: Vec<String> = self.k_table.iter().map(|k| k.to_string()).collect();
        let mut s = String::new();
        s += &format!("gamma            {}\n", self.gamma);
        s += &format!("N                {}\n", self.order);
        s += &format!("M                {}\n", self.terms);
        s += &format!("n                {}\n", self.n);
        s += &format!("theta            {}\n", self.theta);
        s += &format!("amplitude_a      {}\n", self.amplitude_a);
        s += &format!("regime           {}\n", self.regime);
        s += &format!("k_table          [{}]\n", ks.join(", "));
        s += &format!("P                {}\n", self.p);
        s += &format!("order_R_I        {}\n", r.interior);
        s += &format!("order_R_b        {}\n", r.boundary);
        s += &format!("order_r1_printed {}\n", opt(&r.wall_tangential_printed));
        s += &format!("order_r1_total   {}\n", opt(&r.wall_tangential_total));
        s += &format!("order_r2         {}\n", r.wall_normal);
        for note in &self.notes {
            s += &format!("note             {note}\n");
        }
        s
    }
}

pub fn build_plan_exact(gamma: Rational, order: u32, terms: u32) -> Result<ExpansionPlan> {
    if order == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let (n, note) = choose_n_exact(gamma)?;
    let regime = bc_regime_exact(gamma)?;
    let theta = theta_exact(gamma);
    let a = amplitude_exact(gamma);
    let step = q(1, 1i128 << n);
    let big_n = Rational::from_integer(order as i128);
    let m = Rational::from_integer(terms as i128);
    let tail = big_n + step * (m + 1);
    let printed = match regime {
        Regime::Dirichlet => Some(gamma - three_quarters() - step + m * step),
        Regime::NeumannMid | Regime::NeumannLow => Some(three_quarters() - gamma - step + m * step),
        Regime::Robin => None,
    };
    let remainder_orders = RemainderOrders {
        interior: tail,
        boundary: tail,
        wall_tangential_printed: printed,
        wall_tangential_total: printed.map(|e| e + big_n + a),
        wall_normal: big_n + a + quarter() - step + m * step,
    };
    let mut plan = ExpansionPlan {
        gamma,
        order,
        terms,
        n,
        theta,
        amplitude_a: a,
        regime,
        k_table: vec![],
        p: Rational::one() + q(terms as i128 + 1, (1i128 << n) * order as i128),
        remainder_orders,
        notes: note.into_iter().collect(),
    };
    plan.k_table = (0..=terms as u64).map(|j| plan.k(j)).collect();
    Ok(plan)
}

pub fn build_plan(gamma: f64, order: u32, terms: u32) -> Result<ExpansionPlan> {
    build_plan_exact(rationalize(gamma)?, order, terms)
}

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Solution of `e^{σ₀T}/(1+T)^{1/4} = ν^{θ-N}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstabilityTime {
    /// Root `T` of the defining equation.
    pub root: f64,
    /// `T - τ`.
    pub time: f64,
    /// `√ν (T - τ)`.
    pub scaled: f64,
    /// `|lhs/rhs - 1|` at the root.
    pub residual: f64,
}

/// `log(lhs/rhs)` of the defining equation.
pub fn time_equation_log_gap(nu: f64, theta: f64, order: u32, sigma0: f64, t: f64) -> f64 {
    sigma0 * t - 0.25 * t.ln_1p() - (theta - order as f64) * nu.ln()
}

pub fn instability_time(nu: f64, theta: f64, order: u32, sigma0: f64, tau: f64) -> Result<InstabilityTime> {
    if !(sigma0 > 0.0) || order == 0 || !(nu > 0.0 && nu <= 1.0) || theta >= order as f64 || !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "instability time needs sigma0 > 0, N >= 1, nu in (0, 1], theta < N, tau >= 0 (sigma0 = {sigma0}, N = {order}, nu = {nu}, theta = {theta}, tau = {tau})"
        )));
    }
    let g = |t: f64| time_equation_log_gap(nu, theta, order, sigma0, t);
    let root = if g(0.0) >= 0.0 {
        0.0
    } else {
        // The nominal bracket can fail to change sign when σ₀ is small; widen it.
        let mut hi = (order as f64 - theta) * nu.ln().abs() / sigma0 + 10.0;
        while g(hi) <= 0.0 {
            hi *= 2.0;
        }
        brent_root(g, 0.0, hi, 1e-15 * hi.max(1.0))?
    };
    let time = root - tau;
    if time <= 0.0 && !(root == 0.0 && tau == 0.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau} is not below the instability time {root}")));
    }
    Ok(InstabilityTime { root, time, scaled: nu.sqrt() * time, residual: g(root).exp_m1().abs() })
}

/// Leading tangential corrector and its divergence-free normal partner.
#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub regime: Regime,
    pub time: f64,
    pub wavenumber: f64,
    pub lambda: Complex64,
    pub y: Vec<f64>,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    /// Exact solution for the exponential initial data used.
    pub reference_u: Vec<Complex64>,
    /// Interior-mode wall quantity entering the condition at time `t`.
    pub wall_data: Complex64,
    /// Interior tangential trace `u^I(t, 0)`.
    pub interior_trace: Complex64,
    /// Violation of the regime's wall condition, relative to `|wall_data|`.
    pub wall_residual: f64,
    /// `max|u - reference_u| / max|reference_u|`.
    pub reference_error: f64,
    /// `|v^b|` at the end of the internal grid relative to `max|v^b|`.
    pub far_v: f64,
    /// Fitted decay rate of `|u^b|` in `Y`; `None` when `u^b ≡ 0`.
    pub decay_rate: Option<f64>,
    /// `Re √λ`, the decay of the exponential solution.
    pub expected_decay: f64,
}

impl CorrectorField {
    /// `u^b(t, 0) + u^I(t, 0)` relative to the trace; the Dirichlet cancellation.
    pub fn cancellation(&self) -> f64 {
        let u0 = self.u.first().copied().unwrap_or_default();
        (u0 + self.interior_trace).norm() / self.interior_trace.norm().max(f64::MIN_POSITIVE)
    }
}

/// Internal uniform grid length for corrector solves.
const CORRECTOR_NODES: usize = 4000;
/// Decay depth `Re √λ · Y_far` of the internal grid.
const CORRECTOR_DEPTH: f64 = 25.0;

/// `ShearProfile` for `Re` or `Im` of `h e^{-sY}`.
fn exponential_data(h: Complex64, s: Complex64, imag: bool) -> ShearProfile {
    ShearProfile::from_fn("corrector-initial", vec![], 0.0, MAX_ORDER, false, move |y, order| {
        let mut d: Derivs = [0.0; MAX_ORDER + 1];
        let mut c = h * (-s * y).exp();
        for v in d.iter_mut().take(order + 1) {
            *v = if imag { c.im } else { c.re };
            c *= -s;
        }
        d
    })
}

/// Heat solution with wall value `h e^{λt}` from initial data `h e^{-√λ Y}`.
fn dirichlet_exponential(h: Complex64, lambda: Complex64, t: f64, grid: &SpaceGrid) -> Result<Vec<Complex64>> {
    let s = lambda.sqrt();
    let zero = |_: f64, _: f64| 0.0;
    let re_f = move |tt: f64| (h * (lambda * tt).exp()).re;
    let im_f = move |tt: f64| (h * (lambda * tt).exp()).im;
    let re = solve_inhomogeneous_dirichlet(&exponential_data(h, s, false), &re_f, &zero, t, grid)?;
    let im = solve_inhomogeneous_dirichlet(&exponential_data(h, s, true), &im_f, &zero, t, grid)?;
    Ok(re.values.iter().zip(&im.values).map(|(&a, &b)| Complex64::new(a, b)).collect())
}

/// `∫_{Y_i}^∞ e^{β(Y_i - Z)} f(Z) dZ` on a uniform grid, fourth order per
/// interval; the tail past the last node is dropped.
fn tail_integrals(h: f64, f: &[Complex64], beta: f64) -> Vec<Complex64> {
    let n = f.len();
    let mut out = vec![Complex64::zero(); n];
    for i in (0..n - 1).rev() {
        let (idx, w): ([usize; 4], [f64; 4]) = if i == 0 {
            ([0, 1, 2, 3], [9.0, 19.0, -5.0, 1.0])
        } else if i + 2 >= n {
            ([i - 2, i - 1, i, i + 1], [1.0, -5.0, 19.0, 9.0])
        } else {
            ([i - 1, i, i + 1, i + 2], [-1.0, 13.0, 13.0, -1.0])
        };
        let piece: Complex64 =
            idx.iter().zip(w).map(|(&j, wj)| f[j] * (beta * (i as f64 - j as f64) * h).exp() * wj).sum::<Complex64>() * (h / 24.0);
        out[i] = out[i + 1] * (-beta * h).exp() + piece;
    }
    out
}

/// Cubic Lagrange interpolation on a uniform grid starting at 0; zero beyond it.
fn interpolate_uniform(h: f64, f: &[Complex64], y: f64) -> Complex64 {
    let n = f.len();
    let x = y / h;
    if x > (n - 1) as f64 {
        return Complex64::zero();
    }
    let base = (x.floor() as usize).saturating_sub(1).min(n - 4);
    let mut acc = Complex64::zero();
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (x - (base + b) as f64) / (a as f64 - b as f64);
            }
        }
        acc += f[base + a] * w;
    }
    acc
}

/// Leading corrector at time `t` for one interior Rayleigh mode.
///
/// The interior velocity is `(φ', -ikφ) e^{ikx+λt}`, so the tangential trace
/// is `φ'(0) e^{λt}`. Since `φ(0) = 0` and `U(0) ≠ c`, the Rayleigh equation
/// forces `φ''(0) = 0`: the low-`γ` Neumann data vanish and `u^b ≡ 0`.
///
/// Initial data are `h e^{-√λ Y}` with the wall value `h` of the forcing,
/// which is corner-compatible and makes `h e^{λt - √λ Y}` the exact solution.
/// Neumann and Robin data are reduced to the Dirichlet solver through
/// `w = ∂_Y u - βu`, which solves the same heat equation with wall value equal
/// to the data; `u = -∫_Y^∞ e^{β(Y-Z)} w(Z) dZ` recovers the decaying `u`.
pub fn leading_corrector(mode: &RayleighMode, gamma: f64, t: f64, y_grid: &[f64]) -> Result<CorrectorField> {
    let regime = bc_regime(gamma)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("corrector time must be positive, got {t}")));
    }
    if y_grid.iter().any(|&y| !(y >= 0.0)) {
        return Err(Error::InvalidParameter("corrector grid must lie in Y >= 0".into()));
    }
    let k = mode.wavenumber;
    let lambda = mode.lambda();
    let s = lambda.sqrt();
    let growth = (lambda * t).exp();
    let trace = mode.dphi[0];
    let interior_trace = trace * growth;
    let (h0, beta) = match regime {
        Regime::Dirichlet => (-trace, None),
        Regime::NeumannMid => (trace, Some(0.0)),
        Regime::Robin => (trace, Some(1.0)),
        Regime::NeumannLow => (Complex64::zero(), Some(0.0)),
    };
    let wall_data = h0 * growth;
    let zeros = vec![Complex64::zero(); y_grid.len()];
    if h0 == Complex64::zero() {
        return Ok(CorrectorField {
            regime,
            time: t,
            wavenumber: k,
            lambda,
            y: y_grid.to_vec(),
            u: zeros.clone(),
            v: zeros.clone(),
            reference_u: zeros,
            wall_data,
            interior_trace,
            wall_residual: 0.0,
            reference_error: 0.0,
            far_v: 0.0,
            decay_rate: None,
            expected_decay: s.re,
        });
    }
    if !(s.re > 0.0) {
        return Err(Error::Precondition(format!("mode is not growing: lambda = {lambda}")));
    }
    let y_far = (CORRECTOR_DEPTH / s.re).min(1000.0).max(y_grid.iter().cloned().fold(0.0, f64::max));
    let h = y_far / (CORRECTOR_NODES - 1) as f64;
    let nodes: Vec<f64> = (0..CORRECTOR_NODES).map(|i| i as f64 * h).collect();
    let w = dirichlet_exponential(h0, lambda, t, &SpaceGrid::points(nodes.clone()))?;
    // Amplitude of u in terms of the forcing amplitude: w = ∂_Y u - βu with u ∝ e^{-sY}.
    let (u_fine, u_amp) = match beta {
        None => (w, h0),
        Some(b) => (tail_integrals(h, &w, b).into_iter().map(|x| -x).collect(), -h0 / (s + b)),
    };
    let v_fine: Vec<Complex64> = tail_integrals(h, &u_fine, 0.0).into_iter().map(|x| -Complex64::i() * k * x).collect();
    let exact = |y: f64| u_amp * (lambda * t - s * y).exp();

    let ref_fine: Vec<Complex64> = nodes.iter().map(|&y| exact(y)).collect();
    let ref_max = ref_fine.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let reference_error = u_fine.iter().zip(&ref_fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / ref_max;
    let v_max = v_fine.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let far_v = v_fine.last().map_or(0.0, |z| z.norm()) / v_max.max(f64::MIN_POSITIVE);

    // Wall condition from one-sided fourth-order differences.
    let du0 = (-25.0 * u_fine[0] + 48.0 * u_fine[1] - 36.0 * u_fine[2] + 16.0 * u_fine[3] - 3.0 * u_fine[4]) / (12.0 * h);
    let lhs = match beta {
        None => u_fine[0],
        Some(b) => du0 - b * u_fine[0],
    };
    let wall_residual = (lhs - wall_data).norm() / wall_data.norm();

    // Decay fit over the part of the grid where |u| stays well above round-off.
    let (mut fy, mut fl) = (vec![], vec![]);
    for (i, z) in u_fine.iter().enumerate().step_by(20) {
        if z.norm() > 1e-9 * ref_max && nodes[i] >= 1.0 {
            fy.push(nodes[i]);
            fl.push(z.norm().ln());
        }
    }
    let decay_rate = fit_line(&fy, &fl).ok().map(|f| -f.slope);

    Ok(CorrectorField {
        regime,
        time: t,
        wavenumber: k,
        lambda,
        y: y_grid.to_vec(),
        u: y_grid.iter().map(|&y| interpolate_uniform(h, &u_fine, y)).collect(),
        v: y_grid.iter().map(|&y| interpolate_uniform(h, &v_fine, y)).collect(),
        reference_u: y_grid.iter().map(|&y| exact(y)).collect(),
        wall_data,
        interior_trace,
        wall_residual,
        reference_error,
        far_v,
        decay_rate,
        expected_decay: s.re,
    })
}

/// One row of the shear-family uniformity sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsboundRow {
    pub nu: f64,
    pub coefficient: f64,
    /// `sup_t ‖u^ν(√ν t) - u^lim(√ν t)‖_∞`.
    pub sup_gap: f64,
    /// `sup_gap` divided by the predicted rate.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsboundReport {
    pub gamma: f64,
    pub rows: Vec<UsboundRow>,
    /// Slope of `log normalized` against `log ν`.
    pub slope: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Slope tolerance for the uniformity sweep.
pub const USBOUND_SLOPE_TOL: f64 = 0.05;

/// Sweeps `ν` for the shear family with wall law `∂_y u = ν^{1/2-γ} u` and
/// compares with its Dirichlet (`γ > 1/2`) or Neumann (`γ < 1/2`) limit at the
/// slow times `√ν t`. The gap is normalized by `ν^{γ-1/2}` or
/// `ν^{1/4-γ/2}`; a uniform bound shows as a flat log-log slope.
pub fn usbound_sweep(u0: &ShearProfile, gamma: f64, nus: &[f64], times: &[f64], grid: &SpaceGrid) -> Result<UsboundReport> {
    if gamma == 0.5 {
        return Err(Error::OutOfScope("gamma = 1/2 has a viscosity-independent shear flow".into()));
    }
    if nus.len() < 2 || times.is_empty() {
        return Err(Error::InvalidParameter("sweep needs two viscosities and one time".into()));
    }
    let (limit, rate_exp) = if gamma > 0.5 {
        (Coefficient::Infinite, gamma - 0.5)
    } else {
        (Coefficient::Finite(0.0), 0.25 - gamma / 2.0)
    };
    let limit_ext = extend(u0, limit)?;
    let mut rows = vec![];
    for &nu in nus {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::InvalidParameter(format!("viscosity must lie in (0, 1), got {nu}")));
        }
        let a = nu.powf(0.5 - gamma);
        let ext = extend(u0, Coefficient::Finite(a))?;
        let mut sup_gap: f64 = 0.0;
        for &t in times {
            let slow = nu.sqrt() * t;
            let u = solve_extended(&ext, slow, grid)?;
            let u_lim = solve_extended(&limit_ext, slow, grid)?;
            let gap = u.values.iter().zip(&u_lim.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            sup_gap = sup_gap.max(gap);
        }
        rows.push(UsboundRow { nu, coefficient: a, sup_gap, normalized: sup_gap / nu.powf(rate_exp) });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.nu.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.normalized.ln()).collect();
    let slope = fit_line(&x, &y)?.slope;
    Ok(UsboundReport { gamma, rows, slope, tolerance: USBOUND_SLOPE_TOL, pass: slope.abs() <= USBOUND_SLOPE_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bisect;
    use proptest::prelude::*;

    #[test]
    fn exponent_examples() {
        assert_eq!(theta_of_gamma(1.0).unwrap(), q(1, 4));
        assert_eq!(theta_of_gamma(0.6).unwrap(), q(1, 10));
        assert_eq!(theta_of_gamma(0.0).unwrap(), q(0, 1));
        assert_eq!(amplitude_a(1.0).unwrap(), q(0, 1));
        assert_eq!(amplitude_a(0.6).unwrap(), q(3, 20));
        assert_eq!(amplitude_a(0.3).unwrap(), q(1, 4));
    }

    #[test]
    fn rationalize_recovers_decimal_inputs() {
        assert_eq!(rationalize(0.6).unwrap(), q(3, 5));
        assert_eq!(rationalize(0.75).unwrap(), q(3, 4));
        assert_eq!(rationalize(-0.3).unwrap(), q(-3, 10));
        assert_eq!(rationalize(2.0).unwrap(), q(2, 1));
        assert!(rationalize(f64::NAN).is_err());
    }

    #[test]
    fn expansion_order_examples() {
        assert_eq!(choose_n(1.0).unwrap(), 2);
        assert_eq!(choose_n(0.8).unwrap(), 5);
        assert_eq!(choose_n(0.25).unwrap(), 3);
        assert_eq!(choose_n(0.6).unwrap(), 4);
        assert!(matches!(choose_n(0.5), Err(Error::OutOfScope(_))));
        let (n, note) = choose_n_exact(q(3, 4)).unwrap();
        assert_eq!(n, 2);
        assert!(note.is_some());
        assert!(choose_n(0.75 + 1e-30).is_ok());
        assert!(choose_n_exact(q(3, 4) + q(1, 1 << 62)).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(bc_regime(1.0).unwrap(), Regime::Dirichlet);
        assert_eq!(bc_regime(0.75).unwrap(), Regime::Robin);
        assert_eq!(bc_regime(0.6).unwrap(), Regime::NeumannMid);
        assert_eq!(bc_regime(0.3).unwrap(), Regime::NeumannLow);
        assert!(matches!(bc_regime(0.5), Err(Error::OutOfScope(_))));
    }

    #[test]
    fn plan_examples() {
        let p = build_plan(1.0, 1, 3).unwrap();
        assert_eq!(p.n, 2);
        assert_eq!(p.k_table, vec![q(1, 1), q(5, 4), q(3, 2), q(7, 4)]);
        assert_eq!(p.k(1) + p.k(2), p.k(7));
        assert_eq!(p.k(7), q(11, 4));
        assert_eq!(p.remainder_orders.interior, q(2, 1));
        assert_eq!(p.remainder_orders.wall_tangential_printed, Some(q(1, 4) - q(1, 4) + q(3, 4)));

        let p = build_plan(0.6, 1, 2).unwrap();
        assert_eq!((p.n, p.amplitude_a, p.theta, p.p), (4, q(3, 20), q(1, 10), q(19, 16)));
        assert_eq!(p.remainder_orders.wall_tangential_printed, Some(q(3, 20) - q(1, 16) + q(2, 16)));
        assert_eq!(p.remainder_orders.wall_tangential_total, Some(q(1, 1) + q(3, 20) + q(3, 20) + q(1, 16)));
        assert_eq!(p.remainder_orders.wall_normal, q(1, 1) + q(3, 20) + q(1, 4) + q(1, 16));

        let p = build_plan(0.75, 2, 1).unwrap();
        assert_eq!(p.regime, Regime::Robin);
        assert_eq!(p.remainder_orders.wall_tangential_printed, None);
        assert_eq!(p.notes.len(), 1);
        assert!(p.dump().contains("order_r1_printed none"));
        assert!(build_plan(1.0, 0, 1).is_err());
    }

    #[test]
    fn order_table_matches_k_scaling() {
        let p = build_plan(0.3, 2, 4).unwrap();
        for (j, k, oi, ob) in p.order_table() {
            assert_eq!(oi, k * 2);
            assert_eq!(ob, oi + q(1, 4));
            assert!(j <= 4);
        }
    }

    #[test]
    fn theta_knots_are_continuous() {
        let eps = q(1, 1_000_000_000_000);
        for knot in [half(), three_quarters()] {
            let left = theta_exact(knot - eps);
            let right = theta_exact(knot + eps);
            assert!((right - left) <= eps);
            assert!(theta_exact(knot) >= left && theta_exact(knot) <= right);
        }
    }

    #[test]
    fn instability_time_matches_bisection() {
        let it = instability_time(1e-4, 0.25, 1, 1.0, 0.0).unwrap();
        let oracle = bisect(|t| t.exp() - 1e3 * (1.0 + t).powf(0.25), 0.0, 50.0, 200).unwrap();
        assert!((it.root - oracle).abs() < 1e-10, "{} vs {oracle}", it.root);
        assert!((it.root - 7.44).abs() < 0.01);
        assert!(it.residual < 1e-12);
    }

    #[test]
    fn instability_time_edge_cases() {
        let it = instability_time(1.0, 0.25, 1, 1.0, 0.0).unwrap();
        assert_eq!(it.root, 0.0);
        assert!(matches!(instability_time(1e-4, 0.25, 1, 1.0, 8.0), Err(Error::InvalidParameter(_))));
        assert!(instability_time(1e-4, 1.5, 1, 1.0, 0.0).is_err());
        // Small σ₀ needs a wider bracket than the nominal one.
        let slow = instability_time(1e-8, 0.0, 3, 0.03, 0.0).unwrap();
        assert!(slow.residual < 1e-12);
        let shifted = instability_time(1e-4, 0.25, 1, 1.0, 2.0).unwrap();
        assert!((shifted.time - (shifted.root - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn slow_time_vanishes() {
        let scaled: Vec<f64> =
            (2..=8).step_by(2).map(|e| instability_time(10f64.powi(-e), 0.25, 1, 1.0, 0.0).unwrap().scaled).collect();
        assert!(scaled.windows(2).all(|w| w[1] < w[0]), "{scaled:?}");
        assert!(*scaled.last().unwrap() < 0.01);
    }

    #[test]
    fn tail_integrals_are_fourth_order() {
        let s = Complex64::new(0.3, -0.2);
        let err = |n: usize| {
            let h = 60.0 / (n - 1) as f64;
            let f: Vec<Complex64> = (0..n).map(|i| (-s * (i as f64 * h)).exp()).collect();
            let got = tail_integrals(h, &f, 1.0);
            (got[0] - 1.0 / (s + 1.0)).norm()
        };
        let (e1, e2) = (err(801), err(1601));
        assert!(e1 / e2 > 12.0, "{e1} {e2}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn amplitude_and_theta_sum_to_quarter(num in -4000i128..4000, den in 1i128..1000) {
            let g = q(num, den);
            prop_assert_eq!(amplitude_exact(g) + theta_exact(g), q(1, 4));
        }

        #[test]
        fn theta_is_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(theta_of_gamma(lo).unwrap() <= theta_of_gamma(hi).unwrap());
        }

        #[test]
        fn expansion_step_below_theta(num in -2000i128..2000) {
            let g = q(num, 1000);
            prop_assume!(g != half());
            if let Ok((n, _)) = choose_n_exact(g) {
                prop_assert!(n >= 2);
                let theta = theta_exact(g);
                if theta > Rational::zero() {
                    prop_assert!(q(1, 1i128 << n) <= theta);
                }
            }
        }

        #[test]
        fn k_table_is_additive(num in 501i128..3000, order in 1u32..5, terms in 0u32..12) {
            let plan = build_plan_exact(q(num, 1000), order, terms).unwrap();
            let shift = (1u64 << plan.n) * order as u64;
            for j1 in 0..=terms as u64 {
                for j2 in 0..=terms as u64 {
                    prop_assert_eq!(plan.k(j1) + plan.k(j2), plan.k(j1 + j2 + shift));
                }
            }
        }

        #[test]
        fn instability_time_solves_equation(e in 1.0f64..12.0, theta in 0.0f64..0.25, order in 1u32..4, sigma0 in 0.02f64..3.0) {
            let it = instability_time(10f64.powf(-e), theta, order, sigma0, 0.0).unwrap();
            prop_assert!(it.residual < 1e-12, "residual {}", it.residual);
            prop_assert!(it.root > 0.0);
        }
    }
}
