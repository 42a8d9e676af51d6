//! Half-line heat equation with the Robin condition `∂_y u = a u` at `y = 0`.
//!
//! The solution is the full-line heat kernel applied to the Robin-compatible
//! extension of the initial data: the extension `ũ₀` makes `∂_y ũ₀ - a ũ₀`
//! odd, and on `y < 0`
//!
//! ```text
//! ũ₀(-s) = -u₀(s) + 2 e^{-as} u₀(0) + 2 ∫₀^s e^{-a(s-x)} u₀'(x) dx.
//! ```
//!
//! `a = ∞` is the odd (Dirichlet) extension, `a = 0` the even (Neumann) one.
//! Kernel convolutions are written as `π^{-1/2} ∫ e^{-z²} ũ₀(y - 2√t z) dz`
//! and truncated to `|z| ≤ 6`.

use crate::error::{Error, Result};
use crate::numerics::{fd_weights, fit_line, geomspace, golden_max, linspace, LineFit};
use crate::profile::{ShearProfile, Y_MAX};
use crate::quad::{integrate, integrate_best, pairwise_sum, QuadOptions};
use rayon::prelude::*;
use statrs::function::erf::{erf, erfc};
use std::f64::consts::PI;
use std::sync::Arc;

/// Half-width of the truncated kernel integral in the `z` variable.
const Z_CUT: f64 = 6.0;
/// Memory kernels `e^{-a(s-x)}` are dropped once `a(s-x)` exceeds this.
const MEMORY_CUT: f64 = 50.0;
/// Extent of the tabulated extension on the negative half-line.
const TABLE_END: f64 = 200.0;
/// Largest `|u₀(0)|` accepted as zero.
const ZERO_TRACE: f64 = 1e-10;

fn tight() -> QuadOptions {
    QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 2000 }
}

/// Robin coefficient; `Infinite` is the Dirichlet limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Finite(f64),
    Infinite,
}

impl Coefficient {
    pub fn finite(self) -> Option<f64> {
        match self {
            Coefficient::Finite(a) => Some(a),
            Coefficient::Infinite => None,
        }
    }

    pub fn label(self) -> String {
        match self {
            Coefficient::Finite(a) => format!("{a}"),
            Coefficient::Infinite => "inf".into(),
        }
    }
}

/// `I(s) = ∫₀^s e^{-a(s-x)} g(x) dx`, tabulated on nodes by the exact
/// recursion `I(s') = e^{-a(s'-s)} I(s) + ∫_s^{s'} e^{-a(s'-x)} g(x) dx`.
#[derive(Clone)]
pub struct ExpMemory {
    a: f64,
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl ExpMemory {
    /// `nodes` must be increasing and start at 0.
    pub fn new(a: f64, g: Arc<dyn Fn(f64) -> f64 + Send + Sync>, nodes: Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(nodes.len());
        values.push(0.0);
        for w in nodes.windows(2) {
            let prev = *values.last().expect("seeded");
            values.push((-a * (w[1] - w[0])).exp() * prev + local(a, &*g, w[0], w[1]));
        }
        ExpMemory { a, g, nodes, values }
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let j = match self.nodes.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(j) => return self.values[j],
            Err(j) => j - 1,
        };
        let s0 = self.nodes[j];
        (-self.a * (s - s0)).exp() * self.values[j] + local(self.a, &*self.g, s0, s)
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().expect("non-empty")
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_values(&self) -> &[f64] {
        &self.values
    }
}

fn local(a: f64, g: &(dyn Fn(f64) -> f64 + Send + Sync), lo: f64, s: f64) -> f64 {
    let lo = if a > 0.0 { lo.max(s - MEMORY_CUT / a) } else { lo };
    if lo >= s {
        return 0.0;
    }
    integrate_best(|x| (-a * (s - x)).exp() * g(x), lo, s, tight()).value
}

/// Initial data extended to the whole line for a given Robin coefficient.
#[derive(Clone)]
pub struct ExtendedProfile {
    base: ShearProfile,
    coefficient: Coefficient,
    trace: f64,
    memory: Option<ExpMemory>,
}

impl std::fmt::Debug for ExtendedProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtendedProfile")
            .field("base", &self.base)
            .field("coefficient", &self.coefficient)
            .field("trace", &self.trace)
            .finish()
    }
}

/// Robin-compatible extension of `u0`; requires `u0(0) = 0`.
pub fn extend(u0: &ShearProfile, a: Coefficient) -> Result<ExtendedProfile> {
    let trace = u0.value(0.0);
    if trace.abs() > ZERO_TRACE {
        return Err(Error::Precondition(format!("initial data must vanish at the wall, u0(0) = {trace}")));
    }
    extend_unchecked(u0, a)
}

/// Extension without the `u0(0) = 0` check, for non-flat reference data.
pub fn extend_unchecked(u0: &ShearProfile, a: Coefficient) -> Result<ExtendedProfile> {
    if let Coefficient::Finite(v) = a {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("Robin coefficient must be in [0, inf], got {v}")));
        }
    }
    let memory = match a {
        Coefficient::Finite(v) if v > 0.0 => {
            let p = u0.clone();
            let g: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(move |x| p.derivs(x, 1)[1]);
            Some(ExpMemory::new(v, g, linspace(0.0, TABLE_END, 4001)))
        }
        _ => None,
    };
    Ok(ExtendedProfile { base: u0.clone(), coefficient: a, trace: u0.value(0.0), memory })
}

impl ExtendedProfile {
    pub fn base(&self) -> &ShearProfile {
        &self.base
    }

    pub fn coefficient(&self) -> Coefficient {
        self.coefficient
    }

    pub fn eval(&self, y: f64) -> f64 {
        if y >= 0.0 {
            return self.base.value(y);
        }
        let s = -y;
        match (self.coefficient, &self.memory) {
            (Coefficient::Infinite, _) => -self.base.value(s),
            (Coefficient::Finite(_), None) => self.base.value(s),
            (Coefficient::Finite(a), Some(m)) => {
                let mem = if s <= m.end() { m.eval(s) } else { local(a, &|x| self.base.derivs(x, 1)[1], 0.0, s) };
                -self.base.value(s) + 2.0 * (-a * s).exp() * self.trace + 2.0 * mem
            }
        }
    }

    /// `sup |ũ₀|` bound from the data: `‖u₀‖ + 2 min(‖u₀'‖/a, ‖u₀‖)`.
    pub fn sup_bound(&self) -> f64 {
        let m0 = self.base.sup_abs(0, Y_MAX);
        match self.coefficient {
            Coefficient::Infinite => m0,
            Coefficient::Finite(a) => {
                let m1 = self.base.sup_abs(1, Y_MAX);
                m0 + 2.0 * (m1 / a).min(m0)
            }
        }
    }
}

/// The three equivalent closed forms of `ũ₀(-s)` for finite `a`, each by
/// direct quadrature: exponential-weighted `u₀' - a u₀`, the `u₀` memory form
/// and the `u₀'` memory form.
pub fn extension_forms(u0: &ShearProfile, a: f64, s: f64) -> Result<[f64; 3]> {
    if !(a > 0.0) || s < 0.0 {
        return Err(Error::InvalidParameter(format!("extension forms need a > 0 and s >= 0, got a={a}, s={s}")));
    }
    let lo = (s - MEMORY_CUT / a).max(0.0);
    let w = |x: f64| (-a * (s - x)).exp();
    let opts = tight();
    let d = |x: f64| u0.derivs(x, 1);
    let u00 = u0.value(0.0);
    let first = (-a * s).exp() * u00 + integrate(|x| { let v = d(x); w(x) * (v[1] - a * v[0]) }, lo, s, opts)?.value;
    let second = u0.value(s) - 2.0 * a * integrate(|x| w(x) * u0.value(x), lo, s, opts)?.value;
    let third = -u0.value(s) + 2.0 * (-a * s).exp() * u00 + 2.0 * integrate(|x| w(x) * d(x)[1], lo, s, opts)?.value;
    Ok([first, second, third])
}

/// `∂^k ũ₀(y)` for `y < 0` from the flat-data derivative formula.
pub fn extension_derivative(u0: &ShearProfile, a: Coefficient, k: usize, y: f64) -> Result<f64> {
    if k + 1 > u0.d_max() {
        return Err(Error::UnsupportedOrder { requested: k + 1, max: u0.d_max() });
    }
    let at0 = u0.derivs(0.0, k + 1);
    if at0.iter().take(k + 2).any(|v| v.abs() > ZERO_TRACE) {
        return Err(Error::Precondition("extension derivatives need data flat at the wall".into()));
    }
    if y >= 0.0 {
        return Ok(u0.derivs(y, k)[k]);
    }
    let s = -y;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let uk = u0.derivs(s, k)[k];
    match a {
        Coefficient::Infinite => Ok(-sign * uk),
        Coefficient::Finite(0.0) => Ok(sign * uk),
        Coefficient::Finite(v) if v > 0.0 => {
            let mem = local(v, &|x| u0.derivs(x, k + 1)[k + 1], 0.0, s);
            Ok(sign * (-uk + 2.0 * mem))
        }
        Coefficient::Finite(v) => Err(Error::InvalidParameter(format!("Robin coefficient must be >= 0, got {v}"))),
    }
}

/// Evaluation points on `y ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGrid {
    pub nodes: Vec<f64>,
}

impl SpaceGrid {
    /// 400 uniform nodes on `[0, Y_MAX]` merged with 50 nodes `0.5 (i/50)²`
    /// clustered at the wall.
    pub fn standard() -> Self {
        let mut nodes = linspace(0.0, Y_MAX, 400);
        nodes.extend((0..50).map(|i| 0.5 * (i as f64 / 50.0).powi(2)));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        SpaceGrid { nodes }
    }

    /// The wall-clustered nodes only; enough for boundary residuals.
    pub fn wall() -> Self {
        SpaceGrid { nodes: (0..50).map(|i| 0.5 * (i as f64 / 50.0).powi(2)).collect() }
    }

    pub fn points(nodes: Vec<f64>) -> Self {
        SpaceGrid { nodes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    RobinHomogeneous,
    InhomogeneousDirichlet,
}

/// Solution samples at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatField {
    pub time: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub coefficient: Coefficient,
    pub source_kind: SourceKind,
    /// Bound on the neglected kernel mass outside `|z| ≤ 6`.
    pub tail_bound: f64,
    pub warnings: Vec<String>,
}

/// `(K(t) ⋆ w)(y)` on the full line for a bounded `w`.
pub fn heat_convolve(w: &(dyn Fn(f64) -> f64 + Sync), t: f64, y: f64) -> f64 {
    let st = 2.0 * t.sqrt();
    let z0 = y / st;
    let f = |z: f64| (-z * z).exp() * w(y - st * z);
    let mut pts = vec![-Z_CUT];
    if z0 > -Z_CUT && z0 < Z_CUT {
        pts.push(z0);
    }
    pts.push(Z_CUT);
    let parts: Vec<f64> = pts
        .windows(2)
        .map(|p| integrate_best(f, p[0], p[1], QuadOptions { abs_tol: 1e-14, rel_tol: 1e-13, max_intervals: 2000 }).value)
        .collect();
    pairwise_sum(&parts) / PI.sqrt()
}

/// Robin solution at time `t` on `grid` from an already extended profile.
pub fn solve_extended(ext: &ExtendedProfile, t: f64, grid: &SpaceGrid) -> Result<HeatField> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
    }
    let w = |x: f64| ext.eval(x);
    let values: Vec<f64> = grid.nodes.par_iter().map(|&y| heat_convolve(&w, t, y)).collect();
    Ok(HeatField {
        time: t,
        grid: grid.nodes.clone(),
        values,
        coefficient: ext.coefficient(),
        source_kind: SourceKind::RobinHomogeneous,
        tail_bound: ext.sup_bound() * erfc(Z_CUT),
        warnings: vec![],
    })
}

/// `u = K ⋆ ũ₀` for the Robin problem with initial data `u0`.
pub fn solve_robin(u0: &ShearProfile, a: Coefficient, t: f64, grid: &SpaceGrid) -> Result<HeatField> {
    let ext = extend(u0, a)?;
    solve_extended(&ext, t, grid)
}

/// Closed-form evolution of `u₀ ≡ 1` under `∂_y u = α u`.
pub fn constant_data_reference(alpha: f64, t: f64, y: f64) -> f64 {
    let st = 2.0 * t.sqrt();
    erf(y / st) + (alpha * (alpha * t + y)).exp() * erfc((2.0 * alpha * t + y) / st)
}

/// Wall residual of the boundary condition using a one-sided fourth-order
/// stencil on the first five grid nodes: `|∂_y u - a u|`, `|u|` for
/// `a = ∞`, `|∂_y u|` for `a = 0`.
pub fn bc_residual(field: &HeatField) -> Result<f64> {
    let near = field.grid.iter().filter(|&&y| (0.0..=0.1).contains(&y)).count();
    if near < 5 || field.grid.first() != Some(&0.0) {
        return Err(Error::InsufficientResolution(format!("{near} nodes in [0, 0.1]; need 5 including y = 0")));
    }
    let nodes = &field.grid[..5];
    let w = fd_weights(0.0, nodes, 1);
    let du: f64 = w.iter().zip(&field.values[..5]).map(|(c, v)| c * v).sum();
    let u = field.values[0];
    Ok(match field.coefficient {
        Coefficient::Infinite => u.abs(),
        Coefficient::Finite(a) => (du - a * u).abs(),
    })
}

/// `u₁ + u₂ + u₃` for `∂_t u = ∂_yy u + r`, `u(t, 0) = f(t)`, `u(0) = u₀`.
pub fn solve_inhomogeneous_dirichlet(
    u0: &ShearProfile,
    f: &(dyn Fn(f64) -> f64 + Sync),
    r: &(dyn Fn(f64, f64) -> f64 + Sync),
    t: f64,
    grid: &SpaceGrid,
) -> Result<HeatField> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
    }
    let mut warnings = vec![];
    let f0 = f(0.0);
    if (f0 - u0.value(0.0)).abs() > ZERO_TRACE {
        warnings.push(format!("corner incompatibility: f(0) = {f0}, u0(0) = {}", u0.value(0.0)));
    }
    let odd = extend(u0, Coefficient::Infinite).or_else(|_| extend_unchecked(u0, Coefficient::Infinite))?;
    let w = |x: f64| odd.eval(x);
    let values: Vec<f64> = grid
        .nodes
        .par_iter()
        .map(|&y| boundary_part(f, t, y) + heat_convolve(&w, t, y) + source_part(r, t, y))
        .collect();
    let sup_r = grid.nodes.iter().map(|&y| r(t, y).abs()).fold(0.0, f64::max);
    Ok(HeatField {
        time: t,
        grid: grid.nodes.clone(),
        values,
        coefficient: Coefficient::Infinite,
        source_kind: SourceKind::InhomogeneousDirichlet,
        tail_bound: (odd.sup_bound() + t * sup_r) * erfc(Z_CUT),
        warnings,
    })
}

/// `-2 ∂_yK ⋆_t f` written as `(2/√π) ∫_{v₀}^∞ e^{-v²} f(t - y²/(4v²)) dv`.
fn boundary_part(f: &(dyn Fn(f64) -> f64 + Sync), t: f64, y: f64) -> f64 {
    if y == 0.0 {
        return f(t);
    }
    let v0 = y / (2.0 * t.sqrt());
    if v0 > 7.0 {
        return 0.0;
    }
    let g = |v: f64| (-v * v).exp() * f((t - y * y / (4.0 * v * v)).max(0.0));
    2.0 / PI.sqrt() * integrate_best(g, v0, v0.max(0.0) + 7.0, tight()).value
}

/// `∫₀^t (K(t-s) ⋆ r̃(s))(y) ds` with `r̃` odd in `y`.
fn source_part(r: &(dyn Fn(f64, f64) -> f64 + Sync), t: f64, y: f64) -> f64 {
    let inner = |s: f64| {
        let tau = t - s;
        if tau <= 0.0 {
            return r(t, y);
        }
        let odd = |x: f64| if x >= 0.0 { r(s, x) } else { -r(s, -x) };
        heat_convolve(&odd, tau, y)
    };
    integrate_best(inner, 0.0, t, QuadOptions { abs_tol: 1e-11, rel_tol: 1e-10, max_intervals: 500 }).value
}

/// Norm used in rate experiments. Sobolev norms sum the `L^p` norms of the
/// orders `0..=k`; `p = ∞` is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    Linf,
    L1,
    L2,
    Wkp { k: usize, p: f64 },
}

impl Norm {
    fn orders_and_power(self) -> (usize, f64) {
        match self {
            Norm::Linf => (0, f64::INFINITY),
            Norm::L1 => (0, 1.0),
            Norm::L2 => (0, 2.0),
            Norm::Wkp { k, p } => (k, p),
        }
    }

    pub fn label(self) -> String {
        match self {
            Norm::Linf => "Linf".into(),
            Norm::L1 => "L1".into(),
            Norm::L2 => "L2".into(),
            Norm::Wkp { k, p } if p.is_infinite() => format!("W{k}inf"),
            Norm::Wkp { k, p } => format!("W{k}_{p}"),
        }
    }
}

/// Which limiting extension the Robin extension is compared to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    /// Dirichlet, odd extension.
    ToInfinity,
    /// Neumann, even extension.
    ToZero,
}

/// Signed gap `(-1)^k (∂^k ũ^a - ∂^k ũ^lim)(-s)` for `s ≥ 0` (zero on `y > 0`).
pub struct ExtensionGap {
    memory: ExpMemory,
    boundary: f64,
    a: f64,
    limit: Limit,
}

impl ExtensionGap {
    /// Non-flat data is accepted only for `order = 0`.
    pub fn new(u0: &ShearProfile, a: f64, order: usize, limit: Limit) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("gap needs finite a > 0, got {a}")));
        }
        if order + 1 > u0.d_max() {
            return Err(Error::UnsupportedOrder { requested: order + 1, max: u0.d_max() });
        }
        if order > 0 && (0..=order + 1).any(|j| u0.derivs(0.0, j)[j].abs() > ZERO_TRACE) {
            return Err(Error::Precondition("derivative gaps need data flat at the wall".into()));
        }
        let p = u0.clone();
        let (g, end, boundary): (Arc<dyn Fn(f64) -> f64 + Send + Sync>, f64, f64) = match limit {
            Limit::ToInfinity => (Arc::new(move |x| 2.0 * p.derivs(x, order + 1)[order + 1]), 1e3, 2.0 * u0.value(0.0)),
            Limit::ToZero => (Arc::new(move |x| -2.0 * a * p.derivs(x, order)[order]), (60.0 / a).max(Y_MAX), 0.0),
        };
        let mut nodes = vec![0.0];
        nodes.extend(geomspace(1e-6, end, 3000));
        Ok(ExtensionGap { memory: ExpMemory::new(a, g, nodes), boundary, a, limit })
    }

    pub fn eval(&self, s: f64) -> f64 {
        let b = if order_zero_boundary(self.limit) { self.boundary * (-self.a * s).exp() } else { 0.0 };
        self.memory.eval(s) + b
    }

    /// `sup_s |gap|`: node maximum refined by golden section.
    pub fn sup(&self) -> f64 {
        let nodes = self.memory.nodes();
        let (j, _) = nodes
            .iter()
            .enumerate()
            .map(|(i, &s)| (i, self.eval(s).abs()))
            .fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        let lo = nodes[j.saturating_sub(1)];
        let hi = nodes[(j + 1).min(nodes.len() - 1)];
        let (_, v) = golden_max(|s| self.eval(s).abs(), lo, hi, 1e-10 * (1.0 + hi));
        v.max(self.eval(nodes[j]).abs())
    }

    /// `∫₀^∞ |gap|^p`, with an analytic tail past the last node.
    pub fn power_integral(&self, p: f64) -> Result<f64> {
        let nodes = self.memory.nodes();
        let end = self.memory.end();
        let mut breaks: Vec<f64> = nodes.iter().step_by(50).copied().collect();
        if *breaks.last().expect("non-empty") < end {
            breaks.push(end);
        }
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-10, max_intervals: 4000 };
        let parts: Vec<f64> = breaks
            .windows(2)
            .map(|w| integrate_best(|s| self.eval(s).abs().powf(p), w[0], w[1], opts).value)
            .collect();
        let body = pairwise_sum(&parts);
        let d_end = self.eval(end).abs();
        let tail = match self.limit {
            Limit::ToZero => d_end.powf(p) / (self.a * p),
            Limit::ToInfinity => {
                if d_end < 1e-300 {
                    0.0
                } else {
                    let decay = (self.eval(0.5 * end).abs() / d_end).ln() / 2f64.ln();
                    if decay * p <= 1.05 {
                        return Err(Error::Numerical(format!("gap decays like s^-{decay:.2}; L^{p} tail not integrable")));
                    }
                    d_end.powf(p) * end / (decay * p - 1.0)
                }
            }
        };
        Ok(body + tail)
    }
}

fn order_zero_boundary(limit: Limit) -> bool {
    limit == Limit::ToInfinity
}

/// `‖ũ^a - ũ^lim‖` at `t = 0` over the whole line, or the same for the heat
/// solutions on `[0, Y_MAX]` at `t > 0`.
pub fn extension_gap_norm(u0: &ShearProfile, a: f64, norm: Norm, limit: Limit, t: f64) -> Result<f64> {
    let (k, p) = norm.orders_and_power();
    let mut total = 0.0;
    for order in 0..=k {
        let gap = ExtensionGap::new(u0, a, order, limit)?;
        total += if t == 0.0 {
            if p.is_infinite() {
                gap.sup()
            } else {
                gap.power_integral(p)?.powf(1.0 / p)
            }
        } else {
            evolved_gap_norm(&gap, order, p, t)?
        };
    }
    Ok(total)
}

fn evolved_gap_norm(gap: &ExtensionGap, order: usize, p: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    let w = |x: f64| if x >= 0.0 { 0.0 } else { sign * gap.eval(-x) };
    let ys = linspace(0.0, Y_MAX, 801);
    let vals: Vec<f64> = ys.par_iter().map(|&y| heat_convolve(&w, t, y)).collect();
    if p.is_infinite() {
        return Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    // Composite Simpson on the uniform grid.
    let h = ys[1] - ys[0];
    let s: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = if i == 0 || i == vals.len() - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            c * v.abs().powf(p)
        })
        .sum();
    Ok((s * h / 3.0).powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub a: f64,
    pub norm_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub norm: Norm,
    pub limit: Limit,
    pub t: f64,
    pub rows: Vec<RateRow>,
    /// Log-log fit with the two extreme coefficients dropped.
    pub fit: Option<LineFit>,
    /// Set instead of a fit when the requested rate does not exist.
    pub advisory: Option<String>,
}

/// Distance between the Robin and limiting solutions across `a_values`, with
/// the fitted log-log slope.
pub fn rate_experiment(u0: &ShearProfile, a_values: &[f64], norm: Norm, limit: Limit, t: f64) -> Result<RateReport> {
    validate_a_values(a_values, limit)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    extend(u0, Coefficient::Infinite)?;
    let advisory = match (limit, norm) {
        (Limit::ToZero, _) if u0.u_infinity() != 0.0 => {
            Some(format!("{} does not decay (U_inf = {}); the Neumann gap does not converge", u0.label(), u0.u_infinity()))
        }
        (Limit::ToZero, Norm::L1) => Some("order-0 L1 rate needs an integrable antiderivative of u0; not claimed".into()),
        _ => None,
    };
    if advisory.is_some() {
        return Ok(RateReport { norm, limit, t, rows: vec![], fit: None, advisory });
    }
    let rows = a_values
        .par_iter()
        .map(|&a| extension_gap_norm(u0, a, norm, limit, t).map(|v| RateRow { a, norm_value: v }))
        .collect::<Result<Vec<_>>>()?;
    let mut sorted = rows.clone();
    sorted.sort_by(|p, q| p.a.total_cmp(&q.a));
    let inner = &sorted[1..sorted.len() - 1];
    let x: Vec<f64> = inner.iter().map(|r| r.a.ln()).collect();
    let y: Vec<f64> = inner.iter().map(|r| r.norm_value.ln()).collect();
    let fit = fit_line(&x, &y)?;
    Ok(RateReport { norm, limit, t, rows, fit: Some(fit), advisory: None })
}

fn validate_a_values(a: &[f64], limit: Limit) -> Result<()> {
    if a.len() < 5 {
        return Err(Error::InvalidParameter(format!("rate experiment needs >= 5 coefficients, got {}", a.len())));
    }
    let ratio = a[1] / a[0];
    if !(ratio > 0.0) || a.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidParameter("coefficients must be geometric".into()));
    }
    let (lo, hi) = match limit {
        Limit::ToInfinity => (10.0, 1e4),
        Limit::ToZero => (1e-4, 1e-1),
    };
    let eps = 1e-9;
    if a.iter().any(|&v| v < lo * (1.0 - eps) || v > hi * (1.0 + eps)) {
        return Err(Error::InvalidParameter(format!("coefficients must lie in [{lo}, {hi}]")));
    }
    Ok(())
}

/// Checks whether `ũ^a(y)` at fixed `y < 0` moves monotonically in `a`
/// between the even and odd extensions. Returns the indices of the `a_grid`
/// steps that break monotonicity.
pub fn interpolation_monotonicity(u0: &ShearProfile, y: f64, a_grid: &[f64]) -> Result<Vec<usize>> {
    let mut vals = vec![extend(u0, Coefficient::Finite(0.0))?.eval(y)];
    for &a in a_grid {
        vals.push(extension_forms(u0, a, -y)?[2]);
    }
    vals.push(extend(u0, Coefficient::Infinite)?.eval(y));
    let dir = (vals[vals.len() - 1] - vals[0]).signum();
    Ok(vals
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]) * dir < -1e-14)
        .map(|(i, _)| i)
        .collect())
}

/// `C e^{αt} / (1+t)^β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub alpha: f64,
    pub beta: f64,
    pub constant: f64,
}

impl Envelope {
    /// `ln(e^{αt} / (1+t)^β)`, without the constant.
    pub fn log_shape(&self, t: f64) -> f64 {
        self.alpha * t - self.beta * (1.0 + t).ln()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.constant * self.log_shape(t).exp()
    }
}

/// Envelope horizon for the growth checks.
pub const T_CHECK: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck {
    /// `sup_t sample(t) / (e^{αt}/(1+t)^β)`.
    pub worst_ratio: f64,
    pub worst_time: f64,
    pub pass: bool,
}

/// Compares `(t, sample)` pairs to the envelope shape in log space.
pub fn envelope_check(samples: &[(f64, f64)], env: &Envelope) -> EnvelopeCheck {
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for &(t, v) in samples {
        let r = if v <= 0.0 { f64::NEG_INFINITY } else { v.ln() - env.log_shape(t) };
        if r > worst.0 {
            worst = (r, t);
        }
    }
    let ratio = worst.0.exp();
    EnvelopeCheck { worst_ratio: ratio, worst_time: worst.1, pass: ratio <= env.constant * (1.0 + 1e-12) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub envelope: Envelope,
    /// `(t, φ(t))` on `[0, T_CHECK]`.
    pub trajectory: Vec<(f64, f64)>,
}

/// Integrates `φ' = λφ + C e^{αt}/(1+t)^β` on `[0, T_CHECK]` and fits the
/// smallest constant `C'` with `φ ≤ C' e^{αt}/(1+t)^β`.
pub fn gronwall_bound(lambda: f64, alpha: f64, beta: f64, c: f64, phi0: f64) -> Result<GronwallReport> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda >= alpha {
        return Err(Error::Hypothesis(format!("need lambda < alpha, got lambda={lambda}, alpha={alpha}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
    }
    let shape = Envelope { alpha, beta, constant: 1.0 };
    // ψ = φ e^{-αt}(1+t)^β is O(1); integrate it with RK4.
    let rhs = |t: f64, psi: f64| (lambda - alpha + beta / (1.0 + t)) * psi + c;
    let n = 30_000;
    let h = T_CHECK / n as f64;
    let mut psi = phi0;
    let mut traj = Vec::with_capacity(n / 100 + 1);
    let mut best: f64 = psi;
    traj.push((0.0, phi0));
    for i in 0..n {
        let t = i as f64 * h;
        let k1 = rhs(t, psi);
        let k2 = rhs(t + 0.5 * h, psi + 0.5 * h * k1);
        let k3 = rhs(t + 0.5 * h, psi + 0.5 * h * k2);
        let k4 = rhs(t + h, psi + h * k3);
        psi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        best = best.max(psi);
        if (i + 1) % 100 == 0 {
            let tn = (i + 1) as f64 * h;
            traj.push((tn, psi * shape.log_shape(tn).exp()));
        }
    }
    Ok(GronwallReport { envelope: Envelope { alpha, beta, constant: best.max(f64::MIN_POSITIVE) }, trajectory: traj })
}

/// `∫₀^t e^{αs}(1+s)^{-β} ds / (e^{αt}(1+t)^{-β})`, which tends to `1/α`.
pub fn asympt_ratio(alpha: f64, beta: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let f = |s: f64| (alpha * (s - t)).exp() * ((1.0 + t) / (1.0 + s)).powf(beta);
    Ok(integrate(f, 0.0, t, QuadOptions::default())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{constant, exp_decay_flat, exp_decay_raw, gevrey, two_inflection};
    use approx::assert_relative_eq;

    #[test]
    fn extension_limits() {
        let g = gevrey(2.0).unwrap();
        let even = extend(&g, Coefficient::Finite(0.0)).unwrap();
        let odd = extend(&g, Coefficient::Infinite).unwrap();
        for y in [0.3, 1.0, 4.0] {
            assert_eq!(even.eval(-y), g.value(y));
            assert_eq!(odd.eval(-y), -g.value(y));
            assert_eq!(even.eval(y), g.value(y));
        }
        assert!(matches!(extend(&g, Coefficient::Finite(-1.0)), Err(Error::InvalidParameter(_))));
        assert!(matches!(extend(&exp_decay_raw(), Coefficient::Finite(1.0)), Err(Error::Precondition(_))));
    }

    #[test]
    fn raw_exponential_extension_closed_form() {
        let raw = exp_decay_raw();
        for a in [0.3, 2.0, 5.0] {
            let ext = extend_unchecked(&raw, Coefficient::Finite(a)).unwrap();
            for y in [-0.2f64, -1.0, -3.0] {
                let exact = y.exp() - 2.0 * a / (a - 1.0) * (y.exp() - (a * y).exp());
                assert_relative_eq!(ext.eval(y), exact, max_relative = 1e-10, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn three_forms_agree() {
        for p in [gevrey(2.0).unwrap(), two_inflection(1.0, 3.0, 1.0).unwrap()] {
            for s in [0.1, 0.7, 2.0, 6.0] {
                let f = extension_forms(&p, 1.0, s).unwrap();
                assert!((f[0] - f[1]).abs() < 1e-9 && (f[1] - f[2]).abs() < 1e-9, "{f:?}");
                let ext = extend(&p, Coefficient::Finite(1.0)).unwrap();
                assert!((ext.eval(-s) - f[2]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn robin_combination_is_odd() {
        let g = gevrey(2.0).unwrap();
        for a in [0.5, 3.0, 20.0] {
            for i in 1..=100 {
                let y = 0.05 * i as f64;
                let d_neg = extension_derivative(&g, Coefficient::Finite(a), 1, -y).unwrap();
                let v_neg = extend(&g, Coefficient::Finite(a)).unwrap().eval(-y);
                let d_pos = g.derivative(1, y).unwrap();
                let v_pos = g.value(y);
                let sum = (d_neg - a * v_neg) + (d_pos - a * v_pos);
                assert!(sum.abs() < 1e-8, "a={a} y={y} sum={sum}");
            }
        }
    }

    #[test]
    fn extension_derivative_matches_fd() {
        let g = gevrey(2.0).unwrap();
        let ext = extend(&g, Coefficient::Finite(10.0)).unwrap();
        let h = 1e-3;
        let fd = (ext.eval(-1.0 - 2.0 * h) - 8.0 * ext.eval(-1.0 - h) + 8.0 * ext.eval(-1.0 + h) - ext.eval(-1.0 + 2.0 * h)) / (12.0 * h);
        let d = extension_derivative(&g, Coefficient::Finite(10.0), 1, -1.0).unwrap();
        assert_relative_eq!(d, fd, max_relative = 1e-5);
        assert_relative_eq!(extension_derivative(&g, Coefficient::Finite(10.0), 0, -1.0).unwrap(), ext.eval(-1.0), max_relative = 1e-12);
        for k in 0..4 {
            let expected = if k % 2 == 0 { -1.0 } else { 1.0 } * g.derivative(k, 0.8).unwrap();
            assert_relative_eq!(extension_derivative(&g, Coefficient::Infinite, k, -0.8).unwrap(), expected);
        }
        assert!(matches!(
            extension_derivative(&exp_decay_raw(), Coefficient::Finite(1.0), 1, -1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn zero_data_stays_zero() {
        let field = solve_robin(&constant(0.0), Coefficient::Finite(1.0), 0.5, &SpaceGrid::wall()).unwrap();
        assert!(field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_data_matches_reference() {
        let one = constant(1.0);
        for alpha in [0.5, 1.0] {
            let ext = extend_unchecked(&one, Coefficient::Finite(alpha)).unwrap();
            for t in [0.5, 1.0] {
                let grid = SpaceGrid::points(vec![0.0, 0.5, 1.0, 2.0]);
                let field = solve_extended(&ext, t, &grid).unwrap();
                for (y, v) in grid.nodes.iter().zip(&field.values) {
                    assert!((v - constant_data_reference(alpha, t, *y)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn constant_reference_residual() {
        let one = constant(1.0);
        let ext = extend_unchecked(&one, Coefficient::Finite(1.0)).unwrap();
        let field = solve_extended(&ext, 1.0, &SpaceGrid::wall()).unwrap();
        assert!(bc_residual(&field).unwrap() < 1e-6);
    }

    #[test]
    fn boundary_residuals_for_all_regimes() {
        let g = gevrey(2.0).unwrap();
        let f = solve_robin(&g, Coefficient::Finite(1.0), 0.1, &SpaceGrid::wall()).unwrap();
        assert!(bc_residual(&f).unwrap() < 1e-6);
        let d = solve_robin(&g, Coefficient::Infinite, 0.3, &SpaceGrid::wall()).unwrap();
        assert!(bc_residual(&d).unwrap() < 1e-8);
        let n = solve_robin(&g, Coefficient::Finite(0.0), 0.3, &SpaceGrid::wall()).unwrap();
        assert!(bc_residual(&n).unwrap() < 1e-8);
        let coarse = HeatField { grid: vec![0.0, 0.2, 0.4, 0.6, 0.8], ..f };
        assert!(matches!(bc_residual(&coarse), Err(Error::InsufficientResolution(_))));
    }

    #[test]
    fn semigroup_on_the_full_line() {
        let g = gevrey(2.0).unwrap();
        let ext = extend(&g, Coefficient::Finite(2.0)).unwrap();
        let (t1, t2) = (0.2, 0.3);
        let w = |x: f64| ext.eval(x);
        let mid = |x: f64| heat_convolve(&w, t1, x);
        for y in [0.0, 0.4, 1.5] {
            let two_step = heat_convolve(&mid, t2, y);
            let direct = heat_convolve(&w, t1 + t2, y);
            assert!((two_step - direct).abs() < 1e-5, "y={y}: {two_step} vs {direct}");
        }
    }

    #[test]
    fn dirichlet_mass_decreases() {
        let p = two_inflection(1.0, 3.0, 1.0).unwrap();
        let grid = SpaceGrid::points(linspace(0.0, 20.0, 401));
        let mut last = f64::INFINITY;
        for t in [0.05, 0.2, 0.5, 1.0, 2.0] {
            let f = solve_robin(&p, Coefficient::Infinite, t, &grid).unwrap();
            let m: f64 = f.values.iter().map(|v| v * v).sum::<f64>() * 0.05;
            assert!(m <= last);
            last = m;
        }
    }

    /// Crank-Nicolson on `[0, L]` with `u(t, 0) = f(t)`, `u(t, L) = 0`.
    fn crank_nicolson(f: &dyn Fn(f64) -> f64, r: &dyn Fn(f64, f64) -> f64, t_end: f64, l: f64, n: usize, steps: usize) -> (Vec<f64>, Vec<f64>) {
        let h = l / n as f64;
        let dt = t_end / steps as f64;
        let ys: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let mut u = vec![0.0; n + 1];
        let mu = dt / (h * h);
        let m = n - 1;
        for s in 0..steps {
            let t0 = s as f64 * dt;
            let t1 = t0 + dt;
            let mut rhs = vec![0.0; m];
            for i in 1..n {
                let lap = u[i - 1] - 2.0 * u[i] + u[i + 1];
                rhs[i - 1] = u[i] + 0.5 * mu * lap + 0.5 * dt * (r(t0, ys[i]) + r(t1, ys[i]));
            }
            rhs[0] += 0.5 * mu * f(t1);
            let lower = vec![-0.5 * mu; m];
            let upper = vec![-0.5 * mu; m];
            let diag = vec![1.0 + mu; m];
            crate::numerics::solve_tridiagonal(&lower, &diag, &upper, &mut rhs).unwrap();
            u[0] = f(t1);
            u[1..n].copy_from_slice(&rhs);
            u[n] = 0.0;
        }
        (ys, u)
    }

    #[test]
    fn inhomogeneous_dirichlet_reductions() {
        let g = gevrey(2.0).unwrap();
        let grid = SpaceGrid::points(vec![0.0, 0.3, 1.0]);
        let zero_f = |_: f64| 0.0;
        let zero_r = |_: f64, _: f64| 0.0;
        let a = solve_inhomogeneous_dirichlet(&g, &zero_f, &zero_r, 0.4, &grid).unwrap();
        let b = solve_robin(&g, Coefficient::Infinite, 0.4, &grid).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-14);
        }
        let z = constant(0.0);
        let f = |t: f64| t * t;
        for t in [0.5, 1.0] {
            let field = solve_inhomogeneous_dirichlet(&z, &f, &zero_r, t, &SpaceGrid::points(vec![0.0, 1e-3])).unwrap();
            assert!((field.values[0] - t * t).abs() < 1e-5);
            assert!((field.values[1] - t * t).abs() < 1e-2);
            assert!(field.warnings.is_empty());
        }
        let bad = |_: f64| 1.0;
        let w = solve_inhomogeneous_dirichlet(&z, &bad, &zero_r, 0.5, &SpaceGrid::points(vec![0.0])).unwrap();
        assert_eq!(w.warnings.len(), 1);
    }

    #[test]
    fn inhomogeneous_source_matches_crank_nicolson() {
        let z = constant(0.0);
        let f = |_: f64| 0.0;
        let r = |_: f64, y: f64| (-y).exp();
        let t = 1.0;
        let (ys, u) = crank_nicolson(&f, &r, t, 20.0, 4000, 2000);
        let probe: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
        let field = solve_inhomogeneous_dirichlet(&z, &f, &r, t, &SpaceGrid::points(probe.clone())).unwrap();
        let mut worst: f64 = 0.0;
        for (y, v) in probe.iter().zip(&field.values) {
            let i = ys.iter().position(|&x| (x - y).abs() < 1e-9).unwrap();
            worst = worst.max((v - u[i]).abs());
        }
        assert!(worst < 1e-4, "max deviation {worst}");
    }

    #[test]
    fn raw_exponential_neumann_gap_closed_form() {
        let raw = exp_decay_raw();
        for a in [1e-3, 1e-2, 1e-1] {
            let gap = ExtensionGap::new(&raw, a, 0, Limit::ToZero).unwrap();
            let l2 = gap.power_integral(2.0).unwrap().sqrt();
            assert_relative_eq!(l2, (2.0 * a / (a + 1.0)).sqrt(), max_relative = 1e-6);
        }
    }

    #[test]
    fn dirichlet_rate_for_gevrey() {
        let g = gevrey(2.0).unwrap();
        let r = rate_experiment(&g, &geomspace(10.0, 1e4, 7), Norm::Linf, Limit::ToInfinity, 0.0).unwrap();
        let s = r.fit.unwrap().slope;
        assert!((s + 1.0).abs() < 0.1, "slope {s}");
    }

    #[test]
    fn neumann_rates() {
        let cut = exp_decay_flat();
        let r = rate_experiment(&cut, &geomspace(1e-4, 1e-1, 7), Norm::L2, Limit::ToZero, 0.0).unwrap();
        assert!((r.fit.unwrap().slope - 0.5).abs() < 0.05);
        let two = two_inflection(1.0, 3.0, 1.0).unwrap();
        let r = rate_experiment(&two, &geomspace(1e-4, 1e-1, 7), Norm::Linf, Limit::ToZero, 0.0).unwrap();
        assert!((r.fit.unwrap().slope - 1.0).abs() < 0.1);
        let g = gevrey(2.0).unwrap();
        let r = rate_experiment(&g, &geomspace(1e-4, 1e-1, 7), Norm::L2, Limit::ToZero, 0.0).unwrap();
        assert!(r.advisory.is_some() && r.fit.is_none());
    }

    #[test]
    fn rate_inputs_are_validated() {
        let g = gevrey(2.0).unwrap();
        assert!(rate_experiment(&g, &[10.0, 100.0], Norm::Linf, Limit::ToInfinity, 0.0).is_err());
        assert!(rate_experiment(&g, &geomspace(1.0, 1e4, 6), Norm::Linf, Limit::ToInfinity, 0.0).is_err());
    }

    #[test]
    fn monotone_interpolation_for_increasing_data() {
        let g = gevrey(2.0).unwrap();
        let v = interpolation_monotonicity(&g, -1.0, &geomspace(1e-2, 1e2, 20)).unwrap();
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn envelope_examples() {
        let env = Envelope { alpha: 1.0, beta: 0.25, constant: 1.0 };
        let samples: Vec<(f64, f64)> = linspace(0.0, 30.0, 301).into_iter().map(|t| (t, t.exp() / (1.0 + t).powf(0.25))).collect();
        let c = envelope_check(&samples, &env);
        assert!(c.pass);
        assert_relative_eq!(c.worst_ratio, 1.0, max_relative = 1e-12);
        let env = Envelope { alpha: 1.0, beta: 0.0, constant: 10.0 };
        let samples: Vec<(f64, f64)> = linspace(0.0, 20.0, 2001).into_iter().map(|t| (t, t * (0.5 * t).exp())).collect();
        let c = envelope_check(&samples, &env);
        assert!(c.pass);
        assert_relative_eq!(c.worst_ratio, 2.0 / std::f64::consts::E, max_relative = 1e-4);
    }

    #[test]
    fn gronwall_cases() {
        let r = gronwall_bound(0.0, 2.0, 0.0, 1.0, 0.0).unwrap();
        assert!(r.envelope.constant <= 0.5 && r.envelope.constant > 0.5 * (1.0 - 1e-9));
        for &(t, phi) in &r.trajectory {
            assert_relative_eq!(phi, ((2.0 * t).exp() - 1.0) / 2.0, max_relative = 1e-8, epsilon = 1e-12);
        }
        let r = gronwall_bound(0.5, 1.0, 0.25, 1.0, 0.0).unwrap();
        assert!(r.envelope.constant.is_finite() && r.envelope.constant < 3.0);
        assert!(matches!(gronwall_bound(1.0, 1.0, 0.0, 1.0, 0.0), Err(Error::Hypothesis(_))));
        let q = asympt_ratio(1.0, 0.25, 30.0).unwrap();
        assert!((q - 1.0).abs() < 0.05);
    }
}
