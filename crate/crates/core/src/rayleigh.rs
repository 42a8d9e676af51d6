//! Rayleigh eigenvalue problem `(U - c)(φ'' - k²φ) - U''φ = 0`, `φ(0) = 0`,
//! `φ → 0` at infinity, solved by inward shooting.
//!
//! The decaying far-field branch is started at `Y_start` with `φ = 1` and
//! `φ' = -qφ`, `q² = k² + U''/(U - c)`, then integrated toward the wall in
//! `s = Y_start - y`. The start value does not depend on `c`, so the miss
//! `φ(0; c)` is analytic in `c` and secant/Muller iterations converge
//! superlinearly. The reported residual is `|φ(0)| / max|φ|`.
//!
//! The integrated state is `(χ, π) = e^{-|k|s}(φ, φ')`, which stays O(1)
//! while `φ` itself grows like `e^{|k|s}` toward the wall.

use crate::error::{Error, Result};
use crate::numerics::{fd_weights, golden_max, least_squares, linspace, solve_tridiagonal};
use crate::profile::{ShearProfile, Y_MAX};
use num_complex::Complex64;
use ode_solvers::{Dopri5, OutputType, System, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Coarsest spacing of stored eigenfunctions; see [`mode_step`].
pub const MODE_STEP: f64 = 0.01;
/// Seed of the time-stepping oracle's random initial data.
pub const ORACLE_SEED: u64 = 0x5EED_0001;

const NORMALIZED_TOL: f64 = 1e-10;
const NEUTRAL_IM: f64 = 1e-10;
const MAX_ITER: usize = 60;

/// Integration controls for the shooting method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Lower bound for the far-field start point.
    pub y_max: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions { rtol: 1e-11, atol: 1e-13, y_max: Y_MAX }
    }
}

/// Storage spacing `MODE_STEP / n` with `n = ceil(0.1 / Im c)` clamped to
/// `1..=16`, so the critical layer (width about `Im c / U'`) spans several
/// samples.
pub fn mode_step(c: Complex64) -> f64 {
    let n = (0.1 / c.im).ceil().clamp(1.0, 16.0);
    MODE_STEP / n
}

/// `max(y_max, 20/|k|)` capped at `|k| Y ≤ 600`, on the `MODE_STEP` lattice.
pub fn start_point(k: f64, y_max: f64) -> f64 {
    let k = k.abs();
    let y = y_max.max(20.0 / k).min(600.0 / k);
    (y / MODE_STEP).round() * MODE_STEP
}

struct RayleighSystem<'a> {
    profile: &'a ShearProfile,
    k: f64,
    k2: f64,
    c: Complex64,
    y_start: f64,
}

impl RayleighSystem<'_> {
    fn potential(&self, y: f64) -> Complex64 {
        let (u, u2) = self.profile.value_and_second(y);
        self.k2 + u2 / (u - self.c)
    }
}

impl System<f64, Vector4<f64>> for RayleighSystem<'_> {
    fn system(&self, s: f64, st: &Vector4<f64>, d: &mut Vector4<f64>) {
        let w = self.potential(self.y_start - s);
        let chi = Complex64::new(st[0], st[1]);
        let pi = Complex64::new(st[2], st[3]);
        let dchi = -pi - self.k * chi;
        let dpi = -(w * chi) - self.k * pi;
        d[0] = dchi.re;
        d[1] = dchi.im;
        d[2] = dpi.re;
        d[3] = dpi.im;
    }
}

/// One inward integration.
#[derive(Debug, Clone)]
pub struct Shot {
    /// `e^{-|k|Y_start} φ(0)` for the `c`-independent start `φ(Y_start) = 1`.
    pub miss: Complex64,
    /// `max_y e^{-|k|Y_start} |φ(y)|`, on the same scale as `miss`.
    pub max_abs: f64,
    pub y_start: f64,
    /// Increasing `y`, with `φ` and `φ'` on the `miss` scale; empty unless
    /// requested.
    pub y: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub dphi: Vec<Complex64>,
}

impl Shot {
    pub fn normalized(&self) -> Complex64 {
        self.miss / self.max_abs
    }
}

/// Shoots for `(k, c)`; `store` samples the solution with that spacing, which
/// must divide `MODE_STEP`.
pub fn shoot(profile: &ShearProfile, k: f64, c: Complex64, opts: &ShootOptions, store: Option<f64>) -> Result<Shot> {
    if !(k != 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("wavenumber must be finite and nonzero, got {k}")));
    }
    if !(c.im > 0.0) {
        return Err(Error::Precondition(format!("shooting needs Im c > 0, got {c}")));
    }
    let y_start = start_point(k, opts.y_max);
    let ka = k.abs();
    let sys = RayleighSystem { profile, k: ka, k2: k * k, c, y_start };
    let q = sys.potential(y_start).sqrt();
    let q = if q.re < 0.0 { -q } else { q };
    let init = Vector4::new(1.0, 0.0, -q.re, -q.im);
    // `max|φ|` is always taken on the y-lattice of spacing at most
    // MODE_STEP, so residuals for different start points are comparable.
    let dx = store.unwrap_or(MODE_STEP);
    // Dopri5 rather than Dop853: the latter's step control in ode_solvers 0.6
    // collapses on non-autonomous systems.
    let mut solver = Dopri5::from_param(
        sys, 0.0, y_start, dx, init, opts.rtol, opts.atol, 0.9, 0.04, 0.2, 10.0, y_start, 0.0, 1_000_000, u32::MAX, OutputType::Dense,
    );
    solver
        .integrate()
        .map_err(|e| Error::Numerical(format!("Rayleigh integration at k={k}, c={c}: {e:?}")))?;
    let xs = solver.x_out();
    let ys = solver.y_out();
    let last = ys.last().ok_or_else(|| Error::Numerical("empty Rayleigh integration".into()))?;
    let miss = Complex64::new(last[0], last[1]);
    // e^{-|k|Y} φ(y) = e^{-|k|y} χ(s).
    let scale = |s: f64| (-ka * (y_start - s)).exp();
    let max_abs = xs.iter().zip(ys).map(|(&s, v)| scale(s) * v[0].hypot(v[1])).fold(0.0, f64::max);
    let (mut y, mut phi, mut dphi) = (vec![], vec![], vec![]);
    if let Some(h) = store {
        for (s, v) in xs.iter().zip(ys).rev() {
            let yy = ((y_start - s) / h).round() * h;
            if y.last().is_some_and(|&p: &f64| (p - yy).abs() < 0.5 * h) {
                continue;
            }
            let e = scale(*s);
            y.push(yy.max(0.0));
            phi.push(Complex64::new(v[0], v[1]) * e);
            dphi.push(Complex64::new(v[2], v[3]) * e);
        }
    }
    Ok(Shot { miss, max_abs, y_start, y, phi, dphi })
}

/// Normalized wall miss `φ(0) / max|φ|`.
pub fn shoot_residual(profile: &ShearProfile, k: f64, c: Complex64) -> Result<Complex64> {
    Ok(shoot(profile, k, c, &ShootOptions::default(), None)?.normalized())
}

/// An accepted unstable mode.
#[derive(Debug, Clone)]
pub struct RayleighMode {
    pub wavenumber: f64,
    pub phase_speed: Complex64,
    /// Uniform grid `0, h, ..., y_end` with `h = mode_step(c)`.
    pub y: Vec<f64>,
    /// Normalized so that `max|φ| = 1`, attained at a real positive value.
    pub phi: Vec<Complex64>,
    pub dphi: Vec<Complex64>,
    pub residual: f64,
    pub growth_rate: f64,
}

impl RayleighMode {
    /// `λ = -ikc`; its real part is the growth rate.
    pub fn lambda(&self) -> Complex64 {
        -Complex64::i() * self.wavenumber * self.phase_speed
    }

    pub fn y_end(&self) -> f64 {
        *self.y.last().expect("non-empty eigenfunction")
    }

    /// Spacing of the stored samples.
    pub fn step(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    /// `(φ, φ')` at `y` by cubic Hermite interpolation of the stored samples.
    pub fn interpolate(&self, y: f64) -> (Complex64, Complex64) {
        if y <= 0.0 {
            return (self.phi[0], self.dphi[0]);
        }
        let n = self.y.len();
        if y >= self.y_end() {
            return (self.phi[n - 1], self.dphi[n - 1]);
        }
        let i = ((y / self.step()).floor() as usize).min(n - 2);
        let h = self.y[i + 1] - self.y[i];
        let t = (y - self.y[i]) / h;
        let (p0, p1, m0, m1) = (self.phi[i], self.phi[i + 1], self.dphi[i] * h, self.dphi[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let phi = p0 * (2.0 * t3 - 3.0 * t2 + 1.0) + m0 * (t3 - 2.0 * t2 + t) + p1 * (-2.0 * t3 + 3.0 * t2) + m1 * (t3 - t2);
        let dphi = (p0 * (6.0 * t2 - 6.0 * t) + m0 * (3.0 * t2 - 4.0 * t + 1.0) + p1 * (-6.0 * t2 + 6.0 * t) + m1 * (3.0 * t2 - 2.0 * t)) / h;
        (phi, dphi)
    }
}

fn step_bound(profile: &ShearProfile, k: f64, opts: &ShootOptions) -> f64 {
    let (lo, hi) = velocity_range(profile, start_point(k, opts.y_max));
    0.5 * (hi - lo).max(1e-3)
}

/// Complex secant iteration on the analytic miss, with a Muller fallback.
pub fn solve_mode(profile: &ShearProfile, k: f64, c_init: Complex64) -> Result<RayleighMode> {
    solve_mode_with(profile, k, c_init, &ShootOptions::default())
}

pub fn solve_mode_with(profile: &ShearProfile, k: f64, c_init: Complex64, opts: &ShootOptions) -> Result<RayleighMode> {
    if !(c_init.im > 0.0) {
        return Err(Error::Precondition(format!("seed must satisfy Im c > 0, got {c_init}")));
    }
    let max_step = step_bound(profile, k, opts);
    let eval = |c: Complex64| shoot(profile, k, c, opts, None);
    let mut pts: Vec<(Complex64, Complex64)> = Vec::new();
    let first = eval(c_init)?;
    if first.normalized().norm() < NORMALIZED_TOL {
        return finish(profile, k, c_init, opts);
    }
    pts.push((c_init, first.miss));
    let c1 = c_init + Complex64::new(1e-4, 1e-4) * (1.0 + c_init.norm());
    pts.push((c1, eval(c1)?.miss));
    for it in 0..MAX_ITER {
        let n = pts.len();
        let (ca, fa) = pts[n - 2];
        let (cb, fb) = pts[n - 1];
        let mut next = if it >= 3 && n >= 3 {
            muller(pts[n - 3], (ca, fa), (cb, fb)).unwrap_or_else(|| secant(ca, fa, cb, fb))
        } else {
            secant(ca, fa, cb, fb)
        };
        if !next.re.is_finite() || !next.im.is_finite() {
            return Err(Error::NotFound(format!("iteration stalled at k={k}, c={cb}")));
        }
        let step = next - cb;
        if step.norm() > max_step {
            next = cb + step * (max_step / step.norm());
        }
        if next.im <= 0.0 {
            if cb.im < NEUTRAL_IM {
                return Err(Error::RejectedNeutral(cb.im));
            }
            next.im = 0.5 * cb.im;
        }
        let shot = eval(next)?;
        if shot.normalized().norm() < NORMALIZED_TOL {
            if next.im <= NEUTRAL_IM {
                return Err(Error::RejectedNeutral(next.im));
            }
            return finish(profile, k, next, opts);
        }
        if (next - cb).norm() < 1e-15 * (1.0 + cb.norm()) {
            break;
        }
        pts.push((next, shot.miss));
    }
    Err(Error::NotFound(format!("no convergence at k={k} from seed {c_init}")))
}

fn secant(ca: Complex64, fa: Complex64, cb: Complex64, fb: Complex64) -> Complex64 {
    let d = fb - fa;
    if d.norm() == 0.0 {
        return Complex64::new(f64::NAN, f64::NAN);
    }
    cb - fb * (cb - ca) / d
}

/// Muller step through three points; `None` when degenerate.
fn muller(p0: (Complex64, Complex64), p1: (Complex64, Complex64), p2: (Complex64, Complex64)) -> Option<Complex64> {
    let (x0, f0) = p0;
    let (x1, f1) = p1;
    let (x2, f2) = p2;
    let h1 = x1 - x0;
    let h2 = x2 - x1;
    let d1 = (f1 - f0) / h1;
    let d2 = (f2 - f1) / h2;
    let a = (d2 - d1) / (h2 + h1);
    let b = a * h2 + d2;
    let disc = (b * b - 4.0 * f2 * a).sqrt();
    let den = if (b + disc).norm() > (b - disc).norm() { b + disc } else { b - disc };
    if den.norm() == 0.0 || !den.re.is_finite() {
        return None;
    }
    Some(x2 - 2.0 * f2 / den)
}

fn finish(profile: &ShearProfile, k: f64, c: Complex64, opts: &ShootOptions) -> Result<RayleighMode> {
    if c.im <= NEUTRAL_IM {
        return Err(Error::RejectedNeutral(c.im));
    }
    // The stored samples feed finite-difference checks on a fine grid, so
    // they are integrated two digits tighter than the search shots.
    let fine = ShootOptions { rtol: opts.rtol * 1e-2, atol: opts.atol * 1e-2, ..*opts };
    let shot = shoot(profile, k, c, &fine, Some(mode_step(c)))?;
    let (imax, _) = shot
        .phi
        .iter()
        .enumerate()
        .fold((0, -1.0), |b, (i, p)| if p.norm() > b.1 { (i, p.norm()) } else { b });
    let scale = shot.phi[imax];
    let phi: Vec<Complex64> = shot.phi.iter().map(|p| p / scale).collect();
    let dphi: Vec<Complex64> = shot.dphi.iter().map(|p| p / scale).collect();
    let residual = shot.normalized().norm();
    Ok(RayleighMode {
        wavenumber: k,
        phase_speed: c,
        y: shot.y,
        residual,
        phi,
        dphi,
        growth_rate: k.abs() * c.im,
    })
}

/// `(min U, max U)` over `[0, y_end]` and the far-field value.
pub fn velocity_range(profile: &ShearProfile, y_end: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in linspace(0.0, y_end, 8001) {
        let u = profile.value(y);
        lo = lo.min(u);
        hi = hi.max(u);
    }
    let inf = profile.u_infinity();
    if inf.is_finite() {
        lo = lo.min(inf);
        hi = hi.max(inf);
    }
    (lo, hi)
}

/// `|c - (U_min + U_max)/2| ≤ (U_max - U_min)/2`.
pub fn in_semicircle(c: Complex64, u_min: f64, u_max: f64) -> bool {
    (c - 0.5 * (u_min + u_max)).norm() <= 0.5 * (u_max - u_min) + 1e-8
}

pub fn semicircle_check(mode: &RayleighMode, profile: &ShearProfile) -> bool {
    let (lo, hi) = velocity_range(profile, mode.y_end());
    in_semicircle(mode.phase_speed, lo, hi)
}

/// Coarse argument-principle scan of the rectangle
/// `[U_min, U_max] × (0, U_max - U_min]` followed by polishing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub re_cells: usize,
    pub im_cells: usize,
    /// Bottom edge of the rectangle as a fraction of the velocity range.
    pub im_floor: f64,
    pub shoot: ShootOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { re_cells: 24, im_cells: 16, im_floor: 1e-3, shoot: ShootOptions::default() }
    }
}

/// Largest argument jump accepted along one edge segment before bisection.
const ARG_STEP: f64 = PI / 2.0;
const EDGE_DEPTH: usize = 6;

/// All modes found for one wavenumber, deduplicated, largest growth first.
pub fn scan_modes(profile: &ShearProfile, k: f64, opts: &ScanOptions) -> Result<Vec<RayleighMode>> {
    let y_start = start_point(k, opts.shoot.y_max);
    let (lo, hi) = velocity_range(profile, y_start);
    let range = hi - lo;
    if range <= 0.0 {
        return Ok(vec![]);
    }
    let res = linspace(lo, hi, opts.re_cells + 1);
    let ims = linspace(opts.im_floor * range, range, opts.im_cells + 1);
    let nodes: Vec<Complex64> = ims.iter().flat_map(|&b| res.iter().map(move |&a| Complex64::new(a, b))).collect();
    let shots: Vec<Shot> = nodes.par_iter().map(|&c| shoot(profile, k, c, &opts.shoot, None)).collect::<Result<_>>()?;
    let nr = opts.re_cells + 1;
    let idx = |i: usize, j: usize| j * nr + i;
    let f = |c: Complex64| shoot(profile, k, c, &opts.shoot, None).map(|s| s.miss);
    let edge = |a: usize, b: usize| edge_arg(&f, nodes[a], shots[a].miss, nodes[b], shots[b].miss, 0);
    let horiz: Vec<f64> = (0..=opts.im_cells)
        .flat_map(|j| (0..opts.re_cells).map(move |i| (j, i)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(j, i)| edge(idx(i, j), idx(i + 1, j)))
        .collect::<Result<_>>()?;
    let vert: Vec<f64> = (0..opts.im_cells)
        .flat_map(|j| (0..=opts.re_cells).map(move |i| (j, i)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(j, i)| edge(idx(i, j), idx(i, j + 1)))
        .collect::<Result<_>>()?;
    let h_at = |i: usize, j: usize| horiz[j * opts.re_cells + i];
    let v_at = |i: usize, j: usize| vert[j * nr + i];
    let mut seeds = Vec::new();
    for j in 0..opts.im_cells {
        for i in 0..opts.re_cells {
            let total = h_at(i, j) + v_at(i + 1, j) - h_at(i, j + 1) - v_at(i, j);
            let winding = (total / (2.0 * PI)).round() as i64;
            if winding > 0 {
                seeds.push(0.25 * (nodes[idx(i, j)] + nodes[idx(i + 1, j)] + nodes[idx(i, j + 1)] + nodes[idx(i + 1, j + 1)]));
            }
        }
    }
    let best = (0..nodes.len())
        .min_by(|&a, &b| shots[a].normalized().norm().total_cmp(&shots[b].normalized().norm()))
        .expect("non-empty grid");
    seeds.push(nodes[best]);
    let found: Vec<RayleighMode> = seeds
        .par_iter()
        .filter_map(|&c| solve_mode_with(profile, k, c, &opts.shoot).ok())
        .collect();
    Ok(dedup_modes(found))
}

fn edge_arg(
    f: &(dyn Fn(Complex64) -> Result<Complex64> + Sync),
    ca: Complex64,
    fa: Complex64,
    cb: Complex64,
    fb: Complex64,
    depth: usize,
) -> Result<f64> {
    let d = (fb / fa).arg();
    if d.abs() <= ARG_STEP || depth >= EDGE_DEPTH {
        return Ok(d);
    }
    let cm = 0.5 * (ca + cb);
    let fm = f(cm)?;
    Ok(edge_arg(f, ca, fa, cm, fm, depth + 1)? + edge_arg(f, cm, fm, cb, fb, depth + 1)?)
}

fn dedup_modes(mut modes: Vec<RayleighMode>) -> Vec<RayleighMode> {
    modes.sort_by(|a, b| b.growth_rate.total_cmp(&a.growth_rate));
    let mut out: Vec<RayleighMode> = Vec::new();
    for m in modes {
        if out.iter().all(|o| (o.phase_speed - m.phase_speed).norm() > 1e-7) {
            out.push(m);
        }
    }
    out
}

/// Sampled maximal growth rate `σ(k)`.
#[derive(Debug, Clone)]
pub struct DispersionCurve {
    pub k_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub modes: Vec<Option<RayleighMode>>,
    /// Grid maximizer and maximum.
    pub k0: f64,
    pub sigma0: f64,
    pub curvature_order: usize,
    /// Peak refined off-grid by golden section, when the grid peak is interior.
    pub refined_peak: Option<(f64, f64)>,
}

impl DispersionCurve {
    pub fn is_stable(&self) -> bool {
        self.sigma0 <= 0.0
    }

    /// Mode at the grid point closest to `k`.
    pub fn nearest_mode(&self, k: f64) -> Option<&RayleighMode> {
        self.k_values
            .iter()
            .zip(&self.modes)
            .filter_map(|(kk, m)| m.as_ref().map(|m| ((kk - k).abs(), m)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, m)| m)
    }
}

/// Growth-rate curve over `k_grid` by rectangle scans plus continuation.
pub fn scan_sigma(profile: &ShearProfile, k_grid: &[f64]) -> Result<DispersionCurve> {
    scan_sigma_with(profile, k_grid, &ScanOptions::default())
}

pub fn scan_sigma_with(profile: &ShearProfile, k_grid: &[f64], opts: &ScanOptions) -> Result<DispersionCurve> {
    if k_grid.len() < 20 {
        return Err(Error::InvalidParameter(format!("k grid needs >= 20 points, got {}", k_grid.len())));
    }
    if k_grid.iter().any(|&k| !(k > 0.0)) || k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("k grid must be positive and increasing".into()));
    }
    if k_grid[0] > 0.05 * (1.0 + 1e-9) || k_grid[k_grid.len() - 1] < 5.0 * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter("k grid must span [0.05, 5]".into()));
    }
    let mut modes: Vec<Option<RayleighMode>> = Vec::with_capacity(k_grid.len());
    let mut prev: Option<Complex64> = None;
    for &k in k_grid {
        let mut cands = scan_modes(profile, k, opts)?;
        if let Some(c) = prev {
            if let Ok(m) = solve_mode_with(profile, k, c, &opts.shoot) {
                cands.push(m);
            }
        }
        let best = dedup_modes(cands).into_iter().next();
        prev = best.as_ref().map(|m| m.phase_speed);
        modes.push(best);
    }
    let sigma_values: Vec<f64> = modes.iter().map(|m| m.as_ref().map_or(0.0, |m| m.growth_rate)).collect();
    let (i0, sigma0) = sigma_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |b, (i, s)| if s > b.1 { (i, s) } else { b });
    let k0 = k_grid[i0];
    let curvature_order = curvature_order(k_grid, &sigma_values, i0, sigma0);
    let refined_peak = if sigma0 > 0.0 && i0 > 0 && i0 + 1 < k_grid.len() {
        let seed = modes[i0].as_ref().expect("peak has a mode").phase_speed;
        let sigma = |k: f64| solve_mode_with(profile, k, seed, &opts.shoot).map_or(0.0, |m| m.growth_rate);
        let (k, s) = golden_max(sigma, k_grid[i0 - 1], k_grid[i0 + 1], 1e-5);
        Some((k, s.max(sigma0)))
    } else {
        None
    };
    Ok(DispersionCurve { k_values: k_grid.to_vec(), sigma_values, modes, k0, sigma0, curvature_order, refined_peak })
}

/// `m = 1` for a quadratic peak, 2 when the quadratic coefficient vanishes.
fn curvature_order(k: &[f64], s: &[f64], i0: usize, s0: f64) -> usize {
    if s0 <= 0.0 || k.len() < 5 {
        return 1;
    }
    let lo = i0.saturating_sub(2).min(k.len() - 5);
    let rows: Vec<Vec<f64>> = (lo..lo + 5).map(|i| {
        let d = k[i] - k[i0];
        vec![1.0, d, d * d]
    }).collect();
    let y: Vec<f64> = (lo..lo + 5).map(|i| s[i]).collect();
    match least_squares(&rows, &y) {
        Ok(c) if c[2].abs() < 1e-6 * s0 => 2,
        _ => 1,
    }
}

/// Max over the interior of `|(U-c)(φ''-k²φ) - U''φ| / max|φ|`, with `φ''`
/// from eighth-order central differences of the stored samples.
pub fn collocation_residual(mode: &RayleighMode, profile: &ShearProfile) -> f64 {
    const HALF: usize = 4;
    let h = mode.step();
    let offsets: Vec<f64> = (0..=2 * HALF).map(|j| j as f64 - HALF as f64).collect();
    let w: Vec<f64> = fd_weights(0.0, &offsets, 2).into_iter().map(|c| c / (h * h)).collect();
    let k2 = mode.wavenumber * mode.wavenumber;
    let p = &mode.phi;
    let scale = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in HALF..p.len().saturating_sub(HALF) {
        let d2: Complex64 = w.iter().zip(&p[i - HALF..=i + HALF]).map(|(c, z)| c * z).sum();
        let (u, u2) = profile.value_and_second(mode.y[i]);
        let r = (u - mode.phase_speed) * (d2 - k2 * p[i]) - u2 * p[i];
        worst = worst.max(r.norm());
    }
    worst / scale
}

/// Velocity `(u, v)` samples of one mode on an `x × y` grid.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Indexed `[iy][ix]`.
    pub u: Vec<Vec<Complex64>>,
    pub v: Vec<Vec<Complex64>>,
}

/// `e^{ikx + λt}(φ'(y), -ikφ(y))`.
pub fn mode_velocity_field(mode: &RayleighMode, t: f64, x_grid: &[f64], y_grid: &[f64]) -> VelocityField {
    let k = mode.wavenumber;
    let lam = mode.lambda();
    let ik = Complex64::new(0.0, k);
    let mut u = Vec::with_capacity(y_grid.len());
    let mut v = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        let (phi, dphi) = mode.interpolate(y);
        let phase: Vec<Complex64> = x_grid.iter().map(|&x| (ik * x + lam * t).exp()).collect();
        u.push(phase.iter().map(|e| e * dphi).collect());
        v.push(phase.iter().map(|e| -ik * phi * e).collect());
    }
    VelocityField { x: x_grid.to_vec(), y: y_grid.to_vec(), u, v }
}

/// Slope fitted by the time-stepping oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Slope of `log‖ψ‖` over the last half of `[0, T]`.
    pub slope: f64,
    /// Same over the final quarter.
    pub quarter_slope: f64,
    /// `(t, log‖ψ(t)‖)`.
    pub history: Vec<(f64, f64)>,
}

/// Discretization of the linearized Euler oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    pub y_max: f64,
    pub cells: usize,
    pub seed: u64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid { y_max: Y_MAX, cells: 4000, seed: ORACLE_SEED }
    }
}

/// Time-steps `∂_t ω + ikUω - ikU''ψ = 0`, `(∂_yy - k²)ψ = ω`,
/// `ψ(0) = ψ(Y) = 0`, from seeded random smooth data and returns the late
/// growth rate of `‖ψ‖`.
pub fn growth_oracle(profile: &ShearProfile, k: f64, t_end: f64, dt: f64) -> Result<OracleResult> {
    growth_oracle_with(profile, k, t_end, dt, &OracleGrid::default())
}

pub fn growth_oracle_with(profile: &ShearProfile, k: f64, t_end: f64, dt: f64, grid: &OracleGrid) -> Result<OracleResult> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidParameter(format!("oracle time step must be in (0, 0.01], got {dt}")));
    }
    if !(t_end > 0.0) || !(k != 0.0) {
        return Err(Error::InvalidParameter(format!("need T > 0 and k != 0, got T={t_end}, k={k}")));
    }
    let n = grid.cells - 1;
    let h = grid.y_max / grid.cells as f64;
    let ys: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
    let u: Vec<f64> = ys.iter().map(|&y| profile.value(y)).collect();
    let u2: Vec<f64> = ys.iter().map(|&y| profile.derivs(y, 2)[2]).collect();
    let ik = Complex64::new(0.0, k);
    let inv_h2 = 1.0 / (h * h);
    let off = vec![Complex64::new(inv_h2, 0.0); n];
    let diag = vec![Complex64::new(-2.0 * inv_h2 - k * k, 0.0); n];
    let stream = |w: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut r = w.to_vec();
        solve_tridiagonal(&off, &diag, &off, &mut r)?;
        Ok(r)
    };
    let rhs = |w: &[Complex64]| -> Result<Vec<Complex64>> {
        let psi = stream(w)?;
        Ok((0..n).map(|i| -ik * u[i] * w[i] + ik * u2[i] * psi[i]).collect())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let bumps: Vec<(Complex64, f64, f64)> = (0..6)
        .map(|_| {
            let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (amp, rng.gen_range(0.3..5.0), rng.gen_range(0.3..1.5))
        })
        .collect();
    let mut w: Vec<Complex64> = ys
        .iter()
        .map(|&y| bumps.iter().map(|(a, c, s)| a * (-((y - c) / s).powi(2)).exp()).sum::<Complex64>() * (1.0 - (-4.0 * y * y).exp()))
        .collect();
    let steps = (t_end / dt).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut log_offset = 0.0;
    let mut history = Vec::with_capacity(steps / 10 + 1);
    let norm = |w: &[Complex64]| -> Result<f64> { Ok((stream(w)?.iter().map(|p| p.norm_sqr()).sum::<f64>() * h).sqrt()) };
    history.push((0.0, norm(&w)?.ln()));
    for step in 1..=steps {
        let k1 = rhs(&w)?;
        let tmp: Vec<Complex64> = w.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = rhs(&tmp)?;
        let tmp: Vec<Complex64> = w.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = rhs(&tmp)?;
        let tmp: Vec<Complex64> = w.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = rhs(&tmp)?;
        for i in 0..n {
            w[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if step % 10 == 0 || step == steps {
            let nrm = norm(&w)?;
            if nrm > 1e100 {
                for v in w.iter_mut() {
                    *v /= nrm;
                }
                log_offset += nrm.ln();
            }
            history.push((step as f64 * dt, norm(&w)?.ln() + log_offset));
        }
    }
    let fit_from = |t0: f64| -> Result<f64> {
        let pts: Vec<&(f64, f64)> = history.iter().filter(|p| p.0 >= t0).collect();
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        Ok(crate::numerics::fit_line(&x, &y)?.slope)
    };
    let slope = fit_from(0.5 * t_end)?;
    let quarter_slope = fit_from(0.75 * t_end)?;
    // Decay in both windows is conclusive even when it is algebraic and
    // the slope keeps drifting toward zero.
    let decaying = slope <= 0.0 && quarter_slope <= 0.0;
    if !decaying && (quarter_slope - slope).abs() > 0.02 * slope.abs() + 2e-4 {
        return Err(Error::NotConverged(format!(
            "oracle slope not settled: {slope:.5} over last half vs {quarter_slope:.5} over last quarter"
        )));
    }
    Ok(OracleResult { slope, quarter_slope, history })
}

/// Fit of a band-superposed wave packet's growth.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketFit {
    pub sigma: f64,
    pub beta: f64,
    pub log_constant: f64,
    /// `(t, log‖u(t)‖)`.
    pub samples: Vec<(f64, f64)>,
    pub band: (f64, f64),
}

/// `‖u(t)‖² = 2π ∫_band e^{2σ(k)t} ‖(φ_k', kφ_k)‖² dk` (Parseval in `x`),
/// fitted as `log‖u‖ = c + σt - β log(1+t)` on `t_grid`.
pub fn wave_packet_fit(profile: &ShearProfile, curve: &DispersionCurve, band: (f64, f64), nodes: usize, t_grid: &[f64]) -> Result<PacketFit> {
    let (k_lo, k_hi) = band;
    if !(k_lo > 0.0 && k_hi > k_lo) || nodes < 3 {
        return Err(Error::InvalidParameter(format!("bad wave-packet band ({k_lo}, {k_hi})")));
    }
    let nodes = nodes | 1;
    let ks = linspace(k_lo, k_hi, nodes);
    let (kc, _) = curve.refined_peak.unwrap_or((curve.k0, curve.sigma0));
    let seed = curve.nearest_mode(kc).ok_or_else(|| Error::NotFound("dispersion curve has no mode".into()))?.phase_speed;
    // Continue outward from the peak so every node inherits a nearby seed.
    let center = ks.iter().enumerate().min_by(|a, b| (a.1 - kc).abs().total_cmp(&(b.1 - kc).abs())).map(|p| p.0).unwrap_or(0);
    let mut sol: Vec<Option<(f64, f64)>> = vec![None; nodes];
    for dir in [1i64, -1] {
        let mut c = seed;
        let mut i = center as i64;
        while i >= 0 && (i as usize) < nodes {
            let k = ks[i as usize];
            if let Ok(m) = solve_mode(profile, k, c) {
                c = m.phase_speed;
                let weight: f64 = m.phi.iter().zip(&m.dphi).map(|(p, d)| d.norm_sqr() + k * k * p.norm_sqr()).sum::<f64>() * m.step();
                sol[i as usize] = Some((m.growth_rate, weight));
            }
            i += dir;
        }
    }
    let h = (k_hi - k_lo) / (nodes - 1) as f64;
    let mut samples = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        // Simpson weights; factor out e^{2σ₀t} to stay in range.
        let smax = sol.iter().flatten().map(|s| s.0).fold(0.0, f64::max);
        let sum: f64 = sol
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let w = if i == 0 || i == nodes - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                s.map_or(0.0, |(sig, a)| w * a * (2.0 * (sig - smax) * t).exp())
            })
            .sum();
        let n2 = 2.0 * PI * sum * h / 3.0;
        samples.push((t, smax * t + 0.5 * n2.ln()));
    }
    let rows: Vec<Vec<f64>> = samples.iter().map(|(t, _)| vec![1.0, *t, -(1.0 + t).ln()]).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let c = least_squares(&rows, &y)?;
    Ok(PacketFit { sigma: c[1], beta: c[2], log_constant: c[0], samples, band })
}
