//! The twelve acceptance criteria, shared by the `acceptance` test target and
//! the `shearlab acceptance` command.

use crate::certificate::certify;
use crate::error::Result;
use crate::numerics::{bisect, geomspace, linspace};
use crate::planner::{amplitude_a, build_plan, instability_time, leading_corrector, theta_exact, theta_of_gamma, usbound_sweep, Rational};
use crate::profile::{constant, exp_decay_raw, gevrey};
use crate::rayleigh::{collocation_residual, growth_oracle_with, scan_sigma, semicircle_check, solve_mode, wave_packet_fit, DispersionCurve, OracleGrid};
use crate::robin::{
    asympt_ratio, bc_residual, constant_data_reference, extend_unchecked, rate_experiment, solve_extended, solve_robin, Coefficient,
    ExtensionGap, Limit, Norm, SpaceGrid,
};
use num_complex::Complex64;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CriterionOutcome {
    /// One summary line: `[PASS] 1 title: detail (0.4 s / 10 s)`.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1} s / {} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub budget_secs: u64,
    check: fn(&Suite) -> Result<(bool, String)>,
}

/// Shared expensive inputs, computed once per suite.
pub struct Suite {
    curve: OnceLock<Result<DispersionCurve>>,
    pub seed: u64,
}

impl Suite {
    pub fn new(seed: u64) -> Self {
        Suite { curve: OnceLock::new(), seed }
    }

    /// Dispersion curve of the ρ = 2 Gevrey profile on 30 geometric `k` in `[0.05, 5]`.
    pub fn curve(&self) -> Result<&DispersionCurve> {
        self.curve
            .get_or_init(|| scan_sigma(&gevrey(2.0)?, &geomspace(0.05, 5.0, 30)))
            .as_ref()
            .map_err(|e| e.clone())
    }
}

/// Band where `σ(k) ≥ σ₀/2`, by linear interpolation of the scanned curve.
pub fn half_maximum_band(curve: &DispersionCurve) -> (f64, f64) {
    let half = 0.5 * curve.sigma0;
    let ks = &curve.k_values;
    let s = &curve.sigma_values;
    let i0 = ks.iter().position(|&k| k == curve.k0).unwrap_or(0);
    let cross = |i: usize, j: usize| ks[i] + (half - s[i]) * (ks[j] - ks[i]) / (s[j] - s[i]);
    let lo = (1..=i0).rev().find(|&i| s[i - 1] < half).map_or(ks[0], |i| cross(i - 1, i));
    let hi = (i0..ks.len() - 1).find(|&i| s[i + 1] < half).map_or(ks[ks.len() - 1], |i| cross(i, i + 1));
    (lo, hi)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn robin_to_dirichlet(_: &Suite) -> Result<(bool, String)> {
    let r = rate_experiment(&gevrey(2.0)?, &geomspace(10.0, 1e4, 7), Norm::Linf, Limit::ToInfinity, 0.0)?;
    let slope = r.fit.map_or(f64::NAN, |f| f.slope);
    Ok(((slope + 1.0).abs() <= 0.1, format!("slope {slope:.4}, expected -1 +- 0.1")))
}

fn robin_to_neumann(_: &Suite) -> Result<(bool, String)> {
    let raw = exp_decay_raw();
    let mut worst: f64 = 0.0;
    let mut parts = vec![];
    for a in [1e-3, 1e-2, 1e-1] {
        let l2 = ExtensionGap::new(&raw, a, 0, Limit::ToZero)?.power_integral(2.0)?.sqrt();
        let e = rel(l2, (2.0 * a).sqrt());
        worst = worst.max(e);
        parts.push(format!("a={a:e}: {:.3}%", 100.0 * e));
    }
    Ok((worst < 0.01, format!("relative gap to sqrt(2a): {} (limit 1%)", parts.join(", "))))
}

fn erf_reference(_: &Suite) -> Result<(bool, String)> {
    let one = constant(1.0);
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0] {
        let ext = extend_unchecked(&one, Coefficient::Finite(alpha))?;
        for t in [0.5, 1.0] {
            let grid = SpaceGrid::points(vec![0.0, 0.5, 1.0, 2.0]);
            let field = solve_extended(&ext, t, &grid)?;
            for (y, v) in grid.nodes.iter().zip(&field.values) {
                worst = worst.max((v - constant_data_reference(alpha, t, *y)).abs());
            }
        }
    }
    Ok((worst < 1e-6, format!("max deviation {worst:.2e} over 2 x 8 points (limit 1e-6)")))
}

fn boundary_residual(_: &Suite) -> Result<(bool, String)> {
    let g = gevrey(2.0)?;
    let mut worst: f64 = 0.0;
    for a in [0.5, 1.0, 2.0] {
        for t in [0.1, 1.0] {
            let f = solve_robin(&g, Coefficient::Finite(a), t, &SpaceGrid::wall())?;
            worst = worst.max(bc_residual(&f)?);
        }
    }
    Ok((worst < 1e-6, format!("max Robin residual {worst:.2e} (limit 1e-6)")))
}

fn certificate(_: &Suite) -> Result<(bool, String)> {
    let c = certify(&gevrey(2.0)?)?;
    let target = 16.0 * (-4.0f64).exp();
    let dq = rel(c.q_prime_at_y0, target);
    let pass = c.q_at_y0.abs() < 1e-6 && dq < 1e-3 && c.eta0 < c.y0 && c.q_eta0 < 0.0 && c.min_eig < 0.0;
    Ok((
        pass,
        format!(
            "Q(y0)={:.1e}, Q'(y0) rel err {dq:.1e}, eta0={:.4} < y0={:.4} with Q={:.2e}, min_eig={:.5}",
            c.q_at_y0, c.eta0, c.y0, c.q_eta0, c.min_eig
        ),
    ))
}

fn spectral_cross_check(s: &Suite) -> Result<(bool, String)> {
    let p = gevrey(2.0)?;
    let c = s.curve()?;
    let first = c.sigma_values[0];
    let last = *c.sigma_values.last().unwrap_or(&f64::NAN);
    let edges = first < 0.15 * c.sigma0 && last == 0.0;
    let mut gates = true;
    for m in c.modes.iter().flatten() {
        gates &= semicircle_check(m, &p) && collocation_residual(m, &p) < 1e-6;
    }
    let (k0, s0) = c.refined_peak.unwrap_or((c.k0, c.sigma0));
    let grid = OracleGrid { seed: s.seed, ..OracleGrid::default() };
    let oracle = growth_oracle_with(&p, k0, 10.0 / s0, 0.01, &grid)?;
    let err = rel(oracle.slope, s0);
    let pass = c.sigma0 > 0.0 && edges && gates && err < 0.05;
    Ok((
        pass,
        format!(
            "sigma0={s0:.5} at k0={k0:.4}, sigma(0.05)={first:.2e}, sigma(5)={last:.1e}, gates {}, oracle {:.5} ({:.2}%)",
            if gates { "ok" } else { "violated" },
            oracle.slope,
            100.0 * err
        ),
    ))
}

fn wave_packet(s: &Suite) -> Result<(bool, String)> {
    let p = gevrey(2.0)?;
    let c = s.curve()?;
    let s0 = c.refined_peak.map_or(c.sigma0, |r| r.1);
    let band = half_maximum_band(c);
    let f = wave_packet_fit(&p, c, band, 81, &linspace(10.0, 30.0, 41))?;
    let e = rel(f.sigma, s0);
    let pass = e < 0.03 && (f.beta - 0.25).abs() <= 0.1;
    Ok((
        pass,
        format!("band ({:.3}, {:.3}), rate {:.5} vs {s0:.5} ({:+.1}%), power {:.3} (need 0.25 +- 0.1)", band.0, band.1, f.sigma, 100.0 * (f.sigma / s0 - 1.0), f.beta),
    ))
}

/// `(gamma, theta, a)` rows the planner must reproduce exactly.
pub fn exponent_rows() -> Vec<(f64, Rational, Rational)> {
    let q = |n: i128, d: i128| Rational::new(n, d);
    vec![
        (0.0, q(0, 1), q(1, 4)),
        (0.3, q(0, 1), q(1, 4)),
        (0.5, q(0, 1), q(1, 4)),
        (0.6, q(1, 10), q(3, 20)),
        (0.7, q(1, 5), q(1, 20)),
        (0.75, q(1, 4), q(0, 1)),
        (1.0, q(1, 4), q(0, 1)),
        (2.0, q(1, 4), q(0, 1)),
    ]
}

/// True iff every row matches the planner and each row satisfies theta + a = 1/4.
pub fn exponent_rows_match(rows: &[(f64, Rational, Rational)]) -> Result<bool> {
    let mut ok = true;
    for &(g, th, a) in rows {
        let (t, am) = (theta_of_gamma(g)?, amplitude_a(g)?);
        ok &= t == th && am == a && th + a == Rational::new(1, 4);
    }
    Ok(ok)
}

fn exponent_table(_: &Suite) -> Result<(bool, String)> {
    let q = |n: i128, d: i128| Rational::new(n, d);
    let mut ok = exponent_rows_match(&exponent_rows())?;
    let eps = q(1, 1 << 40);
    for knot in [q(1, 2), q(3, 4)] {
        let left = theta_exact(knot - eps);
        let right = theta_exact(knot + eps);
        let mid = theta_exact(knot);
        ok &= right - left <= eps && left <= mid && mid <= right;
    }
    let plan = build_plan(1.0, 1, 3)?;
    let shift = (1u64 << plan.n) * plan.order as u64;
    let mut additive = plan.k_table == vec![q(1, 1), q(5, 4), q(3, 2), q(7, 4)];
    for j1 in 0..=3u64 {
        for j2 in 0..=3u64 {
            additive &= plan.k(j1) + plan.k(j2) == plan.k(j1 + j2 + shift);
        }
    }
    Ok((ok && additive, format!("8 exponent rows {}, knots continuous, k_j additivity {}", if ok { "exact" } else { "wrong" }, if additive { "exact" } else { "broken" })))
}

fn instability_time_check(_: &Suite) -> Result<(bool, String)> {
    let it = instability_time(1e-4, 0.25, 1, 1.0, 0.0)?;
    let oracle = bisect(|t| t.exp() - 1e3 * (1.0 + t).powf(0.25), 0.0, 50.0, 200)?;
    let scaled = (2..=8).map(|e| instability_time(10f64.powi(-e), 0.25, 1, 1.0, 0.0).map(|r| r.scaled)).collect::<Result<Vec<_>>>()?;
    let monotone = scaled.windows(2).all(|w| w[1] < w[0]) && *scaled.last().unwrap_or(&1.0) < 0.01;
    let pass = it.residual < 1e-12 && (it.root - 7.44).abs() <= 0.01 && (it.root - oracle).abs() < 1e-9 && monotone;
    Ok((
        pass,
        format!(
            "T={:.6} (bisection {oracle:.6}), residual {:.1e}, sqrt(nu) T at nu=1e-8: {:.2e}, monotone {}",
            it.root,
            it.residual,
            scaled.last().copied().unwrap_or(f64::NAN),
            monotone
        ),
    ))
}

fn usbound(_: &Suite) -> Result<(bool, String)> {
    let times = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
    let r = usbound_sweep(&gevrey(2.0)?, 1.0, &[1e-2, 1e-3, 1e-4, 1e-5], &times, &SpaceGrid::standard())?;
    let norm: Vec<String> = r.rows.iter().map(|row| format!("{:.3}", row.normalized)).collect();
    Ok((r.pass, format!("normalized sup gaps [{}], slope {:+.4} (limit +-0.05)", norm.join(", "), r.slope)))
}

fn asympt(_: &Suite) -> Result<(bool, String)> {
    let q = asympt_ratio(1.0, 0.25, 30.0)?;
    Ok(((q - 1.0).abs() < 0.05, format!("ratio at t=30: {q:.4} (limit 1 +- 5%)")))
}

fn corrector(s: &Suite) -> Result<(bool, String)> {
    let p = gevrey(2.0)?;
    let seed = match s.curve.get() {
        Some(Ok(c)) => c.nearest_mode(0.65).map(|m| m.phase_speed),
        _ => None,
    };
    let mode = solve_mode(&p, 0.65, seed.unwrap_or(Complex64::new(0.147, 0.052)))?;
    let ys: Vec<f64> = (0..=60).map(|i| 0.25 * i as f64).collect();
    let (mut worst, mut mu_min) = (0.0f64, f64::INFINITY);
    for t in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let f = leading_corrector(&mode, 1.0, t, &ys)?;
        worst = worst.max(f.cancellation());
        mu_min = mu_min.min(f.decay_rate.unwrap_or(f64::NEG_INFINITY));
    }
    Ok((worst < 1e-5 && mu_min > 0.0, format!("wall cancellation {worst:.1e} (limit 1e-5), min fitted decay {mu_min:.4}")))
}

pub fn criteria() -> Vec<Criterion> {
    let c = |id, title, budget_secs, check| Criterion { id, title, budget_secs, check };
    vec![
        c(1, "Robin to Dirichlet rate", 10, robin_to_dirichlet as fn(&Suite) -> Result<(bool, String)>),
        c(2, "Robin to Neumann optimal rate", 5, robin_to_neumann),
        c(3, "Erf reference", 5, erf_reference),
        c(4, "Boundary residual", 10, boundary_residual),
        c(5, "Instability certificate", 30, certificate),
        c(6, "Spectral instability cross-check", 300, spectral_cross_check),
        c(7, "Wave-packet envelope", 120, wave_packet),
        c(8, "Exponent table", 1, exponent_table),
        c(9, "Instability time", 1, instability_time_check),
        c(10, "Shear-family uniformity sweep", 60, usbound),
        c(11, "Gronwall asymptotic ratio", 1, asympt),
        c(12, "Leading corrector", 60, corrector),
    ]
}

impl Criterion {
    /// Runs the check; errors count as failures. The budget is part of the verdict.
    pub fn run(&self, suite: &Suite) -> CriterionOutcome {
        let start = Instant::now();
        let (pass, detail) = match (self.check)(suite) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(self.budget_secs);
        let over = elapsed > budget;
        CriterionOutcome {
            id: self.id,
            title: self.title,
            pass: pass && !over,
            detail: if over { format!("{detail}; over budget") } else { detail },
            elapsed,
            budget,
        }
    }
}

/// Runs every criterion in order.
pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    let suite = Suite::new(seed);
    criteria().iter().map(|c| c.run(&suite)).collect()
}
