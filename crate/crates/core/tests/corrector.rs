use num_complex::Complex64;
use shearlab::planner::{leading_corrector, usbound_sweep, Regime};
use shearlab::profile::gevrey;
use shearlab::rayleigh::{solve_mode, RayleighMode};
use shearlab::robin::SpaceGrid;
use std::sync::OnceLock;

fn peak_mode() -> &'static RayleighMode {
    static MODE: OnceLock<RayleighMode> = OnceLock::new();
    MODE.get_or_init(|| solve_mode(&gevrey(2.0).unwrap(), 0.65, Complex64::new(0.147, 0.052)).unwrap())
}

fn y_grid() -> Vec<f64> {
    (0..=60).map(|i| i as f64 * 0.25).collect()
}

#[test]
fn dirichlet_corrector_cancels_trace_and_decays() {
    for t in [1.0, 2.5, 5.0] {
        let f = leading_corrector(peak_mode(), 1.0, t, &y_grid()).unwrap();
        assert_eq!(f.regime, Regime::Dirichlet);
        assert!(f.cancellation() < 1e-5, "t = {t}: {}", f.cancellation());
        assert!(f.reference_error < 1e-8, "t = {t}: {}", f.reference_error);
        let mu = f.decay_rate.unwrap();
        assert!(mu > 0.0);
        assert!((mu - f.expected_decay).abs() < 1e-3 * f.expected_decay);
        assert!(f.far_v < 1e-8);
    }
}

#[test]
fn corrector_field_matches_exponential_solution_on_grid() {
    let f = leading_corrector(peak_mode(), 2.0, 3.0, &y_grid()).unwrap();
    let scale = f.reference_u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (u, r) in f.u.iter().zip(&f.reference_u) {
        assert!((u - r).norm() < 1e-7 * scale);
    }
    // v = -ik ∫_Y^∞ u for u ∝ e^{-sY} is -ik u / s.
    let s = f.lambda.sqrt();
    for (v, u) in f.v.iter().zip(&f.reference_u) {
        let expect = -Complex64::i() * f.wavenumber * u / s;
        assert!((v - expect).norm() < 1e-6 * scale, "{v} vs {expect}");
    }
}

#[test]
fn neumann_and_robin_wall_conditions_hold() {
    for gamma in [0.75, 0.6] {
        let f = leading_corrector(peak_mode(), gamma, 2.0, &y_grid()).unwrap();
        assert!(f.wall_residual < 1e-6, "gamma = {gamma}: {}", f.wall_residual);
        assert!(f.reference_error < 1e-6, "gamma = {gamma}: {}", f.reference_error);
        assert!(f.decay_rate.unwrap() > 0.0);
    }
}

#[test]
fn low_regime_has_zero_trace() {
    let f = leading_corrector(peak_mode(), 0.3, 2.0, &y_grid()).unwrap();
    assert_eq!(f.regime, Regime::NeumannLow);
    assert!(f.u.iter().chain(&f.v).all(|z| *z == Complex64::new(0.0, 0.0)));
    assert!(f.decay_rate.is_none());
}

#[test]
fn corrector_rejects_half() {
    assert!(leading_corrector(peak_mode(), 0.5, 1.0, &y_grid()).is_err());
}

#[test]
fn shear_family_gap_is_uniform_in_viscosity() {
    let times = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
    let r = usbound_sweep(&gevrey(2.0).unwrap(), 1.0, &[1e-2, 1e-3, 1e-4, 1e-5], &times, &SpaceGrid::standard()).unwrap();
    assert!(r.pass, "slope {}", r.slope);
    assert!(r.rows.windows(2).all(|w| w[1].sup_gap < w[0].sup_gap));
}
