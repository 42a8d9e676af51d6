//! End-to-end spectral checks on the ρ = 2 Gevrey profile.

use shearlab::numerics::{geomspace, linspace};
use shearlab::profile::gevrey;
use shearlab::rayleigh::{collocation_residual, growth_oracle, scan_sigma, semicircle_check, wave_packet_fit, DispersionCurve};
use std::sync::OnceLock;

fn curve() -> &'static DispersionCurve {
    static CURVE: OnceLock<DispersionCurve> = OnceLock::new();
    CURVE.get_or_init(|| scan_sigma(&gevrey(2.0).unwrap(), &geomspace(0.05, 5.0, 30)).unwrap())
}

#[test]
fn unstable_band_with_interior_peak() {
    let c = curve();
    assert!(c.sigma0 > 0.0);
    let i0 = c.k_values.iter().position(|&k| k == c.k0).unwrap();
    assert!(i0 > 0 && i0 + 1 < c.k_values.len());
    assert!(c.sigma_values[i0 - 1] < c.sigma0 && c.sigma_values[i0 + 1] < c.sigma0);
    assert_eq!(*c.sigma_values.last().unwrap(), 0.0);
    assert!(c.sigma_values[0] < 0.15 * c.sigma0);
    // Monotone on both sides of the peak.
    assert!(c.sigma_values[..=i0].windows(2).all(|w| w[0] < w[1]));
    assert!(c.sigma_values[i0..].windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(c.curvature_order, 1);
    let (kr, sr) = c.refined_peak.unwrap();
    assert!(sr >= c.sigma0 && (kr - c.k0).abs() < 0.15);
}

#[test]
fn accepted_modes_pass_sanity_gates() {
    let p = gevrey(2.0).unwrap();
    for m in curve().modes.iter().flatten() {
        assert!(semicircle_check(m, &p), "k={}", m.wavenumber);
        assert!(m.residual < 1e-8, "k={}", m.wavenumber);
        let r = collocation_residual(m, &p);
        assert!(r < 1e-6, "k={}: collocation {r:e}", m.wavenumber);
    }
}

#[test]
fn oracle_reproduces_peak_growth() {
    let p = gevrey(2.0).unwrap();
    let (k0, s0) = curve().refined_peak.unwrap();
    let r = growth_oracle(&p, k0, 10.0 / s0, 0.01).unwrap();
    assert!((r.slope - s0).abs() < 0.05 * s0, "oracle {} vs {s0}", r.slope);
}

#[test]
fn oracle_outside_band_is_slow() {
    let p = gevrey(2.0).unwrap();
    let s0 = curve().sigma0;
    let r = growth_oracle(&p, 3.0, 10.0 / s0, 0.01).unwrap();
    assert!(r.slope < 0.1 * s0, "oracle {} vs {s0}", r.slope);
}

#[test]
fn packet_envelope_emerges_at_late_times() {
    let p = gevrey(2.0).unwrap();
    let c = curve();
    let s0 = c.refined_peak.unwrap().1;
    let f = wave_packet_fit(&p, c, (0.2, 1.2), 81, &linspace(100.0, 1000.0, 91)).unwrap();
    assert!((f.sigma - s0).abs() < 0.01 * s0);
    assert!((f.beta - 0.25).abs() < 0.05);
}

#[test]
fn certificate_agrees_with_the_spectrum() {
    let cert = shearlab::certificate::certify(&gevrey(2.0).unwrap()).unwrap();
    assert!(cert.pass());
    assert!(cert.q_value < 0.0 && cert.min_eig < 0.0);
    let c = curve();
    assert!(c.sigma0 > 0.0);
    let mode = c.nearest_mode(c.k0).expect("mode at the grid peak");
    assert!(mode.phase_speed.im > 0.0);
}
