use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use psbm::link::build_isi_matrix;
use psbm::pulse::{lag_product_exact, pulse_inner_product, rrc_value, PulseSpec};
use psbm::quad::CompositeRule;
use psbm::waveform::{matched_filter_sample, modulate_psbm, SymbolSequence};

/// `int cos^2(pi f / 2) cos(2 pi f n / 4) df` over `|f| <= 1`.
fn spectral_autocorrelation(n: i64) -> f64 {
    let lag = n as f64 / 4.0;
    CompositeRule::new(-1.0, 1.0, 1.0 / 64.0, 8)
        .integrate(|f| (PI * f / 2.0).cos().powi(2) * (2.0 * PI * f * lag).cos())
}

/// Tap at lag `offset` (pulse periods) when both pulses are cut to `[-d, d]`,
/// plus the half-sample weight a rectangle rule of step `h` puts on each edge.
fn two_sided_tap(offset: f64, d: f64, h: f64) -> f64 {
    let lo = (-d).max(offset - d);
    let hi = d.min(offset + d);
    let f = |t: f64| rrc_value(1.0, t) * rrc_value(1.0, t - offset);
    CompositeRule::new(lo, hi, 1.0 / 16.0, 8).integrate(f) + 0.5 * h * (f(lo) + f(hi))
}

#[test]
fn closed_form_matches_spectral_oracle() {
    for n in 0..=40 {
        let exact = lag_product_exact(n).unwrap();
        assert!((spectral_autocorrelation(n) - exact).abs() < 1e-12, "n={n}");
    }
}

#[test]
fn closed_form_holds_at_long_truncation() {
    for n in 0..=16 {
        let got = pulse_inner_product(1.0, n as f64 / 4.0, 32.0);
        assert!((got - lag_product_exact(n).unwrap()).abs() < 1e-6, "n={n} got {got}");
    }
}

#[test]
fn waveform_matches_two_sided_truncation_model() {
    let (d, os, len) = (4.0, 16, 12);
    let pulse = PulseSpec::psbm(1.0, d, os).unwrap();
    let taps: Vec<f64> = (0..len).map(|k| two_sided_tap(k as f64 / 2.0, d, 1.0 / os as f64)).collect();
    let s: Vec<Complex64> = (0..len)
        .map(|k| Complex64::from_polar(1.0, PI / 2.0 * ((k * 7 + 3) % 4) as f64))
        .collect();
    let y = modulate_psbm(&SymbolSequence::unit(s.clone()), 1.0, d, os).unwrap();
    let r = matched_filter_sample(&y, &pulse, len).unwrap();
    for n in 0..len {
        let model: Complex64 = (0..len).map(|m| s[m] * taps[n.abs_diff(m)]).sum();
        assert!((r[n] - model).norm() < 2e-5, "n={n}: {} vs {}", r[n], model);
    }
    // The ideal model differs from both by the truncation residue.
    let ideal = build_isi_matrix(len).unwrap().apply(&s);
    let worst = r.iter().zip(&ideal).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-2, "truncation residue {worst}");
}

proptest! {
    #[test]
    fn rrc_is_even(alpha in 0.0f64..2.0, t in -6.0f64..6.0) {
        let (a, b) = (rrc_value(alpha, t), rrc_value(alpha, -t));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn rrc_is_finite_near_singularities(alpha in 0.05f64..2.0, eps in -1e-9f64..1e-9) {
        let t = 1.0 / (4.0 * alpha) + eps;
        let v = rrc_value(alpha, t);
        let w = rrc_value(alpha, t + 1e-4);
        prop_assert!(v.is_finite());
        prop_assert!((v - w).abs() < 1e-2);
    }

    #[test]
    fn inner_product_is_even_in_offset(alpha in 0.0f64..1.0, offset in 0.0f64..3.0) {
        let a = pulse_inner_product(alpha, offset, 6.0);
        let b = pulse_inner_product(alpha, -offset, 6.0);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn inner_product_bounded_by_energy(alpha in 0.2f64..1.0, offset in 0.0f64..3.0) {
        let e = pulse_inner_product(alpha, 0.0, 8.0);
        prop_assert!(pulse_inner_product(alpha, offset, 8.0).abs() <= e + 1e-12);
    }

    #[test]
    fn closed_form_converges_with_truncation(n in 0i64..=12) {
        let exact = lag_product_exact(n).unwrap();
        let e8 = (pulse_inner_product(1.0, n as f64 / 4.0, 8.0) - exact).abs();
        let e32 = (pulse_inner_product(1.0, n as f64 / 4.0, 32.0) - exact).abs();
        prop_assert!(e8 <= 1e-3);
        prop_assert!(e32 <= 1e-6);
    }
}
