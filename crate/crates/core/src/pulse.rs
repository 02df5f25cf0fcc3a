//! Root raised-cosine pulse family.
//!
//! Point evaluation, pulse inner products (matched-filter autocorrelation),
//! the closed-form autocorrelation of the 100% roll-off pulse at quarter-period
//! lags, truncation studies and spectra.
//!
//! Time arguments are normalized to the pulse period `Tp`, frequencies to
//! `1/Tp`, unless a function says otherwise.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad::CompositeRule;

/// Half-width of the window around a removable singularity inside which the
/// pulse is evaluated from a Taylor expansion instead of the raw quotient.
const SINGULAR_WINDOW: f64 = 1e-6;

/// Widest quadrature panel, in pulse periods.
const PANEL_WIDTH: f64 = 1.0 / 16.0;
const PANEL_ORDER: usize = 8;

/// Default truncation half-width, in pulse periods.
pub const DEFAULT_TRUNCATION: f64 = 4.0;

/// One root raised-cosine pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Roll-off factor in `[0, 2]`.
    pub alpha: f64,
    /// Pulse period `Tp` in seconds.
    pub period: f64,
    /// Truncation half-width `d`, in units of `Tp`.
    pub trunc_halfwidth: f64,
    /// Samples per `Tp` on the waveform grid.
    pub oversampling: usize,
}

impl PulseSpec {
    pub fn new(alpha: f64, period: f64, trunc_halfwidth: f64, oversampling: usize) -> Result<Self> {
        if !(0.0..=2.0).contains(&alpha) {
            return Err(invalid("alpha", format!("{alpha} not in [0, 2]")));
        }
        if !(period > 0.0) {
            return Err(invalid("period", format!("{period} must be > 0")));
        }
        if !(trunc_halfwidth > 0.0) {
            return Err(invalid("trunc_halfwidth", format!("{trunc_halfwidth} must be > 0")));
        }
        if oversampling < 2 {
            return Err(invalid("oversampling", format!("{oversampling} must be >= 2")));
        }
        Ok(Self {
            alpha,
            period,
            trunc_halfwidth,
            oversampling,
        })
    }

    /// The multiplexing pulse: 100% roll-off with period `2 * symbol_period`.
    pub fn psbm(symbol_period: f64, trunc_halfwidth: f64, oversampling: usize) -> Result<Self> {
        Self::new(1.0, 2.0 * symbol_period, trunc_halfwidth, oversampling)
    }

    /// Unit-energy pulse `p(t) = rrc(t/Tp)/sqrt(Tp)` at absolute time `t`
    /// (seconds), zero outside the truncation window.
    pub fn eval(&self, t: f64) -> f64 {
        let x = t / self.period;
        if x.abs() > self.trunc_halfwidth {
            0.0
        } else {
            rrc_value(self.alpha, x) / self.period.sqrt()
        }
    }

    /// Sampling step of the waveform grid in seconds.
    pub fn sample_step(&self) -> f64 {
        self.period / self.oversampling as f64
    }
}

/// Matched-filter output taps `p~_k` for one (roll-off, packing) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsiTapProfile {
    /// `(lag, value)` pairs for lags `-max_lag..=max_lag`, in increasing lag order.
    pub taps: Vec<(i32, f64)>,
    /// Symbol spacing in units of `Tp`, i.e. `1 - tau`.
    pub symbol_spacing: f64,
}

impl IsiTapProfile {
    pub fn tap(&self, lag: i32) -> Option<f64> {
        self.taps.iter().find(|(k, _)| *k == lag).map(|(_, v)| *v)
    }

    pub fn max_lag(&self) -> i32 {
        self.taps.iter().map(|(k, _)| k.abs()).max().unwrap_or(0)
    }
}

/// The root raised-cosine kernel `rrc_alpha(t)` with `t` in pulse periods.
///
/// Removable singularities at `t = 0` and `|t| = 1/(4 alpha)` return the
/// analytic limit. Roll-offs above one use the same closed form.
pub fn rrc_value(alpha: f64, t: f64) -> f64 {
    debug_assert!(alpha >= 0.0, "negative roll-off {alpha}");
    let t = t.abs();
    let a = 1.0 - alpha;
    let b = 1.0 + alpha;
    let den = 1.0 - 16.0 * alpha * alpha * t * t;
    if alpha > 0.0 && den.abs() < SINGULAR_WINDOW {
        return rrc_near_quarter(alpha, t);
    }
    let sinc_part = if t < SINGULAR_WINDOW {
        // sin(a pi t)/(pi t) = a (1 - (a pi t)^2 / 6 + ...)
        let apt = a * PI * t;
        a * (1.0 - apt * apt / 6.0)
    } else {
        (a * PI * t).sin() / (PI * t)
    };
    let cos_part = 4.0 * alpha * (b * PI * t).cos() / PI;
    (sinc_part + cos_part) / den
}

/// Second-order expansion of numerator and denominator about `t0 = 1/(4 alpha)`.
fn rrc_near_quarter(alpha: f64, t: f64) -> f64 {
    let t0 = 0.25 / alpha;
    let delta = t - t0;
    let a = 1.0 - alpha;
    let b = 1.0 + alpha;
    let (sa, ca) = (a * PI * t0).sin_cos();
    let (sb, cb) = (b * PI * t0).sin_cos();
    // g(t) = sin(a pi t)/(pi t)
    let g1 = a * ca / t0 - sa / (PI * t0 * t0);
    let g2 = -a * a * PI * sa / t0 - 2.0 * a * ca / (t0 * t0) + 2.0 * sa / (PI * t0 * t0 * t0);
    // h(t) = 4 alpha cos(b pi t)/pi
    let h1 = -4.0 * alpha * b * sb;
    let h2 = -4.0 * alpha * b * b * PI * cb;
    // d(t) = 1 - 16 alpha^2 t^2
    let d1 = -32.0 * alpha * alpha * t0;
    let d2 = -32.0 * alpha * alpha;
    (g1 + h1 + 0.5 * (g2 + h2) * delta) / (d1 + 0.5 * d2 * delta)
}

/// Closed form of the 100% roll-off kernel, `4 cos(2 pi t) / (pi (1 - 16 t^2))`.
pub fn rrc1_value(t: f64) -> f64 {
    let t = t.abs();
    let den = 1.0 - 16.0 * t * t;
    if den.abs() < SINGULAR_WINDOW {
        // cos(2 pi t) = -sin(2 pi delta), den = -8 delta (1 + 2 delta)
        return 1.0 / (1.0 + 2.0 * (t - 0.25));
    }
    4.0 * (2.0 * PI * t).cos() / (PI * den)
}

fn inner_product_rule(d: f64) -> CompositeRule {
    CompositeRule::new(-d, d, PANEL_WIDTH, PANEL_ORDER)
}

/// `int_{-d}^{d} rrc(t) rrc(t - offset) dt`, by composite Gauss-Legendre
/// quadrature. Even in `offset` by construction.
pub fn pulse_inner_product(alpha: f64, offset: f64, d: f64) -> f64 {
    let offset = offset.abs();
    inner_product_rule(d).integrate(|t| rrc_value(alpha, t) * rrc_value(alpha, t - offset))
}

/// Inner products at several offsets sharing one quadrature grid.
pub fn pulse_inner_products(alpha: f64, offsets: &[f64], d: f64) -> Vec<f64> {
    let rule = inner_product_rule(d);
    let weighted: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| w * rrc_value(alpha, t))
        .collect();
    offsets
        .iter()
        .map(|off| {
            let off = off.abs();
            rule.nodes
                .iter()
                .zip(&weighted)
                .map(|(&t, &wp)| wp * rrc_value(alpha, t - off))
                .sum()
        })
        .collect()
}

/// Exact autocorrelation of the 100% roll-off kernel at lag `n/4`.
///
/// Odd lags above one alternate in sign: `(-1)^((n-3)/2) 8 / (pi (n-2) n (n+2))`.
pub fn lag_product_exact(n: i64) -> Result<f64> {
    if n < 0 {
        return Err(invalid("n", format!("{n} must be non-negative")));
    }
    Ok(match n {
        0 => 1.0,
        1 => 8.0 / (3.0 * PI),
        2 => 0.5,
        n if n % 2 == 1 => {
            let sign = if (n - 3) % 4 == 0 { 1.0 } else { -1.0 };
            let n = n as f64;
            sign * 8.0 / (PI * (n - 2.0) * n * (n + 2.0))
        }
        _ => 0.0,
    })
}

/// One row of a truncation study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub n: u32,
    pub d: f64,
    /// Truncated integral.
    pub integral: f64,
    /// Closed-form infinite-interval value.
    pub exact: f64,
    /// `integral / exact`, or `|integral|` where the exact value is zero.
    pub ratio: f64,
}

impl TruncationRow {
    pub fn exact_is_zero(&self) -> bool {
        self.exact == 0.0
    }
}

/// Truncated autocorrelation of the 100% roll-off kernel against its exact value.
pub fn truncation_study(n_values: &[u32], d_grid: &[f64]) -> Result<Vec<TruncationRow>> {
    let mut rows = Vec::with_capacity(n_values.len() * d_grid.len());
    for &d in d_grid {
        if !(d > 0.0) {
            return Err(invalid("d_grid", format!("truncation {d} must be > 0")));
        }
        let offsets: Vec<f64> = n_values.iter().map(|&n| n as f64 / 4.0).collect();
        let values = pulse_inner_products(1.0, &offsets, d);
        for (&n, integral) in n_values.iter().zip(values) {
            let exact = lag_product_exact(n as i64)?;
            let ratio = if exact == 0.0 { integral.abs() } else { integral / exact };
            rows.push(TruncationRow {
                n,
                d,
                integral,
                exact,
                ratio,
            });
        }
    }
    Ok(rows)
}

/// Fourier transform of the 100% roll-off kernel: `cos(pi f / 2)` on `|f| <= 1`.
pub fn rrc1_spectrum(f: f64) -> f64 {
    if f.abs() <= 1.0 {
        (PI * f / 2.0).cos()
    } else {
        0.0
    }
}

/// Fourier transform of `rrc_alpha(t)` (frequency in units of `1/Tp`).
pub fn rrc_spectrum(alpha: f64, f: f64) -> f64 {
    let f = f.abs();
    let flat = (1.0 - alpha) / 2.0;
    let edge = (1.0 + alpha) / 2.0;
    if f <= flat {
        1.0
    } else if f <= edge {
        (PI / (2.0 * alpha) * (f - flat)).cos()
    } else {
        0.0
    }
}

/// Power spectral density of a linearly modulated signal with symbol period
/// `symbol_period` (seconds) and frequency `f` in Hz.
///
/// `autocorr[k]` is `R_s(k) = E[s_{i+k} s_i^*]` for `k >= 0`; negative lags
/// follow from conjugate symmetry.
pub fn psd(pulse: &PulseSpec, symbol_period: f64, autocorr: &[Complex64], f: f64) -> Result<f64> {
    let r0 = autocorr
        .first()
        .ok_or_else(|| invalid("autocorr", "empty autocorrelation"))?;
    if !(r0.re > 0.0) || r0.im.abs() > 1e-12 {
        return Err(invalid("autocorr", format!("R_s(0) = {r0} must be real and > 0")));
    }
    if !(symbol_period > 0.0) {
        return Err(invalid("symbol_period", "must be > 0"));
    }
    let shape = rrc_spectrum(pulse.alpha, f * pulse.period);
    let mut sum = r0.re;
    for (k, r) in autocorr.iter().enumerate().skip(1) {
        let phase = Complex64::from_polar(1.0, 2.0 * PI * f * k as f64 * symbol_period);
        sum += 2.0 * (r * phase).re;
    }
    Ok(pulse.period / symbol_period * shape * shape * sum)
}

/// Symbol rate over one-sided occupied bandwidth.
pub fn spectral_efficiency(pulse: &PulseSpec, symbol_period: f64) -> f64 {
    let bandwidth = (1.0 + pulse.alpha) / (2.0 * pulse.period);
    (1.0 / symbol_period) / bandwidth
}

/// Analytic value of `rrc_alpha` at `|t| = 1/(4 alpha)`.
pub fn rrc_quarter_limit(alpha: f64) -> f64 {
    let th = PI / (4.0 * alpha);
    alpha * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * th.sin() + (1.0 - 2.0 / PI) * th.cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn values_at_origin() {
        assert!(close(rrc_value(0.0, 0.0), 1.0, 1e-15));
        assert!(close(rrc_value(1.0, 0.0), 4.0 / PI, 1e-15));
        assert!(close(rrc1_value(0.0), 4.0 / PI, 1e-15));
    }

    #[test]
    fn quarter_period_singularity() {
        assert!(close(rrc_value(1.0, 0.25), 1.0, 1e-12));
        assert!(close(rrc1_value(0.25), 1.0, 1e-12));
        // Both sides of the singularity, evaluated from the raw quotient.
        for t in [0.25 - 1e-6, 0.25 + 1e-6] {
            let raw = 4.0 * (2.0 * PI * t).cos() / (PI * (1.0 - 16.0 * t * t));
            assert!(close(raw, 1.0, 1e-5), "{raw}");
        }
        for alpha in [0.3, 0.5, 1.0, 1.5, 2.0] {
            let t0 = 0.25 / alpha;
            assert!(close(rrc_value(alpha, t0), rrc_quarter_limit(alpha), 1e-10));
        }
    }

    #[test]
    fn half_period_value() {
        // cos(pi) / (1 - 4) makes this positive.
        assert!(close(rrc_value(1.0, 0.5), 4.0 / (3.0 * PI), 1e-14));
        assert!(close(rrc_value(1.0, 0.5), 0.424413, 1e-6));
    }

    #[test]
    fn rrc1_matches_general_form() {
        for i in -400..=400 {
            let t = i as f64 * 0.0137;
            assert!(close(rrc1_value(t), rrc_value(1.0, t), 1e-12), "t={t}");
        }
        assert_eq!(rrc1_value(1.5), rrc_value(1.0, 1.5));
    }

    #[test]
    fn continuity_across_singularity() {
        for alpha in [0.5, 1.0, 1.5] {
            let t0 = 0.25 / alpha;
            let v = rrc_value(alpha, t0);
            for t in [t0 - 1e-8, t0 + 1e-8, t0 - 2e-7, t0 + 2e-7, t0 + 1e-5] {
                assert!(close(rrc_value(alpha, t), v, 1e-4), "alpha={alpha} t={t}");
            }
        }
    }

    #[test]
    fn closed_form_values() {
        assert!(close(lag_product_exact(3).unwrap(), 8.0 / (15.0 * PI), 1e-15));
        assert!(close(lag_product_exact(3).unwrap(), 0.169765, 1e-6));
        assert!(close(lag_product_exact(5).unwrap(), -8.0 / (105.0 * PI), 1e-15));
        assert!(close(lag_product_exact(5).unwrap().abs(), 0.024252, 1e-6));
        assert!(lag_product_exact(7).unwrap() > 0.0 && lag_product_exact(9).unwrap() < 0.0);
        assert_eq!(lag_product_exact(6).unwrap(), 0.0);
        assert!(lag_product_exact(-1).is_err());
    }

    #[test]
    fn inner_products_at_d8() {
        assert!(close(pulse_inner_product(1.0, 0.0, 8.0), 1.0, 1e-3));
        assert!(close(pulse_inner_product(1.0, 0.25, 8.0), 8.0 / (3.0 * PI), 1e-3));
        assert!(close(pulse_inner_product(1.0, 0.5, 8.0), 0.5, 1e-3));
        assert!(close(pulse_inner_product(1.0, 1.0, 8.0), 0.0, 1e-3));
    }

    #[test]
    fn batched_inner_products_agree() {
        let offs = [0.0, 0.3, -0.7, 1.9];
        let batch = pulse_inner_products(0.6, &offs, 4.0);
        for (o, b) in offs.iter().zip(batch) {
            assert!(close(pulse_inner_product(0.6, *o, 4.0), b, 1e-14));
        }
    }

    #[test]
    fn truncation_rows() {
        let rows = truncation_study(&[0, 2, 4], &[4.0, 8.0]).unwrap();
        for r in &rows {
            if r.n == 0 && r.d == 4.0 {
                assert!(close(r.ratio, 1.0, 1e-3));
            }
            if r.n == 2 && r.d == 8.0 {
                assert!(close(r.ratio, 1.0, 1e-4));
            }
            if r.n == 4 && r.d == 8.0 {
                assert!(r.exact_is_zero() && r.ratio < 1e-3);
            }
        }
        assert!(truncation_study(&[0], &[0.0]).is_err());
    }

    #[test]
    fn spectrum_of_full_rolloff() {
        assert_eq!(rrc1_spectrum(0.0), 1.0);
        assert!(close(rrc1_spectrum(1.0), 0.0, 1e-16));
        assert_eq!(rrc1_spectrum(2.0), 0.0);
        for i in -30..=30 {
            let f = i as f64 * 0.05;
            assert!(close(rrc_spectrum(1.0, f), rrc1_spectrum(f), 1e-15));
        }
    }

    #[test]
    fn spectrum_matches_fourier_integral() {
        // int rrc(t) cos(2 pi f t) dt over a long window.
        for alpha in [0.5, 1.0] {
            let rule = CompositeRule::new(-200.0, 200.0, 1.0 / 16.0, 8);
            for f in [0.0, 0.2, 0.4, 0.6, 0.9] {
                let ft = rule.integrate(|t| rrc_value(alpha, t) * (2.0 * PI * f * t).cos());
                assert!(close(ft, rrc_spectrum(alpha, f), 2e-3), "alpha={alpha} f={f}: {ft}");
            }
        }
    }

    #[test]
    fn psbm_psd_and_efficiency() {
        let ts = 1.0;
        let pulse = PulseSpec::psbm(ts, 4.0, 16).unwrap();
        let white = [Complex64::new(1.0, 0.0)];
        assert!(close(psd(&pulse, ts, &white, 0.0).unwrap(), 2.0, 1e-15));
        assert_eq!(psd(&pulse, ts, &white, 0.51).unwrap(), 0.0);
        assert!(close(spectral_efficiency(&pulse, ts), 2.0, 1e-15));
        let nyq = PulseSpec::new(1.0, ts, 4.0, 16).unwrap();
        assert!(close(spectral_efficiency(&nyq, ts), 1.0, 1e-15));
        assert!(psd(&pulse, ts, &[Complex64::new(0.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn pulse_spec_validation() {
        assert!(PulseSpec::new(2.1, 1.0, 4.0, 8).is_err());
        assert!(PulseSpec::new(1.0, 0.0, 4.0, 8).is_err());
        assert!(PulseSpec::new(1.0, 1.0, 0.0, 8).is_err());
        assert!(PulseSpec::new(1.0, 1.0, 4.0, 1).is_err());
    }
}
