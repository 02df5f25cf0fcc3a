//! Oversampled waveform modulator and matched-filter receiver.
//!
//! This is the reference the symbol-rate model in [`crate::link`] is checked
//! against. Pulse replicas are placed on a common sample grid and matched
//! filtering is a direct correlation on that grid, approximating the
//! continuous-time integrals by Riemann sums.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::pulse::PulseSpec;

/// Sampled complex baseband waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<Complex64>,
    /// Samples per symbol period `Ts`.
    pub sample_rate: f64,
    /// Time of the first sample, in units of `Ts`.
    pub t0: f64,
    /// `Ts` in seconds.
    pub symbol_period: f64,
}

impl Waveform {
    pub fn step(&self) -> f64 {
        self.symbol_period / self.sample_rate
    }

    /// `int |x(t)|^2 dt` by the rectangle rule.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x.norm_sqr()).sum::<f64>() * self.step()
    }

    /// Writes `t,re,im` rows with `t` in units of `Ts`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,re,im")?;
        for (i, x) in self.samples.iter().enumerate() {
            let t = self.t0 + i as f64 / self.sample_rate;
            writeln!(out, "{t},{},{}", x.re, x.im)?;
        }
        Ok(())
    }
}

/// Complex symbols with their nominal energy per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    pub symbols: Vec<Complex64>,
    pub energy: f64,
}

impl SymbolSequence {
    pub fn new(symbols: Vec<Complex64>, energy: f64) -> Self {
        Self { symbols, energy }
    }

    pub fn unit(symbols: Vec<Complex64>) -> Self {
        Self::new(symbols, 1.0)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// True when every symbol has magnitude `sqrt(energy)` (PSK alphabets).
    pub fn is_constant_modulus(&self, tol: f64) -> bool {
        let r = self.energy.sqrt();
        self.symbols.iter().all(|s| (s.norm() - r).abs() <= tol)
    }
}

struct Grid {
    taps: Vec<f64>,
    half: usize,
    per_symbol: usize,
    step: f64,
}

fn grid(pulse: &PulseSpec, symbol_period: f64) -> Result<Grid> {
    let step = pulse.sample_step();
    let ratio = symbol_period / step;
    let per_symbol = ratio.round() as usize;
    if per_symbol == 0 || (ratio - per_symbol as f64).abs() > 1e-9 * ratio.max(1.0) {
        return Err(invalid(
            "symbol_period",
            format!("Ts / step = {ratio} is not a positive integer"),
        ));
    }
    let half = (pulse.trunc_halfwidth * pulse.oversampling as f64).floor() as usize;
    let taps = (0..=2 * half)
        .map(|j| pulse.eval((j as f64 - half as f64) * step))
        .collect();
    Ok(Grid {
        taps,
        half,
        per_symbol,
        step,
    })
}

/// `x(t) = sum_k s_k p(t - k Ts)` on the pulse's sample grid; symbol `k` is
/// centred at `t = k Ts`.
pub fn modulate(s: &SymbolSequence, pulse: &PulseSpec, symbol_period: f64) -> Result<Waveform> {
    if s.is_empty() {
        return Err(invalid("symbols", "empty sequence"));
    }
    let g = grid(pulse, symbol_period)?;
    let len = (s.len() - 1) * g.per_symbol + g.taps.len();
    let mut samples = vec![Complex64::new(0.0, 0.0); len];
    for (k, sym) in s.symbols.iter().enumerate() {
        let base = k * g.per_symbol;
        for (j, p) in g.taps.iter().enumerate() {
            samples[base + j] += sym * p;
        }
    }
    Ok(Waveform {
        samples,
        sample_rate: g.per_symbol as f64,
        t0: -(g.half as f64) / g.per_symbol as f64,
        symbol_period,
    })
}

/// Conventional linear modulation with `Ts = Tp`.
pub fn modulate_nyquist(s: &SymbolSequence, pulse: &PulseSpec) -> Result<Waveform> {
    modulate(s, pulse, pulse.period)
}

/// Multiplexed modulation: 100% roll-off pulse of period `2 Ts`, one symbol
/// every `Ts`. `oversampling` counts samples per pulse period and must be even.
pub fn modulate_psbm(
    s: &SymbolSequence,
    symbol_period: f64,
    trunc_halfwidth: f64,
    oversampling: usize,
) -> Result<Waveform> {
    if !oversampling.is_multiple_of(2) {
        return Err(invalid("oversampling", "must be even so Ts falls on the grid"));
    }
    let pulse = PulseSpec::psbm(symbol_period, trunc_halfwidth, oversampling)?;
    modulate(s, &pulse, symbol_period)
}

/// Matched filter `y * p(-t)` sampled at `t = n Ts`, `n = 0..n_symbols`, with
/// zero timing offset.
pub fn matched_filter_sample(
    y: &Waveform,
    pulse: &PulseSpec,
    n_symbols: usize,
) -> Result<Vec<Complex64>> {
    let g = grid(pulse, y.symbol_period)?;
    if (y.step() - g.step).abs() > 1e-12 * g.step {
        return Err(invalid("pulse", "sample grid differs from the waveform's"));
    }
    // Index of t = 0 on the waveform grid.
    let origin = -y.t0 * y.sample_rate;
    let origin_idx = origin.round();
    if (origin - origin_idx).abs() > 1e-6 || origin_idx < g.half as f64 {
        return Err(Error::DimensionMismatch {
            context: "waveform must start a pulse half-width before t = 0",
            expected: g.half,
            actual: origin_idx.max(0.0) as usize,
        });
    }
    let origin_idx = origin_idx as usize;
    let needed = origin_idx + n_symbols.saturating_sub(1) * g.per_symbol + g.half + 1;
    if y.samples.len() < needed {
        return Err(Error::DimensionMismatch {
            context: "waveform shorter than the pulse support",
            expected: needed,
            actual: y.samples.len(),
        });
    }
    Ok((0..n_symbols)
        .map(|n| {
            let start = origin_idx + n * g.per_symbol - g.half;
            y.samples[start..start + g.taps.len()]
                .iter()
                .zip(&g.taps)
                .map(|(x, p)| x * p)
                .sum::<Complex64>()
                * g.step
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn single_symbol_is_the_pulse() {
        let pulse = PulseSpec::new(0.5, 1.0, 4.0, 16).unwrap();
        let w = modulate_nyquist(&SymbolSequence::unit(vec![c(1.0)]), &pulse).unwrap();
        assert_eq!(w.samples.len(), 129);
        for (i, x) in w.samples.iter().enumerate() {
            let t = (w.t0 + i as f64 / w.sample_rate) * w.symbol_period;
            assert_eq!(x.re, pulse.eval(t));
        }
        assert!((w.energy() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn nyquist_pair_is_recovered() {
        let pulse = PulseSpec::new(0.5, 1.0, 8.0, 16).unwrap();
        let w = modulate_nyquist(&SymbolSequence::unit(vec![c(1.0), c(-1.0)]), &pulse).unwrap();
        let r = matched_filter_sample(&w, &pulse, 2).unwrap();
        assert!((r[0] - c(1.0)).norm() < 2e-3);
        assert!((r[1] - c(-1.0)).norm() < 2e-3);
    }

    #[test]
    fn psbm_pair_samples() {
        let ts = 1.0;
        let pulse = PulseSpec::psbm(ts, 8.0, 32).unwrap();
        for (s, want) in [((1.0, 1.0), (1.5, 1.5)), ((1.0, -1.0), (0.5, -0.5))] {
            let seq = SymbolSequence::unit(vec![c(s.0), c(s.1)]);
            let w = modulate_psbm(&seq, ts, 8.0, 32).unwrap();
            let r = matched_filter_sample(&w, &pulse, 2).unwrap();
            assert!((r[0].re - want.0).abs() < 2e-4, "{r:?}");
            assert!((r[1].re - want.1).abs() < 2e-4, "{r:?}");
        }
    }

    #[test]
    fn psbm_single_symbol_energy() {
        let w = modulate_psbm(&SymbolSequence::unit(vec![c(1.0)]), 1.0, 8.0, 32).unwrap();
        assert!((w.energy() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let pulse = PulseSpec::new(1.0, 1.0, 4.0, 16).unwrap();
        assert!(modulate_nyquist(&SymbolSequence::unit(vec![]), &pulse).is_err());
        assert!(modulate_psbm(&SymbolSequence::unit(vec![c(1.0)]), 1.0, 4.0, 15).is_err());
        let w = modulate_nyquist(&SymbolSequence::unit(vec![c(1.0)]), &pulse).unwrap();
        let short = Waveform {
            samples: w.samples[..40].to_vec(),
            ..w
        };
        assert!(matched_filter_sample(&short, &pulse, 1).is_err());
    }

    #[test]
    fn csv_dump_header() {
        let pulse = PulseSpec::new(1.0, 1.0, 1.0, 4).unwrap();
        let w = modulate_nyquist(&SymbolSequence::unit(vec![c(1.0)]), &pulse).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,re,im\n-1,"));
        assert_eq!(text.lines().count(), 1 + w.samples.len());
    }
}
