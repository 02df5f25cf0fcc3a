//! Receivers for the multiplexed link and the Nyquist reference.
//!
//! Sample layouts follow [`crate::link`]: `r = s A diag(h) + w A0^T` for the
//! multiplexed scheme. Detectors return alphabet indices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::link::{IsiMatrix, TriangularFactor};
use crate::psk::Psk;
use crate::sequences::{diff_decode_step, Frame, Role, SpreadingPair};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Upper bound on `M^N` for exhaustive sequence detection.
pub const MAX_CANDIDATES: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Csi {
    Perfect,
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub alphabet: Psk,
    pub use_wmf: bool,
    pub csi: Csi,
    pub max_exhaustive_len: usize,
}

impl DetectorConfig {
    pub fn new(alphabet: Psk) -> Self {
        Self {
            alphabet,
            use_wmf: true,
            csi: Csi::Perfect,
            max_exhaustive_len: 16,
        }
    }

    pub fn plain(mut self) -> Self {
        self.use_wmf = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: Complex64,
    pub error_variance: f64,
}

impl ChannelEstimate {
    pub fn perfect(h: Complex64) -> Self {
        Self {
            h_hat: h,
            error_variance: 0.0,
        }
    }
}

/// `r A0^{-T}` by forward substitution.
pub fn whiten(r: &[Complex64], factor: &TriangularFactor) -> Result<Vec<Complex64>> {
    if r.len() != factor.order() {
        return Err(Error::DimensionMismatch {
            context: "whiten",
            expected: factor.order(),
            actual: r.len(),
        });
    }
    if let Some(row) = factor.diag().iter().position(|d| !(d.abs() > 0.0)) {
        return Err(Error::SingularFactor { row });
    }
    let mut out = vec![ZERO; r.len()];
    factor.whiten_into(r, &mut out);
    Ok(out)
}

fn gains(h_hat: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    match h_hat.len() {
        1 => Ok(vec![h_hat[0]; n]),
        len if len == n => Ok(h_hat.to_vec()),
        len => Err(Error::DimensionMismatch {
            context: "channel gains (1 or N)",
            expected: n,
            actual: len,
        }),
    }
}

struct Search<'a> {
    target: Vec<Complex64>,
    h: Vec<Complex64>,
    points: &'a [Complex64],
    factor: Option<&'a TriangularFactor>,
    s: Vec<usize>,
    y: Vec<Complex64>,
    best: f64,
    best_s: Vec<usize>,
}

impl Search<'_> {
    fn sym(&self, k: usize) -> Complex64 {
        self.points[self.s[k]]
    }

    /// Cost of output `j` once `s_0..=s_{j+1}` (or the last symbol) is fixed.
    fn cost(&mut self, j: usize) -> f64 {
        let n = self.s.len();
        let mut u = self.sym(j);
        if j > 0 {
            u += 0.5 * self.sym(j - 1);
        }
        if j + 1 < n {
            u += 0.5 * self.sym(j + 1);
        }
        u *= self.h[j];
        let y = match self.factor {
            Some(f) => {
                let prev = if j > 0 { f.sub()[j] * self.y[j - 1] } else { ZERO };
                (u - prev) / f.diag()[j]
            }
            None => u,
        };
        self.y[j] = y;
        (self.target[j] - y).norm_sqr()
    }

    fn descend(&mut self, k: usize, partial: f64) {
        let n = self.s.len();
        for idx in 0..self.points.len() {
            self.s[k] = idx;
            let mut acc = partial;
            if k > 0 {
                acc += self.cost(k - 1);
            }
            if k + 1 == n {
                acc += self.cost(k);
                if acc < self.best {
                    self.best = acc;
                    self.best_s.copy_from_slice(&self.s);
                }
            } else if acc < self.best {
                self.descend(k + 1, acc);
            }
        }
    }
}

/// Exhaustive sequence detection. With `use_wmf` the metric is
/// `|r A0^{-T} - s A diag(h) A0^{-T}|^2`, otherwise `|r - s A diag(h)|^2`.
/// `h_hat` holds one gain per sample or a single block gain. Ties go to the
/// lexicographically first candidate.
pub fn ml_detect(
    r: &[Complex64],
    isi: &IsiMatrix,
    factor: &TriangularFactor,
    h_hat: &[Complex64],
    cfg: &DetectorConfig,
) -> Result<Vec<usize>> {
    let n = r.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if isi.order() != n || factor.order() != n {
        return Err(Error::DimensionMismatch {
            context: "ISI matrix order",
            expected: n,
            actual: isi.order(),
        });
    }
    let m = cfg.alphabet.order() as f64;
    let candidates = m.powi(n as i32);
    if n > cfg.max_exhaustive_len || candidates > MAX_CANDIDATES as f64 {
        return Err(Error::Complexity {
            candidates,
            limit: MAX_CANDIDATES.min((m as u64).saturating_pow(cfg.max_exhaustive_len as u32)),
        });
    }
    let target = if cfg.use_wmf { whiten(r, factor)? } else { r.to_vec() };
    let mut search = Search {
        target,
        h: gains(h_hat, n)?,
        points: cfg.alphabet.points(),
        factor: cfg.use_wmf.then_some(factor),
        s: vec![0; n],
        y: vec![ZERO; n],
        best: f64::INFINITY,
        best_s: vec![0; n],
    };
    search.descend(0, 0.0);
    Ok(search.best_s)
}

/// Nearest-point decision on every `r_k / h_hat`.
pub fn symbol_slicer(r: &[Complex64], h_hat: Complex64, alphabet: &Psk) -> Result<Vec<usize>> {
    if h_hat == ZERO {
        return Err(invalid("h_hat", "zero channel estimate"));
    }
    Ok(r.iter().map(|x| alphabet.slice(x / h_hat)).collect())
}

/// Successive cancellation for `(a_1, b_1, a_2, b_2, ...)`: slice `b` with the
/// `a` interference left in, cancel `(b_{n-1} + b_n)/2`, then slice `a`.
pub fn sic_detect(
    r: &[Complex64],
    h_hat: Complex64,
    alphabet: &Psk,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if h_hat == ZERO {
        return Err(invalid("h_hat", "zero channel estimate"));
    }
    let b: Vec<usize> = r
        .iter()
        .skip(1)
        .step_by(2)
        .map(|x| alphabet.slice(x / h_hat))
        .collect();
    let bval = |n: usize| b.get(n).map_or(ZERO, |&i| alphabet.point(i));
    let a = r
        .iter()
        .step_by(2)
        .enumerate()
        .map(|(n, x)| {
            let left = if n > 0 { bval(n - 1) } else { ZERO };
            let isi = (left + bval(n)) * 0.5;
            alphabet.slice(x / h_hat - isi)
        })
        .collect();
    Ok((a, b))
}

fn cholesky(c: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = c.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        if c[i].len() != n {
            return Err(Error::DimensionMismatch {
                context: "covariance row",
                expected: n,
                actual: c[i].len(),
            });
        }
        for j in 0..=i {
            let s = c[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[Complex64]) -> Vec<Complex64> {
    let n = l.len();
    let mut y = vec![ZERO; n];
    for i in 0..n {
        let s: Complex64 = (0..i).map(|k| y[k] * l[i][k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    for i in (0..n).rev() {
        let s: Complex64 = (i + 1..n).map(|k| y[k] * l[k][i]).sum();
        y[i] = (y[i] - s) / l[i][i];
    }
    y
}

/// LMMSE estimate of a scalar gain from `obs = h vals + noise` with noise
/// covariance `noise_cov` and prior `h ~ CN(0, prior_var)`.
pub fn lmmse_estimate(
    obs: &[Complex64],
    vals: &[Complex64],
    noise_cov: &[Vec<f64>],
    prior_var: f64,
) -> Result<ChannelEstimate> {
    if obs.is_empty() || obs.len() != vals.len() || noise_cov.len() != obs.len() {
        return Err(Error::DimensionMismatch {
            context: "pilot observations",
            expected: vals.len(),
            actual: obs.len(),
        });
    }
    if vals.iter().all(|v| *v == ZERO) {
        return Err(invalid("pilot_vals", "all pilots are zero"));
    }
    if !(prior_var > 0.0) {
        return Err(invalid("prior_var", format!("{prior_var} must be > 0")));
    }
    let l = cholesky(noise_cov)?;
    let cx = cholesky_solve(&l, vals);
    let info: f64 = vals.iter().zip(&cx).map(|(v, c)| (v.conj() * c).re).sum();
    let error_variance = 1.0 / (info + 1.0 / prior_var);
    let num: Complex64 = cx.iter().zip(obs).map(|(c, r)| c.conj() * r).sum();
    Ok(ChannelEstimate {
        h_hat: num * error_variance,
        error_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerVariant {
    AsStated,
    DecisionDirected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotCombination {
    /// `sum_k conj(P_k)/|P_k| r_k`.
    pub value: Complex64,
    /// `sum_k |P_k|`: the combined signal is `h` times this.
    pub gain: f64,
    pub pilots: usize,
    /// Data interference `sum_k conj(P_k)/|P_k| isi_k` per unit `h`.
    pub residual: Complex64,
}

impl PilotCombination {
    pub fn residual_power(&self) -> f64 {
        self.residual.norm_sqr()
    }
}

/// Sign-aligned sum of the pilot samples of `frame`. The decision-directed
/// variant first removes `h_hat` times the data ISI computed from the frame's
/// data values, which then hold the detected symbols.
pub fn pilot_combiner(
    r: &[Complex64],
    frame: &Frame,
    variant: CombinerVariant,
    h_hat: Complex64,
) -> Result<PilotCombination> {
    if r.len() != frame.len() {
        return Err(Error::DimensionMismatch {
            context: "pilot combiner",
            expected: frame.len(),
            actual: r.len(),
        });
    }
    let pos = &frame.positions;
    let data_at = |j: usize| match pos.get(j) {
        Some(p) if p.role == Role::Data => p.value,
        _ => ZERO,
    };
    let mut value = ZERO;
    let mut residual = ZERO;
    let mut gain = 0.0;
    let mut pilots = 0;
    for (k, p) in pos.iter().enumerate() {
        if p.role != Role::Pilot || p.value == ZERO {
            continue;
        }
        let w = p.value.conj() / p.value.norm();
        let left = if k > 0 { data_at(k - 1) } else { ZERO };
        let isi = (left + data_at(k + 1)) * 0.5;
        let x = match variant {
            CombinerVariant::AsStated => r[k],
            CombinerVariant::DecisionDirected => r[k] - h_hat * isi,
        };
        value += w * x;
        residual += w * isi;
        gain += p.value.norm();
        pilots += 1;
    }
    if pilots == 0 {
        return Err(invalid("frame", "no nonzero pilots"));
    }
    Ok(PilotCombination {
        value,
        gain,
        pilots,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Despread {
    pub d1: Complex64,
    pub d2: Complex64,
    /// Coefficient of `d2` in the `d1` estimate.
    pub cross_into_d1: Complex64,
    /// Coefficient of `d1` in the `d2` estimate.
    pub cross_into_d2: Complex64,
}

/// Correlates `odd = (r_1, r_3, ...)` with `c1` and `even = (r_2, r_4, ...)`
/// with `c2`, normalised by `N h_hat`. The cross coefficients follow from the
/// interleaved layout: odd samples see `(b_{n-1} + b_n)/2`, even samples
/// `(a_n + a_{n+1})/2`.
pub fn despread(
    odd: &[Complex64],
    even: &[Complex64],
    pair: &SpreadingPair,
    h_hat: Complex64,
) -> Result<Despread> {
    let n = pair.len();
    for (context, len) in [("odd samples", odd.len()), ("even samples", even.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                actual: len,
            });
        }
    }
    if h_hat == ZERO {
        return Err(invalid("h_hat", "zero channel estimate"));
    }
    let (c1, c2) = (&pair.c1, &pair.c2);
    let scale = 1.0 / (n as f64 * h_hat);
    let corr = |x: &[Complex64], c: &[Complex64]| -> Complex64 {
        x.iter().zip(c).map(|(r, c)| r * c.conj()).sum::<Complex64>() * scale
    };
    let mut into1 = ZERO;
    let mut into2 = ZERO;
    for k in 0..n {
        let left2 = if k > 0 { c2[k - 1] } else { ZERO };
        into1 += (left2 + c2[k]) * 0.5 * c1[k].conj();
        let right1 = c1.get(k + 1).copied().unwrap_or(ZERO);
        into2 += (c1[k] + right1) * 0.5 * c2[k].conj();
    }
    Ok(Despread {
        d1: corr(odd, c1),
        d2: corr(even, c2),
        cross_into_d1: into1 / n as f64,
        cross_into_d2: into2 / n as f64,
    })
}

/// Sum of all samples of a repetition block.
pub fn repetition_combine(r: &[Complex64]) -> Complex64 {
    r.iter().sum()
}

/// Decision-feedback differential decoding of a block that starts with the
/// reference symbol; returns `r.len() - 1` data decisions.
pub fn diff_decode_sequence(r: &[Complex64], alphabet: &Psk) -> Vec<usize> {
    let n = r.len().saturating_sub(1);
    let mut out = Vec::with_capacity(n);
    let mut past = ONE;
    let mut prev = None;
    for &x in &r[..n] {
        let idx = diff_decode_step(x, past, prev, alphabet);
        let c = alphabet.point(idx);
        past *= c;
        prev = Some(c);
        out.push(idx);
    }
    out
}

/// Conventional differential detection `c_n = slice(r_{n+1} conj(r_n))`.
pub fn nyquist_diff_decode(r: &[Complex64], alphabet: &Psk) -> Vec<usize> {
    r.windows(2)
        .map(|w| alphabet.slice(w[1] * w[0].conj()))
        .collect()
}
