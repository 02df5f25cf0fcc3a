//! Transmitted symbol sequences: pilot/data frames, alternating pilots,
//! repetition, orthogonal spreading and differential encoding.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{invalid, Error, Result};
use crate::psk::Psk;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pilot,
    Data,
    Zero,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Pilot => "pilot",
            Role::Data => "data",
            Role::Zero => "zero",
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pilot" => Ok(Role::Pilot),
            "data" => Ok(Role::Data),
            "zero" => Ok(Role::Zero),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub role: Role,
    pub value: Complex64,
}

/// A transmitted frame with the role of every symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub positions: Vec<Position>,
    pub ld: usize,
    pub lp: usize,
}

impl Frame {
    /// Checks that zero positions carry zero.
    pub fn new(positions: Vec<Position>, ld: usize, lp: usize) -> Result<Self> {
        if let Some(i) = positions
            .iter()
            .position(|p| p.role == Role::Zero && p.value != ZERO)
        {
            return Err(invalid("frame", format!("zero position {i} carries a nonzero value")));
        }
        Ok(Self { positions, ld, lp })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn symbols(&self) -> Vec<Complex64> {
        self.positions.iter().map(|p| p.value).collect()
    }

    pub fn indices(&self, role: Role) -> Vec<usize> {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.positions.iter().filter(|p| p.role == role).count()
    }

    /// Replaces the data values in order of appearance.
    pub fn with_data(&self, data: &[Complex64]) -> Result<Frame> {
        let idx = self.indices(Role::Data);
        if idx.len() != data.len() {
            return Err(Error::DimensionMismatch {
                context: "frame data",
                expected: idx.len(),
                actual: data.len(),
            });
        }
        let mut out = self.clone();
        for (i, d) in idx.into_iter().zip(data) {
            out.positions[i].value = *d;
        }
        Ok(out)
    }

    /// Non-fatal layout remarks.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.lp >= self.ld {
            w.push(format!("pilot group length {} is not below data group length {}", self.lp, self.ld));
        }
        w
    }

    /// One `role,re,im` line per position.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for p in &self.positions {
            out.push_str(&format!("{},{},{}\n", p.role.name(), p.value.re, p.value.im));
        }
        out
    }

    /// Inverse of [`Frame::serialize`]; group lengths are the longest runs of
    /// data and pilot positions. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Frame> {
        let mut positions = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: n + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected role,re,im, got {} fields", fields.len())));
            }
            let role = fields[0].parse::<Role>().map_err(parse_err)?;
            let re = fields[1]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("re: {e}")))?;
            let im = fields[2]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("im: {e}")))?;
            if role == Role::Zero && (re != 0.0 || im != 0.0) {
                return Err(parse_err("zero position with nonzero value".into()));
            }
            positions.push(Position {
                role,
                value: Complex64::new(re, im),
            });
        }
        let ld = longest_run(&positions, Role::Data);
        let lp = longest_run(&positions, Role::Pilot);
        Frame::new(positions, ld, lp)
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn longest_run(positions: &[Position], role: Role) -> usize {
    let mut best = 0;
    let mut run = 0;
    for p in positions {
        run = if p.role == role { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

fn push(positions: &mut Vec<Position>, role: Role, value: Complex64) {
    positions.push(Position { role, value });
}

/// `[Lp pilots] 0 [Ld data] 0 [Lp pilots] 0 ...`, starting and ending with a
/// pilot group.
pub fn build_frame(ld: usize, lp: usize, data: &[Complex64], pilot: Complex64) -> Result<Frame> {
    if ld == 0 {
        return Err(invalid("Ld", "must be >= 1"));
    }
    if lp == 0 {
        return Err(invalid("Lp", "must be >= 1"));
    }
    if data.is_empty() || !data.len().is_multiple_of(ld) {
        return Err(invalid(
            "data",
            format!("length {} is not a positive multiple of Ld = {ld}", data.len()),
        ));
    }
    let mut positions = Vec::new();
    let pilots = |positions: &mut Vec<Position>| {
        for _ in 0..lp {
            push(positions, Role::Pilot, pilot);
        }
    };
    pilots(&mut positions);
    for group in data.chunks(ld) {
        push(&mut positions, Role::Zero, ZERO);
        for d in group {
            push(&mut positions, Role::Data, *d);
        }
        push(&mut positions, Role::Zero, ZERO);
        pilots(&mut positions);
    }
    Frame::new(positions, ld, lp)
}

/// `(-p, d1, p, d2, -p, ..., dN, +-p)`: every data sample is ISI-free.
pub fn alternating_pilot_sequence(data: &[Complex64], pilot: Complex64) -> Result<Frame> {
    if data.is_empty() {
        return Err(invalid("data", "empty"));
    }
    let mut positions = Vec::with_capacity(2 * data.len() + 1);
    let mut sign = -1.0;
    for d in data {
        push(&mut positions, Role::Pilot, pilot * sign);
        push(&mut positions, Role::Data, *d);
        sign = -sign;
    }
    push(&mut positions, Role::Pilot, pilot * sign);
    Frame::new(positions, 1, 1)
}

/// Noiseless samples `s A` of a finite block.
pub fn noiseless_samples(seq: &[Complex64]) -> Vec<Complex64> {
    (0..seq.len())
        .map(|k| {
            let left = if k > 0 { seq[k - 1] } else { ZERO };
            let right = seq.get(k + 1).copied().unwrap_or(ZERO);
            seq[k] + (left + right) * 0.5
        })
        .collect()
}

/// ISI residual `(s A)_k - s_k` at every position.
pub fn verify_isi_free_subsequence(seq: &[Complex64]) -> Vec<Complex64> {
    noiseless_samples(seq)
        .into_iter()
        .zip(seq)
        .map(|(r, s)| r - s)
        .collect()
}

/// Sum of the two middle samples of `(d1, p, p, -d1)`: `3 h p` plus noise of
/// variance `3 sigma_w^2`.
pub fn double_pilot_combine(r_n: Complex64, r_next: Complex64) -> Complex64 {
    r_n + r_next
}

/// Nyquist form `(d, 0, d, ..., 0, d)` with `n` copies and the multiplexed
/// form of `2n - 1` copies scaled by `1/sqrt(2)`.
pub fn repetition_sequences(n: usize, d: Complex64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if n < 2 {
        return Err(invalid("N", "repetition needs N >= 2"));
    }
    let nyquist = (0..2 * n - 1)
        .map(|k| if k % 2 == 0 { d } else { ZERO })
        .collect();
    let psbm = vec![d * FRAC_1_SQRT_2; 2 * n - 1];
    Ok((nyquist, psbm))
}

/// Two spreading sequences with their cross-correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadingPair {
    pub c1: Vec<Complex64>,
    pub c2: Vec<Complex64>,
    /// `sum c1_n conj(c2_n)`.
    pub aligned_cross: Complex64,
    /// `sum c2_{n+1} conj(c1_n)`, no wraparound term.
    pub shifted_cross: Complex64,
}

impl SpreadingPair {
    pub fn new(c1: Vec<Complex64>, c2: Vec<Complex64>) -> Result<Self> {
        if c1.len() != c2.len() {
            return Err(Error::DimensionMismatch {
                context: "spreading pair",
                expected: c1.len(),
                actual: c2.len(),
            });
        }
        if c1.len() < 2 {
            return Err(invalid("N", "spreading length must be >= 2"));
        }
        let aligned_cross = c1.iter().zip(&c2).map(|(a, b)| a * b.conj()).sum();
        let shifted_cross = c2[1..].iter().zip(&c1).map(|(b, a)| b * a.conj()).sum();
        Ok(Self {
            c1,
            c2,
            aligned_cross,
            shifted_cross,
        })
    }

    pub fn len(&self) -> usize {
        self.c1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c1.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpreadingKind {
    /// Two rows of the Sylvester-Hadamard matrix of order `N`.
    Walsh { rows: Option<(usize, usize)> },
    /// Random +-1 sequences, redrawn until `|aligned_cross| <= max_aligned`.
    Random { max_aligned: f64, max_tries: usize },
}

fn hadamard_entry(row: usize, col: usize) -> f64 {
    if (row & col).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Walsh rows default to `(0, N/2)`.
pub fn make_spreading_pair<R: Rng + ?Sized>(
    kind: SpreadingKind,
    n: usize,
    rng: &mut R,
) -> Result<SpreadingPair> {
    if n < 2 {
        return Err(invalid("N", "spreading length must be >= 2"));
    }
    match kind {
        SpreadingKind::Walsh { rows } => {
            if !n.is_power_of_two() {
                return Err(invalid("N", format!("{n} is not a power of two")));
            }
            let (i, j) = rows.unwrap_or((0, n / 2));
            if i >= n || j >= n || i == j {
                return Err(invalid("rows", format!("({i}, {j}) are not two distinct rows below {n}")));
            }
            let row = |r| (0..n).map(|c| Complex64::new(hadamard_entry(r, c), 0.0)).collect();
            SpreadingPair::new(row(i), row(j))
        }
        SpreadingKind::Random {
            max_aligned,
            max_tries,
        } => {
            let mut draw = || -> Vec<Complex64> {
                (0..n)
                    .map(|_| if rng.random::<bool>() { ONE } else { -ONE })
                    .collect()
            };
            for _ in 0..max_tries.max(1) {
                let pair = SpreadingPair::new(draw(), draw())?;
                if pair.aligned_cross.norm() <= max_aligned {
                    return Ok(pair);
                }
            }
            Err(invalid(
                "max_aligned",
                format!("no pair with |aligned_cross| <= {max_aligned} in {max_tries} draws"),
            ))
        }
    }
}

fn binomial_u128(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `C(n, k) 2^{-n}`; exact integer arithmetic while it fits, log-gamma beyond.
fn binomial_half_pmf(n: u64, k: u64) -> f64 {
    if n <= 120 {
        binomial_u128(n, k) as f64 * 0.5f64.powi(n as i32)
    } else {
        (ln_binomial(n, k) - n as f64 * std::f64::consts::LN_2).exp()
    }
}

/// Probability that two iid random +-1 sequences of length `n` are exactly
/// orthogonal; zero for odd `n`.
pub fn orthogonality_probability(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("N", "must be >= 2"));
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    Ok(binomial_half_pmf(n as u64, n as u64 / 2))
}

/// `P(|S| <= theta)` for `S = 2K - n`, `K ~ Binomial(n, 1/2)`, with
/// `theta = round(kappa n / 2)`, halves rounded away from zero.
pub fn near_orthogonality_probability(n: usize, kappa: f64) -> Result<f64> {
    if n < 1 {
        return Err(invalid("N", "must be >= 1"));
    }
    if !(kappa >= 0.0) {
        return Err(invalid("kappa", format!("{kappa} must be >= 0")));
    }
    let theta = (kappa * n as f64 / 2.0).round();
    let p: f64 = (0..=n as u64)
        .filter(|&k| (2.0 * k as f64 - n as f64).abs() <= theta)
        .map(|k| binomial_half_pmf(n as u64, k))
        .fold(0.0, |acc, x| acc + x);
    Ok(p.min(1.0))
}

/// `a_n = d1 c1_n`, `b_n = d2 c2_n`.
pub fn spread_streams(
    d1: Complex64,
    d2: Complex64,
    pair: &SpreadingPair,
) -> (Vec<Complex64>, Vec<Complex64>) {
    (
        pair.c1.iter().map(|c| d1 * c).collect(),
        pair.c2.iter().map(|c| d2 * c).collect(),
    )
}

/// `(a_1, b_1, a_2, b_2, ...)`: `a` on odd, `b` on even 1-based positions.
pub fn interleave(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "interleaved streams",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).flat_map(|(x, y)| [*x, *y]).collect())
}

/// Unit-modulus data symbols for differential encoding, reference `s_{-1} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffStream {
    pub symbols: Vec<Complex64>,
}

impl DiffStream {
    pub fn new(symbols: Vec<Complex64>) -> Result<Self> {
        if let Some(k) = symbols.iter().position(|c| (c.norm() - 1.0).abs() > 1e-9) {
            return Err(invalid("c", format!("symbol {k} is not unit-modulus")));
        }
        Ok(Self { symbols })
    }

    /// Running products `t_m = c_0 ... c_m`.
    pub fn products(&self) -> Vec<Complex64> {
        self.symbols
            .iter()
            .scan(ONE, |t, c| {
                *t *= c;
                Some(*t)
            })
            .collect()
    }
}

/// `s_k = c_k s_{k-1}` with `s_{-1} = 1`.
pub fn diff_encode(c: &DiffStream) -> Vec<Complex64> {
    c.products()
}

/// The transmitted block: the reference `s_{-1} = 1` followed by
/// [`diff_encode`], so the first data symbol has a known left neighbour.
pub fn diff_transmit_sequence(c: &DiffStream) -> Vec<Complex64> {
    std::iter::once(ONE).chain(c.products()).collect()
}

/// Raw estimate `2 r_n conj(past) - conj(c_{n-1}) - 2` of `c_n`. `r_n` is the
/// sample centred on `s_{n-1}`; `past` is `prod_{k<n} c_k`. At the start of a
/// block `prev` is `None` and the left-neighbour term is absent.
pub fn diff_decode_raw(r_n: Complex64, past: Complex64, prev: Option<Complex64>) -> Complex64 {
    let feedback = prev.map_or(ZERO, |c| c.conj());
    2.0 * r_n * past.conj() - feedback - 2.0
}

/// [`diff_decode_raw`] sliced to the nearest alphabet point.
pub fn diff_decode_step(
    r_n: Complex64,
    past: Complex64,
    prev: Option<Complex64>,
    alphabet: &Psk,
) -> usize {
    alphabet.slice(diff_decode_raw(r_n, past, prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn frame_layouts() {
        let p = c(1.0);
        let f = build_frame(2, 1, &[c(2.0), c(3.0)], p).unwrap();
        assert_eq!(f.symbols(), vec![p, c(0.0), c(2.0), c(3.0), c(0.0), p]);
        let f = build_frame(4, 1, &[c(1.0); 4], p).unwrap();
        assert_eq!(f.len(), 8);
        assert!(build_frame(0, 1, &[], p).is_err());
        assert!(build_frame(2, 1, &[c(1.0); 3], p).is_err());
        assert_eq!(build_frame(1, 2, &[c(1.0)], p).unwrap().warnings().len(), 1);
    }

    #[test]
    fn alternating_pilots() {
        let p = c(1.0);
        let f = alternating_pilot_sequence(&[c(5.0)], p).unwrap();
        assert_eq!(f.symbols(), vec![-p, c(5.0), p]);
        let f = alternating_pilot_sequence(&[c(5.0), c(7.0)], p).unwrap();
        assert_eq!(f.symbols(), vec![-p, c(5.0), p, c(7.0), -p]);
        let r = noiseless_samples(&f.symbols());
        assert_eq!(r[1], c(5.0));
        assert_eq!(r[3], c(7.0));
    }

    #[test]
    fn isi_free_designs() {
        let (p, d1, d2) = (c(1.0), Complex64::new(0.3, -2.0), c(-1.7));
        for seq in [
            vec![c(0.0), p, c(0.0)],
            vec![d1, p, -d1],
            vec![d1, p, -d1, -p, d1],
            vec![d1, p, -d1, -p, d2, p, -d2],
        ] {
            let res = verify_isi_free_subsequence(&seq);
            for (k, s) in seq.iter().enumerate() {
                if *s == p {
                    assert_eq!(res[k], c(0.0), "{seq:?} at {k}");
                }
            }
        }
        let res = verify_isi_free_subsequence(&[d1, p, -d1, -p, d2, p, -d2]);
        assert!((res[3] - (d2 - d1) * 0.5).norm() < 1e-15);
        assert!((verify_isi_free_subsequence(&[d1, p, d1])[1] - d1).norm() < 1e-15);
    }

    #[test]
    fn double_pilot_example() {
        let r = noiseless_samples(&[c(2.0), c(1.0), c(1.0), c(-2.0)]);
        assert_eq!((r[1], r[2]), (c(2.5), c(0.5)));
        assert_eq!(double_pilot_combine(r[1], r[2]), c(3.0));
    }

    #[test]
    fn repetition_forms() {
        let (n, p) = repetition_sequences(2, c(1.0)).unwrap();
        assert_eq!(n, vec![c(1.0), c(0.0), c(1.0)]);
        assert_eq!(p, vec![c(FRAC_1_SQRT_2); 3]);
        assert!(repetition_sequences(1, c(1.0)).is_err());
    }

    #[test]
    fn walsh_pairs() {
        let mut rng = stream_rng(0, &[]);
        let pair = make_spreading_pair(SpreadingKind::Walsh { rows: Some((0, 1)) }, 4, &mut rng).unwrap();
        assert_eq!(pair.c2, vec![c(1.0), c(-1.0), c(1.0), c(-1.0)]);
        assert_eq!(pair.aligned_cross, c(0.0));
        assert_eq!(pair.shifted_cross, c(-1.0));
        let def = make_spreading_pair(SpreadingKind::Walsh { rows: None }, 8, &mut rng).unwrap();
        assert_eq!(def.aligned_cross, c(0.0));
        assert_eq!(def.c1.iter().map(|x| x.norm_sqr()).sum::<f64>(), 8.0);
        assert!(make_spreading_pair(SpreadingKind::Walsh { rows: None }, 6, &mut rng).is_err());
        let same = SpreadingPair::new(def.c1.clone(), def.c1.clone()).unwrap();
        assert_eq!(same.aligned_cross, c(8.0));
    }

    #[test]
    fn random_pairs_respect_bound() {
        let mut rng = stream_rng(3, &[]);
        let kind = SpreadingKind::Random {
            max_aligned: 0.0,
            max_tries: 1000,
        };
        for _ in 0..20 {
            let pair = make_spreading_pair(kind, 8, &mut rng).unwrap();
            assert_eq!(pair.aligned_cross, c(0.0));
        }
    }

    #[test]
    fn probabilities() {
        assert!((orthogonality_probability(2).unwrap() - 0.5).abs() < 1e-12);
        assert!((orthogonality_probability(4).unwrap() - 0.375).abs() < 1e-12);
        assert_eq!(orthogonality_probability(3).unwrap(), 0.0);
        assert!((near_orthogonality_probability(4, 0.0).unwrap() - 0.375).abs() < 1e-12);
        assert!((near_orthogonality_probability(10, 3.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spreading_energy() {
        let mut rng = stream_rng(0, &[]);
        let pair = make_spreading_pair(SpreadingKind::Walsh { rows: None }, 4, &mut rng).unwrap();
        let (a, b) = spread_streams(c(1.0), c(0.0), &pair);
        assert!(b.iter().all(|x| *x == c(0.0)));
        let (a2, b2) = spread_streams(c(1.0), Complex64::new(0.0, 2.0), &pair);
        let e: f64 = a2.iter().chain(&b2).map(|x| x.norm_sqr()).sum();
        assert!((e - 4.0 * 5.0).abs() < 1e-12);
        assert_eq!(interleave(&a, &b).unwrap().len(), 8);
    }

    #[test]
    fn differential_encoding() {
        let j = Complex64::new(0.0, 1.0);
        let s = diff_encode(&DiffStream::new(vec![j, j]).unwrap());
        assert_eq!(s, vec![j, c(-1.0)]);
        assert_eq!(diff_encode(&DiffStream::new(vec![c(1.0); 3]).unwrap()), vec![c(1.0); 3]);
        assert!(DiffStream::new(vec![c(2.0)]).is_err());
    }

    #[test]
    fn noiseless_diff_sample_matches_product_form() {
        let q = Psk::qpsk();
        let cs: Vec<Complex64> = [1, 3, 2].iter().map(|&k| q.point(k)).collect();
        let x = diff_transmit_sequence(&DiffStream::new(cs.clone()).unwrap());
        let r = noiseless_samples(&x);
        let want = 0.5 + cs[0] + 0.5 * cs[0] * cs[1];
        assert!((r[1] - want).norm() < 1e-15);
        // n = 2: (c0)(1 + c1 c2 + 2 c1)/2
        let want = cs[0] * (1.0 + cs[1] * cs[2] + 2.0 * cs[1]) / 2.0;
        assert!((r[2] - want).norm() < 1e-15);
    }

    #[test]
    fn frame_text_round_trip() {
        let f = build_frame(3, 1, &[Complex64::new(0.1, -0.2), c(1.0), c(-1.0)], c(1.0)).unwrap();
        let text = f.serialize();
        let g = Frame::parse(&text).unwrap();
        assert_eq!(g, f);
        assert_eq!(g.serialize(), text);
        let err = Frame::parse("pilot,1,0\nzero,1,0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(Frame::parse("bogus,1,0").is_err());
    }
}
