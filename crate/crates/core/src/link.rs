//! Symbol-rate equivalent model of the multiplexed link.
//!
//! With row vectors, `r = s A diag(h) + w A0^T`, where `A` is the symmetric
//! tridiagonal ISI matrix (diagonal 1, off-diagonals 1/2), `A = A0 A0^T` with
//! `A0` lower bidiagonal, and `w` is white. The colored noise `w A0^T` has
//! covariance `sigma_w^2 A`: unit lag-0, half at lag 1, zero beyond.
//!
//! Blocks have no wraparound, so the first and last symbols see one-sided ISI.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::complex_gaussian;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Symbol-rate signalling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Zero-ISI signalling, one symbol per pulse period.
    Nyquist,
    /// 100% roll-off pulse at 50% packing, taps (1/2, 1, 1/2).
    Psbm,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Nyquist => "nyquist",
            Scheme::Psbm => "psbm",
        }
    }
}

/// The `N x N` tridiagonal ISI matrix; stored implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IsiMatrix {
    order: usize,
}

impl IsiMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => 1.0,
            1 => 0.5,
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// Closed-form eigenvalues `1 + cos(k pi / (N + 1))`, `k = 1..=N`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.order as f64;
        (1..=self.order)
            .map(|k| 1.0 + (k as f64 * PI / (n + 1.0)).cos())
            .collect()
    }

    /// Row-vector product `s A`.
    pub fn apply(&self, s: &[Complex64]) -> Vec<Complex64> {
        let n = s.len();
        (0..n)
            .map(|j| {
                let left = if j > 0 { s[j - 1] } else { ZERO };
                let right = if j + 1 < n { s[j + 1] } else { ZERO };
                s[j] + 0.5 * (left + right)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.to_dense() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

pub fn build_isi_matrix(n: usize) -> Result<IsiMatrix> {
    if n == 0 {
        return Err(invalid("N", "order must be >= 1"));
    }
    Ok(IsiMatrix { order: n })
}

/// Lower-bidiagonal Cholesky factor `A0` of the ISI matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularFactor {
    /// `A0[i][i]`.
    diag: Vec<f64>,
    /// `A0[i][i-1]`; `sub[0]` is unused and zero.
    sub: Vec<f64>,
}

impl TriangularFactor {
    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.sub[i]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.order();
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// Row-vector product `w A0^T`, i.e. `(A0 w^T)^T`.
    pub fn color(&self, w: &[Complex64]) -> Vec<Complex64> {
        (0..w.len())
            .map(|j| {
                let prev = if j > 0 { self.sub[j] * w[j - 1] } else { ZERO };
                self.diag[j] * w[j] + prev
            })
            .collect()
    }

    /// Row-vector product `x A0^{-T}` by forward substitution.
    pub fn whiten_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        let mut prev = ZERO;
        for j in 0..x.len() {
            let z = (x[j] - self.sub[j] * prev) / self.diag[j];
            out[j] = z;
            prev = z;
        }
    }
}

/// Cholesky factorization specialised to the tridiagonal ISI matrix.
pub fn factorize(a: &IsiMatrix) -> Result<TriangularFactor> {
    let n = a.order();
    let mut diag = Vec::with_capacity(n);
    let mut sub = Vec::with_capacity(n);
    for i in 0..n {
        let l = if i == 0 { 0.0 } else { a.entry(i, i - 1) / diag[i - 1] };
        let d2 = a.entry(i, i) - l * l;
        if !(d2 > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: i });
        }
        sub.push(l);
        diag.push(d2.sqrt());
    }
    Ok(TriangularFactor { diag, sub })
}

/// How correlated noise blocks are synthesised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMethod {
    /// `w A0^T` from white `w`; exact covariance `sigma^2 A` on the block.
    Triangular,
    /// `(u_n + u_{n-1}) / sqrt(2)`; stationary, lag-1 correlation 1/2.
    Fir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    pub samples: Vec<Complex64>,
    pub sigma_w: f64,
}

pub fn gen_noise<R: Rng + ?Sized>(
    n: usize,
    sigma_w: f64,
    method: NoiseMethod,
    rng: &mut R,
) -> Result<NoiseBlock> {
    if !(sigma_w > 0.0) {
        return Err(invalid("sigma_w", format!("{sigma_w} must be > 0")));
    }
    let var = sigma_w * sigma_w;
    let samples = match method {
        NoiseMethod::Triangular => {
            let factor = factorize(&build_isi_matrix(n)?)?;
            let white: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng, var)).collect();
            factor.color(&white)
        }
        NoiseMethod::Fir => {
            let mut prev = complex_gaussian(rng, var);
            (0..n)
                .map(|_| {
                    let u = complex_gaussian(rng, var);
                    let w = (u + prev) * FRAC_1_SQRT_2;
                    prev = u;
                    w
                })
                .collect()
        }
    };
    Ok(NoiseBlock { samples, sigma_w })
}

/// Block length, ISI matrix, its factor and noise level.
#[derive(Debug, Clone)]
pub struct DiscreteLink {
    pub isi: IsiMatrix,
    pub factor: TriangularFactor,
    pub sigma_w: f64,
}

impl DiscreteLink {
    pub fn new(n: usize, sigma_w: f64) -> Result<Self> {
        if !(sigma_w >= 0.0) {
            return Err(invalid("sigma_w", format!("{sigma_w} must be >= 0")));
        }
        let isi = build_isi_matrix(n)?;
        let factor = factorize(&isi)?;
        Ok(Self {
            isi,
            factor,
            sigma_w,
        })
    }

    pub fn order(&self) -> usize {
        self.isi.order()
    }

    /// `s A diag(h) + white A0^T` for a caller-supplied white block.
    pub fn transmit_with(
        &self,
        s: &[Complex64],
        h: &[Complex64],
        white: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        let n = self.order();
        for (context, len) in [("symbols", s.len()), ("gains", h.len()), ("noise", white.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    actual: len,
                });
            }
        }
        let colored = self.factor.color(white);
        Ok(self
            .isi
            .apply(s)
            .into_iter()
            .zip(h)
            .zip(colored)
            .map(|((x, h), w)| x * h + w)
            .collect())
    }

    /// `s A diag(h) + w A0^T` with `w` white of variance `sigma_w^2`.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        s: &[Complex64],
        h: &[Complex64],
        rng: &mut R,
    ) -> Result<Vec<Complex64>> {
        let var = self.sigma_w * self.sigma_w;
        let white: Vec<Complex64> = (0..self.order())
            .map(|_| if var > 0.0 { complex_gaussian(rng, var) } else { ZERO })
            .collect();
        self.transmit_with(s, h, &white)
    }
}

/// Convenience form of [`DiscreteLink::transmit`].
pub fn transmit<R: Rng + ?Sized>(
    s: &[Complex64],
    h: &[Complex64],
    sigma_w: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    DiscreteLink::new(s.len(), sigma_w)?.transmit(s, h, rng)
}

/// Variance of the sum of `n` consecutive colored noise samples, in units of
/// `sigma_w^2`.
pub fn noise_sum_variance(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("N", "must be >= 1"));
    }
    Ok(2.0 * n as f64 - 1.0)
}

/// Splits samples into the two multiplexed streams. With 1-based indexing the
/// first holds `r_1, r_3, ...` and the second `r_2, r_4, ...`.
pub fn two_stream_view(r: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let odd = r.iter().step_by(2).copied().collect();
    let even = r.iter().skip(1).step_by(2).copied().collect();
    (odd, even)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn matrix_n3() {
        let a = build_isi_matrix(3).unwrap();
        assert_eq!(
            a.to_dense(),
            vec![vec![1.0, 0.5, 0.0], vec![0.5, 1.0, 0.5], vec![0.0, 0.5, 1.0]]
        );
        assert_eq!(build_isi_matrix(1).unwrap().to_dense(), vec![vec![1.0]]);
        assert!(build_isi_matrix(0).is_err());
    }

    #[test]
    fn smallest_eigenvalue_n8() {
        let ev = build_isi_matrix(8).unwrap().eigenvalues();
        let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - (1.0 + (8.0 * PI / 9.0).cos())).abs() < 1e-15);
        assert!((min - 0.0603).abs() < 1e-4);
    }

    #[test]
    fn factor_n2_by_hand() {
        let f = factorize(&build_isi_matrix(2).unwrap()).unwrap();
        assert_eq!(f.to_dense()[0], vec![1.0, 0.0]);
        assert!((f.entry(1, 0) - 0.5).abs() < 1e-15);
        assert!((f.entry(1, 1) - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(factorize(&build_isi_matrix(1).unwrap()).unwrap().to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn factor_reconstructs_matrix() {
        for n in [2, 9, 64] {
            let a = build_isi_matrix(n).unwrap();
            let l = factorize(&a).unwrap().to_dense();
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = (0..n).map(|k| l[i][k] * l[j][k]).sum();
                    assert!((v - a.entry(i, j)).abs() <= 1e-12);
                }
                assert!(l[i][i] > 0.0);
            }
        }
    }

    #[test]
    fn whiten_inverts_color() {
        let f = factorize(&build_isi_matrix(6).unwrap()).unwrap();
        let w: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64, -(i as f64) / 3.0)).collect();
        let mut out = vec![ZERO; 6];
        f.whiten_into(&f.color(&w), &mut out);
        for (a, b) in w.iter().zip(&out) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_transmit() {
        let mut rng = stream_rng(0, &[]);
        let r = transmit(&[c(1.0); 3], &[c(1.0); 3], 0.0, &mut rng).unwrap();
        assert_eq!(r, vec![c(1.5), c(2.0), c(1.5)]);
        let d = Complex64::new(0.3, -0.7);
        let h = Complex64::new(-1.1, 0.2);
        let r = transmit(&[d], &[h], 0.0, &mut rng).unwrap();
        assert!((r[0] - d * h).norm() < 1e-15);
        assert!(transmit(&[c(1.0); 3], &[c(1.0); 2], 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_gain_leaves_colored_noise() {
        let link = DiscreteLink::new(4, 1.0).unwrap();
        let white = vec![c(1.0), c(0.0), c(0.0), c(2.0)];
        let r = link.transmit_with(&[c(5.0); 4], &[ZERO; 4], &white).unwrap();
        assert_eq!(r, link.factor.color(&white));
    }

    #[test]
    fn sum_variance_formula() {
        assert_eq!(noise_sum_variance(1).unwrap(), 1.0);
        assert_eq!(noise_sum_variance(3).unwrap(), 5.0);
        assert!(noise_sum_variance(0).is_err());
    }

    #[test]
    fn stream_split() {
        let r: Vec<Complex64> = (1..=4).map(|i| c(i as f64)).collect();
        let (odd, even) = two_stream_view(&r);
        assert_eq!(odd, vec![c(1.0), c(3.0)]);
        assert_eq!(even, vec![c(2.0), c(4.0)]);
    }

    #[test]
    fn interleaved_streams_noiseless() {
        // a = (1, 1) on odd positions, b = (0, 0) on even positions.
        let s = [c(1.0), c(0.0), c(1.0), c(0.0)];
        let mut rng = stream_rng(0, &[]);
        let r = transmit(&s, &[c(1.0); 4], 0.0, &mut rng).unwrap();
        let (odd, _) = two_stream_view(&r);
        assert_eq!(odd, vec![c(1.0), c(1.0)]);
    }

    #[test]
    fn noise_rejects_nonpositive_sigma() {
        let mut rng = stream_rng(0, &[]);
        assert!(gen_noise(4, 0.0, NoiseMethod::Fir, &mut rng).is_err());
    }
}
