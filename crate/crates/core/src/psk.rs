//! M-PSK alphabets with Gray labelling.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Unit-energy M-PSK constellation, point `k` at angle `2 pi k / M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Psk {
    order: usize,
    points: Vec<Complex64>,
}

impl Psk {
    /// `order` must be 2, 4 or 8.
    pub fn new(order: usize) -> Result<Self> {
        if !matches!(order, 2 | 4 | 8) {
            return Err(invalid("modulation_order", format!("{order} is not one of 2, 4, 8")));
        }
        let points = (0..order)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / order as f64))
            .map(|z| Complex64::new(clean(z.re), clean(z.im)))
            .collect();
        Ok(Self { order, points })
    }

    pub fn bpsk() -> Self {
        Self::new(2).expect("valid order")
    }

    pub fn qpsk() -> Self {
        Self::new(4).expect("valid order")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order.trailing_zeros()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Gray label of point `index`.
    pub fn label(&self, index: usize) -> u32 {
        let i = index as u32;
        i ^ (i >> 1)
    }

    /// Point carrying the Gray label `bits`.
    pub fn index_of_label(&self, bits: u32) -> usize {
        let mut i = bits;
        let mut shift = bits >> 1;
        while shift != 0 {
            i ^= shift;
            shift >>= 1;
        }
        i as usize
    }

    /// Nearest constellation point.
    pub fn slice(&self, x: Complex64) -> usize {
        let m = self.order as f64;
        let k = (x.arg() * m / (2.0 * PI)).round();
        k.rem_euclid(m) as usize
    }

    pub fn bit_errors(&self, a: usize, b: usize) -> u32 {
        (self.label(a) ^ self.label(b)).count_ones()
    }

    /// Index of a point within `tol`, if any.
    pub fn find(&self, x: Complex64, tol: f64) -> Option<usize> {
        self.points.iter().position(|p| (p - x).norm() <= tol)
    }
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-15 {
        0.0
    } else {
        v
    }
}

impl TryFrom<usize> for Psk {
    type Error = crate::error::Error;

    fn try_from(order: usize) -> Result<Self> {
        Psk::new(order)
    }
}

impl From<Psk> for usize {
    fn from(p: Psk) -> usize {
        p.order
    }
}
