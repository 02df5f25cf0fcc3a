//! Roll-off / packing plane scan of matched-filter ISI.
//!
//! For each `(alpha, tau)` the symbol spacing is `(1 - tau) Tp` and the tap at
//! lag `k` is the pulse inner product at offset `k (1 - tau)`. Cells are then
//! classified by how many nonzero-lag taps exceed a threshold `mu`.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::pulse::{pulse_inner_products, IsiTapProfile, DEFAULT_TRUNCATION};

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.1, 0.05, 0.02, 0.01];
pub const DEFAULT_MAX_LAG: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsiScanConfig {
    pub alpha_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub mu_thresholds: Vec<f64>,
    pub trunc_halfwidth: f64,
    pub max_lag: usize,
}

impl Default for IsiScanConfig {
    /// `alpha` in `[0, 2]`, `tau` in `[0, 0.95]`, both in steps of 0.01.
    fn default() -> Self {
        Self {
            alpha_grid: uniform_grid(0.0, 2.0, 0.01),
            tau_grid: uniform_grid(0.0, 0.95, 0.01),
            mu_thresholds: DEFAULT_THRESHOLDS.to_vec(),
            trunc_halfwidth: DEFAULT_TRUNCATION,
            max_lag: DEFAULT_MAX_LAG,
        }
    }
}

/// `lo, lo + step, ...` up to and including `hi`. Steps that are reciprocals
/// of integers give the nearest representable decimal values.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    let inv = (1.0 / step).round();
    if (inv * step - 1.0).abs() < 1e-12 {
        let start = (lo * inv).round();
        (0..=n).map(|i| (start + i as f64) / inv).collect()
    } else {
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }
}

impl IsiScanConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.alpha_grid.is_empty() {
            problems.push("alpha_grid: empty".to_string());
        }
        if self.tau_grid.is_empty() {
            problems.push("tau_grid: empty".to_string());
        }
        if self.mu_thresholds.is_empty() {
            problems.push("mu_thresholds: empty".to_string());
        }
        if !strictly_increasing(&self.alpha_grid) {
            problems.push("alpha_grid: not strictly increasing".to_string());
        }
        if !strictly_increasing(&self.tau_grid) {
            problems.push("tau_grid: not strictly increasing".to_string());
        }
        if self.alpha_grid.iter().any(|a| !(0.0..=2.0).contains(a)) {
            problems.push("alpha_grid: values must lie in [0, 2]".to_string());
        }
        if self.tau_grid.iter().any(|t| !(0.0..1.0).contains(t)) {
            problems.push("tau_grid: values must lie in [0, 1)".to_string());
        }
        if self.mu_thresholds.iter().any(|m| !(*m > 0.0)) {
            problems.push("mu_thresholds: values must be > 0".to_string());
        }
        if !(self.trunc_halfwidth > 0.0) {
            problems.push("trunc_halfwidth: must be > 0".to_string());
        }
        if self.max_lag == 0 {
            problems.push("max_lag: must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// Matched-filter taps for lags `-max_lag..=max_lag`.
pub fn isi_taps(alpha: f64, tau: f64, d: f64, max_lag: usize) -> Result<IsiTapProfile> {
    if !(0.0..1.0).contains(&tau) {
        return Err(invalid("tau", format!("{tau} not in [0, 1)")));
    }
    if !(0.0..=2.0).contains(&alpha) {
        return Err(invalid("alpha", format!("{alpha} not in [0, 2]")));
    }
    Ok(taps_unchecked(alpha, tau, d, max_lag))
}

fn taps_unchecked(alpha: f64, tau: f64, d: f64, max_lag: usize) -> IsiTapProfile {
    let spacing = 1.0 - tau;
    let offsets: Vec<f64> = (0..=max_lag).map(|k| k as f64 * spacing).collect();
    let half = pulse_inner_products(alpha, &offsets, d);
    let max_lag = max_lag as i32;
    let taps = (-max_lag..=max_lag)
        .map(|k| (k, half[k.unsigned_abs() as usize]))
        .collect();
    IsiTapProfile {
        taps,
        symbol_spacing: spacing,
    }
}

/// Number of nonzero-lag taps with magnitude above `mu`.
pub fn isi_count(profile: &IsiTapProfile, mu: f64) -> usize {
    profile
        .taps
        .iter()
        .filter(|(k, v)| *k != 0 && v.abs() > mu)
        .count()
}

/// Plane classification used when reporting a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellClass {
    /// No tap above threshold.
    IsiFree,
    /// Exactly one symmetric pair of taps above threshold.
    TwoTap,
    Other,
}

impl CellClass {
    pub fn of(count: usize) -> Self {
        match count {
            0 => CellClass::IsiFree,
            2 => CellClass::TwoTap,
            _ => CellClass::Other,
        }
    }
}

/// Counts for every `(mu, alpha, tau)` cell of a scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsiCountGrid {
    pub alpha_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub mu_thresholds: Vec<f64>,
    /// Row-major `[mu][alpha][tau]`.
    pub counts: Vec<u32>,
}

impl IsiCountGrid {
    pub fn count(&self, mu_idx: usize, alpha_idx: usize, tau_idx: usize) -> u32 {
        let na = self.alpha_grid.len();
        let nt = self.tau_grid.len();
        self.counts[(mu_idx * na + alpha_idx) * nt + tau_idx]
    }

    pub fn mu_index(&self, mu: f64) -> Option<usize> {
        self.mu_thresholds
            .iter()
            .position(|m| (m - mu).abs() <= 1e-12 * mu.abs().max(1.0))
    }

    /// Count at the grid point nearest to `(alpha, tau)`.
    pub fn count_near(&self, mu_idx: usize, alpha: f64, tau: f64) -> u32 {
        self.count(mu_idx, nearest(&self.alpha_grid, alpha), nearest(&self.tau_grid, tau))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "alpha,tau,mu,count")?;
        for (m, mu) in self.mu_thresholds.iter().enumerate() {
            for (a, alpha) in self.alpha_grid.iter().enumerate() {
                for (t, tau) in self.tau_grid.iter().enumerate() {
                    writeln!(out, "{alpha},{tau},{mu},{}", self.count(m, a, t))?;
                }
            }
        }
        Ok(())
    }
}

fn nearest(grid: &[f64], x: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (*a - x).abs().total_cmp(&(*b - x).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Counts ISI components over the whole plane. Parallel over roll-off rows;
/// the result does not depend on the worker count.
pub fn scan_plane(config: &IsiScanConfig) -> Result<IsiCountGrid> {
    config.validate()?;
    let rows: Vec<Vec<IsiTapProfile>> = config
        .alpha_grid
        .par_iter()
        .map(|&alpha| {
            config
                .tau_grid
                .iter()
                .map(|&tau| taps_unchecked(alpha, tau, config.trunc_halfwidth, config.max_lag))
                .collect()
        })
        .collect();
    let mut counts = Vec::with_capacity(
        config.mu_thresholds.len() * config.alpha_grid.len() * config.tau_grid.len(),
    );
    for &mu in &config.mu_thresholds {
        for row in &rows {
            counts.extend(row.iter().map(|p| isi_count(p, mu) as u32));
        }
    }
    Ok(IsiCountGrid {
        alpha_grid: config.alpha_grid.clone(),
        tau_grid: config.tau_grid.clone(),
        mu_thresholds: config.mu_thresholds.clone(),
        counts,
    })
}

/// A 4-connected set of two-tap cells, summarized by its bounding box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoTapRegion {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub cells: usize,
}

impl TwoTapRegion {
    pub fn contains(&self, alpha: f64, tau: f64) -> bool {
        let eps = 1e-9;
        alpha >= self.alpha_min - eps
            && alpha <= self.alpha_max + eps
            && tau >= self.tau_min - eps
            && tau <= self.tau_max + eps
    }

    /// True when the bounding boxes overlap the given ranges.
    pub fn overlaps(&self, alpha: (f64, f64), tau: (f64, f64)) -> bool {
        self.alpha_min <= alpha.1 && self.alpha_max >= alpha.0 && self.tau_min <= tau.1 && self.tau_max >= tau.0
    }
}

/// Connected components (4-neighbourhood) of count-2 cells at threshold `mu`.
pub fn find_two_tap_regions(grid: &IsiCountGrid, mu: f64) -> Result<Vec<TwoTapRegion>> {
    let m = grid
        .mu_index(mu)
        .ok_or_else(|| invalid("mu", format!("{mu} not among the scanned thresholds")))?;
    let na = grid.alpha_grid.len();
    let nt = grid.tau_grid.len();
    let is_two = |a: usize, t: usize| grid.count(m, a, t) == 2;
    let mut seen = vec![false; na * nt];
    let mut regions = Vec::new();
    for a0 in 0..na {
        for t0 in 0..nt {
            if seen[a0 * nt + t0] || !is_two(a0, t0) {
                continue;
            }
            let mut queue = VecDeque::from([(a0, t0)]);
            seen[a0 * nt + t0] = true;
            let (mut amin, mut amax, mut tmin, mut tmax) = (a0, a0, t0, t0);
            let mut cells = 0;
            while let Some((a, t)) = queue.pop_front() {
                cells += 1;
                amin = amin.min(a);
                amax = amax.max(a);
                tmin = tmin.min(t);
                tmax = tmax.max(t);
                let mut visit = |a: usize, t: usize| {
                    if !seen[a * nt + t] && is_two(a, t) {
                        seen[a * nt + t] = true;
                        queue.push_back((a, t));
                    }
                };
                if a > 0 {
                    visit(a - 1, t);
                }
                if a + 1 < na {
                    visit(a + 1, t);
                }
                if t > 0 {
                    visit(a, t - 1);
                }
                if t + 1 < nt {
                    visit(a, t + 1);
                }
            }
            regions.push(TwoTapRegion {
                alpha_min: grid.alpha_grid[amin],
                alpha_max: grid.alpha_grid[amax],
                tau_min: grid.tau_grid[tmin],
                tau_max: grid.tau_grid[tmax],
                cells,
            });
        }
    }
    Ok(regions)
}
