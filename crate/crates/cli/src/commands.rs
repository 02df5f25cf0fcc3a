use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use num_complex::Complex64;
use psbm::ber::{measure_gap, run_ber, throughput_report, BerCurve};
use psbm::isi_map::{find_two_tap_regions, scan_plane, uniform_grid, IsiScanConfig, TwoTapRegion};
use psbm::pulse::{lag_product_exact, psd, spectral_efficiency, truncation_study, PulseSpec};
use psbm::sequences::{
    alternating_pilot_sequence, build_frame, near_orthogonality_probability, orthogonality_probability,
    verify_isi_free_subsequence, Frame, Role,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{config_error, BerPlan, Validate};
use crate::manifest::{write_json, Run};

/// Some verification inside a command failed; outputs were still written.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseVerifyParams {
    pub d_max: f64,
    /// Truncation half-widths for the table; `d_max` is always included.
    pub d_grid: Vec<f64>,
    pub n_max: u32,
    pub tolerance: f64,
}

impl Default for PulseVerifyParams {
    fn default() -> Self {
        Self {
            d_max: 8.0,
            d_grid: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            n_max: 12,
            tolerance: 1e-3,
        }
    }
}

impl Validate for PulseVerifyParams {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.d_max > 0.0) {
            p.push(format!("d_max: {} must be > 0", self.d_max));
        }
        if self.d_grid.iter().any(|d| !(*d > 0.0)) {
            p.push("d_grid: values must be > 0".to_string());
        }
        if !(self.tolerance > 0.0) {
            p.push(format!("tolerance: {} must be > 0", self.tolerance));
        }
        p
    }
}

pub fn pulse_verify(params: PulseVerifyParams, out: &Path) -> Result<()> {
    params.check()?;
    let mut grid: Vec<f64> = params.d_grid.iter().copied().filter(|d| *d <= params.d_max).collect();
    if !grid.contains(&params.d_max) {
        grid.push(params.d_max);
    }
    let n_values: Vec<u32> = (0..=params.n_max).collect();
    let rows = truncation_study(&n_values, &grid)?;
    let mut run = Run::new("pulse-verify", serde_json::to_value(&params)?, None, out)?;
    let mut csv = String::from("n,d,ratio,integral,exact\n");
    for r in &rows {
        writeln!(csv, "{},{},{:e},{:e},{:e}", r.n, r.d, r.ratio, r.integral, r.exact)?;
    }
    run.write("truncation.csv", csv.as_bytes())?;
    let mut failures = Vec::new();
    for r in rows.iter().filter(|r| r.d == params.d_max) {
        let exact = lag_product_exact(r.n as i64)?;
        let err = (r.integral - exact).abs();
        let pass = err <= params.tolerance;
        println!(
            "{} n={:>2} d={} integral={:+.8} exact={:+.8} abs_error={:.2e}",
            if pass { "PASS" } else { "FAIL" },
            r.n,
            r.d,
            r.integral,
            exact,
            err
        );
        if !pass {
            failures.push(r.n);
        }
    }
    run.finish_to_file("pulse-verify_manifest.json")?;
    if failures.is_empty() {
        Ok(())
    } else {
        bail!(VerificationFailed(format!("n = {failures:?} outside tolerance at d = {}", params.d_max)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range { min: f64, max: f64, step: f64 },
}

impl GridSpec {
    fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Range { min, max, step } if *step > 0.0 && max >= min => uniform_grid(*min, *max, *step),
            GridSpec::Range { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsiMapParams {
    pub alpha: GridSpec,
    pub tau: GridSpec,
    pub mu_thresholds: Vec<f64>,
    pub trunc_halfwidth: f64,
    pub max_lag: usize,
}

impl Default for IsiMapParams {
    fn default() -> Self {
        let d = IsiScanConfig::default();
        Self {
            alpha: GridSpec::Range { min: 0.0, max: 2.0, step: 0.01 },
            tau: GridSpec::Range { min: 0.0, max: 0.95, step: 0.01 },
            mu_thresholds: d.mu_thresholds,
            trunc_halfwidth: d.trunc_halfwidth,
            max_lag: d.max_lag,
        }
    }
}

/// Two-tap regions quoted for the plane scan, as `(label, alpha range, tau range)`.
const QUOTED: [(&str, (f64, f64), (f64, f64)); 3] = [
    ("(1.0, 0.5)", (1.0, 1.0), (0.5, 0.5)),
    ("(1.07, 0.70-0.71)", (1.06, 1.08), (0.70, 0.71)),
    ("(1.65-1.85, 0.47-0.50)", (1.65, 1.85), (0.47, 0.50)),
];

fn quoted_label(r: &TwoTapRegion) -> &'static str {
    QUOTED
        .iter()
        .find(|(_, a, t)| r.overlaps(*a, *t))
        .map(|(l, _, _)| *l)
        .unwrap_or("")
}

impl IsiMapParams {
    fn scan_config(&self) -> IsiScanConfig {
        IsiScanConfig {
            alpha_grid: self.alpha.values(),
            tau_grid: self.tau.values(),
            mu_thresholds: self.mu_thresholds.clone(),
            trunc_halfwidth: self.trunc_halfwidth,
            max_lag: self.max_lag,
        }
    }
}

impl Validate for IsiMapParams {
    fn problems(&self) -> Vec<String> {
        match self.scan_config().validate() {
            Ok(()) => Vec::new(),
            Err(psbm::Error::Config(list)) => list,
            Err(e) => vec![e.to_string()],
        }
    }
}

pub fn isi_map(params: IsiMapParams, out: &Path) -> Result<()> {
    params.check()?;
    let cfg = params.scan_config();
    let grid = scan_plane(&cfg)?;
    let mut run = Run::new("isi-map", serde_json::to_value(&params)?, None, out)?;
    let mut csv = Vec::new();
    grid.write_csv(&mut csv)?;
    run.write("isi_map.csv", &csv)?;
    let mut summary = String::from("mu,alpha_min,alpha_max,tau_min,tau_max,cells,quoted\n");
    for &mu in &cfg.mu_thresholds {
        let regions = find_two_tap_regions(&grid, mu)?;
        println!("mu={mu}: {} two-tap region(s)", regions.len());
        for r in &regions {
            let label = quoted_label(r);
            writeln!(
                summary,
                "{mu},{},{},{},{},{},{label}",
                r.alpha_min, r.alpha_max, r.tau_min, r.tau_max, r.cells
            )?;
            println!(
                "  alpha [{:.2}, {:.2}] tau [{:.2}, {:.2}] cells {}{}",
                r.alpha_min,
                r.alpha_max,
                r.tau_min,
                r.tau_max,
                r.cells,
                if label.is_empty() { String::new() } else { format!("  near {label}") }
            );
        }
    }
    run.write("isi_regions.csv", summary.as_bytes())?;
    run.finish_to_file("isi-map_manifest.json")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PsdScheme {
    Nyquist,
    Psbm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdParams {
    pub scheme: PsdScheme,
    /// Roll-off of the Nyquist pulse.
    pub alpha: f64,
    /// Largest frequency in units of `1/Ts`.
    pub f_max: f64,
    pub points: usize,
}

impl Default for PsdParams {
    fn default() -> Self {
        Self {
            scheme: PsdScheme::Psbm,
            alpha: 1.0,
            f_max: 1.5,
            points: 301,
        }
    }
}

impl Validate for PsdParams {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.points < 2 {
            p.push(format!("points: {} must be >= 2", self.points));
        }
        if !(self.f_max > 0.0) {
            p.push(format!("f_max: {} must be > 0", self.f_max));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            p.push(format!("alpha: {} is not in [0, 1]", self.alpha));
        }
        p
    }
}

pub fn psd_cmd(params: PsdParams, out: &Path) -> Result<()> {
    params.check()?;
    let ts = 1.0;
    let pulse = match params.scheme {
        PsdScheme::Nyquist => PulseSpec::new(params.alpha, ts, 4.0, 16)?,
        PsdScheme::Psbm => PulseSpec::psbm(ts, 4.0, 16)?,
    };
    let white = [Complex64::new(1.0, 0.0)];
    let mut csv = String::from("f,psd\n");
    for i in 0..params.points {
        let f = -params.f_max + 2.0 * params.f_max * i as f64 / (params.points - 1) as f64;
        writeln!(csv, "{f},{:e}", psd(&pulse, ts, &white, f)?)?;
    }
    let mut run = Run::new("psd", serde_json::to_value(&params)?, None, out)?;
    run.write("psd.csv", csv.as_bytes())?;
    run.finish_to_file("psd_manifest.json")?;
    println!(
        "spectral efficiency {:.4} symbols/s/Hz",
        spectral_efficiency(&pulse, ts)
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FrameDesign {
    PilotFrame,
    Alternating,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameParams {
    pub source: Option<String>,
    pub design: FrameDesign,
    pub ld: usize,
    pub lp: usize,
    pub groups: usize,
}

/// Parses a frame file or builds one with unit data and pilots, then echoes
/// it with the ISI seen at every position.
pub fn frame_cmd(params: FrameParams, text: Option<String>, out: &Path) -> Result<()> {
    let one = Complex64::new(1.0, 0.0);
    let frame = match &text {
        Some(t) => Frame::parse(t).map_err(|e| config_error(vec![e.to_string()]))?,
        None => {
            let data = vec![one; params.ld * params.groups];
            let built = match params.design {
                FrameDesign::PilotFrame => build_frame(params.ld, params.lp, &data, one),
                FrameDesign::Alternating => alternating_pilot_sequence(&data, one),
            };
            built.map_err(|e| config_error(vec![e.to_string()]))?
        }
    };
    for w in frame.warnings() {
        eprintln!("warning: {w}");
    }
    let residual = verify_isi_free_subsequence(&frame.symbols());
    let mut csv = String::from("index,role,re,im,isi_re,isi_im\n");
    for (k, (p, r)) in frame.positions.iter().zip(&residual).enumerate() {
        writeln!(csv, "{k},{},{},{},{},{}", p.role.name(), p.value.re, p.value.im, r.re, r.im)?;
    }
    print!("{frame}");
    let data_free = frame.indices(Role::Data).iter().filter(|&&k| residual[k].norm() == 0.0).count();
    let pilot_free = frame.indices(Role::Pilot).iter().filter(|&&k| residual[k].norm() == 0.0).count();
    println!(
        "# {} positions, ld={} lp={}; ISI-free data {}/{}, ISI-free pilots {}/{}",
        frame.len(),
        frame.ld,
        frame.lp,
        data_free,
        frame.count(Role::Data),
        pilot_free,
        frame.count(Role::Pilot)
    );
    let mut run = Run::new("frame", serde_json::to_value(&params)?, None, out)?;
    run.write("frame.txt", frame.serialize().as_bytes())?;
    run.write("frame_isi.csv", csv.as_bytes())?;
    run.finish_to_file("frame_manifest.json")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpreadProbParams {
    pub n_max: usize,
    pub kappa: Vec<f64>,
}

impl Default for SpreadProbParams {
    fn default() -> Self {
        Self {
            n_max: 64,
            kappa: vec![0.05, 0.1],
        }
    }
}

impl Validate for SpreadProbParams {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.n_max < 2 {
            p.push(format!("n_max: {} must be >= 2", self.n_max));
        }
        for k in &self.kappa {
            if !(*k >= 0.0) {
                p.push(format!("kappa: {k} must be >= 0"));
            }
        }
        p
    }
}

pub fn spread_prob(params: SpreadProbParams, out: &Path) -> Result<()> {
    params.check()?;
    let mut csv = String::from("n,orthogonal");
    for k in &params.kappa {
        write!(csv, ",kappa_{k}")?;
    }
    csv.push('\n');
    for n in 2..=params.n_max {
        write!(csv, "{n},{}", orthogonality_probability(n)?)?;
        for &k in &params.kappa {
            write!(csv, ",{}", near_orthogonality_probability(n, k)?)?;
        }
        csv.push('\n');
    }
    let mut run = Run::new("spread-prob", serde_json::to_value(&params)?, None, out)?;
    run.write("spread_prob.csv", csv.as_bytes())?;
    run.finish_to_file("spread-prob_manifest.json")?;
    Ok(())
}

fn stem(name: &str, curve: &BerCurve) -> String {
    let c = &curve.config;
    format!("{name}_{}_{}_seed{}", c.scheme.name(), c.detector.name(), c.master_seed)
}

pub fn ber(mut plan: BerPlan, seed: Option<u64>, paired: bool, out: &Path) -> Result<()> {
    let paired = paired || plan.paired;
    if paired && plan.experiments.len() < 2 {
        bail!(config_error(vec!["--paired needs at least two experiments".into()]));
    }
    let shared = plan.experiments.first().map(|e| e.config.master_seed);
    for exp in &mut plan.experiments {
        if let Some(s) = seed {
            exp.config.master_seed = s;
        } else if !exp.seed_given {
            eprintln!("warning: experiment {}: master_seed not set, using 0", exp.name);
            exp.config.master_seed = 0;
        }
        if paired && seed.is_none() {
            if let Some(s) = shared {
                if exp.config.master_seed != s {
                    eprintln!("warning: experiment {}: paired run uses master_seed {s}", exp.name);
                    exp.config.master_seed = s;
                }
            }
        }
        for w in exp.config.warnings() {
            eprintln!("warning: experiment {}: {w}", exp.name);
        }
    }
    let mut curves = Vec::new();
    for exp in &plan.experiments {
        let params = json!({ "name": exp.name, "config": exp.config });
        let mut run = Run::new("ber", params, Some(exp.config.master_seed), out)?;
        let curve = run_ber(&exp.config)?;
        let stem = stem(&exp.name, &curve);
        run.write(&format!("{stem}.csv"), curve.to_csv_string().as_bytes())?;
        let json_path = run.claim(&format!("{stem}.json"));
        let manifest = run.finish();
        write_json(
            &json_path,
            &json!({ "config": curve.config, "points": curve.points, "manifest": manifest }),
        )?;
        let report = throughput_report(&exp.config);
        println!(
            "{}: {} {} {}, multiplexed/nyquist frame time {}",
            exp.name,
            exp.config.scheme.name(),
            exp.config.sequence_design.name(),
            exp.config.detector.name(),
            report.relative_time
        );
        for p in &curve.points {
            println!("  {:>6} dB  ber {:.4e}  errors {:>8}  bits {:>12}", p.snr_db, p.ber, p.errors, p.bits);
        }
        curves.push((exp.name.clone(), curve));
    }
    if paired {
        let (a_name, a) = &curves[0];
        let (b_name, b) = &curves[1];
        let gap = measure_gap(a, b, plan.gap_target);
        let seed = a.config.master_seed;
        let params = json!({ "a": a_name, "b": b_name, "target": plan.gap_target });
        let mut run = Run::new("ber --paired", params, Some(seed), out)?;
        let path = run.claim(&format!("gap_{a_name}_vs_{b_name}_seed{seed}.json"));
        let gap_db = gap.as_ref().ok().copied();
        match &gap {
            Ok(g) => println!("gap {a_name} - {b_name} at BER {:e}: {g:.3} dB", plan.gap_target),
            Err(e) => println!("gap {a_name} - {b_name}: {e}"),
        }
        let manifest = run.finish();
        write_json(
            &path,
            &json!({ "a": a_name, "b": b_name, "target": plan.gap_target, "gap_db": gap_db, "manifest": manifest }),
        )?;
    }
    Ok(())
}
