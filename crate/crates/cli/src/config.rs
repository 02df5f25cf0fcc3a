//! Config files: TOML for every command, plus the JSON written by `ber` for
//! replaying a run.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use psbm::ber::SimConfig;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use toml::{Table, Value};

/// Bundled figure presets.
const PRESETS: [(&str, &str); 7] = [
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("fig9", include_str!("../presets/fig9.toml")),
    ("fig10", include_str!("../presets/fig10.toml")),
];

/// A usage or configuration problem; maps to its own exit code.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for p in &self.0 {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(problems: Vec<String>) -> anyhow::Error {
    anyhow!(ConfigError(problems))
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Text of `--config` or `--preset`, with a label for diagnostics.
pub fn source_text(config: Option<&Path>, preset: Option<&str>) -> Result<Option<(String, String)>> {
    match (config, preset) {
        (Some(_), Some(_)) => Err(config_error(vec!["--config and --preset are mutually exclusive".into()])),
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Some((path.display().to_string(), text)))
        }
        (None, Some(name)) => PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, t)| Some((format!("preset {n}"), t.to_string())))
            .ok_or_else(|| {
                config_error(vec![format!("unknown preset {name}; available: {}", preset_names().join(", "))])
            }),
        (None, None) => Ok(None),
    }
}

fn parse_table(label: &str, text: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| config_error(vec![format!("{label}: {e}")]))
}

/// Splits `table` into keys that deserialize on their own into `T` and a
/// problem per key that does not.
fn screen_keys<T: DeserializeOwned>(table: &Table, prefix: &str) -> (Table, Vec<String>) {
    let mut good = Table::new();
    let mut problems = Vec::new();
    for (key, value) in table {
        let mut single = Table::new();
        single.insert(key.clone(), value.clone());
        match Value::Table(single).try_into::<T>() {
            Ok(_) => {
                good.insert(key.clone(), value.clone());
            }
            Err(e) => problems.push(format!("{prefix}{key}: {}", e.message().trim())),
        }
    }
    (good, problems)
}

/// Semantic checks on command parameters, all problems at once.
pub trait Validate {
    fn problems(&self) -> Vec<String>;

    fn check(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(config_error(p))
        }
    }
}

/// Parameters of a non-BER command from TOML, or the defaults.
pub fn load_params<T: DeserializeOwned + Default + Validate>(source: Option<(String, String)>) -> Result<T> {
    let Some((label, text)) = source else {
        return Ok(T::default());
    };
    let table = parse_table(&label, &text)?;
    let (good, mut problems) = screen_keys::<T>(&table, &format!("{label}: "));
    match Value::Table(good).try_into::<T>() {
        Ok(params) => problems.extend(params.problems().into_iter().map(|p| format!("{label}: {p}"))),
        Err(e) => problems.push(format!("{label}: {}", e.message().trim())),
    }
    if !problems.is_empty() {
        return Err(config_error(problems));
    }
    Value::Table(table)
        .try_into::<T>()
        .map_err(|e| config_error(vec![format!("{label}: {}", e.message().trim())]))
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct BerFile {
    #[serde(default)]
    paired: bool,
    gap_target: Option<f64>,
    #[serde(default)]
    defaults: Table,
    #[serde(default)]
    experiment: Vec<Table>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub config: SimConfig,
    pub seed_given: bool,
}

#[derive(Debug, Clone)]
pub struct BerPlan {
    pub paired: bool,
    pub gap_target: f64,
    pub experiments: Vec<Experiment>,
}

/// Reads a BER config. Every unknown or malformed field and every failed
/// combination check is reported before giving up.
pub fn load_ber_plan(source: Option<(String, String)>, json: bool) -> Result<BerPlan> {
    let Some((label, text)) = source else {
        bail!(config_error(vec!["ber needs --config or --preset".into()]));
    };
    if json {
        return load_replay(&label, &text);
    }
    let table = parse_table(&label, &text)?;
    let file: BerFile = Value::Table(table)
        .try_into()
        .map_err(|e| config_error(vec![format!("{label}: {}", e.message().trim())]))?;
    if file.experiment.is_empty() {
        return Err(config_error(vec![format!("{label}: no [[experiment]] sections")]));
    }
    let mut problems = Vec::new();
    let mut experiments = Vec::new();
    for (i, exp) in file.experiment.iter().enumerate() {
        let mut merged = file.defaults.clone();
        for (k, v) in exp {
            merged.insert(k.clone(), v.clone());
        }
        let name = match merged.remove("name") {
            Some(Value::String(s)) => s,
            Some(other) => {
                problems.push(format!("experiment {i}: name: expected a string, got {other}"));
                format!("exp{i}")
            }
            None => format!("exp{i}"),
        };
        let seed_given = merged.contains_key("master_seed");
        let (good, bad) = screen_keys::<SimConfig>(&merged, &format!("experiment {name}: "));
        let clean = bad.is_empty();
        problems.extend(bad);
        match Value::Table(good).try_into::<SimConfig>() {
            Ok(config) => {
                if let Err(psbm::Error::Config(list)) = config.validate() {
                    problems.extend(list.into_iter().map(|p| format!("experiment {name}: {p}")));
                }
                if clean {
                    experiments.push(Experiment {
                        name,
                        config,
                        seed_given,
                    });
                }
            }
            Err(e) => problems.push(format!("experiment {name}: {}", e.message().trim())),
        }
    }
    if let Some(t) = file.gap_target {
        if !(t > 0.0 && t < 0.5) {
            problems.push(format!("gap_target: {t} is not in (0, 0.5)"));
        }
    }
    if !problems.is_empty() {
        return Err(config_error(problems));
    }
    Ok(BerPlan {
        paired: file.paired,
        gap_target: file.gap_target.unwrap_or(1e-3),
        experiments,
    })
}

/// A JSON result file fed back in: its `config` object is rerun as is.
fn load_replay(label: &str, text: &str) -> Result<BerPlan> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| config_error(vec![format!("{label}: {e}")]))?;
    let name = value
        .pointer("/manifest/parameters/name")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .or_else(|| Path::new(label).file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .unwrap_or_else(|| "replay".to_string());
    let config_value = value.get("config").cloned().unwrap_or(value);
    let config: SimConfig =
        serde_json::from_value(config_value).map_err(|e| config_error(vec![format!("{label}: {e}")]))?;
    if let Err(psbm::Error::Config(list)) = config.validate() {
        return Err(config_error(list));
    }
    Ok(BerPlan {
        paired: false,
        gap_target: 1e-3,
        experiments: vec![Experiment {
            name,
            config,
            seed_given: true,
        }],
    })
}
