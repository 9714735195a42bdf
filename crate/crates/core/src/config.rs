//! Run configuration: a TOML document whose every key can be overridden from
//! the command line by its dotted name (`--solver.lambda 100`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FilterConfig, LogFormat};
use crate::eval::{EvalConfig, Protocol};
use crate::partial::DecayParams;
use crate::solver::{ModelKind, SolverConfig};
use crate::synth::SynthConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub delimiter: char,
    pub header: bool,
    pub min_item_freq: usize,
    pub min_session_len: usize,
    pub ratios: [f64; 3],
}

impl Default for DataSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        let l = LogFormat::default();
        Self {
            delimiter: l.delimiter,
            header: l.header,
            min_item_freq: f.min_item_freq,
            min_session_len: f.min_session_len,
            ratios: f.ratios,
        }
    }
}

impl DataSection {
    pub fn format(&self) -> LogFormat {
        LogFormat {
            delimiter: self.delimiter,
            header: self.header,
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            min_item_freq: self.min_item_freq,
            min_session_len: self.min_session_len,
            ratios: self.ratios,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kind: ModelKind::Link }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSection {
    /// Additive smoothing of the Markov teacher's transition counts.
    pub smoothing: f64,
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self { smoothing: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub protocol: Protocol,
    pub ks: Vec<usize>,
    pub top_n: usize,
    pub exclude_seen: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::Iterative,
            ks: vec![5, 20],
            top_n: 20,
            exclude_seen: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub data: DataSection,
    pub model: ModelSection,
    pub solver: SolverConfig,
    pub decay: DecayParams,
    pub teacher: TeacherSection,
    pub eval: EvalSection,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Loads `path` (or defaults when `None`) and applies `(dotted.key, value)` overrides.
    /// Values are parsed as TOML literals, falling back to plain strings.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, String> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_literal(raw))?;
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e| format!("invalid configuration: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.data.filter().validate().map_err(|e| e.to_string())?;
        if self.data.min_session_len < 2 {
            return Err(format!("data.min_session_len must be at least 2, got {}", self.data.min_session_len));
        }
        self.solver.validate().map_err(|e| e.to_string())?;
        self.decay.validate()?;
        if !(self.teacher.smoothing.is_finite() && self.teacher.smoothing >= 0.0) {
            return Err(format!("teacher.smoothing must be nonnegative, got {}", self.teacher.smoothing));
        }
        self.eval_config().validate().map_err(|e| e.to_string())?;
        self.synth.validate()
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            ks: self.eval.ks.clone(),
            delta_inf: self.decay.delta_inf,
            exclude_seen: self.eval.exclude_seen,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed config key {key:?}"));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("config key {key:?}: {p:?} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
