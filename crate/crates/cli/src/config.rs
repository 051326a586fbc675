//! Run configuration: a flat `key = value` file, `ACNN_*` environment
//! variables and command-line overrides, applied in that order on top of a
//! preset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use acnn::datasets::{SplitKind, DEFAULT_RATIO};
use acnn::featurize::FcMode;
use acnn::network::Activation;
use acnn::train::{ModelConfig, TrainConfig};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "ACNN_";

/// Every recognised key, in the order the resolved file lists them.
pub const KEYS: &[&str] = &[
    "preset",
    "index",
    "split_file",
    "split_kind",
    "split_seed",
    "ratio",
    "n_types",
    "n_radial",
    "layers",
    "cutoff",
    "max_neighbors",
    "fc",
    "activation",
    "dropout",
    "beta",
    "bias",
    "batch_size",
    "epochs",
    "lr",
    "seed",
    "deterministic",
    "threads",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub index: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    pub split_kind: SplitKind,
    pub split_seed: u64,
    pub ratio: f64,
    pub n_types: usize,
    pub n_radial: usize,
    pub layers: Vec<usize>,
    pub cutoff: f64,
    pub max_neighbors: usize,
    pub fc: FcMode,
    pub activation: Activation,
    pub dropout: f64,
    /// Per-filter scale; `None` keeps 1.
    pub beta: Option<Vec<f64>>,
    /// Per-filter offset; `None` keeps 0.
    pub bias: Option<Vec<f64>>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub deterministic: bool,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let model = match name {
            "core" => ModelConfig::core(),
            "refined" => ModelConfig::refined(),
            other => return Err(CliError::config(format!("unknown preset {other:?} (core, refined)"))),
        };
        let train = TrainConfig::default();
        Ok(Self {
            preset: name.to_string(),
            index: None,
            split_file: None,
            split_kind: SplitKind::Random,
            split_seed: 0,
            ratio: DEFAULT_RATIO,
            n_types: model.n_types,
            n_radial: model.n_filters,
            layers: model.hidden,
            cutoff: model.cutoff,
            max_neighbors: model.max_neighbors,
            fc: model.fc_mode,
            activation: model.activation,
            dropout: model.dropout_p,
            beta: None,
            bias: None,
            batch_size: train.batch_size,
            epochs: train.epochs,
            lr: train.lr,
            seed: train.seed,
            deterministic: train.deterministic,
            threads: 0,
        })
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            n_types: self.n_types,
            n_filters: self.n_radial,
            hidden: self.layers.clone(),
            cutoff: self.cutoff,
            max_neighbors: self.max_neighbors,
            fc_mode: self.fc,
            activation: self.activation,
            dropout_p: self.dropout,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: self.lr,
            seed: self.seed,
            deterministic: self.deterministic,
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |e: String| CliError::config(format!("{key} = {value:?}: {e}"));
        match key {
            "preset" => {}
            "index" => self.index = (!value.is_empty()).then(|| PathBuf::from(value)),
            "split_file" => self.split_file = (!value.is_empty()).then(|| PathBuf::from(value)),
            "split_kind" => self.split_kind = value.parse().map_err(|e: acnn::AcnnError| bad(e.to_string()))?,
            "split_seed" => self.split_seed = num(value).map_err(bad)?,
            "ratio" => self.ratio = num(value).map_err(bad)?,
            "n_types" => self.n_types = num(value).map_err(bad)?,
            "n_radial" => self.n_radial = num(value).map_err(bad)?,
            "layers" => self.layers = list(value).map_err(bad)?,
            "cutoff" => self.cutoff = num(value).map_err(bad)?,
            "max_neighbors" => self.max_neighbors = num(value).map_err(bad)?,
            "fc" => self.fc = value.parse().map_err(|e: acnn::AcnnError| bad(e.to_string()))?,
            "activation" => self.activation = value.parse().map_err(|e: acnn::AcnnError| bad(e.to_string()))?,
            "dropout" => self.dropout = num(value).map_err(bad)?,
            "beta" => self.beta = optional_list(value).map_err(bad)?,
            "bias" => self.bias = optional_list(value).map_err(bad)?,
            "batch_size" => self.batch_size = num(value).map_err(bad)?,
            "epochs" => self.epochs = num(value).map_err(bad)?,
            "lr" => self.lr = num(value).map_err(bad)?,
            "seed" => self.seed = num(value).map_err(bad)?,
            "deterministic" => self.deterministic = boolean(value).map_err(bad)?,
            "threads" => self.threads = num(value).map_err(bad)?,
            other => return Err(CliError::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::config(m));
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return fail(format!("ratio must lie in (0, 1), got {}", self.ratio));
        }
        if self.n_types == 0 || self.n_radial == 0 {
            return fail("n_types and n_radial must be at least 1".into());
        }
        if self.layers.contains(&0) {
            return fail("layer widths must be positive".into());
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return fail(format!("cutoff must be positive, got {}", self.cutoff));
        }
        if self.max_neighbors == 0 {
            return fail("max_neighbors must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        for (name, v) in [("beta", &self.beta), ("bias", &self.bias)] {
            if let Some(v) = v {
                if v.len() != self.n_radial {
                    return fail(format!(
                        "{name} has {} values but n_radial = {}",
                        v.len(),
                        self.n_radial
                    ));
                }
            }
        }
        self.train().validate().map_err(|e| CliError::config(e.to_string()))
    }

    /// The fully resolved configuration in the same `key = value` format.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let floats = |v: &Option<Vec<f64>>| v.as_ref().map(|v| join(v)).unwrap_or_default();
        let mut s = String::from("# resolved acnn run configuration\n");
        for key in KEYS {
            let value = match *key {
                "preset" => self.preset.clone(),
                "index" => path(&self.index),
                "split_file" => path(&self.split_file),
                "split_kind" => self.split_kind.to_string(),
                "split_seed" => self.split_seed.to_string(),
                "ratio" => fmt_f64(self.ratio),
                "n_types" => self.n_types.to_string(),
                "n_radial" => self.n_radial.to_string(),
                "layers" => join(&self.layers),
                "cutoff" => fmt_f64(self.cutoff),
                "max_neighbors" => self.max_neighbors.to_string(),
                "fc" => self.fc.to_string(),
                "activation" => self.activation.to_string(),
                "dropout" => fmt_f64(self.dropout),
                "beta" => floats(&self.beta),
                "bias" => floats(&self.bias),
                "batch_size" => self.batch_size.to_string(),
                "epochs" => self.epochs.to_string(),
                "lr" => fmt_f64(self.lr),
                "seed" => self.seed.to_string(),
                "deterministic" => self.deterministic.to_string(),
                "threads" => self.threads.to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn join<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(x.trim())).collect()
}

fn optional_list(v: &str) -> Result<Option<Vec<f64>>, String> {
    if v.trim().is_empty() {
        Ok(None)
    } else {
        list(v).map(Some)
    }
}

fn boolean(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

/// Raw `key -> value` pairs from a config file. Relative paths are taken
/// relative to the file's directory.
pub fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            parse_pair(line).map_err(|e| CliError::config(format!("{}:{}: {e}", path.display(), k + 1)))?;
        let value = match key.as_str() {
            "index" | "split_file" if !value.is_empty() => base.join(&value).display().to_string(),
            _ => value,
        };
        out.insert(key, value);
    }
    Ok(out)
}

pub fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key = value, got {s:?}"))?;
    let key = k.trim().to_ascii_lowercase();
    if !KEYS.contains(&key.as_str()) {
        return Err(format!("unknown config key {key:?}"));
    }
    Ok((key, v.trim().to_string()))
}

/// `ACNN_<KEY>` variables for every known key.
pub fn from_env(vars: impl IntoIterator<Item = (String, String)>) -> BTreeMap<String, String> {
    vars.into_iter()
        .filter_map(|(k, v)| {
            let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            KEYS.contains(&key.as_str()).then_some((key, v))
        })
        .collect()
}

/// Layers of raw settings, lowest precedence first.
pub fn resolve(layers: &[BTreeMap<String, String>]) -> Result<RunConfig, CliError> {
    let preset = layers
        .iter()
        .rev()
        .find_map(|l| l.get("preset"))
        .map_or("core", String::as_str);
    let mut cfg = RunConfig::preset(preset)?;
    for layer in layers {
        for (k, v) in layer {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
