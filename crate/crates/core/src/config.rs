//! Run configuration and its flat `key = value` text form.
//!
//! One setting per line, `#` starts a comment when it is the first
//! non-blank character of a line or follows whitespace. Keys not given take
//! their defaults. [`RunConfig::to_text`] writes every key in a fixed order,
//! and parsing that text yields the same configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{BlobSpec, DatasetSpec};
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::strategies::{StrategyConfig, StrategyKind};

/// Strategy parameters that stay fixed across iterations. The batch size and
/// seed of each iteration's [`StrategyConfig`] are derived by the run.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySettings {
    pub kind: StrategyKind,
    pub candidate_multiplier: f64,
    pub dsal_ratio: f64,
    /// Cluster count; `None` uses the number of classes.
    pub k: Option<usize>,
}

impl Default for StrategySettings {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Lcd,
            candidate_multiplier: StrategyConfig::DEFAULT_CANDIDATE_MULTIPLIER,
            dsal_ratio: StrategyConfig::DEFAULT_DSAL_RATIO,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub strategy: StrategySettings,
    /// `seed` is ignored; each iteration's learner seed is derived from `master_seed`.
    pub learner: LearnerConfig,
    pub init_fraction: f64,
    pub batch_fraction: f64,
    /// Number of query rounds after the initial model; `None` runs until the
    /// budget or the pool is exhausted.
    pub max_iterations: Option<usize>,
    /// Stop once this fraction of the pool is labeled.
    pub label_budget_fraction: f64,
    pub test_fraction: f64,
    pub stratified_init: bool,
    /// Record wall-clock times in the curve and manifest. Off by default so
    /// that reruns are byte-identical.
    pub record_wall_time: bool,
    pub master_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Blobs(BlobSpec::default()),
            strategy: StrategySettings::default(),
            learner: LearnerConfig::default(),
            init_fraction: 0.04,
            batch_fraction: 0.05,
            max_iterations: Some(10),
            label_budget_fraction: 1.0,
            test_fraction: 0.2,
            stratified_init: false,
            record_wall_time: false,
            master_seed: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("'{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(format!("'{key}': expected true or false, got '{value}'"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_value::<f64>(key, v.trim()))
        .collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') {
        return "";
    }
    let bytes = line.as_bytes();
    for i in 1..bytes.len() {
        if bytes[i] == b'#' && bytes[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

/// Parses `key = value` lines into a map, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected 'key = value', got '{line}'", n + 1))
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::config(format!("line {}: empty key", n + 1)));
        }
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::config(format!("line {}: '{key}' set twice", n + 1)));
        }
    }
    Ok(pairs)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Reads a configuration file. Relative CSV dataset paths are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let DatasetSpec::Csv(p) = &cfg.dataset {
            if p.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new(""));
                cfg.dataset = DatasetSpec::Csv(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let get = |k: &str| pairs.get(k).map(String::as_str);

        let source = get("dataset.source").unwrap_or("blobs");
        let mut used: Vec<&str> = vec!["dataset.source"];
        cfg.dataset = match source {
            "csv" => {
                used.push("dataset.path");
                let path = get("dataset.path")
                    .filter(|p| !p.is_empty())
                    .ok_or_else(|| Error::config("dataset.source = csv requires dataset.path"))?;
                DatasetSpec::Csv(PathBuf::from(path))
            }
            "blobs" => {
                let DatasetSpec::Blobs(mut blobs) = RunConfig::default().dataset else {
                    unreachable!("default dataset is blobs")
                };
                used.extend(["dataset.n", "dataset.d", "dataset.classes", "dataset.spread", "dataset.weights", "dataset.seed"]);
                if let Some(v) = get("dataset.n") {
                    blobs.n = parse_value("dataset.n", v)?;
                }
                if let Some(v) = get("dataset.d") {
                    blobs.d = parse_value("dataset.d", v)?;
                }
                if let Some(v) = get("dataset.classes") {
                    blobs.classes = parse_value("dataset.classes", v)?;
                }
                if let Some(v) = get("dataset.spread") {
                    blobs.spread = parse_value("dataset.spread", v)?;
                }
                if let Some(v) = get("dataset.weights") {
                    blobs.weights = match v {
                        "" | "none" => None,
                        list => Some(parse_list("dataset.weights", list)?),
                    };
                }
                if let Some(v) = get("dataset.seed") {
                    blobs.seed = parse_value("dataset.seed", v)?;
                }
                DatasetSpec::Blobs(blobs)
            }
            other => {
                return Err(Error::config(format!(
                    "dataset.source must be 'blobs' or 'csv', got '{other}'"
                )))
            }
        };

        macro_rules! field {
            ($key:literal, $target:expr) => {
                used.push($key);
                if let Some(v) = get($key) {
                    $target = parse_value($key, v)?;
                }
            };
        }
        macro_rules! flag {
            ($key:literal, $target:expr) => {
                used.push($key);
                if let Some(v) = get($key) {
                    $target = parse_bool($key, v)?;
                }
            };
        }

        field!("master_seed", cfg.master_seed);
        field!("test_fraction", cfg.test_fraction);
        field!("init_fraction", cfg.init_fraction);
        field!("batch_fraction", cfg.batch_fraction);
        used.push("max_iterations");
        if let Some(v) = get("max_iterations") {
            cfg.max_iterations = match v {
                "none" => None,
                n => Some(parse_value("max_iterations", n)?),
            };
        }
        field!("label_budget_fraction", cfg.label_budget_fraction);
        flag!("stratified_init", cfg.stratified_init);
        flag!("record_wall_time", cfg.record_wall_time);

        field!("strategy", cfg.strategy.kind);
        field!("strategy.candidate_multiplier", cfg.strategy.candidate_multiplier);
        field!("strategy.dsal_ratio", cfg.strategy.dsal_ratio);
        used.push("strategy.k");
        if let Some(v) = get("strategy.k") {
            cfg.strategy.k = match v {
                "auto" => None,
                n => Some(parse_value("strategy.k", n)?),
            };
        }

        field!("learner.epochs", cfg.learner.epochs);
        field!("learner.lr0", cfg.learner.lr0);
        field!("learner.decay_factor", cfg.learner.decay_factor);
        field!("learner.decay_every", cfg.learner.decay_every);
        field!("learner.minibatch", cfg.learner.minibatch);
        field!("learner.hidden_dim", cfg.learner.hidden_dim);
        field!("learner.l2", cfg.learner.l2);
        flag!("learner.warm_start", cfg.learner.warm_start);

        if let Some(unknown) = pairs.keys().find(|k| !used.contains(&k.as_str())) {
            return Err(Error::config(format!(
                "unknown or inapplicable key '{unknown}' (dataset.source = {source})"
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetSpec::Blobs(b) = &self.dataset {
            b.validate()?;
        }
        let in_open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_open_unit(self.test_fraction) {
            return Err(Error::config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if !(self.init_fraction > 0.0 && self.init_fraction <= 1.0) {
            return Err(Error::config(format!("init_fraction must lie in (0, 1], got {}", self.init_fraction)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::config(format!("batch_fraction must lie in (0, 1], got {}", self.batch_fraction)));
        }
        if !(self.label_budget_fraction > 0.0 && self.label_budget_fraction <= 1.0) {
            return Err(Error::config(format!(
                "label_budget_fraction must lie in (0, 1], got {}",
                self.label_budget_fraction
            )));
        }
        if !(self.strategy.candidate_multiplier.is_finite() && self.strategy.candidate_multiplier >= 1.0) {
            return Err(Error::config(format!(
                "strategy.candidate_multiplier must be >= 1, got {}",
                self.strategy.candidate_multiplier
            )));
        }
        if !(0.0..=1.0).contains(&self.strategy.dsal_ratio) {
            return Err(Error::config(format!(
                "strategy.dsal_ratio must lie in [0, 1], got {}",
                self.strategy.dsal_ratio
            )));
        }
        if self.strategy.k == Some(0) {
            return Err(Error::config("strategy.k must be positive or 'auto'"));
        }
        self.learner.validate()
    }

    /// Every setting as `(key, value)` in canonical order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(&str, String)> = vec![("master_seed", self.master_seed.to_string())];
        match &self.dataset {
            DatasetSpec::Csv(path) => {
                out.push(("dataset.source", "csv".into()));
                out.push(("dataset.path", path.display().to_string()));
            }
            DatasetSpec::Blobs(b) => {
                out.push(("dataset.source", "blobs".into()));
                out.push(("dataset.n", b.n.to_string()));
                out.push(("dataset.d", b.d.to_string()));
                out.push(("dataset.classes", b.classes.to_string()));
                out.push(("dataset.spread", b.spread.to_string()));
                out.push(("dataset.weights", b.weights.as_deref().map_or("none".into(), join)));
                out.push(("dataset.seed", b.seed.to_string()));
            }
        }
        out.extend([
            ("test_fraction", self.test_fraction.to_string()),
            ("init_fraction", self.init_fraction.to_string()),
            ("batch_fraction", self.batch_fraction.to_string()),
            ("max_iterations", self.max_iterations.map_or("none".into(), |n| n.to_string())),
            ("label_budget_fraction", self.label_budget_fraction.to_string()),
            ("stratified_init", self.stratified_init.to_string()),
            ("record_wall_time", self.record_wall_time.to_string()),
            ("strategy", self.strategy.kind.to_string()),
            ("strategy.candidate_multiplier", self.strategy.candidate_multiplier.to_string()),
            ("strategy.dsal_ratio", self.strategy.dsal_ratio.to_string()),
            ("strategy.k", self.strategy.k.map_or("auto".into(), |k| k.to_string())),
            ("learner.epochs", self.learner.epochs.to_string()),
            ("learner.lr0", self.learner.lr0.to_string()),
            ("learner.decay_factor", self.learner.decay_factor.to_string()),
            ("learner.decay_every", self.learner.decay_every.to_string()),
            ("learner.minibatch", self.learner.minibatch.to_string()),
            ("learner.hidden_dim", self.learner.hidden_dim.to_string()),
            ("learner.l2", self.learner.l2.to_string()),
            ("learner.warm_start", self.learner.warm_start.to_string()),
        ]);
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Cluster count for a dataset with `num_classes` classes.
    pub fn resolved_k(&self, num_classes: usize) -> usize {
        self.strategy.k.unwrap_or(num_classes)
    }
}
