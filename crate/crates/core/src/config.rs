//! Run configuration files.
//!
//! Files are flat `key = value` lines; `#` starts a comment, list values are
//! comma separated and unknown keys are rejected. A back-off order is written
//! as `+`-joined items:
//!
//! * `word:SCHEME` - the word model of a scheme
//! * `char:SCHEME` - character n-grams of a scheme from `n_max` down to 1
//! * `char:S1|S2` - the same, interleaving schemes at each size
//!   (`S1` n, `S2` n, `S1` n-1, ...)
//! * `char:SCHEME:N` - a single n-gram size
//!
//! e.g. `word:lower+char:lower` or `char:orig|lower`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::adapt::AdaptPlan;
use crate::corpus::PreprocScheme;
use crate::error::{Error, Result};
use crate::models::{FeatureKind, ModelConfig};

/// Parsed `key = value` pairs, in key order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), (i + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn check_known(&self, known: &[&str]) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|(k, _)| !known.contains(&k.as_str()))
        {
            Some((key, (line, _))) => Err(Error::Config(format!(
                "line {line}: unknown key `{key}` (known: {})",
                known.join(", ")
            ))),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad list item `{s}` for `{key}`")))
        })
        .collect()
}

/// `none` or a non-negative number.
pub fn parse_threshold(value: &str) -> Result<Option<f64>> {
    match value.trim() {
        "none" | "" => Ok(None),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|t| !t.is_nan() && *t >= 0.0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("bad threshold `{v}`"))),
    }
}

/// Parses `name` or `name:keep` / `name:lowercase`. A bare `lower` lowercases,
/// any other bare name keeps case.
pub fn parse_scheme(item: &str) -> Result<PreprocScheme> {
    match item.split_once(':') {
        Some((name, "keep")) => Ok(PreprocScheme::new(name, false)),
        Some((name, "lowercase")) => Ok(PreprocScheme::new(name, true)),
        Some(_) => Err(Error::Config(format!("bad scheme `{item}`"))),
        None => Ok(PreprocScheme::new(item, item == "lower")),
    }
}

/// Expands a back-off spec for a given `n_max`.
pub fn parse_backoff(spec: &str, n_max: usize) -> Result<Vec<FeatureKind>> {
    let bad = |item: &str| Error::Config(format!("bad back-off item `{item}` in `{spec}`"));
    let mut order = Vec::new();
    for item in spec.split('+').map(str::trim) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts[..] {
            ["word", scheme] if !scheme.is_empty() => order.push(FeatureKind::word(scheme)),
            ["char", schemes] if !schemes.is_empty() => {
                let schemes: Vec<&str> = schemes.split('|').collect();
                if schemes.iter().any(|s| s.is_empty()) {
                    return Err(bad(item));
                }
                for n in (1..=n_max).rev() {
                    order.extend(schemes.iter().map(|s| FeatureKind::chars(*s, n)));
                }
            }
            ["char", scheme, n] if !scheme.is_empty() => {
                let n = n.parse().map_err(|_| bad(item))?;
                order.push(FeatureKind::chars(scheme, n));
            }
            _ => return Err(bad(item)),
        }
    }
    Ok(order)
}

/// Settings shared by every command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Configured language order; `None` takes the sorted training labels.
    pub languages: Option<Vec<String>>,
    pub schemes: Vec<PreprocScheme>,
    pub n_max: usize,
    pub p_mod: f64,
    pub backoff: String,
    pub plan: AdaptPlan,
    pub threads: Option<usize>,
    pub train: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            languages: None,
            schemes: vec![PreprocScheme::original(), PreprocScheme::lowercased()],
            n_max: 5,
            p_mod: 1.16,
            backoff: "word:lower+char:lower".into(),
            plan: AdaptPlan::default(),
            threads: None,
            train: None,
            input: None,
            model: None,
            output: None,
        }
    }
}

const RUN_KEYS: &[&str] = &[
    "languages",
    "schemes",
    "n_max",
    "p_mod",
    "backoff",
    "k",
    "epochs",
    "measure",
    "threshold",
    "epoch_mode",
    "stop_at_fixed_point",
    "threads",
    "train",
    "input",
    "model",
    "output",
];

impl RunConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.check_known(RUN_KEYS)?;
        let mut c = RunConfig::default();
        if let Some(langs) = kv.list::<String>("languages")? {
            c.languages = Some(langs);
        }
        if let Some(v) = kv.get("schemes") {
            c.schemes = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(parse_scheme)
                .collect::<Result<_>>()?;
        }
        c.n_max = kv.parsed("n_max")?.unwrap_or(c.n_max);
        c.p_mod = kv.parsed("p_mod")?.unwrap_or(c.p_mod);
        if let Some(b) = kv.get("backoff") {
            c.backoff = b.to_string();
        }
        c.plan.k = kv.parsed("k")?.unwrap_or(c.plan.k);
        c.plan.epochs = kv.parsed("epochs")?.unwrap_or(c.plan.epochs);
        c.plan.measure = kv.parsed("measure")?.unwrap_or(c.plan.measure);
        if let Some(t) = kv.get("threshold") {
            c.plan.threshold = parse_threshold(t)?;
        }
        c.plan.epoch_mode = kv.parsed("epoch_mode")?.unwrap_or(c.plan.epoch_mode);
        c.plan.stop_at_fixed_point = kv
            .parsed("stop_at_fixed_point")?
            .unwrap_or(c.plan.stop_at_fixed_point);
        c.threads = kv.parsed("threads")?;
        c.train = kv.get("train").map(PathBuf::from);
        c.input = kv.get("input").map(PathBuf::from);
        c.model = kv.get("model").map(PathBuf::from);
        c.output = kv.get("output").map(PathBuf::from);
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    /// Model configuration for the given language order.
    pub fn model_config(&self, languages: Vec<String>) -> Result<ModelConfig> {
        let config = ModelConfig {
            languages,
            schemes: self.schemes.clone(),
            n_max: self.n_max,
            p_mod: self.p_mod,
            backoff_order: parse_backoff(&self.backoff, self.n_max)?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Validates everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        let probe = vec!["__a".to_string(), "__b".to_string()];
        self.model_config(self.languages.clone().unwrap_or(probe))?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Candidate values for every swept parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub n_max: Vec<usize>,
    pub backoff: Vec<String>,
    pub p_mod: Vec<f64>,
    pub k: Vec<usize>,
    pub epochs: Vec<usize>,
    pub threshold: Vec<Option<f64>>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let base = RunConfig::default();
        SweepGrid {
            n_max: vec![base.n_max],
            backoff: vec![base.backoff],
            p_mod: vec![base.p_mod],
            k: vec![1],
            epochs: vec![1],
            threshold: vec![None],
        }
    }
}

const GRID_KEYS: &[&str] = &["n_max", "backoff", "p_mod", "k", "epochs", "threshold"];

impl SweepGrid {
    /// Axes missing from the file keep their single default value. Back-off
    /// variants may be separated by `,` or `;`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.check_known(GRID_KEYS)?;
        let mut g = SweepGrid::default();
        if let Some(v) = kv.list("n_max")? {
            g.n_max = v;
        }
        if let Some(v) = kv.get("backoff") {
            g.backoff = v
                .split([';', ','])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        if let Some(v) = kv.list("p_mod")? {
            g.p_mod = v;
        }
        if let Some(v) = kv.list("k")? {
            g.k = v;
        }
        if let Some(v) = kv.list("epochs")? {
            g.epochs = v;
        }
        if let Some(v) = kv.get("threshold") {
            g.threshold = v.split(',').map(parse_threshold).collect::<Result<_>>()?;
        }
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("n_max", self.n_max.is_empty()),
            ("backoff", self.backoff.is_empty()),
            ("p_mod", self.p_mod.is_empty()),
            ("k", self.k.is_empty()),
            ("epochs", self.epochs.is_empty()),
            ("threshold", self.threshold.is_empty()),
        ];
        if let Some((axis, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep axis `{axis}` is empty")));
        }
        if self.k.contains(&0) || self.epochs.contains(&0) || self.n_max.contains(&0) {
            return Err(Error::Config(
                "k, epochs and n_max must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.n_max.len()
            * self.backoff.len()
            * self.p_mod.len()
            * self.k.len()
            * self.epochs.len()
            * self.threshold.len()
    }
}
