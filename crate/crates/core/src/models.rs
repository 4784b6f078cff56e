//! Per-language feature counts and the smoothed value function.
//!
//! Every feature kind owns one table mapping a feature string to its count in
//! each language. A key is present iff at least one language has a non-zero
//! count, so the key set of a table is exactly the union domain of that kind.
//! Values are computed from counts on every lookup, which keeps adaptation
//! updates proportional to the number of features touched.

use std::fmt::{self, Write as _};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use sha2::{Digest, Sha256};

use crate::corpus::{self, Dataset, PreprocScheme};
use crate::error::{Error, Result};

const FORMAT_MAGIC: &str = "heli-model";
const FORMAT_VERSION: u32 = 1;

/// Word or character n-gram of a fixed size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gram {
    Word,
    Char(usize),
}

/// A model family: a gram type under a named preprocessing scheme.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureKind {
    pub scheme: String,
    pub gram: Gram,
}

impl FeatureKind {
    pub fn word(scheme: impl Into<String>) -> Self {
        FeatureKind {
            scheme: scheme.into(),
            gram: Gram::Word,
        }
    }

    pub fn chars(scheme: impl Into<String>, n: usize) -> Self {
        FeatureKind {
            scheme: scheme.into(),
            gram: Gram::Char(n),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gram {
            Gram::Word => write!(f, "word:{}", self.scheme),
            Gram::Char(n) => write!(f, "char:{}:{}", self.scheme, n),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad feature kind `{s}`"));
        let mut parts = s.split(':');
        let kind = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("word"), Some(scheme), None, None) => FeatureKind::word(scheme),
            (Some("char"), Some(scheme), Some(n), None) => {
                FeatureKind::chars(scheme, n.parse().map_err(|_| bad())?)
            }
            _ => return Err(bad()),
        };
        if kind.scheme.is_empty() {
            return Err(bad());
        }
        Ok(kind)
    }
}

/// Everything needed to create an empty [`ModelSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Language codes; their order breaks every tie.
    pub languages: Vec<String>,
    pub schemes: Vec<PreprocScheme>,
    pub n_max: usize,
    /// Penalty modifier, at least 1.
    pub p_mod: f64,
    /// Kinds tried per word, first match wins.
    pub backoff_order: Vec<FeatureKind>,
}

impl ModelConfig {
    /// Lowercased words, then lowercased character n-grams from `n_max` down to 1.
    pub fn standard(languages: Vec<String>, n_max: usize, p_mod: f64) -> Self {
        let scheme = PreprocScheme::lowercased();
        let mut backoff_order = vec![FeatureKind::word(&scheme.name)];
        backoff_order.extend(
            (1..=n_max)
                .rev()
                .map(|n| FeatureKind::chars(&scheme.name, n)),
        );
        ModelConfig {
            languages,
            schemes: vec![scheme],
            n_max,
            p_mod,
            backoff_order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.languages.len() < 2 {
            return fail("at least two languages are required".into());
        }
        for (i, lang) in self.languages.iter().enumerate() {
            if !valid_language_code(lang) {
                return fail(format!("invalid language code `{lang}`"));
            }
            if self.languages[..i].contains(lang) {
                return fail(format!("duplicate language `{lang}`"));
            }
        }
        for (i, scheme) in self.schemes.iter().enumerate() {
            if !valid_scheme_name(&scheme.name) {
                return fail(format!("invalid scheme name `{}`", scheme.name));
            }
            if self.schemes[..i].iter().any(|s| s.name == scheme.name) {
                return fail(format!("duplicate scheme `{}`", scheme.name));
            }
        }
        if self.n_max == 0 {
            return fail("n_max must be at least 1".into());
        }
        if !(self.p_mod.is_finite() && self.p_mod >= 1.0) {
            return fail(format!(
                "p_mod must be a finite number >= 1, got {}",
                self.p_mod
            ));
        }
        if self.backoff_order.is_empty() {
            return fail("back-off order is empty".into());
        }
        for (i, kind) in self.backoff_order.iter().enumerate() {
            if !self.schemes.iter().any(|s| s.name == kind.scheme) {
                return fail(format!("{kind} refers to an undefined scheme"));
            }
            if let Gram::Char(n) = kind.gram {
                if n == 0 || n > self.n_max {
                    return fail(format!("{kind} is outside 1..={}", self.n_max));
                }
            }
            if self.backoff_order[..i].contains(kind) {
                return fail(format!("{kind} appears twice in the back-off order"));
            }
        }
        Ok(())
    }
}

fn valid_language_code(code: &str) -> bool {
    !code.is_empty() && !code.contains(|c: char| c.is_whitespace() || c == ',' || c.is_control())
}

fn valid_scheme_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Smoothed value of a feature seen `count` times among `total` features.
///
/// An empty model (`total == 0`) scores every feature as `+inf`.
#[inline]
pub fn feature_value(count: u64, total: u64, p_mod: f64) -> f64 {
    if total == 0 {
        f64::INFINITY
    } else if count > 0 {
        -(count as f64 / total as f64).log10()
    } else {
        -(1.0 / total as f64).log10() * p_mod
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct FeatureTable {
    /// feature -> count per language; rows with all zeros are removed
    pub(crate) counts: FxHashMap<Box<str>, Box<[u64]>>,
    pub(crate) totals: Box<[u64]>,
}

impl FeatureTable {
    fn new(languages: usize) -> Self {
        FeatureTable {
            counts: FxHashMap::default(),
            totals: vec![0; languages].into_boxed_slice(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Add,
    Remove,
}

/// Language models for every configured language and feature kind.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSet {
    config: ModelConfig,
    lang_index: FxHashMap<String, usize>,
    /// scheme index of each entry of the back-off order
    kind_scheme: Vec<usize>,
    /// one table per back-off entry
    pub(crate) tables: Vec<FeatureTable>,
}

impl ModelSet {
    /// Creates empty models.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let lang_index = config
            .languages
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let kind_scheme = config
            .backoff_order
            .iter()
            .map(|k| {
                config
                    .schemes
                    .iter()
                    .position(|s| s.name == k.scheme)
                    .expect("validated")
            })
            .collect();
        let tables = config
            .backoff_order
            .iter()
            .map(|_| FeatureTable::new(config.languages.len()))
            .collect();
        Ok(ModelSet {
            config,
            lang_index,
            kind_scheme,
            tables,
        })
    }

    /// Counts the features of every instance under its gold label.
    pub fn train(dataset: &Dataset, config: ModelConfig) -> Result<Self> {
        let mut models = ModelSet::new(config)?;
        if dataset.is_empty() {
            return Err(Error::Training("no training data".into()));
        }
        if !dataset.labels_present() {
            return Err(Error::Training("training data must be labeled".into()));
        }
        let mut seen = vec![false; models.languages().len()];
        for inst in dataset.instances() {
            let label = inst.label.as_deref().unwrap_or_default();
            let lang = models.language_index(label).ok_or_else(|| {
                Error::Training(format!(
                    "line {}: label `{label}` is not a configured language",
                    inst.index + 1
                ))
            })?;
            seen[lang] = true;
            models.apply(&inst.text, lang, Direction::Add)?;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Training(format!(
                "no training data for language `{}`",
                models.languages()[missing]
            )));
        }
        for (kind, table) in models.config.backoff_order.iter().zip(&models.tables) {
            if let Some(lang) = table.totals.iter().position(|&t| t == 0) {
                return Err(Error::ModelNotTrained {
                    language: models.config.languages[lang].clone(),
                    kind: kind.to_string(),
                });
            }
        }
        Ok(models)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn languages(&self) -> &[String] {
        &self.config.languages
    }

    pub fn language_index(&self, code: &str) -> Option<usize> {
        self.lang_index.get(code).copied()
    }

    pub fn schemes(&self) -> &[PreprocScheme] {
        &self.config.schemes
    }

    pub fn n_max(&self) -> usize {
        self.config.n_max
    }

    pub fn p_mod(&self) -> f64 {
        self.config.p_mod
    }

    /// Changes the penalty modifier; counts are unaffected.
    pub fn set_p_mod(&mut self, p_mod: f64) -> Result<()> {
        let mut config = self.config.clone();
        config.p_mod = p_mod;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn backoff_order(&self) -> &[FeatureKind] {
        &self.config.backoff_order
    }

    pub(crate) fn kind_scheme(&self, kind: usize) -> &PreprocScheme {
        &self.config.schemes[self.kind_scheme[kind]]
    }

    pub(crate) fn scheme_index_of_kind(&self, kind: usize) -> usize {
        self.kind_scheme[kind]
    }

    fn kind_index(&self, kind: &FeatureKind) -> Result<usize> {
        self.config
            .backoff_order
            .iter()
            .position(|k| k == kind)
            .ok_or_else(|| Error::Config(format!("{kind} is not part of this model set")))
    }

    fn lang(&self, code: &str) -> Result<usize> {
        self.language_index(code)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn count(&self, language: &str, kind: &FeatureKind, feature: &str) -> Result<u64> {
        let (lang, kind) = (self.lang(language)?, self.kind_index(kind)?);
        Ok(self.tables[kind]
            .counts
            .get(feature)
            .map_or(0, |row| row[lang]))
    }

    pub fn total(&self, language: &str, kind: &FeatureKind) -> Result<u64> {
        let (lang, kind) = (self.lang(language)?, self.kind_index(kind)?);
        Ok(self.tables[kind].totals[lang])
    }

    /// Whether any language has seen `feature` under `kind`.
    pub fn in_union_domain(&self, kind: &FeatureKind, feature: &str) -> Result<bool> {
        let kind = self.kind_index(kind)?;
        Ok(self.tables[kind].counts.contains_key(feature))
    }

    /// Union domain of a kind, in byte order.
    pub fn union_domain(&self, kind: &FeatureKind) -> Result<Vec<&str>> {
        let kind = self.kind_index(kind)?;
        let mut domain: Vec<&str> = self.tables[kind].counts.keys().map(|k| &**k).collect();
        domain.sort_unstable();
        Ok(domain)
    }

    /// Features of one language under one kind, in byte order.
    pub fn language_features(
        &self,
        language: &str,
        kind: &FeatureKind,
    ) -> Result<Vec<(&str, u64)>> {
        let (lang, kind) = (self.lang(language)?, self.kind_index(kind)?);
        let mut feats: Vec<(&str, u64)> = self.tables[kind]
            .counts
            .iter()
            .filter(|(_, row)| row[lang] > 0)
            .map(|(f, row)| (&**f, row[lang]))
            .collect();
        feats.sort_unstable();
        Ok(feats)
    }

    /// The smoothed value of `feature` for `language`.
    ///
    /// Only defined for features in the union domain of `kind`.
    pub fn value(&self, language: &str, kind: &FeatureKind, feature: &str) -> Result<f64> {
        let (lang, k) = (self.lang(language)?, self.kind_index(kind)?);
        let table = &self.tables[k];
        let row = table
            .counts
            .get(feature)
            .ok_or_else(|| Error::NotInDomain {
                kind: kind.to_string(),
                feature: feature.to_string(),
            })?;
        let total = table.totals[lang];
        if total == 0 {
            return Err(Error::ModelNotTrained {
                language: language.to_string(),
                kind: kind.to_string(),
            });
        }
        Ok(feature_value(row[lang], total, self.config.p_mod))
    }

    /// Adds the words and n-grams of `text` to the models of `language`.
    pub fn add_instance_features(&mut self, text: &str, language: &str) -> Result<()> {
        let lang = self.lang(language)?;
        self.apply(text, lang, Direction::Add)
    }

    /// Exact inverse of [`ModelSet::add_instance_features`].
    ///
    /// Fails without touching the models if any count would become negative.
    pub fn remove_instance_features(&mut self, text: &str, language: &str) -> Result<()> {
        let lang = self.lang(language)?;
        self.apply(text, lang, Direction::Remove)
    }

    pub(crate) fn add_by_index(&mut self, text: &str, lang: usize) -> Result<()> {
        self.apply(text, lang, Direction::Add)
    }

    pub(crate) fn remove_by_index(&mut self, text: &str, lang: usize) -> Result<()> {
        self.apply(text, lang, Direction::Remove)
    }

    /// Feature multiset of `text`, one map per back-off entry.
    fn extract(&self, text: &str) -> Vec<FxHashMap<String, u64>> {
        let mut out: Vec<FxHashMap<String, u64>> = vec![FxHashMap::default(); self.tables.len()];
        for word in corpus::raw_words(text) {
            for (k, kind) in self.config.backoff_order.iter().enumerate() {
                let form = self.kind_scheme(k).apply(word);
                match kind.gram {
                    Gram::Word => *out[k].entry(form.into_owned()).or_default() += 1,
                    Gram::Char(n) => {
                        let padded = corpus::pad_word(&form);
                        for gram in corpus::ngram_windows(&padded, n) {
                            *out[k].entry(gram.to_string()).or_default() += 1;
                        }
                    }
                }
            }
        }
        out
    }

    fn apply(&mut self, text: &str, lang: usize, dir: Direction) -> Result<()> {
        let features = self.extract(text);
        if dir == Direction::Remove {
            for (k, feats) in features.iter().enumerate() {
                let table = &self.tables[k];
                for (feat, &n) in feats {
                    let have = table.counts.get(feat.as_str()).map_or(0, |row| row[lang]);
                    if have < n {
                        return Err(Error::Consistency(format!(
                            "removing {n} x `{feat}` ({}) from `{}` which has {have}",
                            self.config.backoff_order[k], self.config.languages[lang]
                        )));
                    }
                }
            }
        }
        let languages = self.config.languages.len();
        for (table, feats) in self.tables.iter_mut().zip(features) {
            for (feat, n) in feats {
                match dir {
                    Direction::Add => {
                        let row = table
                            .counts
                            .entry(feat.into_boxed_str())
                            .or_insert_with(|| vec![0; languages].into_boxed_slice());
                        row[lang] += n;
                        table.totals[lang] += n;
                    }
                    Direction::Remove => {
                        let row = table.counts.get_mut(feat.as_str()).expect("checked");
                        row[lang] -= n;
                        table.totals[lang] -= n;
                        if row.iter().all(|&c| c == 0) {
                            table.counts.remove(feat.as_str());
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of distinct features per language and kind, plus union sizes.
    pub fn cardinalities(&self) -> Vec<KindSummary> {
        self.config
            .backoff_order
            .iter()
            .zip(&self.tables)
            .map(|(kind, table)| {
                let mut distinct = vec![0usize; self.config.languages.len()];
                for row in table.counts.values() {
                    for (d, &c) in distinct.iter_mut().zip(row.iter()) {
                        *d += (c > 0) as usize;
                    }
                }
                KindSummary {
                    kind: kind.clone(),
                    union_size: table.counts.len(),
                    distinct,
                    totals: table.totals.to_vec(),
                }
            })
            .collect()
    }

    /// Verifies the totals and union-domain invariants.
    pub fn check_invariants(&self) -> Result<()> {
        for (kind, table) in self.config.backoff_order.iter().zip(&self.tables) {
            let mut sums = vec![0u64; self.config.languages.len()];
            for (feat, row) in &table.counts {
                if row.iter().all(|&c| c == 0) {
                    return Err(Error::Consistency(format!(
                        "{kind}: `{feat}` has no counts but is in the union domain"
                    )));
                }
                for (s, &c) in sums.iter_mut().zip(row.iter()) {
                    *s += c;
                }
            }
            if sums[..] != table.totals[..] {
                return Err(Error::Consistency(format!(
                    "{kind}: totals {:?} differ from count sums {sums:?}",
                    table.totals
                )));
            }
        }
        Ok(())
    }

    /// Writes the model in the deterministic text format.
    pub fn write_to(&self, out: impl Write) -> std::io::Result<()> {
        let mut body = String::new();
        for (lang_idx, lang) in self.config.languages.iter().enumerate() {
            for (kind, table) in self.config.backoff_order.iter().zip(&self.tables) {
                let mut feats: Vec<(&str, u64)> = table
                    .counts
                    .iter()
                    .filter(|(_, row)| row[lang_idx] > 0)
                    .map(|(f, row)| (&**f, row[lang_idx]))
                    .collect();
                feats.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
                let _ = writeln!(
                    body,
                    "block\t{lang}\t{kind}\t{}\t{}",
                    feats.len(),
                    table.totals[lang_idx]
                );
                for (feat, count) in feats {
                    let _ = writeln!(body, "{feat}\t{count}");
                }
            }
        }
        body.push_str("end\n");

        let mut out = BufWriter::new(out);
        writeln!(out, "{FORMAT_MAGIC}\t{FORMAT_VERSION}")?;
        writeln!(out, "languages\t{}", self.config.languages.join("\t"))?;
        let schemes: Vec<String> = self.config.schemes.iter().map(|s| s.to_string()).collect();
        writeln!(out, "schemes\t{}", schemes.join("\t"))?;
        writeln!(out, "n_max\t{}", self.config.n_max)?;
        writeln!(out, "p_mod\t{}", self.config.p_mod)?;
        let kinds: Vec<String> = self
            .config
            .backoff_order
            .iter()
            .map(|k| k.to_string())
            .collect();
        writeln!(out, "backoff\t{}", kinds.join("\t"))?;
        writeln!(out, "checksum\tsha256:{}", sha256_hex(body.as_bytes()))?;
        out.write_all(body.as_bytes())?;
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Parses a model written by [`ModelSet::write_to`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| load_err("not valid UTF-8"))?;
        let mut rest = text;
        let mut header = |key: &str| -> Result<&str> {
            let (line, tail) = rest
                .split_once('\n')
                .ok_or_else(|| load_err(format!("truncated header, expected `{key}`")))?;
            rest = tail;
            line.strip_prefix(key)
                .and_then(|v| v.strip_prefix('\t'))
                .ok_or_else(|| load_err(format!("expected `{key}` header, found `{line}`")))
        };

        let version = header(FORMAT_MAGIC)?;
        if version != FORMAT_VERSION.to_string() {
            return Err(load_err(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let languages: Vec<String> = header("languages")?.split('\t').map(String::from).collect();
        let schemes = header("schemes")?
            .split('\t')
            .map(parse_scheme)
            .collect::<Result<Vec<_>>>()?;
        let n_max = header("n_max")?
            .parse()
            .map_err(|_| load_err("bad n_max"))?;
        let p_mod = header("p_mod")?
            .parse()
            .map_err(|_| load_err("bad p_mod"))?;
        let backoff_order = header("backoff")?
            .split('\t')
            .map(|k| k.parse().map_err(|_| load_err(format!("bad kind `{k}`"))))
            .collect::<Result<Vec<FeatureKind>>>()?;
        let checksum = header("checksum")?.to_string();
        if checksum != format!("sha256:{}", sha256_hex(rest.as_bytes())) {
            return Err(load_err("checksum mismatch (file truncated or modified)"));
        }

        let config = ModelConfig {
            languages,
            schemes,
            n_max,
            p_mod,
            backoff_order,
        };
        let mut models =
            ModelSet::new(config).map_err(|e| load_err(format!("invalid header: {e}")))?;
        let languages = models.config.languages.len();

        let mut lines = rest.lines();
        for lang_idx in 0..languages {
            for k in 0..models.tables.len() {
                let expected = format!(
                    "block\t{}\t{}\t",
                    models.config.languages[lang_idx], models.config.backoff_order[k]
                );
                let line = lines.next().ok_or_else(|| load_err("missing block"))?;
                let sizes = line
                    .strip_prefix(&expected)
                    .ok_or_else(|| load_err(format!("unexpected block header `{line}`")))?;
                let (entries, total) = sizes
                    .split_once('\t')
                    .and_then(|(e, t)| Some((e.parse::<usize>().ok()?, t.parse::<u64>().ok()?)))
                    .ok_or_else(|| load_err(format!("bad block header `{line}`")))?;
                let table = &mut models.tables[k];
                let mut sum = 0u64;
                for _ in 0..entries {
                    let line = lines.next().ok_or_else(|| load_err("truncated block"))?;
                    let (feat, count) = line
                        .rsplit_once('\t')
                        .and_then(|(f, c)| Some((f, c.parse::<u64>().ok()?)))
                        .filter(|&(_, c)| c > 0)
                        .ok_or_else(|| load_err(format!("bad feature line `{line}`")))?;
                    let row = table
                        .counts
                        .entry(feat.into())
                        .or_insert_with(|| vec![0; languages].into_boxed_slice());
                    if row[lang_idx] != 0 {
                        return Err(load_err(format!("duplicate feature `{feat}`")));
                    }
                    row[lang_idx] = count;
                    sum += count;
                }
                if sum != total {
                    return Err(load_err(format!(
                        "block total {total} differs from count sum {sum}"
                    )));
                }
                table.totals[lang_idx] = total;
            }
        }
        if lines.next() != Some("end") || lines.next().is_some() {
            return Err(load_err("missing end marker"));
        }
        Ok(models)
    }
}

/// Per-kind sizes reported by [`ModelSet::cardinalities`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KindSummary {
    pub kind: FeatureKind,
    pub union_size: usize,
    /// distinct features per language
    pub distinct: Vec<usize>,
    pub totals: Vec<u64>,
}

fn load_err(msg: impl Into<String>) -> Error {
    Error::Load(msg.into())
}

fn parse_scheme(s: &str) -> Result<PreprocScheme> {
    match s.rsplit_once(':') {
        Some((name, "keep")) => Ok(PreprocScheme::new(name, false)),
        Some((name, "lowercase")) => Ok(PreprocScheme::new(name, true)),
        _ => Err(load_err(format!("bad scheme `{s}`"))),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}
