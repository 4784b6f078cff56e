//! Corpus loading, tokenization and character n-gram extraction.
//!
//! Labeled files carry one `text<TAB>label` pair per line, unlabeled files
//! one raw text per line. Both accept LF or CRLF terminators.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

/// One text line with its optional gold label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub text: String,
    pub label: Option<String>,
    /// 0-based position among the kept lines of the source.
    pub index: usize,
}

/// An ordered collection of instances with contiguous indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    instances: Vec<Instance>,
    labels_present: bool,
}

impl Dataset {
    /// Builds a labeled dataset from `(text, label)` pairs.
    pub fn labeled<T, L>(pairs: impl IntoIterator<Item = (T, L)>) -> Self
    where
        T: Into<String>,
        L: Into<String>,
    {
        let instances = pairs
            .into_iter()
            .enumerate()
            .map(|(index, (text, label))| Instance {
                text: text.into(),
                label: Some(label.into()),
                index,
            })
            .collect();
        Dataset {
            instances,
            labels_present: true,
        }
    }

    pub fn unlabeled<T: Into<String>>(texts: impl IntoIterator<Item = T>) -> Self {
        let instances = texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| Instance {
                text: text.into(),
                label: None,
                index,
            })
            .collect();
        Dataset {
            instances,
            labels_present: false,
        }
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels_present(&self) -> bool {
        self.labels_present
    }

    pub fn texts(&self) -> Vec<&str> {
        self.instances.iter().map(|i| i.text.as_str()).collect()
    }

    /// Gold labels, if every instance has one.
    pub fn labels(&self) -> Option<Vec<&str>> {
        if !self.labels_present {
            return None;
        }
        self.instances.iter().map(|i| i.label.as_deref()).collect()
    }

    /// Concatenates two datasets, re-indexing the second.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut instances = self.instances.clone();
        let offset = instances.len();
        instances.extend(other.instances.iter().map(|i| Instance {
            index: i.index + offset,
            ..i.clone()
        }));
        Dataset {
            labels_present: (self.labels_present || self.is_empty())
                && (other.labels_present || other.is_empty())
                && !instances.is_empty(),
            instances,
        }
    }

    /// Moves the last `tail` lines of every label into a second dataset.
    ///
    /// Both halves keep file order and are re-indexed from 0. Used to carve a
    /// development partition out of training data.
    pub fn split_tail_per_label(&self, tail: usize) -> Result<(Dataset, Dataset)> {
        if !self.labels_present {
            return Err(Error::Config(
                "per-label tail split needs a labeled dataset".into(),
            ));
        }
        let mut remaining: rustc_hash::FxHashMap<&str, usize> = Default::default();
        for inst in &self.instances {
            *remaining.entry(label_of(inst)).or_default() += 1;
        }
        let mut head = Vec::new();
        let mut dev = Vec::new();
        for inst in &self.instances {
            let left = remaining.get_mut(label_of(inst)).expect("counted above");
            if *left <= tail {
                dev.push(inst.clone());
            } else {
                head.push(inst.clone());
            }
            *left -= 1;
        }
        Ok((reindexed(head, true), reindexed(dev, true)))
    }

    /// Writes the dataset back in its source format.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for inst in &self.instances {
            match &inst.label {
                Some(label) => writeln!(out, "{}\t{}", inst.text, label)?,
                None => writeln!(out, "{}", inst.text)?,
            }
        }
        Ok(())
    }
}

fn label_of(inst: &Instance) -> &str {
    inst.label.as_deref().unwrap_or_default()
}

fn reindexed(mut instances: Vec<Instance>, labels_present: bool) -> Dataset {
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.index = i;
    }
    Dataset {
        labels_present: labels_present && !instances.is_empty(),
        instances,
    }
}

/// Splits raw bytes into decoded lines, stripping LF / CRLF terminators.
fn decoded_lines<'a>(
    bytes: &'a [u8],
    origin: &'a str,
) -> impl Iterator<Item = Result<(usize, &'a str)>> + 'a {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let mut split = body.split(|&b| b == b'\n');
    if bytes.is_empty() {
        // `split` on an empty slice yields one empty line
        split.next();
    }
    split.enumerate().map(move |(i, raw)| {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        std::str::from_utf8(raw)
            .map(|line| (i + 1, line))
            .map_err(|_| Error::Decode {
                origin: origin.to_string(),
                line: i + 1,
            })
    })
}

/// Parses `text<TAB>label` lines. The label is whatever follows the last tab.
pub fn parse_labeled(bytes: &[u8], origin: &str) -> Result<Dataset> {
    let mut instances = Vec::new();
    for line in decoded_lines(bytes, origin) {
        let (lineno, line) = line?;
        let parse_err = |message: &str| Error::Parse {
            origin: origin.to_string(),
            line: lineno,
            message: message.to_string(),
        };
        if line.is_empty() {
            return Err(parse_err("empty line in labeled data"));
        }
        let (text, label) = line
            .rsplit_once('\t')
            .ok_or_else(|| parse_err("expected `text<TAB>label`"))?;
        if text.is_empty() {
            return Err(parse_err("empty text"));
        }
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(parse_err(
                "label must be a non-empty token without whitespace",
            ));
        }
        instances.push(Instance {
            text: text.to_string(),
            label: Some(label.to_string()),
            index: instances.len(),
        });
    }
    Ok(Dataset {
        instances,
        labels_present: true,
    })
}

/// Parses one text per line. Empty lines are skipped with a warning and do
/// not consume an index.
pub fn parse_unlabeled(bytes: &[u8], origin: &str) -> Result<Dataset> {
    let mut instances = Vec::new();
    for line in decoded_lines(bytes, origin) {
        let (lineno, line) = line?;
        if line.is_empty() {
            warn!("{origin}:{lineno}: skipping empty line");
            continue;
        }
        instances.push(Instance {
            text: line.to_string(),
            label: None,
            index: instances.len(),
        });
    }
    if instances.is_empty() {
        warn!("{origin}: no texts");
    }
    Ok(Dataset {
        instances,
        labels_present: false,
    })
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labeled(&bytes, &path.display().to_string())
}

pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_unlabeled(&bytes, &path.display().to_string())
}

/// A named preprocessing scheme applied to every token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PreprocScheme {
    pub name: String,
    pub lowercase: bool,
}

impl PreprocScheme {
    pub fn new(name: impl Into<String>, lowercase: bool) -> Self {
        PreprocScheme {
            name: name.into(),
            lowercase,
        }
    }

    /// Tokens as they appear in the text.
    pub fn original() -> Self {
        Self::new("orig", false)
    }

    pub fn lowercased() -> Self {
        Self::new("lower", true)
    }

    pub fn apply<'a>(&self, word: &'a str) -> Cow<'a, str> {
        if self.lowercase && word.chars().any(|c| !c.is_lowercase()) {
            Cow::Owned(word.to_lowercase())
        } else {
            Cow::Borrowed(word)
        }
    }
}

impl fmt::Display for PreprocScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.lowercase { "lowercase" } else { "keep" };
        write!(f, "{}:{}", self.name, mode)
    }
}

/// Word-internal characters are those with the Unicode Alphabetic property.
#[inline]
pub fn is_word_char(c: char) -> bool {
    c.is_alphabetic()
}

/// Maximal runs of word characters, before any scheme is applied.
pub fn raw_words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !is_word_char(c))
        .filter(|w| !w.is_empty())
}

pub fn tokenize(text: &str, scheme: &PreprocScheme) -> Vec<String> {
    raw_words(text)
        .map(|w| scheme.apply(w).into_owned())
        .collect()
}

/// Surrounds a word with single spaces.
pub fn pad_word(word: &str) -> String {
    let mut padded = String::with_capacity(word.len() + 2);
    padded.push(' ');
    padded.push_str(word);
    padded.push(' ');
    padded
}

/// Overlapping windows of `n` characters over an already padded word.
///
/// Yields nothing when the word is shorter than `n` characters.
pub fn ngram_windows(padded: &str, n: usize) -> impl Iterator<Item = &str> + '_ {
    debug_assert!(n >= 1);
    let mut starts = padded.char_indices().map(|(i, _)| i);
    let mut ends = padded
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(padded.len()));
    // `ends` runs n characters ahead of `starts`
    let primed = (0..n).all(|_| ends.next().is_some());
    std::iter::from_fn(move || {
        if !primed {
            return None;
        }
        let end = ends.next()?;
        let start = starts.next()?;
        Some(&padded[start..end])
    })
}

/// All overlapping n-grams of the space-padded word, in order.
///
/// Yields `len + 3 - n` n-grams, where `len` counts characters.
///
/// # Panics
///
/// Panics if `word` is empty or `n` is 0 or larger than `len + 2`.
pub fn extract_char_ngrams(word: &str, n: usize) -> Vec<String> {
    let len = word.chars().count();
    assert!(len > 0, "cannot extract n-grams from an empty word");
    assert!(
        n >= 1 && n <= len + 2,
        "n-gram size {n} out of range for a word of {len} characters"
    );
    let padded = pad_word(word);
    ngram_windows(&padded, n).map(str::to_string).collect()
}
