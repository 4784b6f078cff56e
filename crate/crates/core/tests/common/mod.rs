//! Test-only helpers: a direct evaluator of the scoring rules that does
//! its own counting, and seeded data generators.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use heli_core::{Dataset, ModelConfig, ModelSet};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Word and n-gram counts of one language, built by hand.
#[derive(Default, Debug)]
struct OracleLanguage {
    words: BTreeMap<String, u64>,
    /// n -> n-gram -> count
    grams: BTreeMap<usize, BTreeMap<String, u64>>,
}

/// Lowercased words followed by lowercased n-grams from `n_max` to 1.
pub struct Oracle {
    langs: Vec<OracleLanguage>,
    n_max: usize,
    p_mod: f64,
}

fn oracle_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphabetic() {
            cur.push(c);
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur).to_lowercase());
        }
    }
    if !cur.is_empty() {
        words.push(cur.to_lowercase());
    }
    words
}

fn oracle_grams(word: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = std::iter::once(' ')
        .chain(word.chars())
        .chain(std::iter::once(' '))
        .collect();
    if chars.len() < n {
        return Vec::new();
    }
    (0..=chars.len() - n)
        .map(|i| chars[i..i + n].iter().collect())
        .collect()
}

impl Oracle {
    pub fn new(languages: usize, train: &[(String, usize)], n_max: usize, p_mod: f64) -> Self {
        let mut langs: Vec<OracleLanguage> = (0..languages).map(|_| Default::default()).collect();
        for (text, lang) in train {
            let model = &mut langs[*lang];
            for w in oracle_words(text) {
                *model.words.entry(w.clone()).or_default() += 1;
                for n in 1..=n_max {
                    for g in oracle_grams(&w, n) {
                        *model.grams.entry(n).or_default().entry(g).or_default() += 1;
                    }
                }
            }
        }
        Oracle {
            langs,
            n_max,
            p_mod,
        }
    }

    fn value(&self, count: u64, total: u64) -> f64 {
        if count > 0 {
            -(count as f64 / total as f64).log10()
        } else {
            -(1.0 / total as f64).log10() * self.p_mod
        }
    }

    fn word_score(&self, t: &str) -> Option<Vec<f64>> {
        let dom: BTreeSet<&String> = self.langs.iter().flat_map(|l| l.words.keys()).collect();
        if dom.contains(&t.to_string()) {
            return Some(
                self.langs
                    .iter()
                    .map(|l| {
                        let total: u64 = l.words.values().sum();
                        self.value(l.words.get(t).copied().unwrap_or(0), total)
                    })
                    .collect(),
            );
        }
        let mut n = self.n_max.min(t.chars().count() + 2);
        while n >= 1 {
            let dom_n: BTreeSet<&String> = self
                .langs
                .iter()
                .filter_map(|l| l.grams.get(&n))
                .flat_map(|m| m.keys())
                .collect();
            let kept: Vec<String> = oracle_grams(t, n)
                .into_iter()
                .filter(|g| dom_n.contains(g))
                .collect();
            if !kept.is_empty() {
                return Some(
                    self.langs
                        .iter()
                        .map(|l| {
                            let empty = BTreeMap::new();
                            let m = l.grams.get(&n).unwrap_or(&empty);
                            let total: u64 = m.values().sum();
                            kept.iter()
                                .map(|g| self.value(m.get(g).copied().unwrap_or(0), total))
                                .sum::<f64>()
                                / kept.len() as f64
                        })
                        .collect(),
                );
            }
            n -= 1;
        }
        None
    }

    /// Per-language text scores, or `None` if no word is scorable.
    pub fn text_scores(&self, text: &str) -> Option<Vec<f64>> {
        let scored: Vec<Vec<f64>> = oracle_words(text)
            .iter()
            .filter_map(|w| self.word_score(w))
            .collect();
        if scored.is_empty() {
            return None;
        }
        let langs = self.langs.len();
        Some(
            (0..langs)
                .map(|g| scored.iter().map(|s| s[g]).sum::<f64>() / scored.len() as f64)
                .collect(),
        )
    }

    /// Lowest score, first language on ties.
    pub fn best(scores: &[f64]) -> usize {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s < scores[best] {
                best = i;
            }
        }
        best
    }
}

/// Random word over `alphabet` with a length in `len`.
pub fn word(rng: &mut impl Rng, alphabet: &[char], len: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.random_range(len);
    (0..n).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

pub const LANGS: [&str; 3] = ["A", "B", "C"];

/// A tiny training set: 2-3 languages, a handful of short words each.
pub struct Toy {
    pub languages: Vec<String>,
    pub train: Vec<(String, usize)>,
    pub n_max: usize,
    pub p_mod: f64,
}

impl Toy {
    pub fn random(rng: &mut impl Rng) -> Self {
        let langs = rng.random_range(2..=3);
        let alphabet = ['a', 'b', 'c', 'd'];
        let mut train = Vec::new();
        for lang in 0..langs {
            let lines = rng.random_range(1..=3);
            for _ in 0..lines {
                let words = rng.random_range(1..=2);
                let text: Vec<String> = (0..words).map(|_| word(rng, &alphabet, 2..=3)).collect();
                train.push((text.join(" "), lang));
            }
        }
        Toy {
            languages: LANGS[..langs].iter().map(|s| s.to_string()).collect(),
            train,
            n_max: rng.random_range(1..=4),
            p_mod: rng.random_range(1.0..1.5),
        }
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::labeled(
            self.train
                .iter()
                .map(|(t, l)| (t.clone(), self.languages[*l].clone())),
        )
    }

    pub fn models(&self) -> ModelSet {
        let config = ModelConfig::standard(self.languages.clone(), self.n_max, self.p_mod);
        ModelSet::train(&self.dataset(), config).expect("toy model trains")
    }

    pub fn oracle(&self) -> Oracle {
        Oracle::new(self.languages.len(), &self.train, self.n_max, self.p_mod)
    }
}

/// Random mystery text with unseen letters, uppercase and separators.
pub fn mystery_text(rng: &mut impl Rng) -> String {
    let alphabet = ['a', 'b', 'c', 'd', 'e', 'A', 'B'];
    let seps = [" ", ", ", "1", "' ", "!"];
    let words = rng.random_range(0..=5);
    let mut text = String::new();
    for _ in 0..words {
        text.push_str(&word(rng, &alphabet, 1..=5));
        text.push_str(seps.choose(rng).unwrap());
    }
    text
}

/// Two languages sharing part of their vocabulary; the test set leans on
/// words never seen in training.
pub struct DomainShift {
    pub train: Dataset,
    pub test: Dataset,
}

impl DomainShift {
    pub fn generate(seed: u64) -> Self {
        let mut rng = rng(seed);
        let alphabet: Vec<char> = ('a'..='z').collect();
        let vocab = |n: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
            (0..n).map(|_| word(rng, &alphabet, 4..=7)).collect()
        };
        let shared = vocab(40, &mut rng);
        let core = [vocab(40, &mut rng), vocab(40, &mut rng)];
        let fresh = [vocab(25, &mut rng), vocab(25, &mut rng)];
        let labels = ["A", "B"];

        let mut train = Vec::new();
        for _ in 0..150 {
            for lang in 0..2 {
                let words: Vec<&String> = (0..8)
                    .map(|i| {
                        if i % 2 == 0 {
                            core[lang].choose(&mut rng).unwrap()
                        } else {
                            shared.choose(&mut rng).unwrap()
                        }
                    })
                    .collect();
                train.push((join(&words), labels[lang]));
            }
        }

        let mut test = Vec::new();
        for i in 0..100 {
            for lang in 0..2 {
                let mut words: Vec<&String> = Vec::new();
                if i % 5 < 3 {
                    words.extend((0..2).map(|_| core[lang].choose(&mut rng).unwrap()));
                    words.extend((0..2).map(|_| fresh[lang].choose(&mut rng).unwrap()));
                    words.extend((0..2).map(|_| shared.choose(&mut rng).unwrap()));
                } else {
                    words.extend((0..3).map(|_| fresh[lang].choose(&mut rng).unwrap()));
                    words.extend((0..3).map(|_| shared.choose(&mut rng).unwrap()));
                }
                test.push((join(&words), labels[lang]));
            }
        }
        DomainShift {
            train: Dataset::labeled(train),
            test: Dataset::labeled(test),
        }
    }
}

fn join(words: &[&String]) -> String {
    words
        .iter()
        .map(|w| w.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}
