//! Word and text scoring with back-off from word models to character n-grams.
//!
//! A word is looked up in the back-off entries in order. A word entry applies
//! when the word is in the union domain of that kind. A character entry of
//! size `n` applies when the word is long enough (`n <= len + 2`) and at least
//! one of its n-grams is in the union domain; n-grams outside the domain are
//! discarded and the word score is the mean over the retained ones. A word no
//! entry applies to is ignored. The text score of a language is the mean of
//! its word scores; the lowest score wins.

use std::borrow::Cow;

use crate::corpus;
use crate::models::{feature_value, Gram, ModelSet};
use crate::parallel;

/// Outcome of scoring one text.
#[derive(Clone, Debug, PartialEq)]
pub struct Identification {
    scores: Vec<f64>,
    ranking: Vec<usize>,
    word_count: usize,
    degenerate: bool,
}

impl Identification {
    /// Ranks precomputed scores, e.g. for confidence tests.
    pub fn for_scores(scores: Vec<f64>) -> Self {
        Self::from_scores(scores, 0)
    }

    fn from_scores(scores: Vec<f64>, word_count: usize) -> Self {
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        // stable, so equal scores keep configuration order
        ranking.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        Identification {
            scores,
            ranking,
            word_count,
            degenerate: false,
        }
    }

    /// All languages tie; used for texts without a single scorable word.
    pub fn degenerate(languages: usize) -> Self {
        Identification {
            scores: vec![0.0; languages],
            ranking: (0..languages).collect(),
            word_count: 0,
            degenerate: true,
        }
    }

    /// Score per language, in configuration order. Lower is better.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Language indices, best first.
    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub fn best(&self) -> usize {
        self.ranking[0]
    }

    pub fn second(&self) -> Option<usize> {
        self.ranking.get(1).copied()
    }

    /// Number of words that contributed to the scores.
    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn best_label<'m>(&self, models: &'m ModelSet) -> &'m str {
        &models.languages()[self.best()]
    }
}

/// How a single word was scored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordTrace {
    /// Back-off entry that produced the score, if any.
    pub kind: Option<usize>,
    /// Number of n-grams averaged (1 for word entries).
    pub retained: usize,
    /// Table lookups made per back-off entry.
    pub lookups: Vec<usize>,
}

/// Reusable buffers for scoring many words.
struct Scratch {
    word: Vec<f64>,
}

impl Scratch {
    fn new(languages: usize) -> Self {
        Scratch {
            word: vec![0.0; languages],
        }
    }
}

/// Writes the scores of `word` into `scratch.word`; false if the word is
/// unscorable.
fn score_word_into(
    models: &ModelSet,
    word: &str,
    scratch: &mut Scratch,
    mut trace: Option<&mut WordTrace>,
) -> bool {
    let p_mod = models.p_mod();
    let mut forms: Vec<Option<Cow<str>>> = vec![None; models.schemes().len()];
    let out = &mut scratch.word;

    for (k, kind) in models.backoff_order().iter().enumerate() {
        let table = &models.tables[k];
        let scheme = models.scheme_index_of_kind(k);
        let form: &str = forms[scheme].get_or_insert_with(|| models.kind_scheme(k).apply(word));
        match kind.gram {
            Gram::Word => {
                if let Some(t) = trace.as_deref_mut() {
                    t.lookups[k] += 1;
                }
                if let Some(row) = table.counts.get(form) {
                    for ((o, &c), &l) in out.iter_mut().zip(row.iter()).zip(table.totals.iter()) {
                        *o = feature_value(c, l, p_mod);
                    }
                    if let Some(t) = trace {
                        t.kind = Some(k);
                        t.retained = 1;
                    }
                    return true;
                }
            }
            Gram::Char(n) => {
                if n > form.chars().count() + 2 {
                    continue;
                }
                let padded = corpus::pad_word(form);
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut retained = 0usize;
                for gram in corpus::ngram_windows(&padded, n) {
                    if let Some(t) = trace.as_deref_mut() {
                        t.lookups[k] += 1;
                    }
                    if let Some(row) = table.counts.get(gram) {
                        retained += 1;
                        for ((o, &c), &l) in out.iter_mut().zip(row.iter()).zip(table.totals.iter())
                        {
                            *o += feature_value(c, l, p_mod);
                        }
                    }
                }
                if retained > 0 {
                    let d = retained as f64;
                    out.iter_mut().for_each(|o| *o /= d);
                    if let Some(t) = trace {
                        t.kind = Some(k);
                        t.retained = retained;
                    }
                    return true;
                }
            }
        }
    }
    false
}

/// Per-language scores of one word, or `None` if no back-off entry applies.
pub fn score_word(models: &ModelSet, word: &str) -> Option<Vec<f64>> {
    let mut scratch = Scratch::new(models.languages().len());
    score_word_into(models, word, &mut scratch, None).then_some(scratch.word)
}

/// Like [`score_word`], also reporting which entry was used and the lookups made.
pub fn score_word_traced(models: &ModelSet, word: &str) -> (Option<Vec<f64>>, WordTrace) {
    let mut scratch = Scratch::new(models.languages().len());
    let mut trace = WordTrace {
        lookups: vec![0; models.backoff_order().len()],
        ..Default::default()
    };
    let hit = score_word_into(models, word, &mut scratch, Some(&mut trace));
    (hit.then_some(scratch.word), trace)
}

pub fn score_text(models: &ModelSet, text: &str) -> Identification {
    let languages = models.languages().len();
    let mut scratch = Scratch::new(languages);
    let mut sums = vec![0.0; languages];
    let mut words = 0usize;
    for word in corpus::raw_words(text) {
        if score_word_into(models, word, &mut scratch, None) {
            for (s, w) in sums.iter_mut().zip(&scratch.word) {
                *s += w;
            }
            words += 1;
        }
    }
    if words == 0 {
        return Identification::degenerate(languages);
    }
    let n = words as f64;
    sums.iter_mut().for_each(|s| *s /= n);
    Identification::from_scores(sums, words)
}

/// Scores every text, fanning out across threads when the `parallel`
/// feature is enabled.
pub fn identify_batch<S: AsRef<str> + Sync>(models: &ModelSet, texts: &[S]) -> Vec<Identification> {
    parallel::map(texts, |t| score_text(models, t.as_ref()))
}

/// Single-threaded [`identify_batch`].
pub fn identify_batch_sequential<S: AsRef<str>>(
    models: &ModelSet,
    texts: &[S],
) -> Vec<Identification> {
    texts
        .iter()
        .map(|t| score_text(models, t.as_ref()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Dataset;
    use crate::models::{FeatureKind, ModelConfig};

    /// A: kissa x1, talo x9; B: hund x10.
    fn toy() -> ModelSet {
        let mut lines: Vec<(&str, &str)> = vec![("kissa", "A")];
        lines.extend(std::iter::repeat_n(("talo", "A"), 9));
        lines.extend(std::iter::repeat_n(("hund", "B"), 10));
        let mut cfg = ModelConfig::standard(vec!["A".into(), "B".into()], 3, 1.1);
        cfg.backoff_order.truncate(1);
        cfg.n_max = 1;
        ModelSet::train(&Dataset::labeled(lines), cfg).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn word_hit_uses_word_model() {
        let m = toy();
        let (scores, trace) = score_word_traced(&m, "kissa");
        assert!(close(&scores.unwrap(), &[1.0, 1.1]));
        assert_eq!(trace.kind, Some(0));
    }

    #[test]
    fn text_of_one_word() {
        let m = toy();
        let id = score_text(&m, "kissa");
        assert_eq!(id.best_label(&m), "A");
        assert!(close(id.scores(), &[1.0, 1.1]));
        assert_eq!(id.word_count(), 1);
        let twice = score_text(&m, "kissa kissa");
        assert!(close(twice.scores(), id.scores()));
    }

    #[test]
    fn unknown_word_without_char_models_is_ignored() {
        let m = toy();
        assert!(score_word(&m, "zebra").is_none());
        let id = score_text(&m, "zebra kissa");
        assert_eq!(id.word_count(), 1);
        assert!(close(id.scores(), &[1.0, 1.1]));
    }

    #[test]
    fn empty_text_is_degenerate() {
        let m = toy();
        let id = score_text(&m, "  ,,, 42");
        assert!(id.is_degenerate());
        assert_eq!(id.ranking(), &[0, 1]);
        assert_eq!(id.second(), Some(1));
    }

    #[test]
    fn trigram_backoff_hand_oracle() {
        // A has the single word "ab" -> trigrams " ab", "ab " (l=2), B has "xy".
        let cfg = ModelConfig::standard(vec!["A".into(), "B".into()], 3, 1.5);
        let m = ModelSet::train(&Dataset::labeled([("ab", "A"), ("xy", "B")]), cfg).unwrap();
        // "abab" is not a known word: padded " abab " has trigrams
        // " ab", "aba", "bab", "ab " -> " ab" and "ab " retained (d = 2)
        let (scores, trace) = score_word_traced(&m, "abab");
        let scores = scores.unwrap();
        assert_eq!(trace.kind, Some(1));
        assert_eq!(trace.retained, 2);
        assert_eq!(trace.lookups[0], 1);
        let a = -(1.0f64 / 2.0).log10();
        let b = -(1.0f64 / 2.0).log10() * 1.5;
        assert!(close(&scores, &[a, b]));
    }

    #[test]
    fn short_word_clamps_n() {
        // single-letter word with n_max = 6 starts at 3-grams
        let cfg = ModelConfig::standard(vec!["A".into(), "B".into()], 6, 1.2);
        let m = ModelSet::train(&Dataset::labeled([("qqqq", "A"), ("rrrr", "B")]), cfg).unwrap();
        let (_, trace) = score_word_traced(&m, "s");
        // word, 6, 5, 4 are skipped or empty; 3-grams " s " absent; falls to 1-grams
        assert_eq!(trace.lookups[1..4], [0, 0, 0]);
        assert_eq!(trace.lookups[4], 1);
        let kind = &m.backoff_order()[trace.kind.unwrap()];
        assert_eq!(kind, &FeatureKind::chars("lower", 1));
        assert_eq!(trace.retained, 2);
    }

    #[test]
    fn batch_matches_single_calls() {
        let m = toy();
        let texts = ["kissa", "hund talo", "", "kissa kissa hund"];
        let batch = identify_batch(&m, &texts);
        let seq = identify_batch_sequential(&m, &texts);
        assert_eq!(batch, seq);
        for (t, id) in texts.iter().zip(&batch) {
            assert_eq!(&score_text(&m, t), id);
        }
        assert!(identify_batch::<&str>(&m, &[]).is_empty());
    }
}
