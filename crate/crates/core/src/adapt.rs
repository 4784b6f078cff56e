//! Unsupervised language-model adaptation.
//!
//! One epoch identifies every text of a collection, commits the most confident
//! share of them, folds the committed texts into the models of their predicted
//! languages and re-identifies the rest with the updated models, until all
//! texts are committed in `k` rounds. Each round commits
//! `ceil(remaining / (k - q))` texts, where `q` is the number of finished
//! rounds. Iterative adaptation repeats whole epochs.

use std::fmt;
use std::str::FromStr;

use crate::confidence::ConfidenceMeasure;
use crate::error::{Error, Result};
use crate::models::ModelSet;
use crate::parallel;
use crate::scorer::score_text;

/// What happens to the previous epoch's counts when a new epoch starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EpochMode {
    /// Remove the texts added by the previous epoch first.
    #[default]
    Replace,
    /// Keep them; every epoch adds the collection again.
    Accumulate,
}

impl fmt::Display for EpochMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpochMode::Replace => "replace",
            EpochMode::Accumulate => "accumulate",
        })
    }
}

impl FromStr for EpochMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replace" => Ok(EpochMode::Replace),
            "accumulate" => Ok(EpochMode::Accumulate),
            _ => Err(Error::Config(format!(
                "unknown epoch mode `{s}` (expected replace or accumulate)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptPlan {
    /// Number of commitment rounds, clamped to the collection size.
    pub k: usize,
    pub epochs: usize,
    pub measure: ConfidenceMeasure,
    /// Committed texts below this confidence keep their label but add no
    /// features.
    pub threshold: Option<f64>,
    pub epoch_mode: EpochMode,
    /// Stop before `epochs` once an epoch reproduces the previous assignments.
    pub stop_at_fixed_point: bool,
}

impl Default for AdaptPlan {
    fn default() -> Self {
        AdaptPlan {
            k: 1,
            epochs: 1,
            measure: ConfidenceMeasure::Bs,
            threshold: None,
            epoch_mode: EpochMode::Replace,
            stop_at_fixed_point: false,
        }
    }
}

impl AdaptPlan {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if let Some(t) = self.threshold {
            if t.is_nan() || t < 0.0 {
                return Err(Error::Config(format!("threshold must be >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// One text finalized in a round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Commit {
    pub index: usize,
    /// Index of the predicted language.
    pub language: usize,
    /// Confidence at the scoring pass that committed the text.
    pub confidence: f64,
    /// Whether the text's features went into the models.
    pub added: bool,
}

/// Result of one adaptation epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdaptState {
    assignments: Vec<usize>,
    rounds: Vec<Vec<Commit>>,
}

impl AdaptState {
    /// Final language index per text, in collection order.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Commits per round, most confident first within a round.
    pub fn rounds(&self) -> &[Vec<Commit>] {
        &self.rounds
    }

    /// Rounds completed.
    pub fn q(&self) -> usize {
        self.rounds.len()
    }

    pub fn commits(&self) -> impl Iterator<Item = (usize, &Commit)> {
        self.rounds
            .iter()
            .enumerate()
            .flat_map(|(r, commits)| commits.iter().map(move |c| (r, c)))
    }

    pub fn labels<'m>(&self, models: &'m ModelSet) -> Vec<&'m str> {
        self.assignments
            .iter()
            .map(|&l| models.languages()[l].as_str())
            .collect()
    }
}

/// Round sizes for `n` texts and `k` rounds (after clamping).
pub fn round_sizes(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut remaining = n;
    (0..k)
        .map(|q| {
            let take = remaining.div_ceil(k - q);
            remaining -= take;
            take
        })
        .collect()
}

/// Runs one adaptation epoch over `texts`, mutating `models`.
pub fn adapt_epoch<S: AsRef<str> + Sync>(
    models: &mut ModelSet,
    texts: &[S],
    plan: &AdaptPlan,
) -> Result<AdaptState> {
    plan.validate()?;
    let n = texts.len();
    if n == 0 {
        return Ok(AdaptState::default());
    }
    let k = plan.k.min(n);
    let mut assignments = vec![usize::MAX; n];
    let mut rounds = Vec::with_capacity(k);
    let mut remaining: Vec<usize> = (0..n).collect();

    for q in 0..k {
        let scored = {
            let models = &*models;
            parallel::map(&remaining, |&i| {
                let id = score_text(models, texts[i].as_ref());
                (i, plan.measure.compute(&id), id.best())
            })
        };
        let mut ranked = scored;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let take = remaining.len().div_ceil(k - q);
        let mut commits = Vec::with_capacity(take);
        for &(index, confidence, language) in &ranked[..take] {
            assignments[index] = language;
            let added = plan.threshold.is_none_or(|t| confidence >= t);
            if added {
                models.add_by_index(texts[index].as_ref(), language)?;
            }
            commits.push(Commit {
                index,
                language,
                confidence,
                added,
            });
        }
        rounds.push(commits);
        remaining = ranked[take..].iter().map(|r| r.0).collect();
        remaining.sort_unstable();
    }
    debug_assert!(remaining.is_empty());
    Ok(AdaptState {
        assignments,
        rounds,
    })
}

/// Removes every text the epoch added, restoring the models it started from.
pub fn revert_epoch<S: AsRef<str>>(
    models: &mut ModelSet,
    texts: &[S],
    state: &AdaptState,
) -> Result<()> {
    for (_, commit) in state.commits().filter(|(_, c)| c.added) {
        models.remove_by_index(texts[commit.index].as_ref(), commit.language)?;
    }
    Ok(())
}

/// True iff both epochs assigned identical languages.
pub fn fixed_point_detect(prev: &[usize], cur: &[usize]) -> bool {
    prev == cur
}

/// Result of [`adapt_iterative`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptOutcome {
    /// State of the last epoch run.
    pub state: AdaptState,
    pub epochs_run: usize,
    /// First epoch whose assignments equalled those of the epoch before it.
    pub fixed_point_at: Option<usize>,
}

pub fn adapt_iterative<S: AsRef<str> + Sync>(
    models: &mut ModelSet,
    texts: &[S],
    plan: &AdaptPlan,
) -> Result<AdaptOutcome> {
    adapt_iterative_with(models, texts, plan, |_, _| {})
}

/// [`adapt_iterative`] calling `on_epoch(epoch, state)` after every epoch.
pub fn adapt_iterative_with<S, F>(
    models: &mut ModelSet,
    texts: &[S],
    plan: &AdaptPlan,
    mut on_epoch: F,
) -> Result<AdaptOutcome>
where
    S: AsRef<str> + Sync,
    F: FnMut(usize, &AdaptState),
{
    plan.validate()?;
    let mut state = adapt_epoch(models, texts, plan)?;
    on_epoch(1, &state);
    let mut fixed_point_at = None;
    let mut epochs_run = 1;
    for epoch in 2..=plan.epochs {
        if plan.stop_at_fixed_point && fixed_point_at.is_some() {
            break;
        }
        if plan.epoch_mode == EpochMode::Replace {
            revert_epoch(models, texts, &state)?;
        }
        let next = adapt_epoch(models, texts, plan)?;
        if fixed_point_at.is_none() && fixed_point_detect(&state.assignments, &next.assignments) {
            fixed_point_at = Some(epoch);
        }
        state = next;
        epochs_run = epoch;
        on_epoch(epoch, &state);
    }
    Ok(AdaptOutcome {
        state,
        epochs_run,
        fixed_point_at,
    })
}
