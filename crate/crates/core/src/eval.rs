//! Evaluation: F1 metrics, confidence deciles and development-set sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::adapt::{adapt_iterative_with, AdaptPlan, EpochMode};
use crate::confidence::ConfidenceMeasure;
use crate::config::{parse_backoff, SweepGrid};
use crate::corpus::{Dataset, PreprocScheme};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelSet};
use crate::parallel;

/// Counts per (gold, predicted) pair over the union of both label sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    /// rows are gold labels, columns predictions
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new<G: AsRef<str>, P: AsRef<str>>(gold: &[G], predicted: &[P]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::Eval(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                predicted.len()
            )));
        }
        let labels: Vec<String> = gold
            .iter()
            .map(|g| g.as_ref())
            .chain(predicted.iter().map(|p| p.as_ref()))
            .collect::<BTreeSet<&str>>()
            .into_iter()
            .map(String::from)
            .collect();
        let index: BTreeMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut counts = vec![vec![0; labels.len()]; labels.len()];
        for (g, p) in gold.iter().zip(predicted) {
            counts[index[g.as_ref()]][index[p.as_ref()]] += 1;
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    /// Labels in byte order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn count(&self, gold: usize, predicted: usize) -> usize {
        self.counts[gold][predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn report(&self) -> MetricReport {
        let n = self.labels.len();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut classes = Vec::with_capacity(n);
        for c in 0..n {
            let tp = self.counts[c][c];
            let support: usize = self.counts[c].iter().sum();
            let predicted: usize = self.counts.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            classes.push(ClassMetrics {
                label: self.labels[c].clone(),
                precision,
                recall,
                f1,
                support,
            });
        }
        let total = self.total();
        let gold_classes: Vec<&ClassMetrics> = classes.iter().filter(|c| c.support > 0).collect();
        let macro_f1 = if gold_classes.is_empty() {
            0.0
        } else {
            gold_classes.iter().map(|c| c.f1).sum::<f64>() / gold_classes.len() as f64
        };
        let weighted_f1 = if total == 0 {
            0.0
        } else {
            gold_classes
                .iter()
                .map(|c| c.f1 * c.support as f64)
                .sum::<f64>()
                / total as f64
        };
        let correct: usize = (0..n).map(|c| self.counts[c][c]).sum();
        MetricReport {
            classes,
            macro_f1,
            weighted_f1,
            accuracy: ratio(correct, total),
            instances: total,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of this class.
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// Every label seen in gold or predictions, in byte order.
    pub classes: Vec<ClassMetrics>,
    /// Mean F1 over classes with gold instances.
    pub macro_f1: f64,
    /// F1 weighted by gold support.
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub instances: usize,
}

impl MetricReport {
    pub fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::MacroF1 => self.macro_f1,
            Objective::WeightedF1 => self.weighted_f1,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class\tprecision\trecall\tf1\tsupport\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                c.label, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(out, "macro_f1\t{:.6}", self.macro_f1);
        let _ = writeln!(out, "weighted_f1\t{:.6}", self.weighted_f1);
        let _ = writeln!(out, "accuracy\t{:.6}", self.accuracy);
        let _ = writeln!(out, "instances\t{}", self.instances);
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.label.chars().count())
            .chain([11])
            .max()
            .unwrap_or(11);
        let mut out = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}\n",
            "class", "precision", "recall", "f1", "support"
        );
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                c.label, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<width$}  {:.4}", "macro F1", self.macro_f1);
        let _ = writeln!(out, "{:<width$}  {:.4}", "weighted F1", self.weighted_f1);
        let _ = writeln!(out, "{:<width$}  {:.4}", "accuracy", self.accuracy);
        let _ = writeln!(out, "{:<width$}  {}", "instances", self.instances);
        out
    }
}

pub fn metrics<G: AsRef<str>, P: AsRef<str>>(gold: &[G], predicted: &[P]) -> Result<MetricReport> {
    Ok(ConfusionMatrix::new(gold, predicted)?.report())
}

/// Drops every position whose gold label is in `drop`.
pub fn filter_labels<'a>(
    gold: &[&'a str],
    predicted: &[&'a str],
    drop: &[&str],
) -> (Vec<&'a str>, Vec<&'a str>) {
    gold.iter()
        .zip(predicted)
        .filter(|(g, _)| !drop.contains(g))
        .map(|(g, p)| (*g, *p))
        .unzip()
}

/// Accuracy of one tenth of the confidence-sorted results.
#[derive(Clone, Debug, PartialEq)]
pub struct DecileRow {
    /// 1 = most confident tenth.
    pub bucket: usize,
    pub size: usize,
    /// `None` for empty buckets (fewer than 10 items).
    pub accuracy: Option<f64>,
}

/// Mean accuracy per tenth after sorting by descending confidence.
///
/// Ties keep input order. Buckets are contiguous; the first `N % 10` buckets
/// hold one extra item.
pub fn decile_report(confidences: &[f64], correct: &[bool]) -> Result<Vec<DecileRow>> {
    if confidences.len() != correct.len() {
        return Err(Error::Eval(format!(
            "{} confidences but {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    let n = confidences.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    let (base, extra) = (n / 10, n % 10);
    let mut start = 0;
    Ok((0..10)
        .map(|b| {
            let size = base + usize::from(b < extra);
            let bucket = &order[start..start + size];
            start += size;
            let hits = bucket.iter().filter(|&&i| correct[i]).count();
            DecileRow {
                bucket: b + 1,
                size,
                accuracy: (size > 0).then(|| hits as f64 / size as f64),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Objective {
    #[default]
    MacroF1,
    WeightedF1,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" | "macro_f1" => Ok(Objective::MacroF1),
            "weighted" | "weighted_f1" => Ok(Objective::WeightedF1),
            _ => Err(Error::Config(format!(
                "unknown objective `{s}` (expected macro or weighted)"
            ))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::MacroF1 => "macro_f1",
            Objective::WeightedF1 => "weighted_f1",
        })
    }
}

/// Fixed settings of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepBase {
    pub languages: Vec<String>,
    pub schemes: Vec<PreprocScheme>,
    pub measure: ConfidenceMeasure,
    pub epoch_mode: EpochMode,
}

/// One point of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub n_max: usize,
    pub backoff: String,
    pub p_mod: f64,
    pub k: usize,
    pub epochs: usize,
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    /// Metrics on the development set, or the error that stopped the cell.
    pub outcome: std::result::Result<MetricReport, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub objective: Objective,
    /// All cells in grid enumeration order.
    pub rows: Vec<SweepRow>,
    /// Row with the highest objective; earlier rows win ties.
    pub best: Option<usize>,
}

impl SweepResult {
    pub fn best_row(&self) -> Option<&SweepRow> {
        self.best.map(|b| &self.rows[b])
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "n_max\tbackoff\tp_mod\tk\tepochs\tthreshold\tmacro_f1\tweighted_f1\taccuracy\terror\n",
        );
        for row in &self.rows {
            let c = &row.cell;
            let threshold = c.threshold.map_or("none".to_string(), |t| t.to_string());
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t",
                c.n_max, c.backoff, c.p_mod, c.k, c.epochs, threshold
            );
            let _ = match &row.outcome {
                Ok(r) => writeln!(
                    out,
                    "{:.6}\t{:.6}\t{:.6}\t",
                    r.macro_f1, r.weighted_f1, r.accuracy
                ),
                Err(e) => writeln!(out, "\t\t\t{}", e.replace(['\t', '\n'], " ")),
            };
        }
        out
    }
}

/// Cells sharing everything but the epoch count run as one adaptation.
struct SweepJob {
    model: usize,
    p_mod: f64,
    k: usize,
    threshold: Option<f64>,
}

/// Evaluates every grid cell on `dev` with models trained on `train`.
///
/// Failures of individual cells are recorded in their rows.
pub fn sweep(
    train: &Dataset,
    dev: &Dataset,
    grid: &SweepGrid,
    base: &SweepBase,
    objective: Objective,
) -> Result<SweepResult> {
    grid.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Eval(
            "sweep needs non-empty training and development data".into(),
        ));
    }
    let gold = dev
        .labels()
        .ok_or_else(|| Error::Eval("development data must be labeled".into()))?;
    let texts = dev.texts();

    let model_keys: Vec<(usize, &String)> = grid
        .n_max
        .iter()
        .flat_map(|&n| grid.backoff.iter().map(move |b| (n, b)))
        .collect();
    let models: Vec<std::result::Result<ModelSet, String>> =
        parallel::map(&model_keys, |&(n_max, backoff)| {
            let config = ModelConfig {
                languages: base.languages.clone(),
                schemes: base.schemes.clone(),
                n_max,
                p_mod: grid.p_mod[0],
                backoff_order: parse_backoff(backoff, n_max).map_err(|e| e.to_string())?,
            };
            ModelSet::train(train, config).map_err(|e| e.to_string())
        });

    let mut jobs = Vec::new();
    for model in 0..model_keys.len() {
        for &p_mod in &grid.p_mod {
            for &k in &grid.k {
                for &threshold in &grid.threshold {
                    jobs.push(SweepJob {
                        model,
                        p_mod,
                        k,
                        threshold,
                    });
                }
            }
        }
    }
    let max_epochs = *grid.epochs.iter().max().expect("validated");
    // per job: one outcome per entry of grid.epochs
    let results: Vec<Vec<std::result::Result<MetricReport, String>>> =
        parallel::map(&jobs, |job| {
            let run = || -> std::result::Result<Vec<MetricReport>, String> {
                let mut model = models[job.model].clone()?;
                model.set_p_mod(job.p_mod).map_err(|e| e.to_string())?;
                let plan = AdaptPlan {
                    k: job.k,
                    epochs: max_epochs,
                    measure: base.measure,
                    threshold: job.threshold,
                    epoch_mode: base.epoch_mode,
                    stop_at_fixed_point: false,
                };
                let mut at_epoch: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                adapt_iterative_with(&mut model, &texts, &plan, |epoch, state| {
                    if grid.epochs.contains(&epoch) {
                        at_epoch.insert(epoch, state.assignments().to_vec());
                    }
                })
                .map_err(|e| e.to_string())?;
                grid.epochs
                    .iter()
                    .map(|e| {
                        let predicted: Vec<&str> = at_epoch[e]
                            .iter()
                            .map(|&l| base.languages[l].as_str())
                            .collect();
                        metrics(&gold, &predicted).map_err(|e| e.to_string())
                    })
                    .collect()
            };
            match run() {
                Ok(reports) => reports.into_iter().map(Ok).collect(),
                Err(e) => vec![Err(e); grid.epochs.len()],
            }
        });

    // reassemble in enumeration order: n_max, backoff, p_mod, k, epochs, threshold
    let mut rows = Vec::with_capacity(grid.cell_count());
    let per_model = grid.p_mod.len() * grid.k.len() * grid.threshold.len();
    for (m, &(n_max, backoff)) in model_keys.iter().enumerate() {
        for (pi, &p_mod) in grid.p_mod.iter().enumerate() {
            for (ki, &k) in grid.k.iter().enumerate() {
                for (ei, &epochs) in grid.epochs.iter().enumerate() {
                    for (ti, &threshold) in grid.threshold.iter().enumerate() {
                        let job =
                            m * per_model + (pi * grid.k.len() + ki) * grid.threshold.len() + ti;
                        rows.push(SweepRow {
                            cell: SweepCell {
                                n_max,
                                backoff: backoff.clone(),
                                p_mod,
                                k,
                                epochs,
                                threshold,
                            },
                            outcome: results[job][ei].clone(),
                        });
                    }
                }
            }
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Ok(report) = &row.outcome {
            let value = report.objective(objective);
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((i, value));
            }
        }
    }
    Ok(SweepResult {
        objective,
        rows,
        best: best.map(|(i, _)| i),
    })
}
