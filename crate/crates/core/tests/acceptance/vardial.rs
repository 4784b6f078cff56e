//! Criteria on the VarDial shared-task data.
//!
//! Expected layout under `$HELI_VARDIAL_DIR`, all files `text<TAB>label`:
//!
//! ```text
//! gdi2017/train.txt  gdi2017/test.txt
//! gdi2018/train.txt  gdi2018/dev.txt  gdi2018/test.txt
//! ili2018/train.txt  ili2018/dev.txt  ili2018/test.txt
//! ```

use std::path::PathBuf;
use std::time::Instant;

use heli_core::adapt::{adapt_iterative, AdaptPlan};
use heli_core::confidence::ConfidenceMeasure;
use heli_core::config::parse_backoff;
use heli_core::corpus::{load_labeled, PreprocScheme};
use heli_core::eval::{decile_report, filter_labels, metrics, MetricReport};
use heli_core::scorer::identify_batch;
use heli_core::{Dataset, ModelConfig, ModelSet};

use super::Verdict;

const TOLERANCE: f64 = 0.02;

fn data_dir(corpus: &str) -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("HELI_VARDIAL_DIR")?).join(corpus);
    dir.is_dir().then_some(dir)
}

fn skip(corpus: &str) -> Verdict {
    Verdict::Skip(format!("{corpus} data not found under $HELI_VARDIAL_DIR"))
}

struct Setup {
    n_max: usize,
    p_mod: f64,
    backoff: &'static str,
}

const GDI2017: Setup = Setup {
    n_max: 5,
    p_mod: 1.16,
    backoff: "word:lower+char:lower",
};
const GDI2018: Setup = Setup {
    n_max: 4,
    p_mod: 1.15,
    backoff: "char:lower",
};
const ILI2018: Setup = Setup {
    n_max: 6,
    p_mod: 1.09,
    backoff: "char:orig|lower",
};

fn train(data: &Dataset, setup: &Setup) -> Result<ModelSet, String> {
    let languages: Vec<String> = data
        .labels()
        .ok_or("training data is unlabeled")?
        .into_iter()
        .filter(|l| *l != "XY")
        .map(String::from)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let kept = Dataset::labeled(
        data.instances()
            .iter()
            .filter(|i| i.label.as_deref() != Some("XY"))
            .map(|i| (i.text.clone(), i.label.clone().unwrap())),
    );
    let config = ModelConfig {
        languages,
        schemes: vec![PreprocScheme::original(), PreprocScheme::lowercased()],
        n_max: setup.n_max,
        p_mod: setup.p_mod,
        backoff_order: parse_backoff(setup.backoff, setup.n_max).map_err(|e| e.to_string())?,
    };
    ModelSet::train(&kept, config).map_err(|e| e.to_string())
}

/// Metrics with unknown-dialect lines dropped from the gold side.
fn score(gold: &Dataset, predicted: &[&str]) -> MetricReport {
    let gold = gold.labels().expect("gold is labeled");
    let (g, p) = filter_labels(&gold, predicted, &["XY"]);
    metrics(&g, &p).expect("aligned")
}

fn baseline(models: &ModelSet, test: &Dataset) -> MetricReport {
    let ids = identify_batch(models, &test.texts());
    let labels: Vec<&str> = ids.iter().map(|i| i.best_label(models)).collect();
    score(test, &labels)
}

fn adapted(
    models: &ModelSet,
    test: &Dataset,
    k: usize,
    epochs: usize,
) -> Result<MetricReport, String> {
    let mut models = models.clone();
    let plan = AdaptPlan {
        k,
        epochs,
        ..Default::default()
    };
    let outcome = adapt_iterative(&mut models, &test.texts(), &plan).map_err(|e| e.to_string())?;
    Ok(score(test, &outcome.state.labels(&models)))
}

fn near(value: f64, target: f64) -> bool {
    (value - target).abs() <= TOLERANCE
}

fn collect(checks: Vec<(String, bool)>) -> Verdict {
    let ok = checks.iter().all(|(_, ok)| *ok);
    let detail = checks
        .into_iter()
        .map(|(d, ok)| format!("{d}{}", if ok { "" } else { " [off]" }))
        .collect::<Vec<_>>()
        .join("; ");
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

macro_rules! try_verdict {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Verdict::Fail(e.to_string()),
        }
    };
}

pub fn gdi2017_dev() -> Verdict {
    let Some(dir) = data_dir("gdi2017") else {
        return skip("gdi2017");
    };
    let full = try_verdict!(load_labeled(dir.join("train.txt")));
    let (head, dev) = try_verdict!(full.split_tail_per_label(500));
    let models = try_verdict!(train(&head, &GDI2017));
    let r = baseline(&models, &dev);
    collect(vec![(
        format!("dev macro F1 {:.3} (0.890)", r.macro_f1),
        near(r.macro_f1, 0.890),
    )])
}

pub fn gdi2017_test() -> Verdict {
    let Some(dir) = data_dir("gdi2017") else {
        return skip("gdi2017");
    };
    let full = try_verdict!(load_labeled(dir.join("train.txt")));
    let test = try_verdict!(load_labeled(dir.join("test.txt")));
    let models = try_verdict!(train(&full, &GDI2017));
    let base = baseline(&models, &test);
    let k45 = try_verdict!(adapted(&models, &test, 45, 1));
    let start = Instant::now();
    let iterative = try_verdict!(adapted(&models, &test, 45, 485));
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    collect(vec![
        (
            format!("baseline weighted F1 {:.3} (0.639)", base.weighted_f1),
            near(base.weighted_f1, 0.639),
        ),
        (
            format!("k=45 {:.3} (0.687)", k45.weighted_f1),
            near(k45.weighted_f1, 0.687),
        ),
        (
            format!("485 epochs {:.3} (0.700)", iterative.weighted_f1),
            near(iterative.weighted_f1, 0.700),
        ),
        (
            format!("485 epochs took {minutes:.1} min (<= 30)"),
            minutes <= 30.0,
        ),
    ])
}

pub fn gdi2018() -> Verdict {
    let Some(dir) = data_dir("gdi2018") else {
        return skip("gdi2018");
    };
    let train_set = try_verdict!(load_labeled(dir.join("train.txt")));
    let dev = try_verdict!(load_labeled(dir.join("dev.txt")));
    let test = try_verdict!(load_labeled(dir.join("test.txt")));

    let dev_models = try_verdict!(train(&train_set, &GDI2018));
    let dev_base = baseline(&dev_models, &dev);
    let mut sweep = Vec::new();
    for k in [1, 20, 40, 50, 56, 57, 60, 80, 120] {
        sweep.push((k, try_verdict!(adapted(&dev_models, &dev, k, 1)).macro_f1));
    }
    let (best_k, best_f1) =
        sweep
            .iter()
            .copied()
            .fold((0, f64::MIN), |b, c| if c.1 > b.1 { c } else { b });

    let models = try_verdict!(train(&train_set.concat(&dev), &GDI2018));
    let base = baseline(&models, &test);
    let k57 = try_verdict!(adapted(&models, &test, 57, 1));
    collect(vec![
        (
            format!("dev macro F1 {:.3} (0.659)", dev_base.macro_f1),
            near(dev_base.macro_f1, 0.659),
        ),
        (
            format!("test baseline {:.3} (0.650)", base.macro_f1),
            near(base.macro_f1, 0.650),
        ),
        (
            format!("test k=57 {:.3} (0.707)", k57.macro_f1),
            near(k57.macro_f1, 0.707),
        ),
        (
            format!("dev k sweep peaks at k={best_k} with {best_f1:.3} (56-57, 0.776)"),
            (56..=57).contains(&best_k) && near(best_f1, 0.776),
        ),
    ])
}

pub fn ili2018() -> Verdict {
    let Some(dir) = data_dir("ili2018") else {
        return skip("ili2018");
    };
    let train_set = try_verdict!(load_labeled(dir.join("train.txt")));
    let dev = try_verdict!(load_labeled(dir.join("dev.txt")));
    let test = try_verdict!(load_labeled(dir.join("test.txt")));

    let dev_models = try_verdict!(train(&train_set, &ILI2018));
    let dev_base = baseline(&dev_models, &dev);
    let models = try_verdict!(train(&train_set.concat(&dev), &ILI2018));
    let base = baseline(&models, &test);
    let k64 = try_verdict!(adapted(&models, &test, 64, 1));
    let iterative = try_verdict!(adapted(&models, &test, 64, 18));
    collect(vec![
        (
            format!("dev macro F1 {:.3} (0.954)", dev_base.macro_f1),
            near(dev_base.macro_f1, 0.954),
        ),
        (
            format!("test baseline {:.3} (0.880)", base.macro_f1),
            near(base.macro_f1, 0.880),
        ),
        (
            format!("k=64 {:.3} (0.955)", k64.macro_f1),
            near(k64.macro_f1, 0.955),
        ),
        (
            format!("18 epochs {:.3} (0.958)", iterative.macro_f1),
            near(iterative.macro_f1, 0.958),
        ),
    ])
}

pub fn gdi2017_deciles() -> Verdict {
    let Some(dir) = data_dir("gdi2017") else {
        return skip("gdi2017");
    };
    let full = try_verdict!(load_labeled(dir.join("train.txt")));
    let models = try_verdict!(train(&full, &GDI2017));
    let gold = full.labels().expect("labeled");
    let ids = identify_batch(&models, &full.texts());
    let confidences: Vec<f64> = ids
        .iter()
        .map(|i| ConfidenceMeasure::Bs.compute(i))
        .collect();
    let correct: Vec<bool> = ids
        .iter()
        .zip(&gold)
        .map(|(i, g)| i.best_label(&models) == *g)
        .collect();
    let rows = try_verdict!(decile_report(&confidences, &correct));
    let acc: Vec<f64> = rows
        .iter()
        .map(|r| 100.0 * r.accuracy.unwrap_or(0.0))
        .collect();
    let monotone = acc.windows(2).all(|w| w[1] <= w[0] + 0.5);
    collect(vec![
        (
            format!("top decile {:.1}% (98.5)", acc[0]),
            (acc[0] - 98.5).abs() <= 2.0,
        ),
        (
            format!("bottom decile {:.1}% (89.0)", acc[9]),
            (acc[9] - 89.0).abs() <= 2.0,
        ),
        ("non-increasing within 0.5 points".to_string(), monotone),
    ])
}
