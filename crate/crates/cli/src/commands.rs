use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use heli_core::adapt::adapt_iterative;
use heli_core::config::{parse_list, parse_scheme, parse_threshold, RunConfig, SweepGrid};
use heli_core::corpus::{load_labeled, parse_labeled, parse_unlabeled};
use heli_core::eval::{self, decile_report, filter_labels, metrics, Objective, SweepBase};
use heli_core::{identify_batch, parallel, ConfidenceMeasure, Dataset, ModelSet};
use log::info;

use crate::{
    AdaptArgs, CalibrateArgs, Cli, Command, EvaluateArgs, Failure, IdentifyArgs, InputFormat,
    ModelCommand, ModelFlags, Outcome, PlanFlags, ReportFormat, SweepArgs, TrainArgs,
};

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn config_value<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, Failure> {
    value
        .parse()
        .map_err(|_| usage(format!("bad value `{value}` for --{name}")))
}

pub fn run(cli: Cli) -> Outcome {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| {
            Failure::Usage(anyhow::Error::new(e).context(format!("config {}", path.display())))
        })?,
        None => RunConfig::default(),
    };
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(n) = config.threads {
        parallel::configure_threads(n)?;
    }
    match cli.command {
        Command::Train(args) => train(config, args),
        Command::Identify(args) => identify(config, args),
        Command::Adapt(args) => adapt(config, args),
        Command::Evaluate(args) => evaluate(args),
        Command::Sweep(args) => sweep(config, args),
        Command::Calibrate(args) => calibrate(config, args),
        Command::Model {
            command: ModelCommand::Inspect { model },
        } => inspect(&model),
    }
}

fn apply_model_flags(config: &mut RunConfig, flags: &ModelFlags) -> Outcome {
    if let Some(v) = &flags.languages {
        config.languages = Some(parse_list("languages", v)?);
    }
    if let Some(v) = &flags.schemes {
        config.schemes = parse_schemes(v)?;
    }
    if let Some(v) = flags.n_max {
        config.n_max = v;
    }
    if let Some(v) = flags.p_mod {
        config.p_mod = v;
    }
    if let Some(v) = &flags.backoff {
        config.backoff = v.clone();
    }
    Ok(())
}

fn parse_schemes(v: &str) -> Result<Vec<heli_core::PreprocScheme>, Failure> {
    Ok(v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_scheme)
        .collect::<heli_core::Result<_>>()?)
}

fn apply_plan_flags(config: &mut RunConfig, flags: &PlanFlags) -> Outcome {
    let plan = &mut config.plan;
    if let Some(k) = flags.k {
        plan.k = k;
    }
    if let Some(e) = flags.epochs {
        plan.epochs = e;
    }
    if let Some(m) = &flags.measure {
        plan.measure = config_value("measure", m)?;
    }
    if let Some(t) = &flags.threshold {
        plan.threshold = parse_threshold(t)?;
    }
    if let Some(m) = &flags.epoch_mode {
        plan.epoch_mode = config_value("epoch-mode", m)?;
    }
    if flags.stop_at_fixed_point {
        plan.stop_at_fixed_point = true;
    }
    Ok(())
}

fn require(
    path: Option<PathBuf>,
    fallback: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, Failure> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| usage(format!("missing --{name} (or `{name}` in the config file)")))
}

fn read_input(path: Option<&Path>, format: InputFormat) -> Result<Dataset, Failure> {
    let (bytes, origin) = match path {
        Some(p) => (
            std::fs::read(p)
                .with_context(|| p.display().to_string())
                .map_err(data)?,
            p.display().to_string(),
        ),
        None => {
            let mut buf = Vec::new();
            io::stdin()
                .read_to_end(&mut buf)
                .context("stdin")
                .map_err(data)?;
            (buf, "<stdin>".to_string())
        }
    };
    let dataset = match format {
        InputFormat::Raw => parse_unlabeled(&bytes, &origin)?,
        InputFormat::Labeled => parse_labeled(&bytes, &origin)?,
    };
    Ok(dataset)
}

struct Output {
    writer: BufWriter<Box<dyn Write>>,
    name: String,
}

impl Output {
    fn open(path: Option<&Path>) -> Result<Self, Failure> {
        let (inner, name): (Box<dyn Write>, String) = match path {
            Some(p) => (
                Box::new(
                    File::create(p)
                        .with_context(|| p.display().to_string())
                        .map_err(data)?,
                ),
                p.display().to_string(),
            ),
            None => (Box::new(io::stdout().lock()), "<stdout>".to_string()),
        };
        Ok(Output {
            writer: BufWriter::new(inner),
            name,
        })
    }

    fn write(mut self, text: &str) -> Outcome {
        self.writer
            .write_all(text.as_bytes())
            .and_then(|_| self.writer.flush())
            .with_context(|| self.name.clone())
            .map_err(data)
    }
}

fn without_labels(dataset: Dataset, drop: &[String]) -> Dataset {
    if drop.is_empty() {
        return dataset;
    }
    Dataset::labeled(dataset.instances().iter().filter_map(|i| {
        let label = i.label.as_ref()?;
        (!drop.contains(label)).then(|| (i.text.clone(), label.clone()))
    }))
}

fn training_languages(config: &RunConfig, train: &Dataset) -> Vec<String> {
    match &config.languages {
        Some(langs) => langs.clone(),
        None => train
            .labels()
            .unwrap_or_default()
            .into_iter()
            .map(String::from)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    }
}

fn train(mut config: RunConfig, args: TrainArgs) -> Outcome {
    apply_model_flags(&mut config, &args.model_flags)?;
    config.validate()?;
    let train_path = require(args.train, &config.train, "train")?;
    let model_path = require(args.model, &config.model, "model")?;
    let train = without_labels(load_labeled(&train_path)?, &args.drop_label);
    let model_config = config.model_config(training_languages(&config, &train))?;
    let models = ModelSet::train(&train, model_config)?;
    models.save(&model_path)?;
    info!(
        "trained {} languages on {} lines",
        models.languages().len(),
        train.len()
    );
    Ok(())
}

fn identify(config: RunConfig, args: IdentifyArgs) -> Outcome {
    let measure: ConfidenceMeasure = config_value("confidence", &args.confidence)?;
    let model_path = require(args.model, &config.model, "model")?;
    let input = args.input.or(config.input);
    let output = args.output.or(config.output);
    let models = ModelSet::load(&model_path)?;
    let texts = read_input(input.as_deref(), args.input_format)?;
    let ids = identify_batch(&models, &texts.texts());

    let mut predictions = String::new();
    for id in &ids {
        predictions.push_str(id.best_label(&models));
        predictions.push('\n');
    }
    Output::open(output.as_deref())?.write(&predictions)?;

    if let Some(path) = args.scores {
        let mut table = String::new();
        for (instance, id) in texts.instances().iter().zip(&ids) {
            let _ = write!(table, "{}", instance.index);
            for (lang, score) in models.languages().iter().zip(id.scores()) {
                let _ = write!(table, "\t{lang}:{score}");
            }
            let _ = writeln!(table, "\t{}", measure.compute(id));
        }
        Output::open(Some(&path))?.write(&table)?;
    }
    Ok(())
}

fn adapt(mut config: RunConfig, args: AdaptArgs) -> Outcome {
    apply_plan_flags(&mut config, &args.plan)?;
    config.plan.validate()?;
    let model_path = require(args.model, &config.model, "model")?;
    let input = args.input.or(config.input);
    let output = args.output.or(config.output);
    let mut models = ModelSet::load(&model_path)?;
    let texts = read_input(input.as_deref(), args.input_format)?;
    let outcome = adapt_iterative(&mut models, &texts.texts(), &config.plan)?;

    let mut predictions = String::new();
    for label in outcome.state.labels(&models) {
        predictions.push_str(label);
        predictions.push('\n');
    }
    Output::open(output.as_deref())?.write(&predictions)?;

    if let Some(path) = args.emit_rounds {
        let mut log = String::new();
        for (round, commit) in outcome.state.commits() {
            let label = &models.languages()[commit.language];
            let _ = writeln!(
                log,
                "{}\t{}\t{}\t{label}",
                round + 1,
                commit.index,
                commit.confidence
            );
        }
        Output::open(Some(&path))?.write(&log)?;
    }
    if config.plan.epochs > 1 {
        match outcome.fixed_point_at {
            Some(e) => eprintln!(
                "fixed point reached at epoch {e} ({} epochs run)",
                outcome.epochs_run
            ),
            None => eprintln!("no fixed point within {} epochs", outcome.epochs_run),
        }
    }
    if let Some(path) = args.save_model {
        models.save(path)?;
    }
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| path.display().to_string())
        .map_err(data)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let label = line.trim();
            if label.is_empty() {
                Err(data(anyhow!(
                    "{}:{}: empty prediction",
                    path.display(),
                    i + 1
                )))
            } else {
                Ok(label.to_string())
            }
        })
        .collect()
}

fn evaluate(args: EvaluateArgs) -> Outcome {
    let objective: Objective = config_value("objective", &args.objective)?;
    let gold = load_labeled(&args.gold)?;
    let predicted = read_predictions(&args.predictions)?;
    if gold.len() != predicted.len() {
        return Err(data(anyhow!(
            "{} gold lines but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    let gold_labels = gold.labels().expect("labeled corpus");
    let predicted: Vec<&str> = predicted.iter().map(String::as_str).collect();
    let drop: Vec<&str> = args.drop_label.iter().map(String::as_str).collect();
    let (g, p) = filter_labels(&gold_labels, &predicted, &drop);
    let report = metrics(&g, &p)?;
    let text = match args.format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Tsv => report.to_tsv(),
    };
    Output::open(None)?.write(&text)?;

    if let Some(min) = args.assert_min {
        let value = report.objective(objective);
        if value < min {
            return Err(Failure::Assertion(format!(
                "{} {value:.4} is below the required {min}",
                args.objective
            )));
        }
    }
    Ok(())
}

fn sweep(config: RunConfig, args: SweepArgs) -> Outcome {
    let objective: Objective = config_value("objective", &args.objective)?;
    let grid = match &args.grid {
        Some(path) => SweepGrid::load(path).map_err(|e| {
            Failure::Usage(anyhow::Error::new(e).context(format!("grid {}", path.display())))
        })?,
        None => SweepGrid::default(),
    };
    let mut base_config = config;
    if let Some(v) = &args.languages {
        base_config.languages = Some(parse_list("languages", v)?);
    }
    if let Some(v) = &args.schemes {
        base_config.schemes = parse_schemes(v)?;
    }
    if let Some(m) = &args.measure {
        base_config.plan.measure = config_value("measure", m)?;
    }
    if let Some(m) = &args.epoch_mode {
        base_config.plan.epoch_mode = config_value("epoch-mode", m)?;
    }

    let train_path = require(args.train, &base_config.train, "train")?;
    let full = without_labels(load_labeled(&train_path)?, &args.drop_label);
    let (train, dev) = match (&args.dev, args.dev_tail) {
        (Some(path), None) => (full, without_labels(load_labeled(path)?, &args.drop_label)),
        (None, Some(tail)) => full.split_tail_per_label(tail)?,
        _ => return Err(usage("sweep needs exactly one of --dev and --dev-tail")),
    };
    let base = SweepBase {
        languages: training_languages(&base_config, &train),
        schemes: base_config.schemes.clone(),
        measure: base_config.plan.measure,
        epoch_mode: base_config.plan.epoch_mode,
    };
    let result = eval::sweep(&train, &dev, &grid, &base, objective)?;
    Output::open(args.table.as_deref())?.write(&result.to_tsv())?;

    match result.best_row() {
        Some(row) => {
            let c = &row.cell;
            let value = row
                .outcome
                .as_ref()
                .map(|r| r.objective(objective))
                .unwrap_or(f64::NAN);
            let threshold = c.threshold.map_or("none".to_string(), |t| t.to_string());
            eprintln!(
                "best: n_max={} backoff={} p_mod={} k={} epochs={} threshold={threshold} {}={value:.6}",
                c.n_max, c.backoff, c.p_mod, c.k, c.epochs, args.objective
            );
            Ok(())
        }
        None => Err(data(anyhow!("every sweep cell failed"))),
    }
}

fn calibrate(config: RunConfig, args: CalibrateArgs) -> Outcome {
    let model_path = require(args.model, &config.model, "model")?;
    let input = require(args.input, &config.input, "input")?;
    let models = ModelSet::load(&model_path)?;
    let corpus = load_labeled(&input)?;
    let gold = corpus.labels().expect("labeled corpus");
    let ids = identify_batch(&models, &corpus.texts());
    let correct: Vec<bool> = ids
        .iter()
        .zip(&gold)
        .map(|(id, g)| id.best_label(&models) == *g)
        .collect();

    let mut columns = Vec::new();
    for measure in ConfidenceMeasure::ALL {
        let confidence: Vec<f64> = ids.iter().map(|id| measure.compute(id)).collect();
        columns.push(decile_report(&confidence, &correct)?);
    }
    let header: Vec<String> = ["decile".to_string(), "size".to_string()]
        .into_iter()
        .chain(ConfidenceMeasure::ALL.iter().map(|m| m.to_string()))
        .collect();
    let mut rows = vec![header];
    for (b, row) in columns[0].iter().enumerate() {
        let mut cells = vec![row.bucket.to_string(), row.size.to_string()];
        for column in &columns {
            cells.push(
                column[b]
                    .accuracy
                    .map_or("-".to_string(), |a| format!("{:.1}", 100.0 * a)),
            );
        }
        rows.push(cells);
    }
    Output::open(None)?.write(&render(&rows, args.format))
}

/// Renders rows as TSV or as a right-aligned plain-text table.
fn render(rows: &[Vec<String>], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            for row in rows {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        ReportFormat::Text => {
            let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
            let widths: Vec<usize> = (0..columns)
                .map(|c| {
                    rows.iter()
                        .filter_map(|r| r.get(c))
                        .map(|s| s.chars().count())
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            for row in rows {
                let cells: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .map(|(cell, &w)| format!("{cell:>w$}"))
                    .collect();
                out.push_str(&cells.join("  "));
                out.push('\n');
            }
        }
    }
    out
}

fn inspect(path: &Path) -> Outcome {
    let models = ModelSet::load(path)?;
    let config = models.config();
    let join = |items: Vec<String>| items.join(",");
    let mut out = String::new();
    let _ = writeln!(out, "languages\t{}", config.languages.join(","));
    let _ = writeln!(
        out,
        "schemes\t{}",
        join(config.schemes.iter().map(|s| s.to_string()).collect())
    );
    let _ = writeln!(out, "n_max\t{}", config.n_max);
    let _ = writeln!(out, "p_mod\t{}", config.p_mod);
    let _ = writeln!(
        out,
        "backoff\t{}",
        join(config.backoff_order.iter().map(|k| k.to_string()).collect())
    );
    let mut rows = vec![["kind", "union"]
        .iter()
        .map(|s| s.to_string())
        .chain(
            config
                .languages
                .iter()
                .map(|l| format!("{l} distinct/total")),
        )
        .collect::<Vec<_>>()];
    for summary in models.cardinalities() {
        let mut row = vec![summary.kind.to_string(), summary.union_size.to_string()];
        row.extend(
            summary
                .distinct
                .iter()
                .zip(&summary.totals)
                .map(|(d, t)| format!("{d}/{t}")),
        );
        rows.push(row);
    }
    out.push_str(&render(&rows, ReportFormat::Tsv));
    Output::open(None)?.write(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_table_aligns_columns() {
        let rows = vec![
            vec!["a".to_string(), "bbb".to_string()],
            vec!["cc".to_string(), "d".to_string()],
        ];
        assert_eq!(render(&rows, ReportFormat::Text), " a  bbb\ncc    d\n");
        assert_eq!(render(&rows, ReportFormat::Tsv), "a\tbbb\ncc\td\n");
    }

    #[test]
    fn dropped_labels_leave_the_rest() {
        let d = Dataset::labeled([("x", "A"), ("y", "XY"), ("z", "B")]);
        let kept = without_labels(d, &["XY".to_string()]);
        assert_eq!(kept.texts(), ["x", "z"]);
    }
}
