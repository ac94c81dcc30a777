// SPDX-License-Identifier: Apache-2.0

//! `logsieve`: perplexity filtering and topic-based classification of log
//! records.
//!
//! Exit status: 0 on success, 1 on data errors (unreadable or malformed
//! input, corrupt models), 2 on usage errors.

mod config;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use logsieve_core::corpus::{self, Generator, LabeledRecord, SyntheticSpec, TemplatePools};
use logsieve_core::filter::{self, FilterConfig, DEFAULT_THRESHOLD};
use logsieve_core::lda::{build_corpus, LdaConfig, LdaModel};
use logsieve_core::mlp::TrainConfig;
use logsieve_core::ngram::{default_weights, NGramModel};
use logsieve_core::pipeline::{PipelineBundle, PipelineConfig, Prediction, ThresholdChoice};
use logsieve_core::records::{read_records, RawRecord, RecordFormat};
use logsieve_core::tokenizer::Tokenizer;

use config::Config;

/// Marks an error as the caller's fault (exit status 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

#[derive(Debug, Parser)]
#[command(name = "logsieve", version, about = "Perplexity filter and topic classifier for log records")]
struct Cli {
    /// TOML settings file; flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input file; standard input when absent.
    #[arg(long, short, value_name = "PATH")]
    input: Option<PathBuf>,
    /// `lines` (one record per line) or `jsonl` (objects with a "text" field).
    #[arg(long, default_value = "lines")]
    format: RecordFormat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus as jsonl.
    Gen {
        #[arg(long, default_value_t = 20_000)]
        records: usize,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also split: write this share to --out and the rest to --test-out.
        #[arg(long, requires = "test_out")]
        split: Option<f64>,
        #[arg(long)]
        test_out: Option<PathBuf>,
        /// Directory with information.txt, operation.txt, system.txt.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        label_noise: Option<f64>,
        #[arg(long)]
        rare_rate: Option<f64>,
    },
    /// Train the n-gram language model.
    TrainLm {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Print the log2 perplexity of each record.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Pick the threshold that keeps a given share of records.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        /// Fraction of records to keep, in (0, 1].
        #[arg(long)]
        keep: f64,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Keep records at or above the perplexity threshold.
    Filter {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
        /// JSON report; written to standard error when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where filtered records go.
        #[arg(long)]
        rejects: Option<PathBuf>,
        /// Kept records; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Train the topic model on (kept) records.
    TrainLda {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Train the classifier and write a complete bundle.
    TrainClf {
        /// Labeled jsonl.
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        lda: PathBuf,
        #[arg(long, allow_negative_numbers = true, conflicts_with = "keep")]
        threshold: Option<f64>,
        /// Calibrate the threshold to keep this share of training records.
        #[arg(long)]
        keep: Option<f64>,
        #[command(flatten)]
        clf: ClfArgs,
        /// Bundle directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train language model, topic model and classifier in one go.
    Train {
        /// Labeled jsonl.
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, allow_negative_numbers = true, conflicts_with = "keep")]
        threshold: Option<f64>,
        #[arg(long)]
        keep: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[command(flatten)]
        clf: ClfArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Classify records with a bundle; one JSON object per record.
    Classify {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Evaluate a bundle on labeled jsonl.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Write the JSON report here instead of after the table.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Measure stage throughput.
    Bench {
        #[arg(long)]
        bundle: PathBuf,
        /// Corpus to time; generated when absent.
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "lines")]
        format: RecordFormat,
        /// Size of the generated corpus in MiB.
        #[arg(long, default_value_t = 50)]
        generate_mb: u64,
        /// Records timed in stage two.
        #[arg(long, default_value_t = 5000)]
        sample: usize,
    },
}

#[derive(Debug, Args)]
struct ClfArgs {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight the loss by inverse class frequency.
    #[arg(long)]
    class_weighting: bool,
    /// Gibbs sweeps for topic fold-in.
    #[arg(long)]
    infer_sweeps: Option<usize>,
}

struct Ctx {
    cfg: Config,
    seed: u64,
    workers: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| Usage(format!("{e:#}")))?,
        None => Config::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let workers = cli.workers.or(cfg.workers).unwrap_or(1);
    if workers == 0 {
        return usage("--workers must be at least 1");
    }
    let ctx = Ctx { cfg, seed, workers };

    match cli.command {
        Command::Gen {
            records,
            out,
            split,
            test_out,
            templates,
            label_noise,
            rare_rate,
        } => cmd_gen(&ctx, records, out, split, test_out, templates, label_noise, rare_rate),
        Command::TrainLm { input, order, out } => cmd_train_lm(&ctx, &input, order, &out),
        Command::Score { model, input } => cmd_score(&ctx, &model, &input),
        Command::Calibrate { model, keep, input } => cmd_calibrate(&ctx, &model, keep, &input),
        Command::Filter {
            model,
            threshold,
            report,
            rejects,
            output,
            input,
        } => cmd_filter(&ctx, &model, threshold, report, rejects, output, &input),
        Command::TrainLda {
            input,
            k,
            sweeps,
            alpha,
            beta,
            out,
        } => cmd_train_lda(&ctx, &input, k, sweeps, alpha, beta, &out),
        Command::TrainClf {
            input,
            lm,
            lda,
            threshold,
            keep,
            clf,
            out,
        } => cmd_train_clf(&ctx, input, &lm, &lda, threshold, keep, &clf, &out),
        Command::Train {
            input,
            order,
            threshold,
            keep,
            k,
            sweeps,
            clf,
            out,
        } => cmd_train(&ctx, input, order, threshold, keep, k, sweeps, &clf, &out),
        Command::Classify { bundle, input } => cmd_classify(&ctx, &bundle, &input),
        Command::Eval { bundle, input, report } => cmd_eval(&ctx, &bundle, input, report),
        Command::Bench {
            bundle,
            input,
            format,
            generate_mb,
            sample,
        } => cmd_bench(&ctx, &bundle, input, format, generate_mb, sample),
    }
}

fn open_input(path: Option<&Path>) -> anyhow::Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(BufReader::new(io::stdin())),
    })
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn read_all_records(input: &InputArgs) -> anyhow::Result<Vec<RawRecord>> {
    let reader = open_input(input.input.as_deref())?;
    let mut out = Vec::new();
    for r in read_records(reader, input.format) {
        out.push(r?);
    }
    Ok(out)
}

fn read_labeled_file(path: Option<&Path>) -> anyhow::Result<Vec<LabeledRecord>> {
    let reader = open_input(path)?;
    corpus::read_labeled(reader)
        .map(|r| r.map(|(_, rec)| rec).map_err(anyhow::Error::from))
        .collect()
}

fn load_lm(path: &Path) -> anyhow::Result<NGramModel> {
    let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    NGramModel::from_bytes(&data).with_context(|| format!("loading {}", path.display()))
}

fn load_lda(path: &Path) -> anyhow::Result<LdaModel> {
    let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    LdaModel::from_bytes(&data).with_context(|| format!("loading {}", path.display()))
}

fn load_bundle(dir: &Path) -> anyhow::Result<PipelineBundle> {
    PipelineBundle::load(dir).with_context(|| format!("loading bundle {}", dir.display()))
}

fn write_file(path: &Path, data: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn check_fraction(name: &str, v: f64) -> anyhow::Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return usage(format!("{name} must be in (0, 1], got {v}"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    ctx: &Ctx,
    records: usize,
    out: Option<PathBuf>,
    split: Option<f64>,
    test_out: Option<PathBuf>,
    templates: Option<PathBuf>,
    label_noise: Option<f64>,
    rare_rate: Option<f64>,
) -> anyhow::Result<()> {
    if records == 0 {
        return usage("--records must be at least 1");
    }
    let mut spec = SyntheticSpec {
        seed: ctx.seed,
        ..SyntheticSpec::default()
    };
    if let Some(dir) = templates {
        spec.pools = TemplatePools::load(&dir).with_context(|| format!("templates in {}", dir.display()))?;
    }
    if let Some(v) = label_noise {
        spec.label_noise = v;
    }
    if let Some(v) = rare_rate {
        spec.rare_rate = v;
    }
    if let Err(e) = spec.validate() {
        return usage(e.to_string());
    }
    let corpus = corpus::generate(&spec, records)?;
    let write = |path: Option<&Path>, recs: &[LabeledRecord]| -> anyhow::Result<()> {
        let mut w = open_output(path)?;
        for r in recs {
            writeln!(w, "{}", r.to_json_line())?;
        }
        w.flush()?;
        Ok(())
    };
    match split {
        Some(frac) => {
            if !(frac > 0.0 && frac < 1.0) {
                return usage(format!("--split must be in (0, 1), got {frac}"));
            }
            let (train, test) = corpus::split(corpus, frac, ctx.seed)?;
            write(out.as_deref(), &train)?;
            write(test_out.as_deref(), &test)?;
        }
        None => write(out.as_deref(), &corpus)?,
    }
    Ok(())
}

fn cmd_train_lm(ctx: &Ctx, input: &InputArgs, order: Option<usize>, out: &Path) -> anyhow::Result<()> {
    let order = order.or(ctx.cfg.lm.order).unwrap_or(3);
    if order == 0 || order > logsieve_core::ngram::MAX_ORDER {
        return usage(format!("--order must be in 1..={}", logsieve_core::ngram::MAX_ORDER));
    }
    let weights = ctx.cfg.lm.weights.clone().unwrap_or_else(|| default_weights(order));
    let tokenizer = Tokenizer::new(ctx.cfg.normalization_rules()?);
    let records = read_all_records(input)?;
    let seqs: Vec<Vec<String>> = records.iter().map(|r| tokenizer.tokenize_text(&r.text)).collect();
    let model = NGramModel::train_with_weights(&seqs, order, weights)?;
    write_file(out, &model.to_bytes())?;
    log::info!(
        "trained order-{order} model: {} records, {} tokens, vocabulary {}",
        records.len(),
        model.token_total(),
        model.vocab().len()
    );
    Ok(())
}

fn cmd_score(ctx: &Ctx, model: &Path, input: &InputArgs) -> anyhow::Result<()> {
    let lm = load_lm(model)?;
    let tokenizer = Tokenizer::new(ctx.cfg.normalization_rules()?);
    let reader = open_input(input.input.as_deref())?;
    let mut out = open_output(None)?;
    for r in read_records(reader, input.format) {
        let r = r?;
        let tokens = tokenizer.tokenize_text(&r.text);
        if tokens.is_empty() {
            writeln!(out, "{}\t-\t{}", r.line_no, r.text)?;
        } else {
            writeln!(out, "{}\t{:.6}\t{}", r.line_no, lm.log2_ppx(&tokens)?, r.text)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_calibrate(ctx: &Ctx, model: &Path, keep: f64, input: &InputArgs) -> anyhow::Result<()> {
    check_fraction("--keep", keep)?;
    let lm = load_lm(model)?;
    let tokenizer = Tokenizer::new(ctx.cfg.normalization_rules()?);
    let records = read_all_records(input)?;
    let scores: Vec<f64> = records
        .iter()
        .map(|r| tokenizer.tokenize_text(&r.text))
        .filter(|t| !t.is_empty())
        .map(|t| lm.log2_ppx(&t))
        .collect::<Result<_, _>>()?;
    let threshold = filter::calibrate_threshold(&scores, keep)?;
    let kept = scores.iter().filter(|&&s| s >= threshold).count();
    let doc = json!({
        "threshold": threshold,
        "keep_fraction": keep,
        "records": records.len(),
        "scored": scores.len(),
        "kept": kept,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn record_line(format: RecordFormat, r: &RawRecord) -> String {
    match format {
        RecordFormat::Lines => r.text.clone(),
        RecordFormat::Jsonl => {
            let mut obj = json!({ "text": r.text });
            if let Some(l) = r.preset_label {
                obj["preset_label"] = json!(l.label());
            }
            obj.to_string()
        }
    }
}

fn cmd_filter(
    ctx: &Ctx,
    model: &Path,
    threshold: Option<f64>,
    report_path: Option<PathBuf>,
    rejects: Option<PathBuf>,
    output: Option<PathBuf>,
    input: &InputArgs,
) -> anyhow::Result<()> {
    let lm = load_lm(model)?;
    let tokenizer = Tokenizer::new(ctx.cfg.normalization_rules()?);
    let cfg = FilterConfig {
        threshold: threshold.or(ctx.cfg.threshold).unwrap_or(DEFAULT_THRESHOLD),
        workers: ctx.workers,
        ..FilterConfig::default()
    };
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    let reader = open_input(input.input.as_deref())?;
    let mut kept_out = open_output(output.as_deref())?;
    let mut rejects_out = match &rejects {
        Some(p) => Some(open_output(Some(p))?),
        None => None,
    };
    let format = input.format;
    let result = filter::filter_stream(read_records(reader, format), &lm, &tokenizer, &cfg, |v| {
        let line = record_line(format, &v.record);
        if v.kept {
            writeln!(kept_out, "{line}")
        } else if let Some(w) = rejects_out.as_mut() {
            writeln!(w, "{line}")
        } else {
            Ok(())
        }
    });
    kept_out.flush()?;
    if let Some(w) = rejects_out.as_mut() {
        w.flush()?;
    }
    let report = match &result {
        Ok(r) => r,
        Err(e) => match e.partial_report() {
            Some(r) => r,
            None => return Err(result.unwrap_err().into()),
        },
    };
    let doc = serde_json::to_string_pretty(report)?;
    match &report_path {
        Some(p) => write_file(p, doc.as_bytes())?,
        None => eprintln!("{doc}"),
    }
    if report.malformed > 0 {
        log::warn!("{} malformed records skipped", report.malformed);
    }
    result?;
    Ok(())
}

fn cmd_train_lda(
    ctx: &Ctx,
    input: &InputArgs,
    k: Option<usize>,
    sweeps: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    out: &Path,
) -> anyhow::Result<()> {
    let lda_cfg = lda_config(ctx, k, sweeps, alpha, beta)?;
    let tokenizer = Tokenizer::new(ctx.cfg.normalization_rules()?);
    let records = read_all_records(input)?;
    let seqs: Vec<Vec<String>> = records
        .iter()
        .map(|r| tokenizer.tokenize_text(&r.text))
        .filter(|t| !t.is_empty())
        .collect();
    let (vocab, docs) = build_corpus(&seqs);
    let model = LdaModel::train(&docs, vocab, &lda_cfg)?;
    write_file(out, &model.to_bytes())?;
    log::info!(
        "trained {} topics over {} documents, vocabulary {}",
        model.topics(),
        docs.len(),
        model.vocab().len()
    );
    Ok(())
}

fn lda_config(
    ctx: &Ctx,
    k: Option<usize>,
    sweeps: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> anyhow::Result<LdaConfig> {
    let d = LdaConfig::default();
    let c = &ctx.cfg.lda;
    let cfg = LdaConfig {
        topics: k.or(c.topics).unwrap_or(d.topics),
        alpha: alpha.or(c.alpha),
        beta: beta.or(c.beta),
        sweeps: sweeps.or(c.sweeps).unwrap_or(d.sweeps),
        seed: ctx.seed,
    };
    if cfg.topics == 0 || cfg.sweeps == 0 {
        return usage("--k and --sweeps must be at least 1");
    }
    if [cfg.alpha, cfg.beta].iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
        return usage("--alpha and --beta must be positive");
    }
    Ok(cfg)
}

fn pipeline_config(ctx: &Ctx, clf: &ClfArgs) -> anyhow::Result<PipelineConfig> {
    let d = PipelineConfig::default();
    let m = &ctx.cfg.mlp;
    let td = TrainConfig::default();
    let mlp = TrainConfig {
        learning_rate: clf.lr.or(m.lr).unwrap_or(td.learning_rate),
        epochs: clf.epochs.or(m.epochs).unwrap_or(td.epochs),
        batch_size: clf.batch_size.or(m.batch_size).unwrap_or(td.batch_size),
        seed: ctx.seed,
        class_weighting: clf.class_weighting || m.class_weighting.unwrap_or(false),
        init_gain: td.init_gain,
    };
    if !(mlp.learning_rate > 0.0 && mlp.learning_rate.is_finite()) || mlp.epochs == 0 || mlp.batch_size == 0 {
        return usage("--lr must be positive and --epochs, --batch-size at least 1");
    }
    let hidden = clf.hidden.clone().or_else(|| m.hidden.clone()).unwrap_or(d.hidden);
    if hidden.contains(&0) {
        return usage("hidden layer widths must be at least 1");
    }
    Ok(PipelineConfig {
        rules: ctx.cfg.normalization_rules()?,
        lm_order: ctx.cfg.lm.order.unwrap_or(d.lm_order),
        lm_weights: ctx.cfg.lm.weights.clone(),
        threshold: ThresholdChoice::Fixed(ctx.cfg.threshold.unwrap_or(DEFAULT_THRESHOLD)),
        lda: lda_config(ctx, None, None, None, None)?,
        infer_sweeps: clf.infer_sweeps.or(ctx.cfg.lda.infer_sweeps).unwrap_or(d.infer_sweeps),
        infer_seed: ctx.seed,
        hidden,
        mlp,
        workers: ctx.workers,
    })
}

fn threshold_choice(ctx: &Ctx, threshold: Option<f64>, keep: Option<f64>) -> anyhow::Result<ThresholdChoice> {
    if let Some(f) = keep {
        check_fraction("--keep", f)?;
        return Ok(ThresholdChoice::KeepFraction(f));
    }
    let t = threshold.or(ctx.cfg.threshold).unwrap_or(DEFAULT_THRESHOLD);
    if t.is_nan() {
        return usage("--threshold must be a number");
    }
    Ok(ThresholdChoice::Fixed(t))
}

fn print_summary(summary: &logsieve_core::pipeline::TrainSummary, out: &Path) {
    eprintln!(
        "{} records, threshold {:.4}, kept {} ({} / {} / {}), final loss {:.4}; bundle at {}",
        summary.records,
        summary.threshold,
        summary.kept,
        summary.kept_per_class[0],
        summary.kept_per_class[1],
        summary.kept_per_class[2],
        summary.loss_trace.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_clf(
    ctx: &Ctx,
    input: Option<PathBuf>,
    lm_path: &Path,
    lda_path: &Path,
    threshold: Option<f64>,
    keep: Option<f64>,
    clf: &ClfArgs,
    out: &Path,
) -> anyhow::Result<()> {
    let cfg = pipeline_config(ctx, clf)?;
    let choice = threshold_choice(ctx, threshold, keep)?;
    let lm = load_lm(lm_path)?;
    let lda = load_lda(lda_path)?;
    let records = read_labeled_file(input.as_deref())?;
    let tokenizer = Tokenizer::new(cfg.rules.clone());
    let threshold = match choice {
        ThresholdChoice::Fixed(t) => t,
        ThresholdChoice::KeepFraction(f) => {
            let scores: Vec<f64> = records
                .iter()
                .map(|r| tokenizer.tokenize_text(&r.text))
                .filter(|t| !t.is_empty())
                .map(|t| lm.log2_ppx(&t))
                .collect::<Result<_, _>>()?;
            filter::calibrate_threshold(&scores, f)?
        }
    };
    let filter = FilterConfig {
        threshold,
        workers: ctx.workers,
        ..FilterConfig::default()
    };
    let (mut bundle, summary) = PipelineBundle::train_classifier(tokenizer, lm, filter, lda, &records, &cfg)?;
    bundle.save(out)?;
    print_summary(&summary, out);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    ctx: &Ctx,
    input: Option<PathBuf>,
    order: Option<usize>,
    threshold: Option<f64>,
    keep: Option<f64>,
    k: Option<usize>,
    sweeps: Option<usize>,
    clf: &ClfArgs,
    out: &Path,
) -> anyhow::Result<()> {
    let mut cfg = pipeline_config(ctx, clf)?;
    cfg.threshold = threshold_choice(ctx, threshold, keep)?;
    cfg.lda = lda_config(ctx, k, sweeps, None, None)?;
    if let Some(o) = order {
        if o == 0 || o > logsieve_core::ngram::MAX_ORDER {
            return usage(format!("--order must be in 1..={}", logsieve_core::ngram::MAX_ORDER));
        }
        cfg.lm_order = o;
    }
    let records = read_labeled_file(input.as_deref())?;
    let (mut bundle, summary) = PipelineBundle::train(&records, &cfg)?;
    bundle.save(out)?;
    print_summary(&summary, out);
    Ok(())
}

fn cmd_classify(ctx: &Ctx, bundle: &Path, input: &InputArgs) -> anyhow::Result<()> {
    let bundle = load_bundle(bundle)?;
    let records = read_all_records(input)?;
    let predictions = bundle.classify_all(&records, ctx.workers);
    let mut out = open_output(None)?;
    for (r, p) in records.iter().zip(predictions) {
        let doc = match p {
            Prediction::Filtered { log2_ppx } => json!({
                "line": r.line_no,
                "filtered": true,
                "log2_ppx": log2_ppx,
            }),
            Prediction::Classified { class, probs, log2_ppx } => json!({
                "line": r.line_no,
                "filtered": false,
                "log2_ppx": log2_ppx,
                "class": class.label(),
                "probs": probs,
            }),
        };
        writeln!(out, "{doc}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(ctx: &Ctx, bundle: &Path, input: Option<PathBuf>, report: Option<PathBuf>) -> anyhow::Result<()> {
    let bundle = load_bundle(bundle)?;
    let records = read_labeled_file(input.as_deref())?;
    let eval = bundle.evaluate(&records, ctx.workers)?;
    print!("{eval}");
    let doc = serde_json::to_string_pretty(&eval)?;
    match report {
        Some(p) => write_file(&p, doc.as_bytes())?,
        None => println!("\n{doc}"),
    }
    Ok(())
}

fn cmd_bench(
    ctx: &Ctx,
    bundle: &Path,
    input: Option<PathBuf>,
    format: RecordFormat,
    generate_mb: u64,
    sample: usize,
) -> anyhow::Result<()> {
    let bundle = load_bundle(bundle)?;
    let records = match input {
        Some(p) => read_all_records(&InputArgs { input: Some(p), format })?,
        None => {
            if generate_mb == 0 {
                return usage("--generate-mb must be at least 1");
            }
            let target = generate_mb * 1024 * 1024;
            let mut g = Generator::new(SyntheticSpec {
                seed: ctx.seed,
                ..SyntheticSpec::default()
            })?;
            let mut bytes = 0u64;
            let mut out = Vec::new();
            while bytes < target {
                let r = g.next_record();
                bytes += r.text.len() as u64;
                out.push(RawRecord::new(out.len() as u64 + 1, r.text));
            }
            out
        }
    };
    let report = bundle.bench(&records, ctx.workers, sample)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
