//! Subcommand-driven experiment pipelines. Every run resolves its config
//! (file + flag overrides), produces its outputs under `--out`, and writes a
//! `manifest.toml` there that can be fed back through `--config` to replay
//! the run bit-identically.

mod render;

use crate::advtrain::{self, RobustTrainConfig, TrainMode};
use crate::attack::{batch_attack, AttackOutcome, AttackResult};
use crate::checkpoint;
use crate::codec::{self, AutoencoderModel};
use crate::config::{write_manifest, ConfigError, RunConfig};
use crate::corpus::{self, CorpusError};
use crate::metrics::{ecdf, pareto_front, MethodPoint};
use crate::mil::{self, Bag, ClassifierModel, ClassifierTrainConfig, Split};
use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use render::{diff_markup, mean_std, pct, printable, text_table};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Other(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "advstrings", version, about = "Train string autoencoders and bag classifiers, generate adversarial filepath strings, and adversarially train against them")]
pub struct Cli {
    /// TOML run config; command-line flags override config keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing). All run outputs land here.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for bag-level parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic bag dataset and its temporal train/test split.
    GenData,
    /// Train the character autoencoder on every path of a dataset file.
    TrainAutoencoder {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train bag classifiers (one per seed) on a frozen autoencoder.
    TrainClassifier {
        #[arg(long)]
        autoencoder: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Adversarially train classifiers (mode: standard, latent or full).
    AdvTrain {
        #[arg(long)]
        autoencoder: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Run the attack grid against one or more classifiers; emit the summary
    /// table with Pareto marking, eCDF step data and adversarial samples.
    Attack {
        /// Classifier checkpoint (repeat for uncertainty estimates).
        #[arg(long = "classifier", required = true)]
        classifiers: Vec<PathBuf>,
        #[arg(long)]
        autoencoder: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Attack with every model, evaluate every other model on the results.
    CrossEval {
        /// Classifier checkpoint (repeat; at least two).
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        autoencoder: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Render the tables of a previous run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if config.threads > 0 {
        // Ignore failure when a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    if !matches!(cli.command, Command::Report { .. }) {
        fs::create_dir_all(&cli.out)
            .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    }

    match &cli.command {
        Command::GenData => gen_data(&config, &cli.out),
        Command::TrainAutoencoder { dataset } => train_autoencoder(&config, &cli.out, dataset),
        Command::TrainClassifier { autoencoder, train, test } => {
            train_classifier(&config, &cli.out, autoencoder, train, test)
        }
        Command::AdvTrain { autoencoder, train, test, mode } => {
            adv_train(&config, &cli.out, autoencoder, train, test, mode.as_deref())
        }
        Command::Attack { classifiers, autoencoder, dataset } => {
            attack(&config, &cli.out, classifiers, autoencoder, dataset)
        }
        Command::CrossEval { models, autoencoder, dataset } => {
            cross_eval(&config, &cli.out, models, autoencoder, dataset)
        }
        Command::Report { run } => report(run),
    }
}

fn load_bags(path: &Path, split: Split) -> Result<Vec<Bag>, CliError> {
    corpus::read_dataset(path, split)
        .map_err(|e| CliError::Other(anyhow!(e).context(format!("reading dataset {}", path.display()))))
}

fn load_codec(path: &Path) -> Result<AutoencoderModel, CliError> {
    checkpoint::load_autoencoder(path).map_err(|e| {
        CliError::Other(anyhow!(e).context(format!(
            "loading autoencoder checkpoint {} (run train-autoencoder first)",
            path.display()
        )))
    })
}

fn load_clf(path: &Path) -> Result<ClassifierModel, CliError> {
    checkpoint::load_classifier(path).map_err(|e| {
        CliError::Other(anyhow!(e).context(format!(
            "loading classifier checkpoint {} (run train-classifier first)",
            path.display()
        )))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------- gen-data

#[derive(Serialize, Deserialize)]
struct GenSummary {
    bags: usize,
    train_bags: usize,
    test_bags: usize,
    cutoff_timestamp: i64,
    train_paths: usize,
    test_paths: usize,
}

fn gen_data(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut spec = config.corpus.clone();
    if spec.seed == 0 {
        spec.seed = config.seed;
    }
    let bags = corpus::generate(&spec).map_err(|e| match e {
        CorpusError::BadSpec(msg) => CliError::Usage(format!("corpus spec: {msg}")),
        other => CliError::Other(anyhow!(other)),
    })?;
    let cutoff = spec.drift_cutoff();
    let (train, test) = corpus::temporal_split(&bags, cutoff);
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Usage(format!(
            "temporal split at {cutoff} produced an empty {} side; adjust timestamp_range or drift_fraction",
            if train.is_empty() { "train" } else { "test" }
        )));
    }
    corpus::write_dataset(&out.join("train.jsonl"), &train).map_err(|e| CliError::Other(anyhow!(e)))?;
    corpus::write_dataset(&out.join("test.jsonl"), &test).map_err(|e| CliError::Other(anyhow!(e)))?;
    let summary = GenSummary {
        bags: bags.len(),
        train_bags: train.len(),
        test_bags: test.len(),
        cutoff_timestamp: cutoff,
        train_paths: corpus::all_paths(&train).len(),
        test_paths: corpus::all_paths(&test).len(),
    };
    write_json(&out.join("gen_summary.json"), &summary)?;
    write_manifest(&out.join("manifest.toml"), &config.manifest("gen-data", out, &[]))
        .with_context(|| "writing manifest")?;
    println!(
        "gen-data: {} bags -> {} train / {} test (cutoff {}), {} train paths",
        summary.bags, summary.train_bags, summary.test_bags, cutoff, summary.train_paths
    );
    Ok(())
}

// ------------------------------------------------------- train-autoencoder

fn train_autoencoder(config: &RunConfig, out: &Path, dataset: &Path) -> Result<(), CliError> {
    let bags = load_bags(dataset, Split::Train)?;
    let paths = corpus::all_paths(&bags);
    let mut tc = config.autoencoder.clone();
    if tc.seed == 0 {
        tc.seed = config.seed;
    }
    let (model, report) = codec::train_autoencoder(&paths, &tc)
        .map_err(|e| CliError::Other(anyhow!(e).context("training autoencoder")))?;
    checkpoint::save_autoencoder(&out.join("autoencoder.ckpt"), &model)
        .map_err(|e| CliError::Other(anyhow!(e)))?;
    write_json(&out.join("autoencoder_report.json"), &report)?;
    write_manifest(
        &out.join("manifest.toml"),
        &config.manifest("train-autoencoder", out, &[("dataset", dataset)]),
    )
    .with_context(|| "writing manifest")?;
    for (i, (loss, acc)) in report.epoch_loss.iter().zip(&report.epoch_holdout_accuracy).enumerate() {
        println!("epoch {:>2}: train loss {:.4}  holdout accuracy {}", i + 1, loss, pct(*acc));
    }
    println!("final holdout reconstruction accuracy: {}", pct(report.final_holdout_accuracy));
    Ok(())
}

// -------------------------------------------------------- train-classifier

#[derive(Serialize, Deserialize)]
struct SeedRun {
    seed: u64,
    checkpoint: String,
    final_train_accuracy: f64,
    final_test_accuracy: f64,
    epoch_test_accuracy: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MultiSeedReport {
    mode: String,
    runs: Vec<SeedRun>,
    mean_test_accuracy: f64,
    std_test_accuracy: f64,
}

fn train_classifier(
    config: &RunConfig,
    out: &Path,
    autoencoder: &Path,
    train: &Path,
    test: &Path,
) -> Result<(), CliError> {
    let codec_model = load_codec(autoencoder)?;
    let mut bags = load_bags(train, Split::Train)?;
    bags.extend(load_bags(test, Split::Test)?);
    let section = &config.classifier;
    let mut runs = Vec::new();
    for &seed in &section.seeds {
        let cfg = ClassifierTrainConfig {
            hp: section.hp.clone(),
            epochs: section.epochs,
            batch_size: section.batch_size,
            learning_rate: section.learning_rate,
            seed,
        };
        let (model, report) = mil::train_classifier(&bags, &codec_model, &cfg)
            .map_err(|e| CliError::Other(anyhow!(e).context("training classifier")))?;
        let name = format!("classifier_seed{seed}.ckpt");
        checkpoint::save_classifier(&out.join(&name), &model).map_err(|e| CliError::Other(anyhow!(e)))?;
        runs.push(SeedRun {
            seed,
            checkpoint: name,
            final_train_accuracy: *report.epoch_train_accuracy.last().unwrap_or(&f64::NAN),
            final_test_accuracy: *report.epoch_test_accuracy.last().unwrap_or(&f64::NAN),
            epoch_test_accuracy: report.epoch_test_accuracy,
        });
    }
    let accs: Vec<f64> = runs.iter().map(|r| r.final_test_accuracy).collect();
    let (mean, std) = mean_std(&accs);
    let report = MultiSeedReport {
        mode: "standard".into(),
        runs,
        mean_test_accuracy: mean,
        std_test_accuracy: std,
    };
    write_json(&out.join("classifier_report.json"), &report)?;
    write_manifest(
        &out.join("manifest.toml"),
        &config.manifest(
            "train-classifier",
            out,
            &[("autoencoder", autoencoder), ("train", train), ("test", test)],
        ),
    )
    .with_context(|| "writing manifest")?;
    print_multi_seed("train-classifier", &report);
    Ok(())
}

fn print_multi_seed(cmd: &str, report: &MultiSeedReport) {
    let rows: Vec<Vec<String>> = report
        .runs
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                pct(r.final_train_accuracy),
                pct(r.final_test_accuracy),
                r.checkpoint.clone(),
            ]
        })
        .collect();
    print!("{}", text_table(&["seed", "train acc", "test acc", "checkpoint"], &rows));
    if report.runs.len() > 1 {
        println!(
            "{cmd} ({}): test accuracy {} +/- {}",
            report.mode,
            pct(report.mean_test_accuracy),
            pct(report.std_test_accuracy)
        );
    }
}

// --------------------------------------------------------------- adv-train

fn adv_train(
    config: &RunConfig,
    out: &Path,
    autoencoder: &Path,
    train: &Path,
    test: &Path,
    mode_flag: Option<&str>,
) -> Result<(), CliError> {
    let codec_model = load_codec(autoencoder)?;
    let mut bags = load_bags(train, Split::Train)?;
    bags.extend(load_bags(test, Split::Test)?);
    let section = &config.adv_train;
    let mode_name = mode_flag.unwrap_or(&section.mode);
    let attack_cfg = section.attack_spec().to_attack_config().map_err(CliError::Usage)?;
    let mode = match mode_name {
        "standard" => TrainMode::Standard,
        "latent" => TrainMode::AdversarialLatent { attack: attack_cfg },
        "full" => TrainMode::AdversarialFull { attack: attack_cfg },
        other => return Err(CliError::Usage(format!("unknown adv-train mode {other:?}"))),
    };
    let mut runs = Vec::new();
    for &seed in &section.seeds {
        let cfg = RobustTrainConfig {
            hp: config.classifier.hp.clone(),
            epochs: section.epochs,
            batch_size: section.batch_size,
            learning_rate: section.learning_rate,
            seed,
        };
        let (model, report) = advtrain::train_robust(&bags, &codec_model, &mode, &cfg)
            .map_err(|e| CliError::Other(anyhow!(e).context("adversarial training")))?;
        let name = format!("advtrain_{mode_name}_seed{seed}.ckpt");
        checkpoint::save_classifier(&out.join(&name), &model).map_err(|e| CliError::Other(anyhow!(e)))?;
        let last = report.epochs.last();
        runs.push(SeedRun {
            seed,
            checkpoint: name,
            final_train_accuracy: last.map(|e| e.train_accuracy).unwrap_or(f64::NAN),
            final_test_accuracy: last.map(|e| e.test_accuracy).unwrap_or(f64::NAN),
            epoch_test_accuracy: report.epochs.iter().map(|e| e.test_accuracy).collect(),
        });
    }
    let accs: Vec<f64> = runs.iter().map(|r| r.final_test_accuracy).collect();
    let (mean, std) = mean_std(&accs);
    let report = MultiSeedReport {
        mode: mode_name.to_string(),
        runs,
        mean_test_accuracy: mean,
        std_test_accuracy: std,
    };
    write_json(&out.join("advtrain_report.json"), &report)?;
    write_manifest(
        &out.join("manifest.toml"),
        &config.manifest(
            "adv-train",
            out,
            &[("autoencoder", autoencoder), ("train", train), ("test", test)],
        ),
    )
    .with_context(|| "writing manifest")?;
    print_multi_seed("adv-train", &report);
    Ok(())
}

// ------------------------------------------------------------------ attack

#[derive(Serialize)]
struct AttackReport {
    eval_bags: usize,
    classifiers: Vec<String>,
    /// Methods with both coordinates defined (Pareto candidates).
    points: Vec<MethodPoint>,
    pareto_methods: Vec<String>,
    /// Methods whose RLD (or rate) was undefined: (label, success rate).
    partial_methods: Vec<(String, Option<f64>)>,
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    method: &'a str,
    bag_index: usize,
    label: &'a str,
    outcome: &'a str,
    original_paths: &'a [String],
    adversarial_paths: Option<Vec<String>>,
    iterations_used: usize,
    eps_used: f64,
    loss_history: &'a [f64],
}

fn outcome_name(o: AttackOutcome) -> &'static str {
    match o {
        AttackOutcome::AlreadyMisclassified => "already-misclassified",
        AttackOutcome::Success => "success",
        AttackOutcome::Failure => "failure",
    }
}

fn attack(
    config: &RunConfig,
    out: &Path,
    classifiers: &[PathBuf],
    autoencoder: &Path,
    dataset: &Path,
) -> Result<(), CliError> {
    let codec_model = load_codec(autoencoder)?;
    let clfs: Vec<ClassifierModel> =
        classifiers.iter().map(|p| load_clf(p)).collect::<Result<_, _>>()?;
    for (path, clf) in classifiers.iter().zip(&clfs) {
        if clf.hp.latent_dim != codec_model.hp.latent_dim {
            return Err(CliError::Usage(format!(
                "incompatible latent dimensions: classifier {} has m={} but the autoencoder has d={}",
                path.display(),
                clf.hp.latent_dim,
                codec_model.hp.latent_dim
            )));
        }
    }
    let all_bags = load_bags(dataset, Split::Test)?;
    if all_bags.is_empty() {
        return Err(CliError::Usage(format!("evaluation dataset {} is empty", dataset.display())));
    }
    let limit = config.attack.eval_limit.min(all_bags.len());
    let bags = &all_bags[..limit];

    let mut points: Vec<MethodPoint> = Vec::new();
    let mut partial: Vec<(String, Option<f64>)> = Vec::new();
    let mut traces = String::new();
    let mut samples = String::new();
    let mut sample_count = 0usize;
    for (mi, spec) in config.attack.grid.iter().enumerate() {
        let acfg = spec.to_attack_config().map_err(CliError::Usage)?;
        let label = acfg.label();
        let mut rates = Vec::new();
        let mut rlds = Vec::new();
        let mut first_rlds: Vec<f64> = Vec::new();
        for (ci, clf) in clfs.iter().enumerate() {
            let (results, summary) = batch_attack(clf, &codec_model, bags, &acfg)
                .map_err(|e| CliError::Other(anyhow!(e).context(format!("attack {label}"))))?;
            if let Some(r) = summary.success_rate {
                rates.push(r);
            }
            if let Some(d) = summary.mean_rld {
                rlds.push(d);
            }
            if ci == 0 {
                record_traces(&mut traces, &label, bags, &results);
                collect_rlds(&mut first_rlds, bags, &results);
                dump_samples(
                    &mut samples,
                    &mut sample_count,
                    config.attack.dump_samples,
                    &label,
                    bags,
                    &results,
                );
            }
        }
        if rates.is_empty() || rlds.is_empty() {
            // Success rate can be defined (e.g. all failures -> 0) while the
            // RLD over zero successes is not; such methods cannot sit on the
            // (rate, RLD) plane.
            let rate = if rates.is_empty() { None } else { Some(mean_std(&rates).0) };
            partial.push((label, rate));
            continue;
        }
        let (rate_mean, rate_std) = mean_std(&rates);
        let (rld_mean, rld_std) = mean_std(&rlds);
        points.push(MethodPoint {
            method_id: label.clone(),
            success_rate: rate_mean,
            mean_rld: rld_mean,
            uncertainty: (clfs.len() > 1).then_some((rate_std, rld_std)),
        });
        if !first_rlds.is_empty() {
            let steps = ecdf(&first_rlds);
            let mut text = String::from("# rld\tcumulative_fraction\n");
            for (x, f) in steps {
                let _ = writeln!(text, "{x}\t{f}");
            }
            fs::write(out.join(format!("ecdf_method{mi:02}.tsv")), text)
                .with_context(|| "writing ecdf data")?;
        }
    }

    let front = pareto_front(&points);
    let pareto_methods: Vec<String> = front.iter().map(|p| p.method_id.clone()).collect();
    let report = AttackReport {
        eval_bags: bags.len(),
        classifiers: classifiers.iter().map(|p| p.display().to_string()).collect(),
        points: points.clone(),
        pareto_methods: pareto_methods.clone(),
        partial_methods: partial.clone(),
    };
    write_json(&out.join("attack_summary.json"), &report)?;
    fs::write(out.join("attack_traces.jsonl"), traces).with_context(|| "writing traces")?;
    fs::write(out.join("adversarial_samples.txt"), samples).with_context(|| "writing samples")?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for p in &points {
        let (rate, rld) = match p.uncertainty {
            Some((rs, ds)) => (
                format!("{} +/- {}", pct(p.success_rate), pct(rs)),
                format!("{:.3} +/- {:.3}", p.mean_rld, ds),
            ),
            None => (pct(p.success_rate), format!("{:.3}", p.mean_rld)),
        };
        let mark = if pareto_methods.contains(&p.method_id) { "*" } else { "" };
        rows.push(vec![p.method_id.clone(), rate, rld, mark.into()]);
    }
    for (m, rate) in &partial {
        let rate_cell = rate.map(pct).unwrap_or_else(|| "n/a".into());
        rows.push(vec![m.clone(), rate_cell, "n/a".into(), "".into()]);
    }
    let table = text_table(&["Method", "Attack Success Rate", "Average RLD", "Pareto"], &rows);
    fs::write(out.join("attack_summary.txt"), &table).with_context(|| "writing summary table")?;
    print!("{table}");

    let mut inputs: Vec<(&str, &Path)> = vec![("autoencoder", autoencoder), ("dataset", dataset)];
    for p in classifiers {
        inputs.push(("classifier", p));
    }
    write_manifest(&out.join("manifest.toml"), &config.manifest("attack", out, &inputs))
        .with_context(|| "writing manifest")?;
    Ok(())
}

fn record_traces(buf: &mut String, method: &str, bags: &[Bag], results: &[AttackResult]) {
    for (i, (bag, r)) in bags.iter().zip(results).enumerate() {
        let rec = TraceRecord {
            method,
            bag_index: i,
            label: match bag.label {
                crate::mil::Label::Benign => "benign",
                crate::mil::Label::Malicious => "malicious",
            },
            outcome: outcome_name(r.outcome),
            original_paths: &bag.paths,
            adversarial_paths: r
                .adversarial_paths
                .as_ref()
                .map(|ps| ps.iter().map(|p| printable(p)).collect()),
            iterations_used: r.iterations_used,
            eps_used: r.eps_used,
            loss_history: &r.loss_history,
        };
        buf.push_str(&serde_json::to_string(&rec).expect("trace serializes"));
        buf.push('\n');
    }
}

fn collect_rlds(acc: &mut Vec<f64>, bags: &[Bag], results: &[AttackResult]) {
    for (bag, r) in bags.iter().zip(results) {
        if r.outcome == AttackOutcome::Success {
            let originals: Vec<Vec<u8>> = bag.paths.iter().map(|p| p.as_bytes().to_vec()).collect();
            let adv = r.adversarial_paths.as_ref().expect("success carries paths");
            if let Ok(b) = crate::metrics::bag_rld(&originals, adv) {
                acc.push(b.mean);
            }
        }
    }
}

fn dump_samples(
    buf: &mut String,
    count: &mut usize,
    cap: usize,
    method: &str,
    bags: &[Bag],
    results: &[AttackResult],
) {
    for (bag, r) in bags.iter().zip(results) {
        if *count >= cap {
            return;
        }
        if r.outcome != AttackOutcome::Success {
            continue;
        }
        let adv = r.adversarial_paths.as_ref().expect("success carries paths");
        for (orig, a) in bag.paths.iter().zip(adv) {
            if orig.as_bytes() == a.as_slice() {
                continue;
            }
            let _ = writeln!(buf, "Method: {method}");
            let _ = writeln!(buf, "Input:\n{orig}");
            let _ = writeln!(buf, "Adversarial input:\n{}\n", diff_markup(orig.as_bytes(), a));
        }
        *count += 1;
    }
}

// -------------------------------------------------------------- cross-eval

#[derive(Serialize)]
struct CrossEvalReport {
    eval_bags: usize,
    model_names: Vec<String>,
    standard_accuracy: Vec<f64>,
    /// robustness[row][col]: attacker = row, target = col.
    robustness: Vec<Vec<f64>>,
    support: Vec<Vec<usize>>,
}

fn cross_eval(
    config: &RunConfig,
    out: &Path,
    models: &[PathBuf],
    autoencoder: &Path,
    dataset: &Path,
) -> Result<(), CliError> {
    if models.len() < 2 {
        return Err(CliError::Usage("cross-eval requires at least two --model checkpoints".into()));
    }
    let codec_model = load_codec(autoencoder)?;
    let loaded: Vec<ClassifierModel> = models.iter().map(|p| load_clf(p)).collect::<Result<_, _>>()?;
    let all_bags = load_bags(dataset, Split::Test)?;
    if all_bags.is_empty() {
        return Err(CliError::Usage(format!("evaluation dataset {} is empty", dataset.display())));
    }
    let limit = config.cross_eval.eval_limit.min(all_bags.len());
    let bags = &all_bags[..limit];
    let acfg = config.cross_eval.attack.to_attack_config().map_err(CliError::Usage)?;

    let named: Vec<(String, &ClassifierModel)> = models
        .iter()
        .zip(&loaded)
        .map(|(p, m)| {
            (p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string()), m)
        })
        .collect();
    let matrix = advtrain::cross_matrix(&named, bags, &codec_model, &acfg)
        .map_err(|e| CliError::Other(anyhow!(e).context("cross evaluation")))?;

    let encoded = mil::pre_encode_bags(&codec_model, bags)
        .map_err(|e| CliError::Other(anyhow!(e).context("encoding evaluation bags")))?;
    let refs: Vec<&mil::EncodedBag> = encoded.iter().collect();
    let standard: Vec<f64> = loaded.iter().map(|m| mil::accuracy_on(m, &refs)).collect();

    let report = CrossEvalReport {
        eval_bags: bags.len(),
        model_names: matrix.model_names.clone(),
        standard_accuracy: standard.clone(),
        robustness: matrix
            .cells
            .iter()
            .map(|row| row.iter().map(|c| c.robustness).collect())
            .collect(),
        support: matrix
            .cells
            .iter()
            .map(|row| row.iter().map(|c| c.support).collect())
            .collect(),
    };
    write_json(&out.join("cross_eval.json"), &report)?;

    let mut acc_rows = Vec::new();
    for (name, acc) in matrix.model_names.iter().zip(&standard) {
        acc_rows.push(vec![name.clone(), pct(*acc)]);
    }
    let mut text = String::from("Standard accuracy (clean evaluation bags)\n");
    text.push_str(&text_table(&["Model", "Standard Accuracy"], &acc_rows));
    text.push_str("\nRobustness: rows attack, columns defend (support in parentheses)\n");
    let mut headers: Vec<&str> = vec!["Attack Model \\ Target"];
    for n in &matrix.model_names {
        headers.push(n);
    }
    let mut rows = Vec::new();
    for (i, name) in matrix.model_names.iter().enumerate() {
        let mut row = vec![name.clone()];
        for j in 0..matrix.model_names.len() {
            let c = &matrix.cells[i][j];
            row.push(if c.zero_support {
                "n/a (0 successes)".to_string()
            } else {
                format!("{} ({})", pct(c.robustness), c.support)
            });
        }
        rows.push(row);
    }
    text.push_str(&text_table(&headers, &rows));
    fs::write(out.join("cross_eval.txt"), &text).with_context(|| "writing cross-eval table")?;
    print!("{text}");

    let mut inputs: Vec<(&str, &Path)> = vec![("autoencoder", autoencoder), ("dataset", dataset)];
    for p in models {
        inputs.push(("model", p));
    }
    write_manifest(&out.join("manifest.toml"), &config.manifest("cross-eval", out, &inputs))
        .with_context(|| "writing manifest")?;
    Ok(())
}

// ------------------------------------------------------------------ report

fn report(run: &Path) -> Result<(), CliError> {
    let manifest = run.join("manifest.toml");
    if !manifest.exists() {
        return Err(CliError::Usage(format!("{} has no manifest.toml", run.display())));
    }
    let text = fs::read_to_string(&manifest).with_context(|| "reading manifest")?;
    let parsed: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("manifest does not parse: {e}")))?;
    if let Some(echo) = &parsed.run {
        println!("run: {} (tool {})", echo.subcommand, echo.tool_version);
        println!("out: {}", echo.out_dir);
        for (k, v) in &echo.inputs {
            println!("input {k}: {v}");
        }
    }
    for name in [
        "gen_summary.json",
        "autoencoder_report.json",
        "classifier_report.json",
        "advtrain_report.json",
        "attack_summary.json",
        "cross_eval.json",
    ] {
        let path = run.join(name);
        if path.exists() {
            println!("\n== {name}");
            let content = fs::read_to_string(&path).with_context(|| format!("reading {name}"))?;
            println!("{content}");
        }
    }
    for name in ["attack_summary.txt", "cross_eval.txt"] {
        let path = run.join(name);
        if path.exists() {
            println!("\n== {name}");
            println!("{}", fs::read_to_string(&path).with_context(|| format!("reading {name}"))?);
        }
    }
    Ok(())
}
