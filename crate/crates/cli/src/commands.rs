//! The `petreq` subcommands. Every command validates its inputs before
//! writing anything, so a usage error never leaves partial artifacts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use petreq_core::backend::{
    build_tokenizer, build_tokenizer_for_task, save_model, OracleBackend, SnapshotFile, ToyMlm,
};
use petreq_core::data::{class_distribution, Label, Provenance};
use petreq_core::ensemble::{
    build_ensemble, compute_weights, distill, soft_label, DistillConfig, MemberInit, MemberModel,
};
use petreq_core::error::{Error, Result};
use petreq_core::metrics::{confusion, report_scale, summary, ArmReports, LearningCurve};
use petreq_core::pvp::{load_pvp_definitions, resolve_pvp, PvpLibrary};
use petreq_core::splits::{stratified_split, SplitPlan, TABLE_PROPORTIONS};
use petreq_core::synth::{generate, GeneratorConfig, VocabTables};
use petreq_core::training::{train_supervised, TrainConfig};

use crate::config::{apply_out_root, BackendKind, ExperimentConfig, Overrides};
use crate::experiment::{
    evaluate_classifier, load_ensemble, run_experiment, save_ensemble, SizeOutcome,
};
use crate::io;

/// Few-shot conflict detection for requirement pairs: pattern-based scorers,
/// weighted ensembles, soft labeling, and distillation.
#[derive(Parser)]
#[command(name = "petreq", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus.
    Gen(GenArgs),
    /// Stratified split into train sizes, unlabeled pool, and test set.
    Split(SplitArgs),
    /// Train the supervised sequence-pair baseline.
    TrainSup(TrainSupArgs),
    /// Fine-tune the PVP ensemble members (weights computed before tuning).
    TrainPet(TrainPetArgs),
    /// Zero-shot PVP weights on a labeled set.
    Weights(WeightsArgs),
    /// Soft-label an unlabeled pool with a trained ensemble and distill a
    /// student classifier.
    Distill(DistillArgs),
    /// Score stored predictions against gold labels.
    Eval(EvalArgs),
    /// Assemble learning-curve reports from per-size results.
    Report(ReportArgs),
    /// The full protocol: generate, split, train both arms at every size,
    /// evaluate, and report.
    RunExperiment(RunArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-class counts: conflict,duplicate,neutral.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [100usize, 100, 100])]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Skip the three canonical exemplar pairs.
    #[arg(long)]
    pub no_exemplars: bool,
    /// TOML vocabulary tables.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Labeled JSONL dataset.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128, 256, 512, 1024, 2048])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    pub unlabeled: usize,
    #[arg(long, default_value_t = 2000)]
    pub test: usize,
    /// Class proportions: conflict,duplicate,neutral.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub proportions: Option<Vec<f64>>,
    /// Sample each train size independently instead of nesting.
    #[arg(long)]
    pub flat: bool,
}

#[derive(Args)]
pub struct TrainSupArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Labeled training JSONL.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Labeled evaluation JSONL.
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainPetArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory written by train-pet.
    #[arg(long)]
    pub ensemble: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    /// Unlabeled JSONL pool.
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predictions JSONL ({"id", "label"} per line).
    #[arg(long)]
    pub preds: PathBuf,
    /// Gold labeled JSONL.
    #[arg(long)]
    pub gold: PathBuf,
    /// Optional JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Directory holding size_<n>.json results.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; expands to three run seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub pvps: Option<Vec<String>>,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(path) => ExperimentConfig::from_file(path),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let counts: [usize; 3] = args
        .counts
        .clone()
        .try_into()
        .map_err(|_| Error::InvalidConfig("--counts needs three values".to_string()))?;
    let tables = match &args.vocab {
        Some(path) => VocabTables::from_toml(&std::fs::read_to_string(path)?)?,
        None => VocabTables::defaults(),
    };
    let cfg = GeneratorConfig {
        counts,
        seed: args.seed,
        include_exemplars: !args.no_exemplars,
        tables,
    };
    let corpus = generate(&cfg)?;
    let out = apply_out_root(&args.out);
    std::fs::create_dir_all(&out)?;
    io::write_records(
        &out.join("synthetic.jsonl"),
        &io::labeled_to_records(&corpus.dataset),
    )?;
    io::write_jsonl(&out.join("synthetic.meta.jsonl"), &corpus.metadata)?;
    let dist = class_distribution(&corpus.dataset);
    println!(
        "generated {} examples (conflict {}, duplicate {}, neutral {}) -> {}",
        dist.total(),
        dist.count(Label::Conflict),
        dist.count(Label::Duplicate),
        dist.count(Label::Neutral),
        out.join("synthetic.jsonl").display()
    );
    Ok(())
}

pub fn cmd_split(args: &SplitArgs) -> Result<()> {
    let dataset = io::read_labeled(&args.data, Provenance::Train)?;
    let proportions = match &args.proportions {
        Some(p) => [p[0], p[1], p[2]],
        None => TABLE_PROPORTIONS,
    };
    let plan = SplitPlan {
        proportions,
        train_sizes: args.sizes.clone(),
        unlabeled_size: args.unlabeled,
        test_size: args.test,
        seed: args.seed,
        nested: !args.flat,
    };
    let split = stratified_split(&dataset, &plan)?;
    let out = apply_out_root(&args.out);
    std::fs::create_dir_all(&out)?;
    io::write_id_list(&out.join("test.ids"), &split.test)?;
    io::write_id_list(&out.join("unlabeled.ids"), &split.unlabeled)?;
    io::write_records(
        &out.join("unlabeled.jsonl"),
        &io::pairs_to_records(&split.unlabeled),
    )?;
    io::write_records(&out.join("test.jsonl"), &io::labeled_to_records(&split.test))?;
    let mut counts = BTreeMap::new();
    for (size, subset) in &split.train_by_size {
        io::write_id_list(&out.join(format!("train_{size}.ids")), subset)?;
        io::write_records(
            &out.join(format!("train_{size}.jsonl")),
            &io::labeled_to_records(subset),
        )?;
        counts.insert(format!("train_{size}"), class_distribution(subset).counts());
    }
    counts.insert("test".to_string(), class_distribution(&split.test).counts());
    io::write_json(&out.join("counts.json"), &counts)?;
    println!(
        "split {} examples into {} train sizes + {} unlabeled + {} test -> {}",
        dataset.len(),
        split.train_by_size.len(),
        split.unlabeled.len(),
        split.test.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_train_sup(args: &TrainSupArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let resolved = cfg.resolve(&Overrides::default())?;
    let train = io::read_labeled(&args.train, Provenance::Train)?;
    let eval = args
        .eval
        .as_ref()
        .map(|p| io::read_labeled(p, Provenance::Test))
        .transpose()?;
    let tokenizer = match &eval {
        Some(ds) => {
            let merged: Vec<&str> = train
                .iter()
                .chain(ds.iter())
                .flat_map(|e| [e.pair.r1(), e.pair.r2()])
                .collect();
            petreq_core::backend::Tokenizer::build(merged)?
        }
        None => build_tokenizer(&train)?,
    };
    let seed = args.seed.unwrap_or(resolved.seeds[0]);
    let train_cfg = TrainConfig {
        seed,
        ..resolved.train
    };
    let model = match resolved.backend {
        BackendKind::Oracle => MemberModel::Oracle(OracleBackend::new(
            &train,
            resolved.oracle_noise,
            resolved.oracle_seed,
        )?),
        BackendKind::Toy => {
            let init = ToyMlm::new(resolved.mlm, tokenizer.vocab_size(), seed)?;
            let outcome = train_supervised(&init, &train, &tokenizer, &train_cfg)?;
            MemberModel::Toy(outcome.model)
        }
    };
    let out = apply_out_root(&args.out);
    std::fs::create_dir_all(&out)?;
    save_model(
        &out.join("supervised.json"),
        &SnapshotFile::new(model.to_state(), &tokenizer),
    )?;
    println!("trained supervised baseline (seed {seed}) -> {}", out.display());
    if let Some(eval) = eval {
        let (preds, report) =
            evaluate_classifier(&model, &eval, &tokenizer, train_cfg.max_seq_length)?;
        io::write_predictions(&out.join("eval_predictions.jsonl"), &preds)?;
        io::write_json(&out.join("eval_metrics.json"), &report)?;
        println!(
            "eval accuracy {:.1}, macro F1 {:.1}, weighted F1 {:.1}",
            report_scale(report.accuracy),
            report_scale(report.macro_f1),
            report_scale(report.weighted_f1)
        );
    }
    Ok(())
}

fn pvp_library(resolved_path: &Option<PathBuf>) -> Result<Option<PvpLibrary>> {
    match resolved_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(Some(load_pvp_definitions(&text)?))
        }
        None => Ok(None),
    }
}

pub fn cmd_train_pet(args: &TrainPetArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let resolved = cfg.resolve(&Overrides::default())?;
    let train = io::read_labeled(&args.train, Provenance::Train)?;
    let tokenizer = build_tokenizer_for_task(&train, &resolved.pvps)?;
    let init = match resolved.backend {
        BackendKind::Oracle => MemberInit::Oracle(OracleBackend::new(
            &train,
            resolved.oracle_noise,
            resolved.oracle_seed,
        )?),
        BackendKind::Toy => MemberInit::Toy(resolved.mlm),
    };
    let ensemble = build_ensemble(
        &init,
        &resolved.pvps,
        &resolved.seeds,
        &train,
        &tokenizer,
        &resolved.train,
    )?;
    let out = apply_out_root(&args.out);
    save_ensemble(&out, &ensemble, &tokenizer)?;
    println!(
        "trained {} ensemble members ({} pvps x {} seeds) -> {}",
        ensemble.len(),
        resolved.pvps.len(),
        resolved.seeds.len(),
        out.display()
    );
    for member in ensemble.members() {
        println!(
            "  {} seed {} weight {:.4}",
            member.pvp.id(),
            member.seed,
            member.weight
        );
    }
    Ok(())
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let resolved = cfg.resolve(&Overrides::default())?;
    let train = io::read_labeled(&args.train, Provenance::Train)?;
    let tokenizer = build_tokenizer_for_task(&train, &resolved.pvps)?;

    let mut rows = Vec::new();
    match resolved.backend {
        BackendKind::Oracle => {
            let oracle =
                OracleBackend::new(&train, resolved.oracle_noise, resolved.oracle_seed)?;
            for pvp in &resolved.pvps {
                for seed in &resolved.seeds {
                    let members: Vec<(&dyn petreq_core::backend::ScorerModel, &petreq_core::pvp::Pvp)> =
                        vec![(&oracle, pvp)];
                    let w =
                        compute_weights(&members, &train, &tokenizer, resolved.train.max_seq_length)?;
                    rows.push((pvp.id(), *seed, w[0]));
                }
            }
        }
        BackendKind::Toy => {
            for pvp in &resolved.pvps {
                for seed in &resolved.seeds {
                    let member_seed = *seed ^ fnv1a_str(&pvp.id());
                    let model = ToyMlm::new(resolved.mlm, tokenizer.vocab_size(), member_seed)?;
                    let members: Vec<(&dyn petreq_core::backend::ScorerModel, &petreq_core::pvp::Pvp)> =
                        vec![(&model, pvp)];
                    let w =
                        compute_weights(&members, &train, &tokenizer, resolved.train.max_seq_length)?;
                    rows.push((pvp.id(), *seed, w[0]));
                }
            }
        }
    }

    #[derive(serde::Serialize)]
    struct WeightRow {
        pvp: String,
        seed: u64,
        weight: f64,
    }
    let out_rows: Vec<WeightRow> = rows
        .into_iter()
        .map(|(pvp, seed, weight)| WeightRow { pvp, seed, weight })
        .collect();
    let out = apply_out_root(&args.out);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_json(&out, &out_rows)?;
    println!("wrote {} zero-shot weights -> {}", out_rows.len(), out.display());
    Ok(())
}

fn fnv1a_str(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn cmd_distill(args: &DistillArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let resolved = cfg.resolve(&Overrides::default())?;
    let library = pvp_library(&cfg.experiment.pvp_definitions)?;
    let (ensemble, tokenizer) = load_ensemble(&args.ensemble, |spec| {
        resolve_pvp(spec, library.as_ref())
    })?;
    let train = io::read_labeled(&args.train, Provenance::Train)?;
    let unlabeled_records = io::read_records(&args.unlabeled)?;
    let unlabeled = io::read_pairs(&args.unlabeled, Provenance::Unlabeled)?;
    let eval = args
        .eval
        .as_ref()
        .map(|p| io::read_labeled(p, Provenance::Test))
        .transpose()?;

    let soft = soft_label(
        &ensemble,
        &unlabeled,
        resolved.distill.temperature,
        &tokenizer,
        resolved.train.max_seq_length,
    )?;
    let out = apply_out_root(&args.out);
    std::fs::create_dir_all(&out)?;

    // merge soft vectors into the original records so unknown fields survive
    let mut records = unlabeled_records;
    for (record, example) in records.iter_mut().zip(soft.iter()) {
        record.soft = Some(*example.soft.probabilities());
        record.label = None;
    }
    io::write_records(&out.join("soft_labels.jsonl"), &records)?;

    let student = match resolved.backend {
        BackendKind::Oracle => match ensemble
            .members()
            .iter()
            .find_map(|m| match &m.model {
                MemberModel::Oracle(o) => Some(o.clone()),
                _ => None,
            }) {
            Some(oracle) => MemberModel::Oracle(oracle),
            None => {
                return Err(Error::InvalidConfig(
                    "oracle student requested but the ensemble has no oracle member".to_string(),
                ))
            }
        },
        BackendKind::Toy => {
            let seed = resolved.seeds[0] ^ fnv1a_str("student");
            let init = ToyMlm::new(resolved.mlm, tokenizer.vocab_size(), seed)?;
            let distill_cfg = DistillConfig {
                train: TrainConfig {
                    seed,
                    ..resolved.distill.train
                },
                ..resolved.distill.clone()
            };
            let outcome = distill(&train, &soft, &init, &tokenizer, &distill_cfg)?;
            MemberModel::Toy(outcome.model)
        }
    };
    save_model(
        &out.join("student.json"),
        &SnapshotFile::new(student.to_state(), &tokenizer),
    )?;
    println!(
        "soft-labeled {} examples and distilled student -> {}",
        soft.len(),
        out.display()
    );
    if let Some(eval) = eval {
        let (preds, report) =
            evaluate_classifier(&student, &eval, &tokenizer, resolved.train.max_seq_length)?;
        io::write_predictions(&out.join("eval_predictions.jsonl"), &preds)?;
        io::write_json(&out.join("eval_metrics.json"), &report)?;
        println!(
            "student accuracy {:.1}, macro F1 {:.1}, weighted F1 {:.1}",
            report_scale(report.accuracy),
            report_scale(report.macro_f1),
            report_scale(report.weighted_f1)
        );
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let predictions = io::read_predictions(&args.preds)?;
    let gold = io::read_labeled(&args.gold, Provenance::Test)?;
    let by_id: BTreeMap<&str, Label> = predictions
        .iter()
        .map(|p| (p.id.as_str(), p.label))
        .collect();
    let mut preds = Vec::with_capacity(gold.len());
    let mut golds = Vec::with_capacity(gold.len());
    for example in gold.iter() {
        let label = by_id.get(example.pair.id()).ok_or_else(|| {
            Error::KindMismatch(format!("no prediction for id `{}`", example.pair.id()))
        })?;
        preds.push(*label);
        golds.push(example.label);
    }
    let report = summary(&confusion(&preds, &golds)?)?;
    println!(
        "accuracy {:.1}  macro F1 {:.1}  weighted F1 {:.1}  (n = {})",
        report_scale(report.accuracy),
        report_scale(report.macro_f1),
        report_scale(report.weighted_f1),
        gold.len()
    );
    if let Some(out) = &args.out {
        let out = apply_out_root(out);
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        io::write_json(&out, &report)?;
    }
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut rows = BTreeMap::new();
    for entry in std::fs::read_dir(&args.results)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if !name.starts_with("size_") || !name.ends_with(".json") || name.contains("soft") {
            continue;
        }
        let outcome: SizeOutcome =
            serde_json::from_str(&std::fs::read_to_string(entry.path())?)?;
        rows.insert(
            outcome.size,
            ArmReports {
                supervised: outcome.supervised.mean.clone(),
                pet: outcome.pet.students.mean.clone(),
            },
        );
    }
    let curve = LearningCurve::new(rows)?;
    let out = apply_out_root(&args.out);
    std::fs::create_dir_all(out.join("series"))?;
    io::write_text(&out.join("learning_curve.csv"), &curve.to_csv())?;
    io::write_json(&out.join("learning_curve.json"), &curve.to_json())?;
    io::write_text(&out.join("learning_curve.txt"), &curve.to_text())?;
    for (name, csv) in curve.series() {
        io::write_text(&out.join(format!("series/{name}.csv")), &csv)?;
    }
    print!("{}", curve.to_text());
    println!("reports -> {}", out.display());
    Ok(())
}

pub fn cmd_run_experiment(args: &RunArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let overrides = Overrides {
        out: args.out.clone(),
        seed: args.seed,
        workers: args.workers,
        backend: args.backend,
        sizes: args.sizes.clone(),
        pvps: args.pvps.clone(),
    };
    let resolved = cfg.resolve(&overrides)?;
    let output = run_experiment(&resolved)?;
    print!("{}", output.curve.to_text());
    println!("artifacts -> {}", output.out_dir.display());
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Split(args) => cmd_split(args),
        Command::TrainSup(args) => cmd_train_sup(args),
        Command::TrainPet(args) => cmd_train_pet(args),
        Command::Weights(args) => cmd_weights(args),
        Command::Distill(args) => cmd_distill(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
        Command::RunExperiment(args) => cmd_run_experiment(args),
    }
}
