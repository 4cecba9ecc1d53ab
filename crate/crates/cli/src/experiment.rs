//! The end-to-end experiment: generate (or load) data, split, train both
//! arms at every training-set size, evaluate on the held-out test set, and
//! write the learning-curve report plus a manifest.
//!
//! Re-running with an identical resolved config produces byte-identical
//! reports and split manifests: all randomness flows from configured seeds,
//! parallel results are reduced in deterministic order, and no artifact
//! embeds a timestamp.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use petreq_core::backend::{
    build_tokenizer_for_task, encode_pair, save_model, OracleBackend, SnapshotFile, ToyMlm,
    Tokenizer,
};
use petreq_core::data::{Dataset, Label, LabeledExample, RequirementPair};
use petreq_core::ensemble::{
    build_ensemble, distill, paper_pvps, soft_label, DistillConfig, EnsembleModel, MemberInit,
    MemberModel,
};
use petreq_core::error::{Error, Result};
use petreq_core::metrics::{confusion, summary, ArmReports, LearningCurve, MetricReport};
use petreq_core::pvp::Pvp;
use petreq_core::splits::{stratified_split, SplitOutcome};
use petreq_core::synth::generate;
use petreq_core::training::{scorer_predictions, train_supervised, TrainConfig};

use crate::config::{BackendKind, ResolvedExperiment};
use crate::io;

/// Evaluation of one trained model on the test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedMetric {
    pub seed: u64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub per_seed: Vec<SeedMetric>,
    pub mean: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberSummary {
    pub pvp: String,
    pub seed: u64,
    pub weight: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PetOutcome {
    pub students: ArmOutcome,
    pub members: Vec<MemberSummary>,
    pub mean_member_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeOutcome {
    pub size: usize,
    pub supervised: ArmOutcome,
    pub pet: PetOutcome,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub sizes: Vec<SizeOutcome>,
    pub curve: LearningCurve,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: u32,
    config_hash: String,
    backend: BackendKind,
    train_profile: &'a str,
    pvps: &'a [String],
    seeds: &'a [u64],
    sizes: &'a [usize],
    artifacts: ManifestArtifacts,
    summary: Vec<ManifestRow>,
}

#[derive(Debug, Serialize)]
struct ManifestArtifacts {
    data: Option<String>,
    splits: Vec<String>,
    results: Vec<String>,
    reports: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ManifestRow {
    size: usize,
    supervised_accuracy: f64,
    pet_accuracy: f64,
    mean_member_accuracy: f64,
}

pub fn evaluate_classifier(
    model: &dyn petreq_core::backend::PairClassifier,
    dataset: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<(Vec<io::PredictionRecord>, MetricReport)> {
    let mut preds = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    let mut golds = Vec::with_capacity(dataset.len());
    for example in dataset.iter() {
        let enc = encode_pair(&example.pair, tokenizer, max_seq_length);
        let label = model.classify(&enc)?.argmax_label();
        preds.push(io::PredictionRecord {
            id: example.pair.id().to_string(),
            label,
        });
        labels.push(label);
        golds.push(example.label);
    }
    let report = summary(&confusion(&labels, &golds)?)?;
    Ok((preds, report))
}

fn fnv1a(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn supervised_seed_tag(seed: u64) -> u64 {
    seed ^ fnv1a("supervised")
}

fn student_seed_tag(seed: u64) -> u64 {
    seed ^ fnv1a("student")
}

/// Trains and evaluates the supervised arm for one training set.
fn supervised_arm(
    cfg: &ResolvedExperiment,
    train: &Dataset<LabeledExample>,
    test: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    oracle: Option<&OracleBackend>,
) -> Result<(ArmOutcome, Vec<(u64, Vec<io::PredictionRecord>)>, Vec<(u64, MemberModel)>)> {
    let outcomes: Vec<(u64, MemberModel, Vec<io::PredictionRecord>, MetricReport)> = cfg
        .seeds
        .par_iter()
        .map(|seed| -> Result<_> {
            let model = match cfg.backend {
                BackendKind::Oracle => {
                    MemberModel::Oracle(oracle.expect("oracle backend prepared").clone())
                }
                BackendKind::Toy => {
                    let tagged = supervised_seed_tag(*seed);
                    let init = ToyMlm::new(cfg.mlm, tokenizer.vocab_size(), tagged)?;
                    let train_cfg = TrainConfig {
                        seed: tagged,
                        ..cfg.train
                    };
                    let outcome = train_supervised(&init, train, tokenizer, &train_cfg)?;
                    MemberModel::Toy(outcome.model)
                }
            };
            let (preds, report) =
                evaluate_classifier(&model, test, tokenizer, cfg.train.max_seq_length)?;
            Ok((*seed, model, preds, report))
        })
        .collect::<Result<_>>()?;

    let per_seed: Vec<SeedMetric> = outcomes
        .iter()
        .map(|(seed, _, _, report)| SeedMetric {
            seed: *seed,
            report: report.clone(),
        })
        .collect();
    let mean = MetricReport::mean(per_seed.iter().map(|s| &s.report));
    let predictions = outcomes
        .iter()
        .map(|(seed, _, preds, _)| (*seed, preds.clone()))
        .collect();
    let models = outcomes
        .into_iter()
        .map(|(seed, model, _, _)| (seed, model))
        .collect();
    Ok((ArmOutcome { per_seed, mean }, predictions, models))
}

/// Builds the PET arm for one training set: weighted members, soft labels
/// over the unlabeled pool, and one distilled student per seed.
#[allow(clippy::too_many_arguments)]
fn pet_arm(
    cfg: &ResolvedExperiment,
    train: &Dataset<LabeledExample>,
    unlabeled: &Dataset<RequirementPair>,
    test: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    oracle: Option<&OracleBackend>,
) -> Result<(
    PetOutcome,
    EnsembleModel,
    Dataset<petreq_core::data::SoftLabeledExample>,
    Vec<(u64, Vec<io::PredictionRecord>)>,
    Vec<(u64, MemberModel)>,
)> {
    let init = match cfg.backend {
        BackendKind::Oracle => MemberInit::Oracle(oracle.expect("oracle prepared").clone()),
        BackendKind::Toy => MemberInit::Toy(cfg.mlm),
    };
    let ensemble = build_ensemble(&init, &cfg.pvps, &cfg.seeds, train, tokenizer, &cfg.train)?;

    let member_accuracies: Vec<f64> = ensemble
        .members()
        .par_iter()
        .map(|member| -> Result<f64> {
            let preds = scorer_predictions(
                &member.model,
                &member.pvp,
                test,
                tokenizer,
                cfg.train.max_seq_length,
            )?;
            let correct = preds
                .iter()
                .zip(test.iter())
                .filter(|(p, e)| **p == e.label)
                .count();
            Ok(correct as f64 / test.len() as f64)
        })
        .collect::<Result<_>>()?;
    let members: Vec<MemberSummary> = ensemble
        .members()
        .iter()
        .zip(&member_accuracies)
        .map(|(member, accuracy)| MemberSummary {
            pvp: member.pvp.id(),
            seed: member.seed,
            weight: member.weight,
            test_accuracy: *accuracy,
        })
        .collect();
    let mean_member_accuracy =
        member_accuracies.iter().sum::<f64>() / member_accuracies.len() as f64;

    let soft = soft_label(
        &ensemble,
        unlabeled,
        cfg.distill.temperature,
        tokenizer,
        cfg.train.max_seq_length,
    )?;

    let students: Vec<(u64, MemberModel, Vec<io::PredictionRecord>, MetricReport)> = cfg
        .seeds
        .par_iter()
        .map(|seed| -> Result<_> {
            let model = match cfg.backend {
                BackendKind::Oracle => {
                    MemberModel::Oracle(oracle.expect("oracle prepared").clone())
                }
                BackendKind::Toy => {
                    let tagged = student_seed_tag(*seed);
                    let student = ToyMlm::new(cfg.mlm, tokenizer.vocab_size(), tagged)?;
                    let distill_cfg = DistillConfig {
                        train: TrainConfig {
                            seed: tagged,
                            ..cfg.distill.train
                        },
                        ..cfg.distill.clone()
                    };
                    let outcome = distill(train, &soft, &student, tokenizer, &distill_cfg)?;
                    MemberModel::Toy(outcome.model)
                }
            };
            let (preds, report) =
                evaluate_classifier(&model, test, tokenizer, cfg.train.max_seq_length)?;
            Ok((*seed, model, preds, report))
        })
        .collect::<Result<_>>()?;

    let per_seed: Vec<SeedMetric> = students
        .iter()
        .map(|(seed, _, _, report)| SeedMetric {
            seed: *seed,
            report: report.clone(),
        })
        .collect();
    let mean = MetricReport::mean(per_seed.iter().map(|s| &s.report));
    let predictions = students
        .iter()
        .map(|(seed, _, preds, _)| (*seed, preds.clone()))
        .collect();
    let models = students
        .into_iter()
        .map(|(seed, model, _, _)| (seed, model))
        .collect();
    Ok((
        PetOutcome {
            students: ArmOutcome { per_seed, mean },
            members,
            mean_member_accuracy,
        },
        ensemble,
        soft,
        predictions,
        models,
    ))
}

/// Runs the whole experiment under a dedicated thread pool and writes every
/// artifact beneath the configured output directory.
pub fn run_experiment(cfg: &ResolvedExperiment) -> Result<ExperimentOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment_inner(cfg))
}

fn run_experiment_inner(cfg: &ResolvedExperiment) -> Result<ExperimentOutput> {
    // Everything that can fail from bad inputs happens before any write.
    let (full, generated_meta) = match &cfg.data_path {
        Some(path) => (
            io::read_labeled(path, petreq_core::data::Provenance::Train)?,
            None,
        ),
        None => {
            let corpus = generate(&cfg.generator_config()?)?;
            (corpus.dataset, Some(corpus.metadata))
        }
    };
    let tokenizer = build_tokenizer_for_task(&full, &cfg.pvps)?;
    let split = stratified_split(&full, &cfg.split_plan)?;
    let oracle = match cfg.backend {
        BackendKind::Oracle => Some(OracleBackend::new(&full, cfg.oracle_noise, cfg.oracle_seed)?),
        BackendKind::Toy => None,
    };

    let out = &cfg.out_dir;
    for sub in ["data", "splits", "results", "reports", "reports/series"] {
        std::fs::create_dir_all(out.join(sub))?;
    }
    if cfg.save_predictions {
        std::fs::create_dir_all(out.join("predictions"))?;
    }
    if cfg.save_snapshots {
        std::fs::create_dir_all(out.join("snapshots"))?;
    }

    let mut artifacts = ManifestArtifacts {
        data: None,
        splits: Vec::new(),
        results: Vec::new(),
        reports: Vec::new(),
    };

    if generated_meta.is_some() {
        io::write_records(
            &out.join("data/synthetic.jsonl"),
            &io::labeled_to_records(&full),
        )?;
        io::write_jsonl(
            &out.join("data/synthetic.meta.jsonl"),
            generated_meta.as_deref().unwrap_or_default(),
        )?;
        artifacts.data = Some("data/synthetic.jsonl".to_string());
    }

    write_split_manifests(out, &split, &mut artifacts)?;

    let mut outcomes = Vec::with_capacity(cfg.sizes.len());
    for (size, train) in &split.train_by_size {
        let (supervised, sup_preds, sup_models) =
            supervised_arm(cfg, train, &split.test, &tokenizer, oracle.as_ref())?;
        let (pet, ensemble, soft, pet_preds, student_models) = pet_arm(
            cfg,
            train,
            &split.unlabeled,
            &split.test,
            &tokenizer,
            oracle.as_ref(),
        )?;

        let outcome = SizeOutcome {
            size: *size,
            supervised,
            pet,
        };
        let result_path = format!("results/size_{size}.json");
        io::write_json(&out.join(&result_path), &outcome)?;
        artifacts.results.push(result_path);

        io::write_records(
            &out.join(format!("results/size_{size}_soft_labels.jsonl")),
            &io::soft_to_records(&soft),
        )?;

        if cfg.save_predictions {
            for (seed, preds) in &sup_preds {
                io::write_predictions(
                    &out.join(format!("predictions/size_{size}_supervised_seed{seed}.jsonl")),
                    preds,
                )?;
            }
            for (seed, preds) in &pet_preds {
                io::write_predictions(
                    &out.join(format!("predictions/size_{size}_pet_seed{seed}.jsonl")),
                    preds,
                )?;
            }
        }
        if cfg.save_snapshots {
            let dir = out.join(format!("snapshots/size_{size}"));
            std::fs::create_dir_all(&dir)?;
            for member in ensemble.members() {
                let name = format!(
                    "member_{}_seed{}.json",
                    member.pvp.id().replace(':', "_"),
                    member.seed
                );
                save_model(
                    &dir.join(name),
                    &SnapshotFile::new(member.model.to_state(), &tokenizer),
                )?;
            }
            for (seed, model) in &sup_models {
                save_model(
                    &dir.join(format!("supervised_seed{seed}.json")),
                    &SnapshotFile::new(model.to_state(), &tokenizer),
                )?;
            }
            for (seed, model) in &student_models {
                save_model(
                    &dir.join(format!("student_seed{seed}.json")),
                    &SnapshotFile::new(model.to_state(), &tokenizer),
                )?;
            }
        }
        outcomes.push(outcome);
    }

    let curve = LearningCurve::new(
        outcomes
            .iter()
            .map(|o| {
                (
                    o.size,
                    ArmReports {
                        supervised: o.supervised.mean.clone(),
                        pet: o.pet.students.mean.clone(),
                    },
                )
            })
            .collect::<BTreeMap<_, _>>(),
    )?;
    write_reports(out, &curve, &mut artifacts)?;

    let manifest = Manifest {
        version: 1,
        config_hash: cfg.config_hash(),
        backend: cfg.backend,
        train_profile: &cfg.train_profile,
        pvps: &cfg.pvp_ids,
        seeds: &cfg.seeds,
        sizes: &cfg.sizes,
        artifacts,
        summary: outcomes
            .iter()
            .map(|o| ManifestRow {
                size: o.size,
                supervised_accuracy: o.supervised.mean.accuracy,
                pet_accuracy: o.pet.students.mean.accuracy,
                mean_member_accuracy: o.pet.mean_member_accuracy,
            })
            .collect(),
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;

    Ok(ExperimentOutput {
        out_dir: out.clone(),
        sizes: outcomes,
        curve,
    })
}

fn write_split_manifests(
    out: &Path,
    split: &SplitOutcome,
    artifacts: &mut ManifestArtifacts,
) -> Result<()> {
    let mut push = |name: String| artifacts.splits.push(name);
    io::write_id_list(&out.join("splits/test.ids"), &split.test)?;
    push("splits/test.ids".to_string());
    io::write_id_list(&out.join("splits/unlabeled.ids"), &split.unlabeled)?;
    push("splits/unlabeled.ids".to_string());
    for (size, subset) in &split.train_by_size {
        let name = format!("splits/train_{size}.ids");
        io::write_id_list(&out.join(&name), subset)?;
        push(name);
    }

    #[derive(Serialize)]
    struct SplitCounts {
        subset: String,
        conflict: usize,
        duplicate: usize,
        neutral: usize,
        total: usize,
    }
    let count_of = |ds: &Dataset<LabeledExample>, name: &str| {
        let c = petreq_core::data::class_distribution(ds);
        SplitCounts {
            subset: name.to_string(),
            conflict: c.count(Label::Conflict),
            duplicate: c.count(Label::Duplicate),
            neutral: c.count(Label::Neutral),
            total: c.total(),
        }
    };
    let mut counts: Vec<SplitCounts> = split
        .train_by_size
        .iter()
        .map(|(size, ds)| count_of(ds, &format!("train_{size}")))
        .collect();
    counts.push(SplitCounts {
        subset: "unlabeled".to_string(),
        conflict: 0,
        duplicate: 0,
        neutral: 0,
        total: split.unlabeled.len(),
    });
    counts.push(count_of(&split.test, "test"));
    io::write_json(&out.join("splits/counts.json"), &counts)?;
    artifacts.splits.push("splits/counts.json".to_string());
    Ok(())
}

fn write_reports(
    out: &Path,
    curve: &LearningCurve,
    artifacts: &mut ManifestArtifacts,
) -> Result<()> {
    io::write_text(&out.join("reports/learning_curve.csv"), &curve.to_csv())?;
    artifacts.reports.push("reports/learning_curve.csv".to_string());
    io::write_json(&out.join("reports/learning_curve.json"), &curve.to_json())?;
    artifacts.reports.push("reports/learning_curve.json".to_string());
    io::write_text(&out.join("reports/learning_curve.txt"), &curve.to_text())?;
    artifacts.reports.push("reports/learning_curve.txt".to_string());
    for (name, csv) in curve.series() {
        let path = format!("reports/series/{name}.csv");
        io::write_text(&out.join(&path), &csv)?;
        artifacts.reports.push(path);
    }
    Ok(())
}

/// Ensemble persistence for the standalone `train-pet` / `distill` commands.
#[derive(Debug, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub version: u32,
    pub members: Vec<EnsembleManifestMember>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnsembleManifestMember {
    pub pvp: String,
    pub seed: u64,
    pub weight: f64,
    pub snapshot: String,
}

pub fn save_ensemble(dir: &Path, ensemble: &EnsembleModel, tokenizer: &Tokenizer) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut members = Vec::with_capacity(ensemble.len());
    for (i, member) in ensemble.members().iter().enumerate() {
        let snapshot = format!("member_{i:02}.json");
        save_model(
            &dir.join(&snapshot),
            &SnapshotFile::new(member.model.to_state(), tokenizer),
        )?;
        members.push(EnsembleManifestMember {
            pvp: member.pvp.id(),
            seed: member.seed,
            weight: member.weight,
            snapshot,
        });
    }
    io::write_json(&dir.join("ensemble.json"), &EnsembleManifest { version: 1, members })?;
    Ok(())
}

pub fn load_ensemble(
    dir: &Path,
    resolve: impl Fn(&str) -> Result<Pvp>,
) -> Result<(EnsembleModel, Tokenizer)> {
    let manifest: EnsembleManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ensemble.json"))?)?;
    if manifest.version != 1 {
        return Err(Error::SnapshotVersion(manifest.version));
    }
    let mut members = Vec::with_capacity(manifest.members.len());
    let mut tokenizer: Option<Tokenizer> = None;
    for entry in manifest.members {
        let (loaded, tok) = petreq_core::backend::load_model(&dir.join(&entry.snapshot))?;
        match &tokenizer {
            None => tokenizer = Some(tok),
            Some(existing) => {
                if existing.vocabulary() != tok.vocabulary() {
                    return Err(Error::KindMismatch(
                        "ensemble members disagree on vocabulary".to_string(),
                    ));
                }
            }
        }
        members.push(petreq_core::ensemble::EnsembleMember {
            pvp: resolve(&entry.pvp)?,
            model: MemberModel::from(loaded),
            weight: entry.weight,
            seed: entry.seed,
        });
    }
    let tokenizer = tokenizer.ok_or(Error::EmptyDataset)?;
    Ok((EnsembleModel::new(members)?, tokenizer))
}

/// Mean accuracy of one arm across seeds; convenience for the acceptance
/// checks and command summaries.
pub fn mean_accuracy(arm: &ArmOutcome) -> f64 {
    arm.mean.accuracy
}

pub fn default_pvps() -> Vec<Pvp> {
    paper_pvps()
}
