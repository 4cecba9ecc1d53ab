//! Experiment configuration: a TOML file with sections mirroring the module
//! configs, plus command-line overrides.
//!
//! The full schema is documented in the repository README. The only
//! environment variable honored is `PETREQ_OUT_ROOT`, which re-roots
//! relative output directories.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use petreq_core::backend::MlmConfig;
use petreq_core::data::Label;
use petreq_core::ensemble::DistillConfig;
use petreq_core::error::{Error, Result};
use petreq_core::pvp::{load_pvp_definitions, resolve_pvp, Pvp, PvpLibrary};
use petreq_core::splits::SplitPlan;
use petreq_core::synth::{GeneratorConfig, VocabTables};
use petreq_core::training::TrainConfig;

pub const OUT_ROOT_ENV: &str = "PETREQ_OUT_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub sizes: Vec<usize>,
    pub backend: BackendKind,
    pub pvps: Vec<String>,
    /// 0 means one worker per core.
    pub workers: usize,
    pub save_snapshots: bool,
    pub save_predictions: bool,
    /// Optional TOML file with extra pattern/verbalizer definitions.
    pub pvp_definitions: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/experiment"),
            seeds: vec![17, 29, 43],
            sizes: vec![32, 64, 128, 256, 512, 1024, 2048],
            backend: BackendKind::Toy,
            pvps: vec!["P1:v1".into(), "P3:v2".into(), "P4:v2".into()],
            workers: 0,
            save_snapshots: false,
            save_predictions: true,
            pvp_definitions: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Toy,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(BackendKind::Oracle),
            "toy" => Ok(BackendKind::Toy),
            other => Err(Error::InvalidConfig(format!(
                "unknown backend `{other}` (expected oracle or toy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// "generate" or "file".
    pub source: String,
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: "generate".into(),
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub seed: u64,
    pub include_exemplars: bool,
    /// Optional TOML vocabulary table file.
    pub vocab_tables: Option<PathBuf>,
    /// Extra examples generated per class beyond the split demand.
    pub surplus_per_class: usize,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            seed: 7,
            include_exemplars: true,
            vocab_tables: None,
            surplus_per_class: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub seed: u64,
    pub unlabeled_size: usize,
    pub test_size: usize,
    pub proportions: [f64; 3],
    pub nested: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            seed: 11,
            unlabeled_size: 5000,
            test_size: 2000,
            proportions: petreq_core::splits::TABLE_PROPORTIONS,
            nested: true,
        }
    }
}

/// Named optimizer profile plus per-field overrides.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// "toy" (default) or "paper".
    pub profile: Option<String>,
    pub max_steps: Option<usize>,
    pub gradient_accumulation_steps: Option<usize>,
    pub learning_rate: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub max_grad_norm: Option<f64>,
    pub max_seq_length: Option<usize>,
    pub batch_size: Option<usize>,
    pub alpha: Option<f64>,
}

impl TrainSection {
    pub fn resolve(&self) -> Result<(TrainConfig, String)> {
        let profile = self.profile.clone().unwrap_or_else(|| "toy".into());
        let mut cfg = match profile.as_str() {
            "toy" => TrainConfig::toy_profile(),
            "paper" => TrainConfig::paper_defaults(),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown train profile `{other}` (expected toy or paper)"
                )))
            }
        };
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.gradient_accumulation_steps {
            cfg.gradient_accumulation_steps = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.adam_epsilon {
            cfg.adam_epsilon = v;
        }
        if let Some(v) = self.warmup_steps {
            cfg.warmup_steps = v;
        }
        if let Some(v) = self.max_grad_norm {
            cfg.max_grad_norm = v;
        }
        if let Some(v) = self.max_seq_length {
            cfg.max_seq_length = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        cfg.validate()?;
        Ok((cfg, profile))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlmSection {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_positions: usize,
}

impl Default for MlmSection {
    fn default() -> Self {
        // the shipped scorer profile; small enough to train in seconds
        Self {
            dim: 32,
            layers: 1,
            heads: 2,
            ffn_mult: 2,
            max_positions: 256,
        }
    }
}

impl MlmSection {
    pub fn to_config(&self) -> MlmConfig {
        MlmConfig {
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            ffn_mult: self.ffn_mult,
            max_positions: self.max_positions,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub temperature: f64,
    pub steps: Option<usize>,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            temperature: 2.0,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub noise: f64,
    pub seed: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { noise: 0.0, seed: 1 }
    }
}

/// The raw TOML schema.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub generator: GeneratorSection,
    pub split: SplitSection,
    pub train: TrainSection,
    pub mlm: MlmSection,
    pub distill: DistillSection,
    pub oracle: OracleSection,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub backend: Option<BackendKind>,
    pub sizes: Option<Vec<usize>>,
    pub pvps: Option<Vec<String>>,
}

/// Everything validated and concrete, ready for the orchestrator. The
/// serialized form of this struct is what the run manifest hashes.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedExperiment {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub sizes: Vec<usize>,
    pub backend: BackendKind,
    pub pvp_ids: Vec<String>,
    #[serde(skip)]
    pub pvps: Vec<Pvp>,
    pub workers: usize,
    pub save_snapshots: bool,
    pub save_predictions: bool,
    pub data_path: Option<PathBuf>,
    pub generator_seed: u64,
    pub include_exemplars: bool,
    #[serde(skip)]
    pub vocab_tables: VocabTables,
    pub surplus_per_class: usize,
    pub split_plan: SplitPlan,
    pub train: TrainConfig,
    pub train_profile: String,
    pub mlm: MlmConfig,
    pub distill: DistillConfig,
    pub oracle_noise: f64,
    pub oracle_seed: u64,
}

impl ExperimentConfig {
    pub fn resolve(&self, overrides: &Overrides) -> Result<ResolvedExperiment> {
        let mut experiment = self.experiment.clone();
        if let Some(out) = &overrides.out {
            experiment.out_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            experiment.seeds = vec![seed, seed + 1, seed + 2];
        }
        if let Some(workers) = overrides.workers {
            experiment.workers = workers;
        }
        if let Some(backend) = overrides.backend {
            experiment.backend = backend;
        }
        if let Some(sizes) = &overrides.sizes {
            experiment.sizes = sizes.clone();
        }
        if let Some(pvps) = &overrides.pvps {
            experiment.pvps = pvps.clone();
        }

        if experiment.seeds.is_empty() {
            return Err(Error::InvalidConfig("experiment.seeds is empty".to_string()));
        }
        if experiment.sizes.is_empty() {
            return Err(Error::InvalidConfig("experiment.sizes is empty".to_string()));
        }
        let mut sorted_sizes = experiment.sizes.clone();
        sorted_sizes.sort_unstable();
        sorted_sizes.dedup();

        let library: Option<PvpLibrary> = match &experiment.pvp_definitions {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Some(load_pvp_definitions(&text)?)
            }
            None => None,
        };
        let pvps = experiment
            .pvps
            .iter()
            .map(|spec| resolve_pvp(spec, library.as_ref()))
            .collect::<Result<Vec<_>>>()?;

        let data_path = match self.data.source.as_str() {
            "generate" => None,
            "file" => Some(self.data.path.clone().ok_or_else(|| {
                Error::InvalidConfig("data.source = \"file\" requires data.path".to_string())
            })?),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown data.source `{other}` (expected generate or file)"
                )))
            }
        };
        if let Some(path) = &data_path {
            if !path.exists() {
                return Err(Error::InvalidConfig(format!(
                    "data.path `{}` does not exist",
                    path.display()
                )));
            }
        }

        let vocab_tables = match &self.generator.vocab_tables {
            Some(path) => VocabTables::from_toml(&std::fs::read_to_string(path)?)?,
            None => VocabTables::defaults(),
        };

        let split_plan = SplitPlan {
            proportions: self.split.proportions,
            train_sizes: sorted_sizes.clone(),
            unlabeled_size: self.split.unlabeled_size,
            test_size: self.split.test_size,
            seed: self.split.seed,
            nested: self.split.nested,
        };
        split_plan.validate()?;

        let (train, train_profile) = self.train.resolve()?;
        let mlm = self.mlm.to_config();
        mlm.validate()?;
        if mlm.max_positions < train.max_seq_length {
            return Err(Error::InvalidConfig(format!(
                "mlm.max_positions ({}) must cover train.max_seq_length ({})",
                mlm.max_positions, train.max_seq_length
            )));
        }

        let distill = DistillConfig {
            temperature: self.distill.temperature,
            steps: self.distill.steps.unwrap_or(match train_profile.as_str() {
                "paper" => 5000,
                _ => 800,
            }),
            train,
        };
        distill.validate()?;

        if !(0.0..1.0).contains(&self.oracle.noise) {
            return Err(Error::InvalidConfig(format!(
                "oracle.noise {} outside [0, 1)",
                self.oracle.noise
            )));
        }

        let out_dir = apply_out_root(&experiment.out_dir);
        Ok(ResolvedExperiment {
            out_dir,
            seeds: experiment.seeds,
            sizes: sorted_sizes,
            backend: experiment.backend,
            pvp_ids: pvps.iter().map(|p| p.id()).collect(),
            pvps,
            workers: experiment.workers,
            save_snapshots: experiment.save_snapshots,
            save_predictions: experiment.save_predictions,
            data_path,
            generator_seed: self.generator.seed,
            include_exemplars: self.generator.include_exemplars,
            vocab_tables,
            surplus_per_class: self.generator.surplus_per_class,
            split_plan,
            train,
            train_profile,
            mlm,
            distill,
            oracle_noise: self.oracle.noise,
            oracle_seed: self.oracle.seed,
        })
    }
}

impl ResolvedExperiment {
    /// Per-class generator counts covering the split demand exactly, plus
    /// any configured surplus.
    pub fn generator_config(&self) -> Result<GeneratorConfig> {
        use petreq_core::splits::target_counts;
        let test = target_counts(self.split_plan.test_size, &self.split_plan.proportions)?;
        let unlabeled = target_counts(self.split_plan.unlabeled_size, &self.split_plan.proportions)?;
        let mut counts = [0usize; 3];
        for label in Label::ALL {
            let max_train = self
                .split_plan
                .train_sizes
                .iter()
                .map(|s| target_counts(*s, &self.split_plan.proportions).map(|c| c.count(label)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .max()
                .unwrap_or(0);
            counts[label.index()] = test.count(label)
                + unlabeled.count(label)
                + max_train
                + self.surplus_per_class;
        }
        Ok(GeneratorConfig {
            counts,
            seed: self.generator_seed,
            include_exemplars: self.include_exemplars,
            tables: self.vocab_tables.clone(),
        })
    }

    /// Canonical serialization hash recorded in the run manifest.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = toml::to_string(self).expect("resolved config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Re-roots relative output paths under `PETREQ_OUT_ROOT` when set.
pub fn apply_out_root(out: &Path) -> PathBuf {
    if out.is_absolute() {
        return out.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}
