//! Versioned model snapshot files: tokenizer vocabulary, hyperparameters,
//! and parameter tensors in one self-contained JSON container.
//!
//! Values are serialized as exact-round-trip f64 text, so a save → load →
//! score cycle is bit-identical in its predictions.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::mlm::{MlmSnapshot, ToyMlm};
use crate::backend::{
    ConstantScorer, FixedScorer, OracleBackend, PairClassifier, ScorerModel, Tokenizer,
};
use crate::data::Label;
use crate::error::{Error, Result};

pub const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    ToyMlm { snapshot: MlmSnapshot },
    Oracle { oracle: OracleBackend },
    Constant { label: Label },
    Fixed { scores: Vec<f64> },
}

/// On-disk container for one model plus the vocabulary it scores with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub version: u32,
    pub vocabulary: Vec<String>,
    pub model: ModelState,
}

impl SnapshotFile {
    pub fn for_toy(model: &ToyMlm, tokenizer: &Tokenizer) -> Self {
        Self {
            version: FILE_VERSION,
            vocabulary: tokenizer.vocabulary().to_vec(),
            model: ModelState::ToyMlm {
                snapshot: model.snapshot(),
            },
        }
    }

    pub fn for_oracle(oracle: &OracleBackend, tokenizer: &Tokenizer) -> Self {
        Self {
            version: FILE_VERSION,
            vocabulary: tokenizer.vocabulary().to_vec(),
            model: ModelState::Oracle {
                oracle: oracle.clone(),
            },
        }
    }

    pub fn for_constant(label: Label, tokenizer: &Tokenizer) -> Self {
        Self {
            version: FILE_VERSION,
            vocabulary: tokenizer.vocabulary().to_vec(),
            model: ModelState::Constant { label },
        }
    }

    pub fn new(model: ModelState, tokenizer: &Tokenizer) -> Self {
        Self {
            version: FILE_VERSION,
            vocabulary: tokenizer.vocabulary().to_vec(),
            model,
        }
    }
}

/// A reloaded model, usable as a scorer or classifier.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    ToyMlm(ToyMlm),
    Oracle(OracleBackend),
    Constant(ConstantScorer),
    Fixed(FixedScorer),
}

impl LoadedModel {
    pub fn as_scorer(self) -> Arc<dyn ScorerModel> {
        match self {
            LoadedModel::ToyMlm(m) => Arc::new(m),
            LoadedModel::Oracle(m) => Arc::new(m),
            LoadedModel::Constant(m) => Arc::new(m),
            LoadedModel::Fixed(m) => Arc::new(m),
        }
    }

    pub fn as_classifier(self) -> Arc<dyn PairClassifier> {
        match self {
            LoadedModel::ToyMlm(m) => Arc::new(m),
            LoadedModel::Oracle(m) => Arc::new(m),
            LoadedModel::Constant(m) => Arc::new(m),
            LoadedModel::Fixed(m) => Arc::new(m),
        }
    }
}

pub fn save_model(path: &Path, file: &SnapshotFile) -> Result<()> {
    let json = serde_json::to_string(file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(LoadedModel, Tokenizer)> {
    let text = std::fs::read_to_string(path)?;
    let file: SnapshotFile = serde_json::from_str(&text)?;
    if file.version != FILE_VERSION {
        return Err(Error::SnapshotVersion(file.version));
    }
    let tokenizer = Tokenizer::from_vocabulary(file.vocabulary)?;
    let model = match file.model {
        ModelState::ToyMlm { snapshot } => LoadedModel::ToyMlm(ToyMlm::from_snapshot(snapshot)?),
        ModelState::Oracle { oracle } => LoadedModel::Oracle(oracle),
        ModelState::Constant { label } => LoadedModel::Constant(ConstantScorer::new(label)),
        ModelState::Fixed { scores } => LoadedModel::Fixed(FixedScorer::new(scores)),
    };
    Ok((model, tokenizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mlm::MlmConfig;
    use crate::backend::{build_tokenizer_for_task, make_query};
    use crate::data::{Dataset, Example, LabeledExample, Provenance, RequirementPair};
    use crate::pvp::{builtin_patterns, builtin_verbalizers, Pvp};

    #[test]
    fn save_load_score_round_trip() {
        let ds = Dataset::new(
            vec![LabeledExample::new(
                RequirementPair::new("a", "The UAV shall fly.", "The UAV shall not fly.").unwrap(),
                Label::Conflict,
            )],
            Provenance::Train,
        )
        .unwrap();
        let pvp = Pvp::new(builtin_patterns().remove(0), builtin_verbalizers().remove(0));
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let cfg = MlmConfig {
            dim: 8,
            layers: 1,
            heads: 2,
            ffn_mult: 2,
            max_positions: 64,
        };
        let model = ToyMlm::new(cfg, tok.vocab_size(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &SnapshotFile::for_toy(&model, &tok)).unwrap();
        let (loaded, tok2) = load_model(&path).unwrap();
        assert_eq!(tok.vocabulary(), tok2.vocabulary());
        let query = make_query(&pvp, ds.examples()[0].pair(), &tok2, 64).unwrap();
        let original = model.score(&query).unwrap();
        let restored = loaded.as_scorer().score(&query).unwrap();
        assert_eq!(original.scores(), restored.scores());
    }
}
