//! Zero-shot weighting, weighted score combination, temperature
//! soft-labeling of the unlabeled pool, and distillation into the final
//! classifier.
//!
//! The combined score is `s(l|x, M) = sum_m w(m) s(l|x, m) / sum_m w(m)`,
//! where `w(m)` is model `m`'s classification accuracy on the labeled set
//! before any fine-tuning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{
    encode_pair, fnv1a, make_query, zero_shot_accuracy, ClozeQuery, ConstantScorer, FixedScorer,
    LabelScores, MlmConfig, ModelState, OracleBackend, PairClassifier, PairEncoding, ScorerModel,
    ToyMlm, Tokenizer,
};
use crate::data::{
    Dataset, Label, LabeledExample, Provenance, RequirementPair, SoftLabel,
    SoftLabeledExample,
};
use crate::error::{Error, Result};
use crate::pvp::{builtin_patterns, builtin_verbalizers, Pvp};
use crate::training::{finetune_pvp, train_classifier, ClsTarget, TrainConfig, TrainOutcome};

/// A concrete member model. The backends form a closed set so members stay
/// cloneable and snapshot-able.
#[derive(Debug, Clone)]
pub enum MemberModel {
    Toy(ToyMlm),
    Oracle(OracleBackend),
    Constant(ConstantScorer),
    Fixed(FixedScorer),
}

impl MemberModel {
    pub fn to_state(&self) -> ModelState {
        match self {
            MemberModel::Toy(m) => ModelState::ToyMlm {
                snapshot: m.snapshot(),
            },
            MemberModel::Oracle(m) => ModelState::Oracle { oracle: m.clone() },
            MemberModel::Constant(m) => ModelState::Constant { label: m.label() },
            MemberModel::Fixed(m) => ModelState::Fixed {
                scores: m.scores().to_vec(),
            },
        }
    }

    pub fn from_state(state: ModelState) -> crate::error::Result<Self> {
        Ok(match state {
            ModelState::ToyMlm { snapshot } => MemberModel::Toy(ToyMlm::from_snapshot(snapshot)?),
            ModelState::Oracle { oracle } => MemberModel::Oracle(oracle),
            ModelState::Constant { label } => MemberModel::Constant(ConstantScorer::new(label)),
            ModelState::Fixed { scores } => MemberModel::Fixed(FixedScorer::new(scores)),
        })
    }
}

impl From<crate::backend::LoadedModel> for MemberModel {
    fn from(loaded: crate::backend::LoadedModel) -> Self {
        use crate::backend::LoadedModel;
        match loaded {
            LoadedModel::ToyMlm(m) => MemberModel::Toy(m),
            LoadedModel::Oracle(m) => MemberModel::Oracle(m),
            LoadedModel::Constant(m) => MemberModel::Constant(m),
            LoadedModel::Fixed(m) => MemberModel::Fixed(m),
        }
    }
}

impl ScorerModel for MemberModel {
    fn score(&self, query: &ClozeQuery) -> crate::error::Result<LabelScores> {
        match self {
            MemberModel::Toy(m) => m.score(query),
            MemberModel::Oracle(m) => m.score(query),
            MemberModel::Constant(m) => m.score(query),
            MemberModel::Fixed(m) => m.score(query),
        }
    }
}

impl PairClassifier for MemberModel {
    fn classify(&self, encoding: &PairEncoding) -> crate::error::Result<LabelScores> {
        match self {
            MemberModel::Toy(m) => m.classify(encoding),
            MemberModel::Oracle(m) => m.classify(encoding),
            MemberModel::Constant(m) => m.classify(encoding),
            MemberModel::Fixed(m) => m.classify(encoding),
        }
    }
}

/// One trained scorer with its PVP and zero-shot weight.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub pvp: Pvp,
    pub model: MemberModel,
    pub weight: f64,
    pub seed: u64,
}

/// A non-empty member list with positive total weight.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    members: Vec<EnsembleMember>,
}

impl EnsembleModel {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidConfig("ensemble has no members".to_string()));
        }
        if members
            .iter()
            .any(|m| !m.weight.is_finite() || m.weight < 0.0)
        {
            return Err(Error::InvalidConfig(
                "ensemble weights must be finite and non-negative".to_string(),
            ));
        }
        if members.iter().map(|m| m.weight).sum::<f64>() <= 0.0 {
            return Err(Error::AllZeroWeights);
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Distillation settings: softmax temperature, student update count, and the
/// student's optimizer configuration (whose `max_steps` is overridden by
/// `steps`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub temperature: f64,
    pub steps: usize,
    pub train: TrainConfig,
}

impl DistillConfig {
    pub fn paper_defaults() -> Self {
        Self {
            temperature: 2.0,
            steps: 5000,
            train: TrainConfig::paper_defaults(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("student steps must be positive".to_string()));
        }
        self.train.validate()
    }
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

/// Zero-shot accuracy of each (model, pvp) on the labeled set, in member
/// order. All-zero weights are rejected because the weighted combination
/// would be undefined.
pub fn compute_weights(
    members: &[(&dyn ScorerModel, &Pvp)],
    train: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<Vec<f64>> {
    let weights = members
        .iter()
        .map(|(model, pvp)| zero_shot_accuracy(*model, pvp, train, tokenizer, max_seq_length))
        .collect::<Result<Vec<f64>>>()?;
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok(weights)
}

/// The weighted mean of the members' label scores.
pub fn combine_scores(
    ensemble: &EnsembleModel,
    pair: &RequirementPair,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<LabelScores> {
    let weight_sum: f64 = ensemble.members.iter().map(|m| m.weight).sum();
    let mut combined: Option<Vec<f64>> = None;
    for member in &ensemble.members {
        let query = make_query(&member.pvp, pair, tokenizer, max_seq_length)?;
        let scores = member.model.score(&query)?;
        let acc = combined.get_or_insert_with(|| vec![0.0; scores.arity()]);
        if acc.len() != scores.arity() {
            return Err(Error::KindMismatch(
                "ensemble members disagree on label arity".to_string(),
            ));
        }
        for (a, s) in acc.iter_mut().zip(scores.scores()) {
            *a += member.weight * s;
        }
    }
    let mut combined = combined.expect("ensemble is non-empty");
    for value in combined.iter_mut() {
        *value /= weight_sum;
    }
    LabelScores::new(combined)
}

fn softmax_with_temperature(scores: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Converts combined scores into probability vectors over the unlabeled
/// pool, preserving order.
pub fn soft_label(
    ensemble: &EnsembleModel,
    unlabeled: &Dataset<RequirementPair>,
    temperature: f64,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<Dataset<SoftLabeledExample>> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let soft: Vec<SoftLabeledExample> = unlabeled
        .examples()
        .par_iter()
        .map(|pair| {
            let scores = combine_scores(ensemble, pair, tokenizer, max_seq_length)?;
            if scores.arity() != Label::COUNT {
                return Err(Error::KindMismatch(format!(
                    "soft labels require the {}-label task",
                    Label::COUNT
                )));
            }
            let probs = softmax_with_temperature(scores.scores(), temperature);
            Ok(SoftLabeledExample {
                pair: pair.clone(),
                soft: SoftLabel::new([probs[0], probs[1], probs[2]])?,
            })
        })
        .collect::<Result<_>>()?;
    Dataset::new(soft, Provenance::Unlabeled)
}

/// Trains the student classifier on the shuffled union of the gold-labeled
/// set (one-hot targets) and the soft-labeled pool (teacher distributions).
pub fn distill(
    train: &Dataset<LabeledExample>,
    soft: &Dataset<SoftLabeledExample>,
    student: &ToyMlm,
    tokenizer: &Tokenizer,
    cfg: &DistillConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut examples: Vec<(Vec<u32>, ClsTarget)> = Vec::with_capacity(train.len() + soft.len());
    for example in train.iter() {
        let enc = encode_pair(&example.pair, tokenizer, cfg.train.max_seq_length);
        examples.push((enc.token_ids().to_vec(), ClsTarget::one_hot(example.label)));
    }
    for example in soft.iter() {
        let enc = encode_pair(&example.pair, tokenizer, cfg.train.max_seq_length);
        examples.push((enc.token_ids().to_vec(), ClsTarget::soft(&example.soft)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x64697374);
    examples.shuffle(&mut rng);
    let train_cfg = TrainConfig {
        max_steps: cfg.steps,
        ..cfg.train
    };
    train_classifier(student, &examples, &train_cfg)
}

/// How ensemble member models come to exist.
#[derive(Debug, Clone)]
pub enum MemberInit {
    /// A fresh trainable scorer per member, fine-tuned on the labeled set.
    Toy(MlmConfig),
    /// The ground-truth oracle; weights are computed normally and
    /// fine-tuning is the identity.
    Oracle(OracleBackend),
    /// A fixed-label scorer; useful for degenerate pipeline tests.
    Constant(Label),
}

/// The published ensemble choice: (P1, v1), (P3, v2), (P4, v2).
pub fn paper_pvps() -> Vec<Pvp> {
    let patterns = builtin_patterns();
    let verbalizers = builtin_verbalizers();
    vec![
        Pvp::new(patterns[0].clone(), verbalizers[0].clone()),
        Pvp::new(patterns[2].clone(), verbalizers[1].clone()),
        Pvp::new(patterns[3].clone(), verbalizers[1].clone()),
    ]
}

/// Builds the PVP-by-seed member grid: weights are computed on each member's
/// pre-fine-tuning state, then trainable members are fine-tuned on the
/// labeled set. With the default three PVPs and three seeds this yields nine
/// members.
pub fn build_ensemble(
    init: &MemberInit,
    pvps: &[Pvp],
    seeds: &[u64],
    train: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
) -> Result<EnsembleModel> {
    if pvps.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "ensemble needs at least one pvp and one seed".to_string(),
        ));
    }
    let cells: Vec<(Pvp, u64)> = pvps
        .iter()
        .flat_map(|pvp| seeds.iter().map(move |seed| (pvp.clone(), *seed)))
        .collect();

    let members: Vec<EnsembleMember> = cells
        .par_iter()
        .map(|(pvp, seed)| -> Result<EnsembleMember> {
            let member_seed = *seed ^ fnv1a(&pvp.id());
            match init {
                MemberInit::Toy(mlm_cfg) => {
                    let fresh = ToyMlm::new(*mlm_cfg, tokenizer.vocab_size(), member_seed)?;
                    let weight =
                        zero_shot_accuracy(&fresh, pvp, train, tokenizer, cfg.max_seq_length)?;
                    let member_cfg = TrainConfig {
                        seed: member_seed,
                        ..*cfg
                    };
                    let outcome = finetune_pvp(&fresh, pvp, train, tokenizer, &member_cfg)?;
                    Ok(EnsembleMember {
                        pvp: pvp.clone(),
                        model: MemberModel::Toy(outcome.model),
                        weight,
                        seed: *seed,
                    })
                }
                MemberInit::Oracle(oracle) => {
                    let model = oracle.clone();
                    let weight =
                        zero_shot_accuracy(&model, pvp, train, tokenizer, cfg.max_seq_length)?;
                    Ok(EnsembleMember {
                        pvp: pvp.clone(),
                        model: MemberModel::Oracle(model),
                        weight,
                        seed: *seed,
                    })
                }
                MemberInit::Constant(label) => {
                    let model = ConstantScorer::new(*label);
                    let weight =
                        zero_shot_accuracy(&model, pvp, train, tokenizer, cfg.max_seq_length)?;
                    Ok(EnsembleMember {
                        pvp: pvp.clone(),
                        model: MemberModel::Constant(model),
                        weight,
                        seed: *seed,
                    })
                }
            }
        })
        .collect::<Result<_>>()?;
    EnsembleModel::new(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::build_tokenizer_for_task;
    use rand::Rng;

    fn task_pvp() -> Pvp {
        Pvp::new(builtin_patterns().remove(0), builtin_verbalizers().remove(0))
    }

    fn tiny_train() -> Dataset<LabeledExample> {
        Dataset::new(
            vec![
                LabeledExample::new(
                    RequirementPair::new("a", "The UAV shall fly.", "The UAV shall not fly.")
                        .unwrap(),
                    Label::Conflict,
                ),
                LabeledExample::new(
                    RequirementPair::new("b", "The UAV shall fly.", "The drone must fly.").unwrap(),
                    Label::Duplicate,
                ),
                LabeledExample::new(
                    RequirementPair::new("c", "The UAV shall fly.", "The screen shall dim.")
                        .unwrap(),
                    Label::Neutral,
                ),
            ],
            Provenance::Train,
        )
        .unwrap()
    }

    fn fixed_member(scores: Vec<f64>, weight: f64) -> EnsembleMember {
        EnsembleMember {
            pvp: task_pvp(),
            model: MemberModel::Fixed(FixedScorer::new(scores)),
            weight,
            seed: 0,
        }
    }

    fn fixture_tokenizer() -> Tokenizer {
        build_tokenizer_for_task(&tiny_train(), &[task_pvp()]).unwrap()
    }

    #[test]
    fn equal_weights_average_symmetrically() {
        let ensemble = EnsembleModel::new(vec![
            fixed_member(vec![1.0, 2.0, 3.0], 1.0),
            fixed_member(vec![3.0, 2.0, 1.0], 1.0),
        ])
        .unwrap();
        let tok = fixture_tokenizer();
        let pair = RequirementPair::new("x", "The UAV shall fly.", "The UAV shall land.").unwrap();
        let combined = combine_scores(&ensemble, &pair, &tok, 256).unwrap();
        assert_eq!(combined.scores(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn weighted_mean_matches_hand_computation() {
        let ensemble = EnsembleModel::new(vec![
            fixed_member(vec![1.0, 2.0, 3.0], 1.0),
            fixed_member(vec![3.0, 2.0, 1.0], 3.0),
        ])
        .unwrap();
        let tok = fixture_tokenizer();
        let pair = RequirementPair::new("x", "The UAV shall fly.", "The UAV shall land.").unwrap();
        let combined = combine_scores(&ensemble, &pair, &tok, 256).unwrap();
        assert_eq!(combined.scores(), &[2.5, 2.0, 1.5]);
    }

    #[test]
    fn single_member_is_identity() {
        let ensemble = EnsembleModel::new(vec![fixed_member(vec![0.4, -1.0, 2.2], 0.7)]).unwrap();
        let tok = fixture_tokenizer();
        let pair = RequirementPair::new("x", "The UAV shall fly.", "The UAV shall land.").unwrap();
        let combined = combine_scores(&ensemble, &pair, &tok, 256).unwrap();
        for (a, b) in combined.scores().iter().zip([0.4, -1.0, 2.2]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn combination_matches_brute_force_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let tok = fixture_tokenizer();
        let pair = RequirementPair::new("x", "The UAV shall fly.", "The UAV shall land.").unwrap();
        for _ in 0..100 {
            let n = rng.gen_range(1..6);
            let members: Vec<EnsembleMember> = (0..n)
                .map(|_| {
                    fixed_member(
                        (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect(),
                        rng.gen_range(0.05..2.0),
                    )
                })
                .collect();
            // independently coded weighted mean
            let mut expected = [0.0f64; 3];
            let mut total = 0.0;
            for m in &members {
                let scores = m.model.score(&make_query(&m.pvp, &pair, &tok, 256).unwrap());
                for (e, s) in expected.iter_mut().zip(scores.unwrap().scores()) {
                    *e += m.weight * s;
                }
                total += m.weight;
            }
            expected.iter_mut().for_each(|e| *e /= total);
            let ensemble = EnsembleModel::new(members).unwrap();
            let combined = combine_scores(&ensemble, &pair, &tok, 256).unwrap();
            for (c, e) in combined.scores().iter().zip(expected) {
                assert!((c - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_weight_scaling_preserves_combination() {
        let tok = fixture_tokenizer();
        let pair = RequirementPair::new("x", "The UAV shall fly.", "The UAV shall land.").unwrap();
        let base = vec![
            fixed_member(vec![1.0, -2.0, 0.5], 0.25),
            fixed_member(vec![0.0, 1.0, 4.0], 0.75),
        ];
        let scaled: Vec<EnsembleMember> = base
            .iter()
            .map(|m| EnsembleMember {
                weight: m.weight * 13.0,
                ..m.clone()
            })
            .collect();
        let a = combine_scores(&EnsembleModel::new(base).unwrap(), &pair, &tok, 256).unwrap();
        let b = combine_scores(&EnsembleModel::new(scaled).unwrap(), &pair, &tok, 256).unwrap();
        for (x, y) in a.scores().iter().zip(b.scores()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a.argmax_label(), b.argmax_label());
    }

    #[test]
    fn member_order_does_not_matter() {
        let tok = fixture_tokenizer();
        let pair = RequirementPair::new("x", "The UAV shall fly.", "The UAV shall land.").unwrap();
        let members = vec![
            fixed_member(vec![1.0, 2.0, 3.0], 0.5),
            fixed_member(vec![-1.0, 0.0, 1.0], 1.5),
            fixed_member(vec![2.0, 2.0, 2.0], 1.0),
        ];
        let mut reversed = members.clone();
        reversed.reverse();
        let a = combine_scores(&EnsembleModel::new(members).unwrap(), &pair, &tok, 256).unwrap();
        let b = combine_scores(&EnsembleModel::new(reversed).unwrap(), &pair, &tok, 256).unwrap();
        for (x, y) in a.scores().iter().zip(b.scores()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_weights_rejected() {
        let train = tiny_train();
        let tok = fixture_tokenizer();
        // a constant scorer that never matches the single gold label it sees
        let wrong = Dataset::new(
            vec![LabeledExample::new(
                RequirementPair::new("only", "The UAV shall fly.", "The UAV shall not fly.")
                    .unwrap(),
                Label::Conflict,
            )],
            Provenance::Train,
        )
        .unwrap();
        let constant = ConstantScorer::new(Label::Neutral);
        let pvp = task_pvp();
        let members: Vec<(&dyn ScorerModel, &Pvp)> = vec![(&constant, &pvp)];
        assert!(matches!(
            compute_weights(&members, &wrong, &tok, 256),
            Err(Error::AllZeroWeights)
        ));
        let ok = compute_weights(&members, &train, &tok, 256).unwrap();
        assert!((ok[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_conflict_weight_on_table_sized_split() {
        // the 32-example split has 17 conflicts, so a constant-Conflict
        // scorer scores exactly 17/32 before any training
        let mut examples = Vec::new();
        for (label, count) in [
            (Label::Conflict, 17usize),
            (Label::Duplicate, 5),
            (Label::Neutral, 10),
        ] {
            for i in 0..count {
                examples.push(LabeledExample::new(
                    RequirementPair::new(
                        format!("{}-{i}", label.name()),
                        format!("The unit {i} shall act."),
                        format!("The unit {i} shall rest."),
                    )
                    .unwrap(),
                    label,
                ));
            }
        }
        let train = Dataset::new(examples, Provenance::Train).unwrap();
        let pvp = task_pvp();
        let tok = build_tokenizer_for_task(&train, std::slice::from_ref(&pvp)).unwrap();
        let constant = ConstantScorer::new(Label::Conflict);
        let members: Vec<(&dyn ScorerModel, &Pvp)> = vec![(&constant, &pvp)];
        let weights = compute_weights(&members, &train, &tok, 256).unwrap();
        assert_eq!(weights[0], 17.0 / 32.0);
        assert_eq!(weights[0], 0.53125);
    }

    #[test]
    fn soft_label_symmetry_and_fixture() {
        let tok = fixture_tokenizer();
        let flat = EnsembleModel::new(vec![fixed_member(vec![0.0, 0.0, 0.0], 1.0)]).unwrap();
        let pool = crate::data::discard_labels(&tiny_train());
        let soft = soft_label(&flat, &pool, 2.0, &tok, 256).unwrap();
        assert_eq!(soft.len(), pool.len());
        for example in soft.iter() {
            for p in example.soft.probabilities() {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }

        let peaked = EnsembleModel::new(vec![fixed_member(vec![2.0, 0.0, 0.0], 1.0)]).unwrap();
        let soft = soft_label(&peaked, &pool, 2.0, &tok, 256).unwrap();
        let probs = soft.examples()[0].soft.probabilities();
        assert!((probs[0] - 0.5761).abs() < 1e-4, "{probs:?}");
        assert!((probs[1] - 0.2119).abs() < 1e-4);
        assert!((probs[2] - 0.2119).abs() < 1e-4);
    }

    #[test]
    fn high_temperature_flattens_soft_labels() {
        let tok = fixture_tokenizer();
        let pool = crate::data::discard_labels(&tiny_train());
        let peaked = EnsembleModel::new(vec![fixed_member(vec![2.0, 0.0, 0.5], 1.0)]).unwrap();
        let soft = soft_label(&peaked, &pool, 1000.0, &tok, 256).unwrap();
        for example in soft.iter() {
            let p = example.soft.probabilities();
            let spread = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - p.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-3);
        }
        assert!(soft_label(&peaked, &pool, 0.0, &tok, 256).is_err());
    }

    #[test]
    fn soft_label_argmax_is_temperature_invariant() {
        let tok = fixture_tokenizer();
        let pool = crate::data::discard_labels(&tiny_train());
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let ensemble = EnsembleModel::new(vec![fixed_member(scores, 1.0)]).unwrap();
            let mut argmaxes = Vec::new();
            for t in [0.25, 1.0, 2.0, 50.0] {
                let soft = soft_label(&ensemble, &pool, t, &tok, 256).unwrap();
                argmaxes.push(soft.examples()[0].soft.argmax());
            }
            assert!(argmaxes.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn normalization_holds_for_every_soft_label() {
        let tok = fixture_tokenizer();
        let pool = crate::data::discard_labels(&tiny_train());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let members: Vec<EnsembleMember> = (0..4)
            .map(|_| {
                fixed_member(
                    (0..3).map(|_| rng.gen_range(-8.0..8.0)).collect(),
                    rng.gen_range(0.1..1.0),
                )
            })
            .collect();
        let ensemble = EnsembleModel::new(members).unwrap();
        let soft = soft_label(&ensemble, &pool, 2.0, &tok, 256).unwrap();
        for example in soft.iter() {
            let sum: f64 = example.soft.probabilities().iter().sum();
            assert!((sum - 1.0).abs() <= SoftLabel::SUM_TOLERANCE);
        }
    }

    #[test]
    fn oracle_ensemble_has_nine_unit_weight_members() {
        let train = tiny_train();
        let pvps = paper_pvps();
        let tok = build_tokenizer_for_task(&train, &pvps).unwrap();
        let oracle = OracleBackend::new(&train, 0.0, 1).unwrap();
        let ensemble = build_ensemble(
            &MemberInit::Oracle(oracle),
            &pvps,
            &[1, 2, 3],
            &train,
            &tok,
            &TrainConfig {
                max_seq_length: 128,
                ..TrainConfig::toy_profile()
            },
        )
        .unwrap();
        assert_eq!(ensemble.len(), 9);
        for member in ensemble.members() {
            assert_eq!(member.weight, 1.0);
        }
    }

    #[test]
    fn distill_degenerates_to_supervised_on_empty_pool() {
        let train = tiny_train();
        let tok = fixture_tokenizer();
        let student = ToyMlm::new(
            MlmConfig {
                dim: 12,
                layers: 1,
                heads: 2,
                ffn_mult: 2,
                max_positions: 64,
            },
            tok.vocab_size(),
            3,
        )
        .unwrap();
        let empty: Dataset<SoftLabeledExample> =
            Dataset::new(vec![], Provenance::Unlabeled).unwrap();
        let cfg = DistillConfig {
            temperature: 2.0,
            steps: 5,
            train: TrainConfig {
                max_steps: 5,
                gradient_accumulation_steps: 1,
                batch_size: 3,
                max_seq_length: 64,
                learning_rate: 1e-2,
                seed: 8,
                ..TrainConfig::paper_defaults()
            },
        };
        let outcome = distill(&train, &empty, &student, &tok, &cfg).unwrap();
        assert_eq!(outcome.log.len(), 5);
    }
}
