//! Masked-language-model scoring contract and the two shipped backends: a
//! deterministic oracle and a small trainable scorer ([`ToyMlm`]).
//!
//! A scorer receives a [`ClozeQuery`] (rendered, tokenized cloze with mask
//! positions and per-label candidate token sequences) and returns one raw
//! log-space score per label.

mod mlm;
mod snapshot;

pub use mlm::{MlmConfig, ToyMlm};
pub use snapshot::{load_model, save_model, LoadedModel, ModelState, SnapshotFile};

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example, Label, LabeledExample, RequirementPair};
use crate::error::{Error, Result};
use crate::pvp::{truncate, ClozePiece, Pvp};

pub const MASK_TOKEN: &str = "[MASK]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

/// Word-level vocabulary with reserved control tokens.
///
/// Tokenization lowercases and splits on whitespace, with every
/// non-alphanumeric character becoming its own token. Ids are assigned in
/// first-seen corpus order after the reserved block, so construction is
/// deterministic given corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Tokenizer {
    pub const MASK_ID: u32 = 0;
    pub const SEP_ID: u32 = 1;
    pub const PAD_ID: u32 = 2;
    pub const UNK_ID: u32 = 3;
    const RESERVED: [&'static str; 4] = [MASK_TOKEN, SEP_TOKEN, PAD_TOKEN, UNK_TOKEN];

    /// Builds a vocabulary over every token seen in `texts`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut tokens: Vec<String> = Self::RESERVED.iter().map(|t| t.to_string()).collect();
        let mut index: HashMap<String, u32> =
            tokens.iter().cloned().zip(0..).map(|(t, i)| (t, i)).collect();
        for text in texts {
            for token in Self::split(text) {
                if !index.contains_key(&token) {
                    index.insert(token.clone(), tokens.len() as u32);
                    tokens.push(token);
                }
            }
        }
        if tokens.len() == Self::RESERVED.len() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { tokens, index })
    }

    /// Rebuilds a tokenizer from a persisted vocabulary (reserved block first).
    pub fn from_vocabulary(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < Self::RESERVED.len()
            || Self::RESERVED.iter().zip(&tokens).any(|(r, t)| r != t)
        {
            return Err(Error::KindMismatch(
                "vocabulary does not start with the reserved token block".to_string(),
            ));
        }
        let index = tokens
            .iter()
            .cloned()
            .zip(0..)
            .map(|(t, i)| (t, i))
            .collect();
        Ok(Self { tokens, index })
    }

    /// Lowercased whitespace-and-punctuation split.
    pub fn split(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut word = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                if !c.is_whitespace() {
                    out.push(c.to_string());
                }
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        Self::split(text)
    }

    /// Encodes text, mapping out-of-vocabulary tokens to `[UNK]`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        Self::split(text)
            .iter()
            .map(|t| self.id_of(t).unwrap_or(Self::UNK_ID))
            .collect()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary over a dataset's requirement texts.
pub fn build_tokenizer<E: Example>(corpus: &Dataset<E>) -> Result<Tokenizer> {
    if corpus.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Tokenizer::build(
        corpus
            .iter()
            .flat_map(|e| [e.pair().r1(), e.pair().r2()]),
    )
}

/// Vocabulary over a dataset plus everything the given PVPs can inject into a
/// render: pattern literals, quotes, and verbalization words.
pub fn build_tokenizer_for_task<E: Example>(
    corpus: &Dataset<E>,
    pvps: &[Pvp],
) -> Result<Tokenizer> {
    if corpus.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut extras: Vec<String> = vec!["\"".to_string()];
    for pvp in pvps {
        for segment in pvp.pattern.segments() {
            if let crate::pvp::PatternSegment::Literal(text) = segment {
                extras.push(text.clone());
            }
        }
        extras.extend(pvp.verbalizer.words().map(|w| w.to_string()));
    }
    Tokenizer::build(
        corpus
            .iter()
            .flat_map(|e| [e.pair().r1(), e.pair().r2()])
            .chain(extras.iter().map(|s| s.as_str())),
    )
}

/// A rendered, tokenized cloze ready for scoring: token ids, consecutive mask
/// positions, and per-label candidate token id sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeQuery {
    pair_id: String,
    token_ids: Vec<u32>,
    mask_positions: Vec<usize>,
    candidates: Vec<Vec<u32>>,
}

impl ClozeQuery {
    pub fn pair_id(&self) -> &str {
        &self.pair_id
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn mask_positions(&self) -> &[usize] {
        &self.mask_positions
    }

    /// Candidate token id sequences, one per label in canonical order.
    pub fn candidates(&self) -> &[Vec<u32>] {
        &self.candidates
    }

    pub fn arity(&self) -> usize {
        self.candidates.len()
    }
}

/// Renders, truncates, and encodes a pair under a PVP.
///
/// The mask block expands to the longest candidate verbalization; separators
/// map to `[SEP]`. A verbalization word outside the vocabulary is an error
/// here, never at scoring time.
pub fn make_query(
    pvp: &Pvp,
    pair: &RequirementPair,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<ClozeQuery> {
    let mut candidates = Vec::with_capacity(pvp.verbalizer.arity());
    for word in pvp.verbalizer.words() {
        let mut ids = Vec::new();
        for token in tokenizer.tokenize(word) {
            match tokenizer.id_of(&token) {
                Some(id) => ids.push(id),
                None => {
                    return Err(Error::OutOfVocabulary {
                        word: word.to_string(),
                    })
                }
            }
        }
        if ids.is_empty() {
            return Err(Error::OutOfVocabulary {
                word: word.to_string(),
            });
        }
        candidates.push(ids);
    }
    let mask_count = candidates.iter().map(Vec::len).max().unwrap_or(1);
    let rendered = pvp.render(pair, mask_count);
    let rendered = truncate(&rendered, tokenizer, max_seq_length)?;

    let mut token_ids = Vec::new();
    let mut mask_positions = Vec::new();
    for piece in rendered.pieces() {
        match piece {
            ClozePiece::Text { text, .. } => token_ids.extend(tokenizer.encode(text)),
            ClozePiece::Mask => {
                mask_positions.push(token_ids.len());
                token_ids.push(Tokenizer::MASK_ID);
            }
            ClozePiece::Separator => token_ids.push(Tokenizer::SEP_ID),
        }
    }
    Ok(ClozeQuery {
        pair_id: pair.id().to_string(),
        token_ids,
        mask_positions,
        candidates,
    })
}

/// Raw log-space scores, one per label in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelScores {
    scores: Vec<f64>,
}

impl LabelScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite label score {bad}")));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn arity(&self) -> usize {
        self.scores.len()
    }

    pub fn get(&self, label: Label) -> f64 {
        self.scores[label.index()]
    }

    /// Index of the maximum score; exact ties go to the lowest index.
    pub fn argmax_index(&self) -> usize {
        let mut best = 0;
        for i in 1..self.scores.len() {
            if self.scores[i] > self.scores[best] {
                best = i;
            }
        }
        best
    }

    /// Task-label argmax with canonical tie-break.
    pub fn argmax_label(&self) -> Label {
        debug_assert_eq!(self.scores.len(), Label::COUNT);
        Label::from_index(self.argmax_index()).expect("task arity")
    }
}

/// The scoring contract: one raw score per label for a cloze query.
///
/// Implementations must be deterministic for a fixed parameter state.
pub trait ScorerModel: Send + Sync {
    fn score(&self, query: &ClozeQuery) -> Result<LabelScores>;
}

/// A pair encoded for sequence-pair classification: r1 ++ [SEP] ++ r2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEncoding {
    pair_id: String,
    token_ids: Vec<u32>,
}

impl PairEncoding {
    pub fn pair_id(&self) -> &str {
        &self.pair_id
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }
}

/// Encodes a pair for the classifier head, trimming the tail of the longer
/// side when the budget overflows.
pub fn encode_pair(
    pair: &RequirementPair,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> PairEncoding {
    let mut r1 = tokenizer.encode(pair.r1());
    let mut r2 = tokenizer.encode(pair.r2());
    while r1.len() + r2.len() + 1 > max_seq_length {
        let victim = if r1.len() >= r2.len() { &mut r1 } else { &mut r2 };
        if victim.pop().is_none() {
            break;
        }
    }
    let mut token_ids = r1;
    token_ids.push(Tokenizer::SEP_ID);
    token_ids.extend(r2);
    PairEncoding {
        pair_id: pair.id().to_string(),
        token_ids,
    }
}

/// Three-way classification over an encoded pair.
pub trait PairClassifier: Send + Sync {
    fn classify(&self, encoding: &PairEncoding) -> Result<LabelScores>;
}

/// s(l | x, m) for every label, in canonical order.
pub fn score_labels(model: &dyn ScorerModel, query: &ClozeQuery) -> Result<LabelScores> {
    model.score(query)
}

/// Length-normalized score composition shared by MLM-style scorers:
/// the label score is the mean log-probability of its candidate tokens at
/// the first `k` mask positions.
pub fn compose_label_scores(
    log_probs_per_mask: &[Vec<f64>],
    candidates: &[Vec<u32>],
) -> Vec<f64> {
    candidates
        .iter()
        .map(|tokens| {
            let k = tokens.len();
            let sum: f64 = tokens
                .iter()
                .enumerate()
                .map(|(j, id)| log_probs_per_mask[j][*id as usize])
                .sum();
            sum / k as f64
        })
        .collect()
}

/// Argmax of [`score_labels`] with canonical tie-break.
pub fn predict_label(
    model: &dyn ScorerModel,
    pvp: &Pvp,
    pair: &RequirementPair,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<Label> {
    let query = make_query(pvp, pair, tokenizer, max_seq_length)?;
    Ok(model.score(&query)?.argmax_label())
}

/// Fraction of gold labels recovered by a model in its current state.
///
/// Run before fine-tuning, this is the PVP weight used by the ensemble.
pub fn zero_shot_accuracy(
    model: &dyn ScorerModel,
    pvp: &Pvp,
    labeled: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for example in labeled.iter() {
        if predict_label(model, pvp, &example.pair, tokenizer, max_seq_length)? == example.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labeled.len() as f64)
}

pub(crate) fn fnv1a(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Ground-truth lookup scorer used as a pipeline-correctness test backend.
///
/// With zero noise the maximum score always lands on the stored gold label;
/// with noise rate `epsilon` a deterministic per-pair draw misdirects the
/// maximum to a wrong label. Pairs absent from the lookup score uniformly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleBackend {
    truth: BTreeMap<String, Label>,
    noise: f64,
    seed: u64,
}

impl OracleBackend {
    const HIGH: f64 = -0.0202027073175194; // ln(0.98)
    const LOW: f64 = -4.605170185988091; // ln(0.01)

    pub fn new(truth: &Dataset<LabeledExample>, noise: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::InvalidConfig(format!(
                "oracle noise rate {noise} outside [0, 1)"
            )));
        }
        Ok(Self {
            truth: truth
                .iter()
                .map(|e| (e.pair.id().to_string(), e.label))
                .collect(),
            noise,
            seed,
        })
    }

    pub fn from_map(truth: BTreeMap<String, Label>, noise: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::InvalidConfig(format!(
                "oracle noise rate {noise} outside [0, 1)"
            )));
        }
        Ok(Self { truth, noise, seed })
    }

    pub fn truth(&self) -> &BTreeMap<String, Label> {
        &self.truth
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn scores_for(&self, pair_id: &str, arity: usize) -> Result<LabelScores> {
        if arity != Label::COUNT {
            return Err(Error::KindMismatch(format!(
                "oracle backend serves the {}-label task, got arity {arity}",
                Label::COUNT
            )));
        }
        let Some(gold) = self.truth.get(pair_id) else {
            return LabelScores::new(vec![(1.0f64 / 3.0).ln(); arity]);
        };
        let mut top = gold.index();
        if self.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(pair_id));
            if rng.gen::<f64>() < self.noise {
                let offset = rng.gen_range(1..Label::COUNT);
                top = (top + offset) % Label::COUNT;
            }
        }
        let mut scores = vec![Self::LOW; arity];
        scores[top] = Self::HIGH;
        LabelScores::new(scores)
    }
}

impl ScorerModel for OracleBackend {
    fn score(&self, query: &ClozeQuery) -> Result<LabelScores> {
        self.scores_for(query.pair_id(), query.arity())
    }
}

impl PairClassifier for OracleBackend {
    fn classify(&self, encoding: &PairEncoding) -> Result<LabelScores> {
        self.scores_for(encoding.pair_id(), Label::COUNT)
    }
}

/// Scorer that always puts its maximum on one fixed label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantScorer {
    label: Label,
}

impl ConstantScorer {
    pub fn new(label: Label) -> Self {
        Self { label }
    }

    pub fn label(&self) -> Label {
        self.label
    }
}

impl ScorerModel for ConstantScorer {
    fn score(&self, query: &ClozeQuery) -> Result<LabelScores> {
        let mut scores = vec![OracleBackend::LOW; query.arity()];
        if self.label.index() < scores.len() {
            scores[self.label.index()] = OracleBackend::HIGH;
        }
        LabelScores::new(scores)
    }
}

impl PairClassifier for ConstantScorer {
    fn classify(&self, _encoding: &PairEncoding) -> Result<LabelScores> {
        let mut scores = vec![OracleBackend::LOW; Label::COUNT];
        scores[self.label.index()] = OracleBackend::HIGH;
        LabelScores::new(scores)
    }
}

/// Scorer that returns one fixed score vector for every input; a stub
/// backend for plumbing tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedScorer {
    scores: Vec<f64>,
}

impl FixedScorer {
    pub fn new(scores: Vec<f64>) -> Self {
        Self { scores }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

impl ScorerModel for FixedScorer {
    fn score(&self, _query: &ClozeQuery) -> Result<LabelScores> {
        LabelScores::new(self.scores.clone())
    }
}

impl PairClassifier for FixedScorer {
    fn classify(&self, _encoding: &PairEncoding) -> Result<LabelScores> {
        LabelScores::new(self.scores.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::pvp::{builtin_patterns, builtin_verbalizers, Verbalizer};

    fn sample_dataset() -> Dataset<LabeledExample> {
        let make = |id: &str, r1: &str, r2: &str, label| {
            LabeledExample::new(RequirementPair::new(id, r1, r2).unwrap(), label)
        };
        Dataset::new(
            vec![
                make(
                    "a",
                    "The UAV shall fly home.",
                    "The UAV shall not fly home.",
                    Label::Conflict,
                ),
                make(
                    "b",
                    "The UAV shall record video.",
                    "The drone shall capture video.",
                    Label::Duplicate,
                ),
                make(
                    "c",
                    "The UAV shall fly.",
                    "The station shall log data.",
                    Label::Neutral,
                ),
            ],
            Provenance::Train,
        )
        .unwrap()
    }

    fn task_pvp(pattern_idx: usize, verbalizer_idx: usize) -> Pvp {
        Pvp::new(
            builtin_patterns().remove(pattern_idx),
            builtin_verbalizers().remove(verbalizer_idx),
        )
    }

    #[test]
    fn tokenizer_splits_words_and_punct() {
        assert_eq!(
            Tokenizer::split("The UAV shall fly."),
            vec!["the", "uav", "shall", "fly", "."]
        );
        assert_eq!(
            Tokenizer::split("\"quoted\", text?"),
            vec!["\"", "quoted", "\"", ",", "text", "?"]
        );
    }

    #[test]
    fn tokenizer_build_is_deterministic() {
        let ds = sample_dataset();
        let a = build_tokenizer(&ds).unwrap();
        let b = build_tokenizer(&ds).unwrap();
        assert_eq!(a.vocabulary(), b.vocabulary());
        assert!(a.id_of("uav").is_some());
        assert!(a.id_of("shall").is_some());
    }

    #[test]
    fn tokenizer_rejects_empty_corpus() {
        let empty: Dataset<LabeledExample> = Dataset::new(vec![], Provenance::Train).unwrap();
        assert!(matches!(build_tokenizer(&empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let ds = sample_dataset();
        let tok = build_tokenizer(&ds).unwrap();
        let ids = tok.encode("the zeppelin");
        assert_eq!(ids[1], Tokenizer::UNK_ID);
        assert_ne!(ids[0], Tokenizer::UNK_ID);
    }

    #[test]
    fn make_query_mask_count_is_max_candidate_length() {
        let ds = sample_dataset();
        let pvp = Pvp::new(
            builtin_patterns().remove(0),
            Verbalizer::for_task("vx", ["No", "Yes", "not related"]).unwrap(),
        );
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let query = make_query(&pvp, ds.examples()[0].pair(), &tok, 256).unwrap();
        assert_eq!(query.mask_positions().len(), 2);
        assert_eq!(
            query.candidates().iter().map(Vec::len).collect::<Vec<_>>(),
            vec![1, 1, 2]
        );
        for w in query.mask_positions().windows(2) {
            assert_eq!(w[1], w[0] + 1);
        }
    }

    #[test]
    fn make_query_single_token_verbalizers_use_one_mask() {
        let ds = sample_dataset();
        let pvp = task_pvp(0, 0);
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let query = make_query(&pvp, ds.examples()[0].pair(), &tok, 256).unwrap();
        assert_eq!(query.mask_positions().len(), 1);
    }

    #[test]
    fn make_query_rejects_out_of_vocabulary_verbalization() {
        let ds = sample_dataset();
        let pvp = Pvp::new(
            builtin_patterns().remove(0),
            Verbalizer::for_task("vy", ["frobnicates", "Yes", "No"]).unwrap(),
        );
        // tokenizer built without the pvp's words
        let tok = build_tokenizer(&ds).unwrap();
        assert!(matches!(
            make_query(&pvp, ds.examples()[0].pair(), &tok, 256),
            Err(Error::OutOfVocabulary { .. })
        ));
    }

    #[test]
    fn compose_scores_matches_hand_computation() {
        // three-token vocabulary, two mask positions with fixed log-probs
        let lp0 = vec![-0.5, -1.5, -2.5];
        let lp1 = vec![-3.0, -0.25, -1.0];
        let candidates = vec![vec![0u32], vec![1, 1], vec![2, 0]];
        let scores = compose_label_scores(&[lp0, lp1], &candidates);
        assert!((scores[0] - (-0.5)).abs() < 1e-12);
        assert!((scores[1] - (-1.5 + -0.25) / 2.0).abs() < 1e-12);
        assert!((scores[2] - (-2.5 + -3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn compose_scores_invariant_to_candidate_order() {
        let lp = vec![vec![-0.5, -1.5, -2.5], vec![-3.0, -0.25, -1.0]];
        let forward = compose_label_scores(&lp, &[vec![0], vec![1, 1], vec![2]]);
        let reversed = compose_label_scores(&lp, &[vec![2], vec![1, 1], vec![0]]);
        assert_eq!(forward[0], reversed[2]);
        assert_eq!(forward[1], reversed[1]);
        assert_eq!(forward[2], reversed[0]);
    }

    #[test]
    fn oracle_recovers_gold_labels() {
        let ds = sample_dataset();
        let pvp = task_pvp(2, 1);
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let oracle = OracleBackend::new(&ds, 0.0, 7).unwrap();
        for example in ds.iter() {
            let label = predict_label(&oracle, &pvp, &example.pair, &tok, 256).unwrap();
            assert_eq!(label, example.label);
        }
        assert_eq!(
            zero_shot_accuracy(&oracle, &pvp, &ds, &tok, 256).unwrap(),
            1.0
        );
    }

    #[test]
    fn oracle_unknown_pairs_score_uniformly() {
        let ds = sample_dataset();
        let oracle = OracleBackend::new(&ds, 0.0, 7).unwrap();
        let pvp = task_pvp(0, 0);
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let stranger = RequirementPair::new("zzz", "A shall b.", "C shall d.").unwrap();
        let query = make_query(&pvp, &stranger, &tok, 256).unwrap();
        let scores = oracle.score(&query).unwrap();
        assert_eq!(scores.scores()[0], scores.scores()[1]);
        assert_eq!(scores.scores()[1], scores.scores()[2]);
        // uniform scores tie-break to Conflict
        assert_eq!(scores.argmax_label(), Label::Conflict);
    }

    #[test]
    fn oracle_noise_is_deterministic_and_bounded() {
        let ds = sample_dataset();
        let noisy = OracleBackend::new(&ds, 0.5, 11).unwrap();
        let pvp = task_pvp(0, 0);
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let a: Vec<Label> = ds
            .iter()
            .map(|e| predict_label(&noisy, &pvp, &e.pair, &tok, 256).unwrap())
            .collect();
        let b: Vec<Label> = ds
            .iter()
            .map(|e| predict_label(&noisy, &pvp, &e.pair, &tok, 256).unwrap())
            .collect();
        assert_eq!(a, b);
        assert!(OracleBackend::new(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn constant_scorer_always_picks_its_label() {
        let ds = sample_dataset();
        let pvp = task_pvp(1, 0);
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let constant = ConstantScorer::new(Label::Conflict);
        let acc = zero_shot_accuracy(&constant, &pvp, &ds, &tok, 256).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_shot_accuracy_rejects_empty_dataset() {
        let empty: Dataset<LabeledExample> = Dataset::new(vec![], Provenance::Train).unwrap();
        let ds = sample_dataset();
        let pvp = task_pvp(0, 0);
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let oracle = OracleBackend::new(&ds, 0.0, 7).unwrap();
        assert!(matches!(
            zero_shot_accuracy(&oracle, &pvp, &empty, &tok, 256),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn random_scorer_sits_near_chance() {
        struct RandomScorer {
            seed: u64,
        }
        impl ScorerModel for RandomScorer {
            fn score(&self, query: &ClozeQuery) -> Result<LabelScores> {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(query.pair_id()));
                LabelScores::new((0..query.arity()).map(|_| rng.gen::<f64>()).collect())
            }
        }

        let mut examples = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..10_000 {
            let label = Label::from_index(rng.gen_range(0..3)).unwrap();
            examples.push(LabeledExample::new(
                RequirementPair::new(format!("p{i}"), format!("A{i} shall run."), "B shall stop.")
                    .unwrap(),
                label,
            ));
        }
        let ds = Dataset::new(examples, Provenance::Test).unwrap();
        let pvp = task_pvp(0, 0);
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        let acc = zero_shot_accuracy(&RandomScorer { seed: 3 }, &pvp, &ds, &tok, 256).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 0.02, "accuracy {acc}");
    }

    #[test]
    fn encode_pair_inserts_sep_and_respects_budget() {
        let ds = sample_dataset();
        let tok = build_tokenizer(&ds).unwrap();
        let enc = encode_pair(ds.examples()[0].pair(), &tok, 256);
        assert!(enc.token_ids().contains(&Tokenizer::SEP_ID));
        let tight = encode_pair(ds.examples()[0].pair(), &tok, 7);
        assert_eq!(tight.token_ids().len(), 7);
    }
}
