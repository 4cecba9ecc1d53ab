//! Domain types shared by every stage of the pipeline: requirement pairs,
//! labels, datasets, class distributions, and soft labels.
//!
//! All types here are immutable after construction and safe to share across
//! threads without synchronization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relation between the two requirements of a pair.
///
/// The declaration order is the canonical order (`Conflict < Duplicate <
/// Neutral`). Report columns, score vectors, and argmax tie-breaks all use it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Conflict,
    Duplicate,
    Neutral,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Conflict, Label::Duplicate, Label::Neutral];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Label::Conflict => 0,
            Label::Duplicate => 1,
            Label::Neutral => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Conflict => "conflict",
            Label::Duplicate => "duplicate",
            Label::Neutral => "neutral",
        }
    }

    pub fn parse(text: &str) -> Option<Label> {
        match text.to_ascii_lowercase().as_str() {
            "conflict" => Some(Label::Conflict),
            "duplicate" => Some(Label::Duplicate),
            "neutral" => Some(Label::Neutral),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A requirement pairing `(r1, r2)` identified by a unique id.
///
/// Texts are stored verbatim; all preprocessing is pattern-local.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementPair {
    id: String,
    r1: String,
    r2: String,
}

impl RequirementPair {
    /// Both texts must be non-empty after trimming surrounding whitespace.
    pub fn new(
        id: impl Into<String>,
        r1: impl Into<String>,
        r2: impl Into<String>,
    ) -> Result<Self> {
        let (id, r1, r2) = (id.into(), r1.into(), r2.into());
        if r1.trim().is_empty() {
            return Err(Error::EmptyText { id, side: "r1" });
        }
        if r2.trim().is_empty() {
            return Err(Error::EmptyText { id, side: "r2" });
        }
        Ok(Self { id, r1, r2 })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn r1(&self) -> &str {
        &self.r1
    }

    pub fn r2(&self) -> &str {
        &self.r2
    }
}

/// A requirement pair with its gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub pair: RequirementPair,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(pair: RequirementPair, label: Label) -> Self {
        Self { pair, label }
    }
}

/// A probability vector over the three labels in canonical order.
///
/// Entries are non-negative, at most one, and sum to one within 1e-9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel([f64; 3]);

impl SoftLabel {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probabilities: [f64; 3]) -> Result<Self> {
        for (i, p) in probabilities.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                return Err(Error::InvalidSoftLabel(format!(
                    "entry {i} = {p} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidSoftLabel(format!("entries sum to {sum}")));
        }
        Ok(Self(probabilities))
    }

    pub fn probabilities(&self) -> &[f64; 3] {
        &self.0
    }

    pub fn probability(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    /// Highest-probability label; exact ties go to the earlier canonical label.
    pub fn argmax(&self) -> Label {
        let mut best = 0;
        for i in 1..3 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Label::from_index(best).unwrap()
    }
}

/// A pair plus the ensemble's probability vector, used as a distillation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabeledExample {
    pub pair: RequirementPair,
    pub soft: SoftLabel,
}

/// Any dataset element that wraps a requirement pair.
pub trait Example {
    fn pair(&self) -> &RequirementPair;

    fn id(&self) -> &str {
        self.pair().id()
    }
}

impl Example for RequirementPair {
    fn pair(&self) -> &RequirementPair {
        self
    }
}

impl Example for LabeledExample {
    fn pair(&self) -> &RequirementPair {
        &self.pair
    }
}

impl Example for SoftLabeledExample {
    fn pair(&self) -> &RequirementPair {
        &self.pair
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Train,
    Unlabeled,
    Test,
    Synthetic,
}

/// An ordered, id-unique collection of examples of one kind.
///
/// Homogeneity of the example kind is enforced by the type parameter; mixed
/// records are rejected at the serialization boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<E: Example> {
    examples: Vec<E>,
    provenance: Provenance,
}

impl<E: Example> Dataset<E> {
    pub fn new(examples: Vec<E>, provenance: Provenance) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(examples.len());
        for example in &examples {
            if !seen.insert(example.id().to_string()) {
                return Err(Error::DuplicateId(example.id().to_string()));
            }
        }
        Ok(Self {
            examples,
            provenance,
        })
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[E] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, E> {
        self.examples.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.id())
    }
}

/// Per-label example counts of a labeled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    counts: [usize; 3],
}

impl ClassDistribution {
    pub fn new(counts: [usize; 3]) -> Self {
        Self { counts }
    }

    pub fn count(&self, label: Label) -> usize {
        self.counts[label.index()]
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Exact per-label counts of a labeled dataset.
pub fn class_distribution(dataset: &Dataset<LabeledExample>) -> ClassDistribution {
    let mut counts = [0usize; 3];
    for example in dataset.iter() {
        counts[example.label.index()] += 1;
    }
    ClassDistribution::new(counts)
}

/// Drops gold labels, preserving pair payloads, ids, and order.
///
/// This is how the unlabeled pool is simulated from labeled data.
pub fn discard_labels(dataset: &Dataset<LabeledExample>) -> Dataset<RequirementPair> {
    let pairs = dataset.iter().map(|e| e.pair.clone()).collect();
    Dataset {
        examples: pairs,
        provenance: Provenance::Unlabeled,
    }
}
