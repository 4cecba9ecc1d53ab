//! Stratified construction of the labeled training subsets, the unlabeled
//! pool, and the test split.
//!
//! Per-class target counts come from largest-remainder apportionment with
//! remainder ties broken toward the earlier canonical label; this reproduces
//! the published class-distribution table exactly (including the unlabeled
//! row, whose 0.5/0.5 remainder tie goes to Conflict).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    discard_labels, ClassDistribution, Dataset, Label, LabeledExample,
    Provenance, RequirementPair,
};
use crate::error::{Error, Result};

/// How to carve a labeled dataset into train subsets, unlabeled pool, and
/// test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Class proportions in canonical order; non-negative, sum to one.
    pub proportions: [f64; 3],
    /// Labeled training-set sizes, ascending.
    pub train_sizes: Vec<usize>,
    pub unlabeled_size: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Nest the train subsets (each smaller set is a prefix of the larger).
    pub nested: bool,
}

/// Test-set class shares of the published distribution table.
pub const TABLE_PROPORTIONS: [f64; 3] = [0.5225, 0.1575, 0.32];
pub const TABLE_TRAIN_SIZES: [usize; 7] = [32, 64, 128, 256, 512, 1024, 2048];

impl SplitPlan {
    pub fn table_defaults(seed: u64) -> Self {
        Self {
            proportions: TABLE_PROPORTIONS,
            train_sizes: TABLE_TRAIN_SIZES.to_vec(),
            unlabeled_size: 5000,
            test_size: 2000,
            seed,
            nested: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_proportions(&self.proportions)?;
        if self.train_sizes.iter().any(|s| *s == 0) {
            return Err(Error::InvalidConfig("train sizes must be positive".to_string()));
        }
        if self.unlabeled_size == 0 || self.test_size == 0 {
            return Err(Error::InvalidConfig(
                "unlabeled and test sizes must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

fn validate_proportions(proportions: &[f64; 3]) -> Result<()> {
    if proportions.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidConfig(
            "proportions must be non-negative".to_string(),
        ));
    }
    let sum: f64 = proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "proportions sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` into per-class counts.
///
/// Floors each share, then distributes the shortfall by descending fractional
/// remainder; remainders are compared at 1e-9 granularity so float noise
/// cannot flip a genuine tie, and equal remainders go to the earlier
/// canonical label.
pub fn target_counts(n: usize, proportions: &[f64; 3]) -> Result<ClassDistribution> {
    validate_proportions(proportions)?;
    let shares: [f64; 3] = std::array::from_fn(|i| n as f64 * proportions[i]);
    let floors: [usize; 3] = std::array::from_fn(|i| shares[i].floor() as usize);
    let mut counts = floors;
    let assigned: usize = floors.iter().sum();
    let shortfall = n.saturating_sub(assigned);
    debug_assert!(shortfall <= 3, "shortfall {shortfall}");
    let mut order: Vec<usize> = (0..3).collect();
    let quantized: [i64; 3] =
        std::array::from_fn(|i| ((shares[i] - floors[i] as f64) * 1e9).round() as i64);
    order.sort_by(|a, b| quantized[*b].cmp(&quantized[*a]).then(a.cmp(b)));
    for i in order.into_iter().take(shortfall) {
        counts[i] += 1;
    }
    Ok(ClassDistribution::new(counts))
}

/// The carved subsets: labeled train sets by size, the label-free unlabeled
/// pool, and the labeled test set.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train_by_size: Vec<(usize, Dataset<LabeledExample>)>,
    pub unlabeled: Dataset<RequirementPair>,
    pub test: Dataset<LabeledExample>,
}

/// Seeded stratified sampling without replacement.
///
/// The test set, unlabeled pool, and train pool are disjoint. With
/// `nested = true` every smaller train set is a per-class prefix of the
/// larger ones.
pub fn stratified_split(
    dataset: &Dataset<LabeledExample>,
    plan: &SplitPlan,
) -> Result<SplitOutcome> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);

    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, example) in dataset.iter().enumerate() {
        by_class[example.label.index()].push(i);
    }
    for list in by_class.iter_mut() {
        list.shuffle(&mut rng);
    }

    let test_counts = target_counts(plan.test_size, &plan.proportions)?;
    let unlabeled_counts = target_counts(plan.unlabeled_size, &plan.proportions)?;
    let size_counts: Vec<(usize, ClassDistribution)> = plan
        .train_sizes
        .iter()
        .map(|s| target_counts(*s, &plan.proportions).map(|c| (*s, c)))
        .collect::<Result<_>>()?;
    let pool_counts: [usize; 3] = std::array::from_fn(|i| {
        let label = Label::ALL[i];
        size_counts
            .iter()
            .map(|(_, c)| c.count(label))
            .max()
            .unwrap_or(0)
    });

    for label in Label::ALL {
        let need = test_counts.count(label)
            + unlabeled_counts.count(label)
            + pool_counts[label.index()];
        let have = by_class[label.index()].len();
        if need > have {
            return Err(Error::ClassShortage { label, need, have });
        }
    }

    let slice_of = |class: usize, start: usize, len: usize| -> Vec<usize> {
        by_class[class][start..start + len].to_vec()
    };
    let collect = |indices: &[Vec<usize>]| -> Vec<LabeledExample> {
        indices
            .iter()
            .flatten()
            .map(|i| dataset.examples()[*i].clone())
            .collect()
    };

    let test_idx: Vec<Vec<usize>> = (0..3)
        .map(|c| slice_of(c, 0, test_counts.count(Label::ALL[c])))
        .collect();
    let unl_idx: Vec<Vec<usize>> = (0..3)
        .map(|c| {
            slice_of(
                c,
                test_counts.count(Label::ALL[c]),
                unlabeled_counts.count(Label::ALL[c]),
            )
        })
        .collect();
    let pool_start: [usize; 3] = std::array::from_fn(|c| {
        test_counts.count(Label::ALL[c]) + unlabeled_counts.count(Label::ALL[c])
    });
    let pool_idx: Vec<Vec<usize>> = (0..3)
        .map(|c| slice_of(c, pool_start[c], pool_counts[c]))
        .collect();

    let mut train_by_size = Vec::with_capacity(size_counts.len());
    for (size, counts) in &size_counts {
        let subset: Vec<Vec<usize>> = if plan.nested {
            (0..3)
                .map(|c| pool_idx[c][..counts.count(Label::ALL[c])].to_vec())
                .collect()
        } else {
            (0..3)
                .map(|c| {
                    let mut pool = pool_idx[c].clone();
                    pool.shuffle(&mut rng);
                    pool.truncate(counts.count(Label::ALL[c]));
                    pool
                })
                .collect()
        };
        let examples = collect(&subset);
        train_by_size.push((*size, Dataset::new(examples, Provenance::Train)?));
    }

    let test = Dataset::new(collect(&test_idx), Provenance::Test)?;
    let unlabeled_labeled = Dataset::new(collect(&unl_idx), Provenance::Unlabeled)?;
    let unlabeled = discard_labels(&unlabeled_labeled);

    Ok(SplitOutcome {
        train_by_size,
        unlabeled,
        test,
    })
}

/// Exact re-creation of a split from persisted id lists.
pub fn subset_by_ids(
    dataset: &Dataset<LabeledExample>,
    ids: &[String],
    provenance: Provenance,
) -> Result<Dataset<LabeledExample>> {
    let index: std::collections::HashMap<&str, usize> = dataset
        .iter()
        .enumerate()
        .map(|(i, e)| (e.pair.id(), i))
        .collect();
    let examples = ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|i| dataset.examples()[*i].clone())
                .ok_or_else(|| Error::KindMismatch(format!("id `{id}` not in dataset")))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, provenance)
}
