//! Fine-tuning of a scorer on a PVP, the supervised sequence-pair baseline,
//! and seeded repeats with averaged reporting.
//!
//! Optimization is plain Adam with gradient accumulation, global-norm
//! clipping, and a constant learning rate. `max_steps` counts optimizer
//! updates; each update consumes `gradient_accumulation_steps` micro-batches.
//! Everything derives from the single config seed, so identical
//! (data, config, seed) triples produce bit-identical snapshots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{encode_pair, make_query, ClozeQuery, ScorerModel, ToyMlm, Tokenizer};
use crate::data::{Dataset, Label, LabeledExample, SoftLabel};
use crate::error::{Error, Result};
use crate::pvp::Pvp;

/// Optimization hyperparameters.
///
/// [`TrainConfig::paper_defaults`] carries the published values; the toy
/// backend ships its own profile because the architecture and scale differ.
/// Reports name the profile used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Optimizer updates to run.
    pub max_steps: usize,
    pub gradient_accumulation_steps: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub warmup_steps: usize,
    pub max_grad_norm: f64,
    pub max_seq_length: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Mix of the auxiliary masked-token objective into the PVP loss.
    pub alpha: f64,
}

impl TrainConfig {
    pub fn paper_defaults() -> Self {
        Self {
            max_steps: 1000,
            gradient_accumulation_steps: 4,
            learning_rate: 1e-5,
            adam_epsilon: 1e-8,
            warmup_steps: 0,
            max_grad_norm: 1.0,
            max_seq_length: 256,
            batch_size: 4,
            seed: 42,
            alpha: 0.0,
        }
    }

    /// Profile for the shipped small scorer; the higher learning rate suits
    /// its scale.
    pub fn toy_profile() -> Self {
        Self {
            max_steps: 250,
            gradient_accumulation_steps: 1,
            learning_rate: 1e-2,
            batch_size: 8,
            ..Self::paper_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0
            || self.gradient_accumulation_steps == 0
            || self.batch_size == 0
            || self.max_seq_length == 0
        {
            return Err(Error::InvalidConfig(
                "train steps, accumulation, batch size, and sequence length must be positive"
                    .to_string(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate and adam epsilon must be positive".to_string(),
            ));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::InvalidConfig(
                "max_grad_norm must be positive".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

/// One append-only log record per optimizer update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

/// A trained model with its training log.
pub struct TrainOutcome {
    pub model: ToyMlm,
    pub log: Vec<TrainLogRecord>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    fn new(params: usize, epsilon: f64) -> Self {
        Self {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Deterministic micro-batch index stream: shuffled epochs when the dataset
/// covers a batch, otherwise sampling with replacement.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    with_replacement: bool,
    n: usize,
}

impl BatchSampler {
    fn new(n: usize, batch_size: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n, // force an initial shuffle
            with_replacement: n < batch_size,
            n,
        }
    }

    fn next_batch(&mut self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.with_replacement {
            return (0..batch_size).map(|_| rng.gen_range(0..self.n)).collect();
        }
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if self.cursor >= self.n {
                // Fisher-Yates reshuffle per epoch
                for i in (1..self.n).rev() {
                    let j = rng.gen_range(0..=i);
                    self.order.swap(i, j);
                }
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

fn check_finite(loss: f64, step: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step, loss });
    }
    Ok(())
}

/// Fine-tunes a scorer on a PVP over the labeled set.
///
/// The loss is `(1 - alpha) * CE(softmax(label scores), gold) + alpha *`
/// auxiliary masked-token cross-entropy on randomly corrupted positions.
pub fn finetune_pvp(
    model: &ToyMlm,
    pvp: &Pvp,
    train: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let queries: Vec<(ClozeQuery, usize)> = train
        .iter()
        .map(|e| {
            make_query(pvp, &e.pair, tokenizer, cfg.max_seq_length)
                .map(|q| (q, e.label.index()))
        })
        .collect::<Result<_>>()?;

    let mut model = model.clone();
    let mut adam = Adam::new(model.param_count(), cfg.adam_epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aux_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x61757821);
    let mut sampler = BatchSampler::new(queries.len(), cfg.batch_size);
    let mut grad = vec![0.0; model.param_count()];
    let mut log = Vec::with_capacity(cfg.max_steps);

    for step in 1..=cfg.max_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut step_loss = 0.0;
        for _ in 0..cfg.gradient_accumulation_steps {
            let batch = sampler.next_batch(cfg.batch_size, &mut rng);
            let scale =
                1.0 / (cfg.batch_size * cfg.gradient_accumulation_steps) as f64;
            for idx in batch {
                let (query, gold) = &queries[idx];
                let mut loss = (1.0 - cfg.alpha)
                    * model.pvp_loss_grad(query, *gold, &mut grad, (1.0 - cfg.alpha) * scale)?;
                if cfg.alpha > 0.0 {
                    loss += cfg.alpha
                        * model.aux_loss_grad(
                            query.token_ids(),
                            &mut aux_rng,
                            Some(&mut grad),
                            cfg.alpha * scale,
                        )?;
                }
                step_loss += loss * scale;
            }
        }
        check_finite(step_loss, step)?;
        clip_grad_norm(&mut grad, cfg.max_grad_norm);
        adam.update(model.params_mut(), &grad, cfg.learning_rate);
        log.push(TrainLogRecord {
            step,
            loss: step_loss,
            learning_rate: cfg.learning_rate,
        });
    }
    Ok(TrainOutcome { model, log })
}

/// A classification target: a gold one-hot or a soft distribution.
#[derive(Debug, Clone, Copy)]
pub struct ClsTarget(pub [f64; 3]);

impl ClsTarget {
    pub fn one_hot(label: Label) -> Self {
        let mut t = [0.0; 3];
        t[label.index()] = 1.0;
        Self(t)
    }

    pub fn soft(soft: &SoftLabel) -> Self {
        Self(*soft.probabilities())
    }
}

/// Trains the 3-way classifier head (shared encoder, first-position pooling)
/// on pair encodings and target distributions.
pub fn train_classifier(
    model: &ToyMlm,
    examples: &[(Vec<u32>, ClsTarget)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = model.clone();
    let mut adam = Adam::new(model.param_count(), cfg.adam_epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = BatchSampler::new(examples.len(), cfg.batch_size);
    let mut grad = vec![0.0; model.param_count()];
    let mut log = Vec::with_capacity(cfg.max_steps);

    for step in 1..=cfg.max_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut step_loss = 0.0;
        for _ in 0..cfg.gradient_accumulation_steps {
            let batch = sampler.next_batch(cfg.batch_size, &mut rng);
            let scale =
                1.0 / (cfg.batch_size * cfg.gradient_accumulation_steps) as f64;
            for idx in batch {
                let (ids, target) = &examples[idx];
                let loss = model.cls_loss_grad(ids, &target.0, &mut grad, scale)?;
                step_loss += loss * scale;
            }
        }
        check_finite(step_loss, step)?;
        clip_grad_norm(&mut grad, cfg.max_grad_norm);
        adam.update(model.params_mut(), &grad, cfg.learning_rate);
        log.push(TrainLogRecord {
            step,
            loss: step_loss,
            learning_rate: cfg.learning_rate,
        });
    }
    Ok(TrainOutcome { model, log })
}

/// Supervised sequence-pair baseline: encoder plus 3-way head trained with
/// cross-entropy on gold labels. The input is the pair joined with a `[SEP]`
/// marker; no pattern, no verbalizer.
pub fn train_supervised(
    model: &ToyMlm,
    train: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let examples: Vec<(Vec<u32>, ClsTarget)> = train
        .iter()
        .map(|e| {
            let enc = encode_pair(&e.pair, tokenizer, cfg.max_seq_length);
            (enc.token_ids().to_vec(), ClsTarget::one_hot(e.label))
        })
        .collect();
    train_classifier(model, &examples, cfg)
}

/// One seeded run: the produced artifact and its evaluation metric.
#[derive(Debug, Clone)]
pub struct RunRecord<M> {
    pub seed: u64,
    pub model: M,
    pub metric: crate::metrics::MetricReport,
}

/// Seeded repeats of one training task with per-run and mean metrics.
#[derive(Debug, Clone)]
pub struct RunSet<M> {
    pub runs: Vec<RunRecord<M>>,
}

impl<M> RunSet<M> {
    pub fn mean_report(&self) -> crate::metrics::MetricReport {
        crate::metrics::MetricReport::mean(self.runs.iter().map(|r| &r.metric))
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.runs.iter().map(|r| r.metric.accuracy).sum::<f64>() / self.runs.len() as f64
    }

    pub fn std_accuracy(&self) -> f64 {
        let mean = self.mean_accuracy();
        let n = self.runs.len() as f64;
        (self
            .runs
            .iter()
            .map(|r| (r.metric.accuracy - mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

/// Trains one model per seed and evaluates each on the same split.
pub fn run_repeats<M>(
    seeds: &[u64],
    mut run: impl FnMut(u64) -> Result<(M, crate::metrics::MetricReport)>,
) -> Result<RunSet<M>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("run_repeats needs at least one seed".to_string()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let (model, metric) = run(*seed)?;
        runs.push(RunRecord {
            seed: *seed,
            model,
            metric,
        });
    }
    Ok(RunSet { runs })
}

/// Test accuracy of a classifier over a labeled dataset.
pub fn classifier_accuracy(
    model: &dyn crate::backend::PairClassifier,
    dataset: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for example in dataset.iter() {
        let enc = encode_pair(&example.pair, tokenizer, max_seq_length);
        if model.classify(&enc)?.argmax_label() == example.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Predictions of a PVP scorer over a labeled dataset, in dataset order.
pub fn scorer_predictions(
    model: &dyn ScorerModel,
    pvp: &Pvp,
    dataset: &Dataset<LabeledExample>,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<Vec<Label>> {
    dataset
        .iter()
        .map(|e| crate::backend::predict_label(model, pvp, &e.pair, tokenizer, max_seq_length))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{build_tokenizer_for_task, MlmConfig};
    use crate::data::{Provenance, RequirementPair};
    use crate::pvp::{builtin_patterns, builtin_verbalizers};

    fn separable_dataset(counts: [usize; 3]) -> Dataset<LabeledExample> {
        let mut examples = Vec::new();
        for i in 0..counts[0] {
            examples.push(LabeledExample::new(
                RequirementPair::new(
                    format!("c{i}"),
                    format!("The unit {i} shall start."),
                    format!("The unit {i} shall not start."),
                )
                .unwrap(),
                Label::Conflict,
            ));
        }
        for i in 0..counts[1] {
            examples.push(LabeledExample::new(
                RequirementPair::new(
                    format!("d{i}"),
                    format!("The unit {i} shall start."),
                    format!("The unit {i} must start."),
                )
                .unwrap(),
                Label::Duplicate,
            ));
        }
        for i in 0..counts[2] {
            examples.push(LabeledExample::new(
                RequirementPair::new(
                    format!("n{i}"),
                    format!("The unit {i} shall start."),
                    format!("The screen {i} shall dim."),
                )
                .unwrap(),
                Label::Neutral,
            ));
        }
        Dataset::new(examples, Provenance::Train).unwrap()
    }

    fn small_cfg(seed: u64, steps: usize) -> TrainConfig {
        TrainConfig {
            max_steps: steps,
            gradient_accumulation_steps: 1,
            learning_rate: 1e-2,
            batch_size: 6,
            max_seq_length: 96,
            seed,
            ..TrainConfig::paper_defaults()
        }
    }

    fn small_mlm(vocab: usize, seed: u64) -> ToyMlm {
        ToyMlm::new(
            MlmConfig {
                dim: 24,
                layers: 1,
                heads: 2,
                ffn_mult: 2,
                max_positions: 96,
            },
            vocab,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn finetune_fits_separable_data() {
        // a linearly separable 32-example labeled set
        let train = separable_dataset([11, 11, 10]);
        let pvp = crate::pvp::Pvp::new(
            builtin_patterns().remove(0),
            builtin_verbalizers().remove(0),
        );
        let tok = build_tokenizer_for_task(&train, std::slice::from_ref(&pvp)).unwrap();
        let model = small_mlm(tok.vocab_size(), 1);
        let cfg = small_cfg(11, 220);
        let outcome = finetune_pvp(&model, &pvp, &train, &tok, &cfg).unwrap();
        let preds = scorer_predictions(&outcome.model, &pvp, &train, &tok, 96).unwrap();
        let correct = preds
            .iter()
            .zip(train.iter())
            .filter(|(p, e)| **p == e.label)
            .count();
        let acc = correct as f64 / train.len() as f64;
        assert!(acc == 1.0, "training accuracy {acc}");
        // loss trend: end below start
        assert!(outcome.log.last().unwrap().loss < outcome.log.first().unwrap().loss);
    }

    #[test]
    fn finetune_is_seed_deterministic() {
        let train = separable_dataset([3, 3, 3]);
        let pvp = crate::pvp::Pvp::new(
            builtin_patterns().remove(2),
            builtin_verbalizers().remove(1),
        );
        let tok = build_tokenizer_for_task(&train, std::slice::from_ref(&pvp)).unwrap();
        let model = small_mlm(tok.vocab_size(), 2);
        let cfg = small_cfg(7, 12);
        let a = finetune_pvp(&model, &pvp, &train, &tok, &cfg).unwrap();
        let b = finetune_pvp(&model, &pvp, &train, &tok, &cfg).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        let different = finetune_pvp(&model, &pvp, &train, &tok, &small_cfg(8, 12)).unwrap();
        assert_ne!(different.model.params(), a.model.params());
    }

    #[test]
    fn alpha_zero_matches_pure_label_loss() {
        let train = separable_dataset([2, 2, 2]);
        let pvp = crate::pvp::Pvp::new(
            builtin_patterns().remove(0),
            builtin_verbalizers().remove(0),
        );
        let tok = build_tokenizer_for_task(&train, std::slice::from_ref(&pvp)).unwrap();
        let model = small_mlm(tok.vocab_size(), 3);
        let mut cfg = small_cfg(5, 8);
        cfg.alpha = 0.0;
        let pure = finetune_pvp(&model, &pvp, &train, &tok, &cfg).unwrap();
        // alpha = 0 leaves no auxiliary contribution: same run again with the
        // auxiliary machinery untouched must be bit-identical
        let again = finetune_pvp(&model, &pvp, &train, &tok, &cfg).unwrap();
        assert_eq!(pure.model.params(), again.model.params());
        let mut with_aux = cfg;
        with_aux.alpha = 0.5;
        let mixed = finetune_pvp(&model, &pvp, &train, &tok, &with_aux).unwrap();
        assert_ne!(mixed.model.params(), pure.model.params());
    }

    #[test]
    fn supervised_learns_constant_dataset() {
        let mut examples = Vec::new();
        for i in 0..12 {
            examples.push(LabeledExample::new(
                RequirementPair::new(
                    format!("x{i}"),
                    format!("The device {i} shall beep."),
                    format!("The device {i} shall stay silent."),
                )
                .unwrap(),
                Label::Conflict,
            ));
        }
        let train = Dataset::new(examples, Provenance::Train).unwrap();
        let tok = crate::backend::build_tokenizer(&train).unwrap();
        let model = small_mlm(tok.vocab_size(), 4);
        let outcome = train_supervised(&model, &train, &tok, &small_cfg(9, 40)).unwrap();
        let acc = classifier_accuracy(&outcome.model, &train, &tok, 96).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn supervised_separates_held_out_data() {
        let train = separable_dataset([16, 16, 16]);
        let held_out_src = separable_dataset([24, 24, 24]);
        // held-out: examples beyond the training range, re-keyed
        let held: Vec<LabeledExample> = held_out_src
            .iter()
            .filter(|e| {
                let idx: usize = e
                    .pair
                    .id()[1..]
                    .parse()
                    .unwrap();
                idx >= 16
            })
            .map(|e| {
                LabeledExample::new(
                    RequirementPair::new(
                        format!("h-{}", e.pair.id()),
                        e.pair.r1(),
                        e.pair.r2(),
                    )
                    .unwrap(),
                    e.label,
                )
            })
            .collect();
        let held = Dataset::new(held, Provenance::Test).unwrap();
        let tok = crate::backend::build_tokenizer(&held_out_src).unwrap();
        let model = small_mlm(tok.vocab_size(), 6);
        let outcome = train_supervised(&model, &train, &tok, &small_cfg(13, 250)).unwrap();
        let acc = classifier_accuracy(&outcome.model, &held, &tok, 96).unwrap();
        assert!(acc > 0.9, "held-out accuracy {acc}");
    }

    #[test]
    fn run_repeats_averages_metrics() {
        let report = |acc: f64| crate::metrics::MetricReport::from_accuracy_for_tests(acc);
        let set = run_repeats(&[1, 2, 3], |seed| Ok(((), report(seed as f64 / 10.0)))).unwrap();
        assert_eq!(set.runs.len(), 3);
        assert!((set.mean_accuracy() - 0.2).abs() < 1e-12);
        let single = run_repeats(&[5], |_| Ok(((), report(0.7)))).unwrap();
        assert!((single.mean_accuracy() - 0.7).abs() < 1e-12);
        assert!(run_repeats(&[], |_: u64| Ok(((), report(0.0)))).is_err());
    }

    #[test]
    fn nonfinite_loss_aborts() {
        let train = separable_dataset([2, 2, 2]);
        let pvp = crate::pvp::Pvp::new(
            builtin_patterns().remove(0),
            builtin_verbalizers().remove(0),
        );
        let tok = build_tokenizer_for_task(&train, std::slice::from_ref(&pvp)).unwrap();
        let mut model = small_mlm(tok.vocab_size(), 3);
        model.params_mut()[0] = f64::NAN;
        let err = finetune_pvp(&model, &pvp, &train, &tok, &small_cfg(5, 2));
        assert!(matches!(err, Err(Error::NonFiniteLoss { .. })));
    }
}
