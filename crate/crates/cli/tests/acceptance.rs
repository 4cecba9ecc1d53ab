//! Acceptance suite: one test per shipped criterion, each ending in a
//! printed `criterion N (<name>): PASS` line (the harness result line doubles
//! as the machine-readable pass/fail record).
//!
//! Criterion 1 compares derived metrics against the published confusion
//! matrices at the stated +/-0.05 tolerance. Two of those twenty published
//! values (supervised Duplicate F1 39.5 and supervised Neutral F1 97.9) are
//! arithmetically inconsistent with the published integer matrix itself
//! (exact values: 39.4366 and 97.8261), so that test fails by construction;
//! the assertion is kept faithful rather than loosened. See the repository
//! README for the full analysis.

use std::collections::BTreeMap;
use std::path::Path;

use petreq_cli::config::{BackendKind, ExperimentConfig, Overrides, ResolvedExperiment};
use petreq_cli::experiment::run_experiment;
use petreq_core::backend::{
    build_tokenizer_for_task, encode_pair, make_query, FixedScorer, MlmConfig, ToyMlm,
};
use petreq_core::data::{
    discard_labels, Dataset, Label, LabeledExample, Provenance, RequirementPair,
};
use petreq_core::ensemble::{combine_scores, soft_label, EnsembleMember, EnsembleModel, MemberModel};
use petreq_core::metrics::{
    per_class_prf, published_pet_matrix, published_supervised_matrix, summary,
};
use petreq_core::pvp::{builtin_patterns, builtin_verbalizers, Pvp, Verbalizer};
use petreq_core::splits::{target_counts, TABLE_PROPORTIONS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pass(n: usize, name: &str) {
    println!("criterion {n} ({name}): PASS");
}

// ---------------------------------------------------------------------------
// criterion 1: published confusion-matrix fixture
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_published_matrix_fixture() {
    struct Check {
        name: String,
        computed: f64,
        published: f64,
    }
    let mut checks = Vec::new();
    let mut add_matrix = |arm: &str, cm: &petreq_core::metrics::ConfusionMatrix, f1: [f64; 3], acc: f64, mac: f64, wf1: f64| {
        let prf = per_class_prf(cm);
        let report = summary(cm).unwrap();
        for (i, label) in ["conflict", "duplicate", "neutral"].iter().enumerate() {
            checks.push(Check {
                name: format!("{arm} {label} f1"),
                computed: prf[i].f1 * 100.0,
                published: f1[i],
            });
        }
        checks.push(Check {
            name: format!("{arm} accuracy"),
            computed: report.accuracy * 100.0,
            published: acc,
        });
        checks.push(Check {
            name: format!("{arm} macro f1"),
            computed: report.macro_f1 * 100.0,
            published: mac,
        });
        checks.push(Check {
            name: format!("{arm} weighted f1"),
            computed: report.weighted_f1 * 100.0,
            published: wf1,
        });
    };
    add_matrix(
        "supervised",
        &published_supervised_matrix(),
        [83.0, 39.5, 97.9],
        81.6,
        73.4,
        80.9,
    );
    add_matrix(
        "pet",
        &published_pet_matrix(),
        [86.6, 49.6, 98.7],
        85.4,
        78.3,
        84.6,
    );

    let mut failures = Vec::new();
    for check in &checks {
        let diff = (check.computed - check.published).abs();
        let verdict = if diff <= 0.05 { "ok" } else { "OUT OF TOLERANCE" };
        println!(
            "  {:-24} computed {:8.4} published {:5.1} |diff| {:6.4} {}",
            check.name, check.computed, check.published, diff, verdict
        );
        if diff > 0.05 {
            failures.push(format!(
                "{}: computed {:.4} vs published {:.1} (|diff| {:.4} > 0.05)",
                check.name, check.computed, check.published, diff
            ));
        }
    }
    assert!(
        failures.is_empty(),
        "criterion 1 (published matrix fixture): FAIL on {}/{} values: {}. The published \
         supervised F1 column cannot be reproduced from the published integer matrix at \
         +/-0.05; the assertion is kept faithful to the stated tolerance.",
        failures.len(),
        checks.len(),
        failures.join("; ")
    );
    pass(1, "published matrix fixture");
}

// ---------------------------------------------------------------------------
// criterion 2: class-distribution table fixture
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_class_distribution_fixture() {
    let rows: [(usize, [usize; 3]); 9] = [
        (32, [17, 5, 10]),
        (64, [33, 10, 21]),
        (128, [67, 20, 41]),
        (256, [134, 40, 82]),
        (512, [267, 81, 164]),
        (1024, [535, 161, 328]),
        (2048, [1070, 323, 655]),
        (5000, [2613, 787, 1600]),
        (2000, [1045, 315, 640]),
    ];
    for (n, expected) in rows {
        let counts = target_counts(n, &TABLE_PROPORTIONS).unwrap();
        assert_eq!(
            counts.counts(),
            expected,
            "criterion 2: row n={n} expected {expected:?}, got {:?}",
            counts.counts()
        );
    }
    pass(2, "class distribution rows");
}

// ---------------------------------------------------------------------------
// criterion 3: weighted-combination oracle equivalence
// ---------------------------------------------------------------------------

fn fixture_pvp() -> Pvp {
    Pvp::new(builtin_patterns().remove(0), builtin_verbalizers().remove(0))
}

fn fixture_pair_and_tokenizer() -> (RequirementPair, petreq_core::backend::Tokenizer) {
    let pair = RequirementPair::new("x", "The UAV shall fly.", "The UAV shall land.").unwrap();
    let ds = Dataset::new(
        vec![LabeledExample::new(pair.clone(), Label::Neutral)],
        Provenance::Train,
    )
    .unwrap();
    let tok = build_tokenizer_for_task(&ds, &[fixture_pvp()]).unwrap();
    (pair, tok)
}

#[test]
fn criterion_3_weighted_combination_equivalence() {
    let (pair, tok) = fixture_pair_and_tokenizer();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6571_3131);
    for case in 0..1000 {
        let n = rng.gen_range(1..8);
        let members: Vec<EnsembleMember> = (0..n)
            .map(|_| EnsembleMember {
                pvp: fixture_pvp(),
                model: MemberModel::Fixed(FixedScorer::new(
                    (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect(),
                )),
                weight: rng.gen_range(0.001..5.0),
                seed: 0,
            })
            .collect();

        // independent brute-force evaluation of the weighted mean
        let mut expected = [0.0f64; 3];
        let mut weight_sum = 0.0;
        for member in &members {
            let MemberModel::Fixed(fixed) = &member.model else {
                unreachable!()
            };
            for (e, s) in expected.iter_mut().zip(fixed.scores()) {
                *e += member.weight * s;
            }
            weight_sum += member.weight;
        }
        for e in expected.iter_mut() {
            *e /= weight_sum;
        }

        let scale = rng.gen_range(0.01..100.0);
        let scaled: Vec<EnsembleMember> = members
            .iter()
            .map(|m| EnsembleMember {
                weight: m.weight * scale,
                ..m.clone()
            })
            .collect();

        let combined = combine_scores(&EnsembleModel::new(members).unwrap(), &pair, &tok, 256)
            .unwrap();
        for (c, e) in combined.scores().iter().zip(expected) {
            assert!(
                (c - e).abs() < 1e-9,
                "criterion 3: case {case}: combined {c} vs brute force {e}"
            );
        }
        let rescaled = combine_scores(&EnsembleModel::new(scaled).unwrap(), &pair, &tok, 256)
            .unwrap();
        assert_eq!(
            combined.argmax_index(),
            rescaled.argmax_index(),
            "criterion 3: argmax changed under uniform weight scaling"
        );
    }
    pass(3, "weighted combination equals brute force");
}

// ---------------------------------------------------------------------------
// criterion 4: pattern golden renders
// ---------------------------------------------------------------------------

const GOLDEN_PAIRS: [(&str, &str, &str); 3] = [
    (
        "d",
        "The UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures.",
        "The Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission.",
    ),
    (
        "c",
        "The UAV shall only accept commands from an authenticated Pilot.",
        "The UAV shall accept commands from any Pilot controller.",
    ),
    (
        "n",
        "The UAV flight range shall be at least 20 miles from origin.",
        "The UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once.",
    ),
];

// Hand-derived once from the template definitions and preprocessing rules,
// then frozen. Flattening renders the separator as `|` and each mask as
// `[MASK]`; all other spacing comes from the pattern literals.
const GOLDEN_RENDERS: [(&str, &str, &str); 18] = [
    ("P1", "d", "\"The UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures\"? | [MASK], \"The Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission.\""),
    ("P1", "c", "\"The UAV shall only accept commands from an authenticated Pilot\"? | [MASK], \"The UAV shall accept commands from any Pilot controller.\""),
    ("P1", "n", "\"The UAV flight range shall be at least 20 miles from origin\"? | [MASK], \"The UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once.\""),
    ("P2", "d", "The UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures? | [MASK], The Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission."),
    ("P2", "c", "The UAV shall only accept commands from an authenticated Pilot? | [MASK], The UAV shall accept commands from any Pilot controller."),
    ("P2", "n", "The UAV flight range shall be at least 20 miles from origin? | [MASK], The UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once."),
    ("P3", "d", "Given \"the UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures\", we can conclude that \"the Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission\" is [MASK]."),
    ("P3", "c", "Given \"the UAV shall only accept commands from an authenticated Pilot\", we can conclude that \"the UAV shall accept commands from any Pilot controller\" is [MASK]."),
    ("P3", "n", "Given \"the UAV flight range shall be at least 20 miles from origin\", we can conclude that \"the UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once\" is [MASK]."),
    ("P4", "d", "\"the UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures\" means \"the Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission\". | [MASK]."),
    ("P4", "c", "\"the UAV shall only accept commands from an authenticated Pilot\" means \"the UAV shall accept commands from any Pilot controller\". | [MASK]."),
    ("P4", "n", "\"the UAV flight range shall be at least 20 miles from origin\" means \"the UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once\". | [MASK]."),
    ("P5", "d", "\"the UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures\" implies \"the Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission\" and \"the Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission\" implies \"the UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures\". | The previous sentence is correct: [MASK]."),
    ("P5", "c", "\"the UAV shall only accept commands from an authenticated Pilot\" implies \"the UAV shall accept commands from any Pilot controller\" and \"the UAV shall accept commands from any Pilot controller\" implies \"the UAV shall only accept commands from an authenticated Pilot\". | The previous sentence is correct: [MASK]."),
    ("P5", "n", "\"the UAV flight range shall be at least 20 miles from origin\" implies \"the UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once\" and \"the UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once\" implies \"the UAV flight range shall be at least 20 miles from origin\". | The previous sentence is correct: [MASK]."),
    ("P6", "d", "\"the UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures\" is equivalent to \"the Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission\". Similarly, \"the Hummingbird shall send the Pilot real-time information about malfunctions that impact the mission\" is equivalent to \"the UAV shall instantaneously transmit information to the Pilot regarding mission-impacting failures\". | The previous statements are [MASK]."),
    ("P6", "c", "\"the UAV shall only accept commands from an authenticated Pilot\" is equivalent to \"the UAV shall accept commands from any Pilot controller\". Similarly, \"the UAV shall accept commands from any Pilot controller\" is equivalent to \"the UAV shall only accept commands from an authenticated Pilot\". | The previous statements are [MASK]."),
    ("P6", "n", "\"the UAV flight range shall be at least 20 miles from origin\" is equivalent to \"the UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once\". Similarly, \"the UAV shall be able to transmit video feed to the Pilot and up to 4 separate UAV Viewer devices at once\" is equivalent to \"the UAV flight range shall be at least 20 miles from origin\". | The previous statements are [MASK]."),
];

#[test]
fn criterion_4_pattern_golden_renders() {
    let patterns = builtin_patterns();
    let mut checked = 0;
    for (pattern_id, pair_id, expected) in GOLDEN_RENDERS {
        let pattern = patterns.iter().find(|p| p.id() == pattern_id).unwrap();
        let (_, r1, r2) = GOLDEN_PAIRS.iter().find(|(id, _, _)| *id == pair_id).unwrap();
        let pair = RequirementPair::new(pair_id, *r1, *r2).unwrap();
        let rendered = pattern.render(&pair, 1).flatten();
        assert_eq!(
            rendered, expected,
            "criterion 4: {pattern_id} on pair {pair_id} diverged from the frozen fixture"
        );
        checked += 1;
    }
    assert_eq!(checked, 18);
    pass(4, "18 byte-exact pattern renders");
}

// ---------------------------------------------------------------------------
// criterion 5: gradient check
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_gradient_check() {
    let ds = Dataset::new(
        vec![
            LabeledExample::new(
                RequirementPair::new("a", "The UAV shall fly home.", "The UAV shall not fly home.")
                    .unwrap(),
                Label::Conflict,
            ),
            LabeledExample::new(
                RequirementPair::new("b", "The UAV shall record video.", "The drone shall capture video.")
                    .unwrap(),
                Label::Duplicate,
            ),
        ],
        Provenance::Train,
    )
    .unwrap();
    let pvp = Pvp::new(
        builtin_patterns().remove(2),
        Verbalizer::for_task("vt", ["No", "Yes", "not related"]).unwrap(),
    );
    let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
    let cfg = MlmConfig {
        dim: 6,
        layers: 2,
        heads: 2,
        ffn_mult: 2,
        max_positions: 64,
    };
    let model = ToyMlm::new(cfg, tok.vocab_size(), 17).unwrap();
    let query = make_query(&pvp, &ds.examples()[0].pair, &tok, 64).unwrap();
    let enc = encode_pair(&ds.examples()[1].pair, &tok, 64);
    let target = [0.2, 0.5, 0.3];

    let step = 1e-4;
    let numeric = |loss: &dyn Fn(&ToyMlm) -> f64| -> Vec<f64> {
        let mut probe = model.clone();
        let mut grad = vec![0.0; probe.param_count()];
        for i in 0..probe.param_count() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + step;
            let up = loss(&probe);
            probe.params_mut()[i] = orig - step;
            let down = loss(&probe);
            probe.params_mut()[i] = orig;
            grad[i] = (up - down) / (2.0 * step);
        }
        grad
    };
    let check = |name: &str, analytic: &[f64], numeric: &[f64]| {
        for (tensor, range) in model.tensor_ranges() {
            let mut err = 0.0f64;
            let mut norm = 0.0f64;
            for i in range {
                err += (analytic[i] - numeric[i]).powi(2);
                norm += analytic[i].powi(2).max(numeric[i].powi(2));
            }
            let rel = err.sqrt() / norm.sqrt().max(1e-8);
            assert!(
                rel <= 1e-4,
                "criterion 5: {name} loss, tensor {tensor}: relative error {rel}"
            );
        }
    };

    let mut analytic = vec![0.0; model.param_count()];
    model.pvp_loss_grad(&query, 0, &mut analytic, 1.0).unwrap();
    check(
        "pvp",
        &analytic,
        &numeric(&|m: &ToyMlm| m.pvp_loss(&query, 0).unwrap()),
    );

    let mut analytic = vec![0.0; model.param_count()];
    model
        .cls_loss_grad(enc.token_ids(), &target, &mut analytic, 1.0)
        .unwrap();
    check(
        "classifier",
        &analytic,
        &numeric(&|m: &ToyMlm| m.cls_loss(enc.token_ids(), &target).unwrap()),
    );

    pass(5, "analytic gradients match central differences");
}

// ---------------------------------------------------------------------------
// criterion 6: oracle end to end
// ---------------------------------------------------------------------------

fn resolved_with(mutate: impl FnOnce(&mut ExperimentConfig)) -> ResolvedExperiment {
    let mut cfg = ExperimentConfig::default();
    mutate(&mut cfg);
    cfg.resolve(&Overrides::default()).unwrap()
}

#[test]
fn criterion_6_oracle_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let resolved = resolved_with(|cfg| {
        cfg.experiment.out_dir = dir.path().join("oracle_run");
        cfg.experiment.backend = BackendKind::Oracle;
        cfg.experiment.seeds = vec![1, 2, 3];
        cfg.experiment.save_predictions = false;
    });
    assert_eq!(resolved.sizes, vec![32, 64, 128, 256, 512, 1024, 2048]);
    assert_eq!(resolved.split_plan.unlabeled_size, 5000);
    assert_eq!(resolved.split_plan.test_size, 2000);
    let output = run_experiment(&resolved).unwrap();
    for size in &output.sizes {
        assert_eq!(
            size.pet.students.mean.accuracy, 1.0,
            "criterion 6: PET arm accuracy below 1.0 at |T|={}",
            size.size
        );
        assert_eq!(size.pet.members.len(), 9);
    }
    pass(6, "oracle pipeline yields 100% at every size");
}

// ---------------------------------------------------------------------------
// criterion 7: direction property on the shipped benchmark
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_direction_property() {
    let dir = tempfile::tempdir().unwrap();
    // Mirrors configs/benchmark_toy.toml at |T| = 32: unlabeled 5000, test
    // 2000, published proportions, toy profile, three seeds.
    let resolved = resolved_with(|cfg| {
        cfg.experiment.out_dir = dir.path().join("benchmark_32");
        cfg.experiment.backend = BackendKind::Toy;
        cfg.experiment.seeds = vec![17, 29, 43];
        cfg.experiment.sizes = vec![32];
        cfg.experiment.save_predictions = false;
    });
    assert_eq!(resolved.split_plan.unlabeled_size, 5000);
    assert_eq!(resolved.split_plan.test_size, 2000);
    assert_eq!(resolved.split_plan.proportions, TABLE_PROPORTIONS);

    let output = run_experiment(&resolved).unwrap();
    let size32 = &output.sizes[0];
    let supervised = size32.supervised.mean.accuracy;
    let pet = size32.pet.students.mean.accuracy;
    let mean_member = size32.pet.mean_member_accuracy;
    println!(
        "  |T|=32: supervised {:.4}, pet {:.4}, mean member {:.4}",
        supervised, pet, mean_member
    );
    assert!(
        pet >= supervised - 0.01 - 1e-12,
        "criterion 7: mean PET accuracy {pet:.4} fell more than 1.0 point below supervised {supervised:.4}"
    );
    assert!(
        pet >= mean_member - 1e-12,
        "criterion 7: distilled student {pet:.4} below mean single-PVP model {mean_member:.4}"
    );
    pass(7, "PET direction holds at |T|=32");
}

// ---------------------------------------------------------------------------
// criterion 8: determinism
// ---------------------------------------------------------------------------

fn snapshot_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let targets = [
        "manifest.json",
        "reports/learning_curve.csv",
        "reports/learning_curve.json",
        "reports/learning_curve.txt",
    ];
    for name in targets {
        out.insert(name.to_string(), std::fs::read(root.join(name)).unwrap());
    }
    for entry in std::fs::read_dir(root.join("splits")).unwrap() {
        let entry = entry.unwrap();
        let name = format!("splits/{}", entry.file_name().to_string_lossy());
        out.insert(name, std::fs::read(entry.path()).unwrap());
    }
    out
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("repeat_run");
    let build = || {
        resolved_with(|cfg| {
            cfg.experiment.out_dir = out_dir.clone();
            cfg.experiment.backend = BackendKind::Toy;
            cfg.experiment.seeds = vec![5, 6, 7];
            cfg.experiment.sizes = vec![32, 64];
            cfg.experiment.save_predictions = true;
            cfg.split.unlabeled_size = 120;
            cfg.split.test_size = 120;
            cfg.train.max_steps = Some(12);
            cfg.distill.steps = Some(12);
            cfg.mlm.dim = 16;
        })
    };
    run_experiment(&build()).unwrap();
    let first = snapshot_files(&out_dir);
    run_experiment(&build()).unwrap();
    let second = snapshot_files(&out_dir);
    assert_eq!(first.len(), second.len());
    for (name, bytes) in &first {
        assert_eq!(
            bytes,
            &second[name],
            "criterion 8: artifact {name} changed between identical runs"
        );
    }
    pass(8, "identical runs produce byte-identical artifacts");
}

// ---------------------------------------------------------------------------
// criterion 9: softmax and temperature properties
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_softmax_temperature() {
    let (pair, tok) = fixture_pair_and_tokenizer();
    let labeled = Dataset::new(
        vec![LabeledExample::new(pair, Label::Neutral)],
        Provenance::Train,
    )
    .unwrap();
    let pool = discard_labels(&labeled);

    // hand-computed fixture: scores (2, 0, 0) at temperature 2
    let peaked = EnsembleModel::new(vec![EnsembleMember {
        pvp: fixture_pvp(),
        model: MemberModel::Fixed(FixedScorer::new(vec![2.0, 0.0, 0.0])),
        weight: 1.0,
        seed: 0,
    }])
    .unwrap();
    let soft = soft_label(&peaked, &pool, 2.0, &tok, 256).unwrap();
    let probs = soft.examples()[0].soft.probabilities();
    assert!((probs[0] - 0.5761).abs() < 1e-4, "criterion 9: {probs:?}");
    assert!((probs[1] - 0.2119).abs() < 1e-4);
    assert!((probs[2] - 0.2119).abs() < 1e-4);

    let mut rng = ChaCha8Rng::seed_from_u64(999);
    for _ in 0..200 {
        let scores: Vec<f64> = (0..3).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let ensemble = EnsembleModel::new(vec![EnsembleMember {
            pvp: fixture_pvp(),
            model: MemberModel::Fixed(FixedScorer::new(scores)),
            weight: rng.gen_range(0.01..4.0),
            seed: 0,
        }])
        .unwrap();
        let mut argmaxes = Vec::new();
        for temperature in [0.5, 1.0, 2.0, 17.0, 400.0] {
            let soft = soft_label(&ensemble, &pool, temperature, &tok, 256).unwrap();
            let probabilities = soft.examples()[0].soft.probabilities();
            let sum: f64 = probabilities.iter().sum();
            assert!(
                (sum - 1.0).abs() <= 1e-9,
                "criterion 9: probabilities sum to {sum}"
            );
            argmaxes.push(soft.examples()[0].soft.argmax());
        }
        assert!(
            argmaxes.windows(2).all(|w| w[0] == w[1]),
            "criterion 9: argmax changed with temperature: {argmaxes:?}"
        );
    }
    pass(9, "soft labels normalized, argmax temperature-invariant");
}
