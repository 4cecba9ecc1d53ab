//! Deterministic generator of SRS-style requirement pairs with controlled
//! conflict/duplicate/neutral relations.
//!
//! Requirements are realized from a frame grammar (system + modality +
//! action + object + qualifier). Duplicates re-realize the same frame
//! through synonym substitution and clause reordering; conflicts apply a
//! contradiction operator (modality flip, exclusivity clash, or incompatible
//! numeric bounds) to the same frame; neutrals pair two frames with disjoint
//! content slots. Conflicts and duplicates therefore share vocabulary, while
//! neutrals separate easily.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, LabeledExample, Provenance, RequirementPair};
use crate::error::{Error, Result};

/// Interchangeable surface forms of one lexical item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynonymSet(pub Vec<String>);

impl SynonymSet {
    fn get(&self, variant: usize) -> &str {
        &self.0[variant % self.0.len()]
    }
}

fn synset(words: &[&str]) -> SynonymSet {
    SynonymSet(words.iter().map(|w| w.to_string()).collect())
}

/// A numeric requirement attribute: value range, unit, and trailing clause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub unit: String,
    pub min: u32,
    pub max: u32,
    pub tail: String,
}

/// The generator's lexicon. Loadable from TOML so corpora can be themed
/// without code changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabTables {
    pub systems: Vec<SynonymSet>,
    pub actors: Vec<SynonymSet>,
    pub actions: Vec<SynonymSet>,
    pub objects: Vec<SynonymSet>,
    pub plain_qualifiers: Vec<SynonymSet>,
    /// Actor adjectives with their article, e.g. "an authenticated".
    pub auth_adjectives: SynonymSet,
    pub attributes: Vec<SynonymSet>,
    pub bounds: Vec<BoundSpec>,
}

impl VocabTables {
    pub fn defaults() -> Self {
        Self {
            systems: vec![
                synset(&["UAV", "Hummingbird"]),
                synset(&["ground control station", "base station"]),
                synset(&["payload camera", "onboard camera"]),
                synset(&["telemetry radio", "telemetry link"]),
                synset(&["autopilot module", "flight controller"]),
                synset(&["battery monitor", "power monitor"]),
                synset(&["navigation unit", "GPS unit"]),
                synset(&["mission planner", "route planner"]),
            ],
            actors: vec![
                synset(&["Pilot", "pilot in command"]),
                synset(&["operator", "remote operator"]),
                synset(&["administrator", "system administrator"]),
                synset(&["maintenance technician", "service technician"]),
                synset(&["ground crew member", "crew member"]),
            ],
            actions: vec![
                synset(&["transmit", "send"]),
                synset(&["record", "capture"]),
                synset(&["display", "show"]),
                synset(&["store", "archive"]),
                synset(&["encrypt", "protect"]),
                synset(&["log", "journal"]),
                synset(&["accept", "receive"]),
                synset(&["validate", "verify"]),
                synset(&["report", "announce"]),
                synset(&["stream", "broadcast"]),
                synset(&["upload", "deliver"]),
                synset(&["monitor", "track"]),
            ],
            objects: vec![
                synset(&["commands", "control inputs"]),
                synset(&["video feed", "video stream"]),
                synset(&["telemetry data", "flight data"]),
                synset(&["mission logs", "flight logs"]),
                synset(&["status updates", "health reports"]),
                synset(&["sensor readings", "sensor measurements"]),
                synset(&["firmware updates", "software patches"]),
                synset(&["waypoints", "route points"]),
                synset(&["alerts", "warnings"]),
                synset(&["diagnostics", "self-test results"]),
                synset(&["position estimates", "location fixes"]),
                synset(&["battery levels", "charge levels"]),
            ],
            plain_qualifiers: vec![
                synset(&["during flight", "while in flight"]),
                synset(&["before takeoff", "prior to launch"]),
                synset(&["after landing", "once landed"]),
                synset(&["in real time", "without delay"]),
                synset(&["every five seconds", "at five second intervals"]),
                synset(&["on operator request", "when the operator asks"]),
                synset(&["under manual control", "in manual mode"]),
                synset(&["at mission end", "when the mission completes"]),
            ],
            auth_adjectives: synset(&["an authenticated", "a verified", "a trusted"]),
            attributes: vec![
                synset(&["flight range"]),
                synset(&["response time"]),
                synset(&["data retention period"]),
                synset(&["operating altitude"]),
                synset(&["transmission latency"]),
                synset(&["battery endurance"]),
            ],
            bounds: vec![
                BoundSpec {
                    unit: "miles".into(),
                    min: 5,
                    max: 40,
                    tail: "from origin".into(),
                },
                BoundSpec {
                    unit: "seconds".into(),
                    min: 2,
                    max: 30,
                    tail: "under nominal load".into(),
                },
                BoundSpec {
                    unit: "days".into(),
                    min: 7,
                    max: 90,
                    tail: "after mission completion".into(),
                },
                BoundSpec {
                    unit: "feet".into(),
                    min: 100,
                    max: 4000,
                    tail: "above ground level".into(),
                },
                BoundSpec {
                    unit: "milliseconds".into(),
                    min: 20,
                    max: 500,
                    tail: "end to end".into(),
                },
                BoundSpec {
                    unit: "minutes".into(),
                    min: 10,
                    max: 120,
                    tail: "per charge".into(),
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lists = [
            (&self.systems, "systems"),
            (&self.actors, "actors"),
            (&self.actions, "actions"),
            (&self.objects, "objects"),
            (&self.plain_qualifiers, "plain_qualifiers"),
            (&self.attributes, "attributes"),
        ];
        for (list, name) in lists {
            if list.is_empty() || list.iter().any(|s| s.0.is_empty()) {
                return Err(Error::InvalidConfig(format!(
                    "vocabulary table `{name}` needs non-empty synonym sets"
                )));
            }
        }
        if self.auth_adjectives.0.is_empty() {
            return Err(Error::InvalidConfig(
                "auth_adjectives must be non-empty".to_string(),
            ));
        }
        if self.bounds.is_empty() || self.bounds.iter().any(|b| b.min + 2 > b.max) {
            return Err(Error::InvalidConfig(
                "bound ranges must satisfy min + 2 <= max".to_string(),
            ));
        }
        Ok(())
    }

    /// Parses a TOML vocabulary file.
    pub fn from_toml(text: &str) -> Result<Self> {
        let tables: VocabTables = toml::from_str(text)?;
        tables.validate()?;
        Ok(tables)
    }
}

/// Generation settings: exact class counts, seed, lexicon, and whether the
/// three canonical exemplar pairs lead their classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub counts: [usize; 3],
    pub seed: u64,
    pub include_exemplars: bool,
    pub tables: VocabTables,
}

impl GeneratorConfig {
    pub fn new(counts: [usize; 3], seed: u64) -> Self {
        Self {
            counts,
            seed,
            include_exemplars: true,
            tables: VocabTables::defaults(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameKind {
    Plain,
    ActorSource,
    Numeric,
}

/// A fully decoded frame: the slot choices a requirement is realized from.
#[derive(Debug, Clone, Copy)]
struct Frame {
    kind: FrameKind,
    system: usize,
    action: usize,
    object: usize,
    qualifier: usize,
    actor: usize,
    attribute: usize,
    bound: usize,
}

struct FrameSpace {
    plain: u64,
    actor: u64,
    numeric: u64,
}

impl FrameSpace {
    fn of(tables: &VocabTables) -> Self {
        let (s, a, o) = (
            tables.systems.len() as u64,
            tables.actions.len() as u64,
            tables.objects.len() as u64,
        );
        Self {
            plain: s * a * o * tables.plain_qualifiers.len() as u64,
            actor: s * a * o * tables.actors.len() as u64,
            numeric: s * tables.attributes.len() as u64 * tables.bounds.len() as u64,
        }
    }

    fn total(&self) -> u64 {
        self.plain + self.actor + self.numeric
    }

    fn decode(&self, tables: &VocabTables, index: u64) -> Frame {
        let (s, a, o) = (
            tables.systems.len() as u64,
            tables.actions.len() as u64,
            tables.objects.len() as u64,
        );
        let mut frame = Frame {
            kind: FrameKind::Plain,
            system: 0,
            action: 0,
            object: 0,
            qualifier: 0,
            actor: 0,
            attribute: 0,
            bound: 0,
        };
        if index < self.plain {
            let mut rest = index;
            frame.kind = FrameKind::Plain;
            frame.qualifier = (rest % tables.plain_qualifiers.len() as u64) as usize;
            rest /= tables.plain_qualifiers.len() as u64;
            frame.object = (rest % o) as usize;
            rest /= o;
            frame.action = (rest % a) as usize;
            rest /= a;
            frame.system = (rest % s) as usize;
        } else if index < self.plain + self.actor {
            let mut rest = index - self.plain;
            frame.kind = FrameKind::ActorSource;
            frame.actor = (rest % tables.actors.len() as u64) as usize;
            rest /= tables.actors.len() as u64;
            frame.object = (rest % o) as usize;
            rest /= o;
            frame.action = (rest % a) as usize;
            rest /= a;
            frame.system = (rest % s) as usize;
        } else {
            let mut rest = index - self.plain - self.actor;
            frame.kind = FrameKind::Numeric;
            frame.bound = (rest % tables.bounds.len() as u64) as usize;
            rest /= tables.bounds.len() as u64;
            frame.attribute = (rest % tables.attributes.len() as u64) as usize;
            rest /= tables.attributes.len() as u64;
            frame.system = (rest % s) as usize;
        }
        frame
    }
}

/// Which transformation produced the second requirement of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOperator {
    Paraphrase,
    ModalityFlip,
    ExclusivityClash,
    BoundClash,
    Independent,
    Exemplar,
}

/// Per-example generation record, persisted for error analysis and excluded
/// from model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenMetadata {
    pub id: String,
    pub label: Label,
    pub operator: PairOperator,
    pub frame: u64,
    pub partner_frame: Option<u64>,
}

/// A generated dataset plus its per-example metadata.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub dataset: Dataset<LabeledExample>,
    pub metadata: Vec<GenMetadata>,
}

struct Realizer<'a> {
    tables: &'a VocabTables,
}

/// Variant choices for one realization; `0` is the primary surface form.
#[derive(Debug, Clone, Copy)]
struct Variants {
    lexical: usize,
    modality: usize,
    negated: bool,
    cmp_at_most: bool,
    cmp_alt: bool,
    reorder: bool,
    drop_exclusivity: bool,
}

impl Variants {
    fn primary() -> Self {
        Self {
            lexical: 0,
            modality: 0,
            negated: false,
            cmp_at_most: false,
            cmp_alt: false,
            reorder: false,
            drop_exclusivity: false,
        }
    }

    fn paraphrase() -> Self {
        Self {
            lexical: 1,
            modality: 1,
            cmp_alt: true,
            reorder: true,
            ..Self::primary()
        }
    }
}

const MODALITIES: [&str; 2] = ["shall", "must"];
const NEGATED_MODALITIES: [&str; 2] = ["shall not", "must not"];

impl<'a> Realizer<'a> {
    fn modality(&self, v: &Variants) -> &'static str {
        if v.negated {
            NEGATED_MODALITIES[v.modality % 2]
        } else {
            MODALITIES[v.modality % 2]
        }
    }

    fn comparator(&self, v: &Variants) -> &'static str {
        match (v.cmp_at_most, v.cmp_alt) {
            (false, false) => "at least",
            (false, true) => "no less than",
            (true, false) => "at most",
            (true, true) => "no more than",
        }
    }

    fn capitalize(text: &str) -> String {
        let mut chars = text.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    }

    fn realize(&self, frame: &Frame, v: &Variants, value: u32) -> String {
        let t = self.tables;
        let system = t.systems[frame.system].get(v.lexical);
        let modality = self.modality(v);
        match frame.kind {
            FrameKind::Plain => {
                let action = t.actions[frame.action].get(v.lexical);
                let object = t.objects[frame.object].get(v.lexical);
                let qualifier = t.plain_qualifiers[frame.qualifier].get(v.lexical);
                if v.reorder {
                    format!(
                        "{}, the {system} {modality} {action} {object}.",
                        Self::capitalize(qualifier)
                    )
                } else {
                    format!("The {system} {modality} {action} {object} {qualifier}.")
                }
            }
            FrameKind::ActorSource => {
                let action = t.actions[frame.action].get(v.lexical);
                let object = t.objects[frame.object].get(v.lexical);
                let actor = t.actors[frame.actor].get(v.lexical);
                if v.drop_exclusivity {
                    format!("The {system} {modality} {action} {object} from any {actor}.")
                } else {
                    let adjective = t.auth_adjectives.get(v.lexical);
                    format!(
                        "The {system} {modality} only {action} {object} from {adjective} {actor}."
                    )
                }
            }
            FrameKind::Numeric => {
                let attribute = t.attributes[frame.attribute].get(v.lexical);
                let bound = &t.bounds[frame.bound];
                let comparator = self.comparator(v);
                format!(
                    "The {system} {attribute} {modality} be {comparator} {value} {} {}.",
                    bound.unit, bound.tail
                )
            }
        }
    }
}

fn exemplar(label: Label) -> LabeledExample {
    let (id, r1, r2) = match label {
        Label::Duplicate => (
            "exemplar-duplicate",
            "The UAV shall instantaneously transmit information to the Pilot regarding \
             mission-impacting failures.",
            "The Hummingbird shall send the Pilot real-time information about malfunctions \
             that impact the mission.",
        ),
        Label::Conflict => (
            "exemplar-conflict",
            "The UAV shall only accept commands from an authenticated Pilot.",
            "The UAV shall accept commands from any Pilot controller.",
        ),
        Label::Neutral => (
            "exemplar-neutral",
            "The UAV flight range shall be at least 20 miles from origin.",
            "The UAV shall be able to transmit video feed to the Pilot and up to 4 separate \
             UAV Viewer devices at once.",
        ),
    };
    LabeledExample::new(RequirementPair::new(id, r1, r2).unwrap(), label)
}

fn signature(frame: &Frame) -> (i64, i64, i64) {
    match frame.kind {
        FrameKind::Numeric => (-1, -1, frame.attribute as i64),
        _ => (frame.action as i64, frame.object as i64, -1),
    }
}

fn content_disjoint(a: &Frame, b: &Frame) -> bool {
    let (aa, ao, aat) = signature(a);
    let (ba, bo, bat) = signature(b);
    let clash = |x: i64, y: i64| x >= 0 && y >= 0 && x == y;
    !(clash(aa, ba) || clash(ao, bo) || clash(aat, bat))
}

/// Deterministic generation with exact per-class counts.
pub fn generate(cfg: &GeneratorConfig) -> Result<GeneratedCorpus> {
    cfg.tables.validate()?;
    let space = FrameSpace::of(&cfg.tables);
    let capacity = space.total();
    let realizer = Realizer {
        tables: &cfg.tables,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let frame_demand = |label: Label, count: usize| -> usize {
        match label {
            Label::Neutral => count * 2,
            _ => count,
        }
    };
    for (i, label) in Label::ALL.into_iter().enumerate() {
        let mut need = frame_demand(label, cfg.counts[i]);
        if cfg.include_exemplars && cfg.counts[i] > 0 {
            need = need.saturating_sub(frame_demand(label, 1));
        }
        if need as u64 > capacity {
            return Err(Error::CapacityExceeded {
                label,
                need,
                capacity: capacity as usize,
            });
        }
    }

    let mut examples = Vec::new();
    let mut metadata = Vec::new();
    let mut push = |example: LabeledExample, meta: GenMetadata| {
        examples.push(example);
        metadata.push(meta);
    };

    let sample_frames = |rng: &mut ChaCha8Rng, k: usize| -> Vec<u64> {
        rand::seq::index::sample(rng, capacity as usize, k)
            .into_iter()
            .map(|i| i as u64)
            .collect()
    };

    // conflicts
    {
        let mut remaining = cfg.counts[0];
        if cfg.include_exemplars && remaining > 0 {
            push(
                exemplar(Label::Conflict),
                GenMetadata {
                    id: "exemplar-conflict".into(),
                    label: Label::Conflict,
                    operator: PairOperator::Exemplar,
                    frame: 0,
                    partner_frame: None,
                },
            );
            remaining -= 1;
        }
        let frames = sample_frames(&mut rng, remaining);
        for (i, index) in frames.into_iter().enumerate() {
            let frame = space.decode(&cfg.tables, index);
            let value = {
                let bound = &cfg.tables.bounds[frame.bound];
                let mid = (bound.min + bound.max) / 2;
                rng.gen_range(mid + 1..=bound.max)
            };
            let (op, second_variants, second_value) = match frame.kind {
                FrameKind::Plain => (
                    PairOperator::ModalityFlip,
                    Variants {
                        negated: true,
                        ..Variants::paraphrase()
                    },
                    value,
                ),
                FrameKind::ActorSource => {
                    if i % 2 == 0 {
                        (
                            PairOperator::ExclusivityClash,
                            Variants {
                                drop_exclusivity: true,
                                ..Variants::paraphrase()
                            },
                            value,
                        )
                    } else {
                        // negate the unrestricted form; "must not only" would
                        // read as a discourse marker instead of a prohibition
                        (
                            PairOperator::ModalityFlip,
                            Variants {
                                negated: true,
                                drop_exclusivity: true,
                                ..Variants::paraphrase()
                            },
                            value,
                        )
                    }
                }
                FrameKind::Numeric => {
                    let bound = &cfg.tables.bounds[frame.bound];
                    let low = rng.gen_range(bound.min..value);
                    (
                        PairOperator::BoundClash,
                        Variants {
                            cmp_at_most: true,
                            ..Variants::paraphrase()
                        },
                        low,
                    )
                }
            };
            let r1 = realizer.realize(&frame, &Variants::primary(), value);
            let r2 = realizer.realize(&frame, &second_variants, second_value);
            let id = format!("syn-c-{i:05}");
            push(
                LabeledExample::new(
                    RequirementPair::new(id.clone(), r1, r2)?,
                    Label::Conflict,
                ),
                GenMetadata {
                    id,
                    label: Label::Conflict,
                    operator: op,
                    frame: index,
                    partner_frame: None,
                },
            );
        }
    }

    // duplicates
    {
        let mut remaining = cfg.counts[1];
        if cfg.include_exemplars && remaining > 0 {
            push(
                exemplar(Label::Duplicate),
                GenMetadata {
                    id: "exemplar-duplicate".into(),
                    label: Label::Duplicate,
                    operator: PairOperator::Exemplar,
                    frame: 0,
                    partner_frame: None,
                },
            );
            remaining -= 1;
        }
        let frames = sample_frames(&mut rng, remaining);
        for (i, index) in frames.into_iter().enumerate() {
            let frame = space.decode(&cfg.tables, index);
            let value = {
                let bound = &cfg.tables.bounds[frame.bound];
                rng.gen_range(bound.min..=bound.max)
            };
            let r1 = realizer.realize(&frame, &Variants::primary(), value);
            let r2 = realizer.realize(&frame, &Variants::paraphrase(), value);
            debug_assert_ne!(r1, r2, "paraphrase must change the surface form");
            let id = format!("syn-d-{i:05}");
            push(
                LabeledExample::new(
                    RequirementPair::new(id.clone(), r1, r2)?,
                    Label::Duplicate,
                ),
                GenMetadata {
                    id,
                    label: Label::Duplicate,
                    operator: PairOperator::Paraphrase,
                    frame: index,
                    partner_frame: None,
                },
            );
        }
    }

    // neutrals
    {
        let mut remaining = cfg.counts[2];
        if cfg.include_exemplars && remaining > 0 {
            push(
                exemplar(Label::Neutral),
                GenMetadata {
                    id: "exemplar-neutral".into(),
                    label: Label::Neutral,
                    operator: PairOperator::Exemplar,
                    frame: 0,
                    partner_frame: None,
                },
            );
            remaining -= 1;
        }
        // sample a margin beyond the strict demand so the greedy pairing
        // cannot strand itself on a clashing tail
        let pool_size = (remaining * 2 + 64).min(capacity as usize);
        let mut pool: Vec<u64> = sample_frames(&mut rng, pool_size);
        let mut made = 0usize;
        let mut i = 0usize;
        while made < remaining {
            if pool.len() < 2 {
                return Err(Error::CapacityExceeded {
                    label: Label::Neutral,
                    need: remaining * 2,
                    capacity: capacity as usize,
                });
            }
            let mut found: Option<(usize, usize)> = None;
            for head in 0..pool.len() {
                let first = space.decode(&cfg.tables, pool[head]);
                let partner = pool.iter().enumerate().skip(head + 1).find_map(|(j, idx)| {
                    content_disjoint(&first, &space.decode(&cfg.tables, *idx)).then_some(j)
                });
                if let Some(j) = partner {
                    found = Some((head, j));
                    break;
                }
            }
            let Some((head, partner)) = found else {
                return Err(Error::CapacityExceeded {
                    label: Label::Neutral,
                    need: remaining * 2,
                    capacity: capacity as usize,
                });
            };
            let second_index = pool.remove(partner);
            let first_index = pool.remove(head);
            let first = space.decode(&cfg.tables, first_index);
            let second = space.decode(&cfg.tables, second_index);
            let v1 = {
                let bound = &cfg.tables.bounds[first.bound];
                rng.gen_range(bound.min..=bound.max)
            };
            let v2 = {
                let bound = &cfg.tables.bounds[second.bound];
                rng.gen_range(bound.min..=bound.max)
            };
            let r1 = realizer.realize(&first, &Variants::primary(), v1);
            let r2 = realizer.realize(&second, &Variants::primary(), v2);
            let id = format!("syn-n-{i:05}");
            push(
                LabeledExample::new(RequirementPair::new(id.clone(), r1, r2)?, Label::Neutral),
                GenMetadata {
                    id,
                    label: Label::Neutral,
                    operator: PairOperator::Independent,
                    frame: first_index,
                    partner_frame: Some(second_index),
                },
            );
            made += 1;
            i += 1;
        }
    }

    let dataset = Dataset::new(examples, Provenance::Synthetic)?;
    Ok(GeneratedCorpus { dataset, metadata })
}

/// Exchanges the two requirement texts. The label is unaffected; the id
/// toggles a `~swap` suffix so swapping twice restores the original id and
/// texts.
pub fn swap_pair(example: &LabeledExample) -> LabeledExample {
    let old_id = example.pair.id();
    let id = match old_id.strip_suffix("~swap") {
        Some(base) => base.to_string(),
        None => format!("{old_id}~swap"),
    };
    LabeledExample::new(
        RequirementPair::new(id, example.pair.r2(), example.pair.r1())
            .expect("swapped texts remain non-empty"),
        example.label,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::class_distribution;

    #[test]
    fn exact_counts_and_determinism() {
        let cfg = GeneratorConfig::new([10, 10, 10], 7);
        let a = generate(&cfg).unwrap();
        assert_eq!(a.dataset.len(), 30);
        assert_eq!(class_distribution(&a.dataset).counts(), [10, 10, 10]);
        let b = generate(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.metadata, b.metadata);
        let c = generate(&GeneratorConfig::new([10, 10, 10], 8)).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn exemplars_lead_their_classes_when_enabled() {
        let cfg = GeneratorConfig::new([3, 3, 3], 1);
        let corpus = generate(&cfg).unwrap();
        let conflict = corpus
            .dataset
            .iter()
            .find(|e| e.pair.id() == "exemplar-conflict")
            .expect("exemplar conflict present");
        assert_eq!(
            conflict.pair.r1(),
            "The UAV shall only accept commands from an authenticated Pilot."
        );
        assert_eq!(
            conflict.pair.r2(),
            "The UAV shall accept commands from any Pilot controller."
        );

        let mut no_exemplars = GeneratorConfig::new([3, 3, 3], 1);
        no_exemplars.include_exemplars = false;
        let plain = generate(&no_exemplars).unwrap();
        assert!(plain.dataset.iter().all(|e| !e.pair.id().starts_with("exemplar")));
    }

    #[test]
    fn duplicates_never_repeat_the_surface_form() {
        let corpus = generate(&GeneratorConfig::new([0, 200, 0], 3)).unwrap();
        for example in corpus.dataset.iter() {
            assert_ne!(example.pair.r1(), example.pair.r2(), "{}", example.pair.id());
        }
    }

    #[test]
    fn conflicts_are_traceable_to_their_frames() {
        let cfg = GeneratorConfig::new([120, 0, 0], 11);
        let corpus = generate(&cfg).unwrap();
        let contradiction_ops = [
            PairOperator::ModalityFlip,
            PairOperator::ExclusivityClash,
            PairOperator::BoundClash,
            PairOperator::Exemplar,
        ];
        let mut seen_ops = std::collections::HashSet::new();
        for meta in &corpus.metadata {
            assert!(contradiction_ops.contains(&meta.operator));
            seen_ops.insert(meta.operator);
        }
        assert!(seen_ops.contains(&PairOperator::ModalityFlip));
        assert!(seen_ops.contains(&PairOperator::BoundClash));
        assert!(seen_ops.contains(&PairOperator::ExclusivityClash));
    }

    #[test]
    fn neutral_pairs_use_disjoint_content() {
        let cfg = GeneratorConfig::new([0, 0, 150], 13);
        let corpus = generate(&cfg).unwrap();
        let space = FrameSpace::of(&cfg.tables);
        for meta in corpus.metadata.iter().filter(|m| m.operator == PairOperator::Independent) {
            let a = space.decode(&cfg.tables, meta.frame);
            let b = space.decode(&cfg.tables, meta.partner_frame.unwrap());
            assert!(content_disjoint(&a, &b));
        }
    }

    #[test]
    fn swap_preserves_label_and_is_involutive() {
        let corpus = generate(&GeneratorConfig::new([5, 5, 5], 21)).unwrap();
        for example in corpus.dataset.iter() {
            let swapped = swap_pair(example);
            assert_eq!(swapped.label, example.label);
            assert_eq!(swapped.pair.r1(), example.pair.r2());
            let back = swap_pair(&swapped);
            assert_eq!(back.pair.r1(), example.pair.r1());
            assert_eq!(back.pair.r2(), example.pair.r2());
            assert_eq!(back.pair.id(), example.pair.id());
        }
    }

    #[test]
    fn capacity_overflow_is_an_error() {
        let mut cfg = GeneratorConfig::new([0, 100, 0], 5);
        cfg.tables.systems.truncate(1);
        cfg.tables.actions.truncate(1);
        cfg.tables.objects.truncate(1);
        cfg.tables.plain_qualifiers.truncate(1);
        cfg.tables.actors.truncate(1);
        cfg.tables.attributes.truncate(1);
        cfg.tables.bounds.truncate(1);
        // capacity: 1 + 1 + 1 = 3 frames
        match generate(&cfg) {
            Err(Error::CapacityExceeded { label, .. }) => assert_eq!(label, Label::Duplicate),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn every_pattern_render_fits_the_budget() {
        let corpus = generate(&GeneratorConfig::new([40, 40, 40], 17)).unwrap();
        let pvps: Vec<crate::pvp::Pvp> = crate::pvp::builtin_patterns()
            .into_iter()
            .map(|p| crate::pvp::Pvp::new(p, crate::pvp::builtin_verbalizers().remove(0)))
            .collect();
        let tok = crate::backend::build_tokenizer_for_task(&corpus.dataset, &pvps).unwrap();
        for pvp in &pvps {
            for example in corpus.dataset.iter() {
                let rendered = pvp.render(&example.pair, 2);
                let fit = crate::pvp::validate_budget(&rendered, &tok, 256);
                assert!(fit.fits, "{} overflows by {}", example.pair.id(), fit.overflow);
            }
        }
    }

    #[test]
    fn vocab_tables_round_trip_toml() {
        let tables = VocabTables::defaults();
        let text = toml::to_string(&tables).unwrap();
        let parsed = VocabTables::from_toml(&text).unwrap();
        assert_eq!(tables, parsed);
    }
}
