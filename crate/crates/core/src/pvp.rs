//! Cloze reformulation machinery: pattern templates, slot preprocessing,
//! verbalizers, and rendering of requirement pairs into cloze piece sequences.
//!
//! A pattern maps a pair `(r1, r2)` to a cloze-style phrase containing one
//! block of mask positions; a verbalizer maps each task label to a word that
//! could fill the masks. Rendering is pure and deterministic.

use serde::Deserialize;

use crate::backend::Tokenizer;
use crate::data::{Label, RequirementPair};
use crate::error::{Error, Result};

/// Slot preprocessing switches, applied in the order strip → lower → quote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotFlags {
    /// Remove one trailing character from `{. ! ?}` after trimming trailing
    /// whitespace.
    pub strip_terminal_punct: bool,
    /// Lowercase the first character iff it is an uppercase letter.
    pub lower_first: bool,
    /// Wrap the text in straight ASCII double quotes.
    pub quote: bool,
}

impl SlotFlags {
    pub const VERBATIM: SlotFlags = SlotFlags {
        strip_terminal_punct: false,
        lower_first: false,
        quote: false,
    };

    pub fn new(strip_terminal_punct: bool, lower_first: bool, quote: bool) -> Self {
        Self {
            strip_terminal_punct,
            lower_first,
            quote,
        }
    }
}

/// Which side of the pair a slot pulls from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotId {
    R1,
    R2,
}

impl SlotId {
    fn index(self) -> usize {
        match self {
            SlotId::R1 => 0,
            SlotId::R2 => 1,
        }
    }
}

/// One element of a pattern template.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternSegment {
    Literal(String),
    Slot { which: SlotId, flags: SlotFlags },
    /// Expanded to a run of consecutive mask markers at render time; the run
    /// length is bound by the backend, not the template.
    MaskBlock,
    /// Structural sequence boundary; each backend maps it to its own
    /// convention.
    Separator,
}

fn lit(text: &str) -> PatternSegment {
    PatternSegment::Literal(text.to_string())
}

fn slot(which: SlotId, strip: bool, lower: bool, quote: bool) -> PatternSegment {
    PatternSegment::Slot {
        which,
        flags: SlotFlags::new(strip, lower, quote),
    }
}

/// An ordered segment list with exactly one mask block and at least one slot
/// per side.
///
/// All occurrences of the same slot must carry identical flags so that the
/// slot has a single well-defined preprocessed text (truncation relies on
/// this).
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTemplate {
    id: String,
    segments: Vec<PatternSegment>,
}

impl PatternTemplate {
    pub fn new(id: impl Into<String>, segments: Vec<PatternSegment>) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: &str| Error::InvalidPattern {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if id.is_empty() {
            return Err(invalid("empty id"));
        }
        let masks = segments
            .iter()
            .filter(|s| matches!(s, PatternSegment::MaskBlock))
            .count();
        if masks != 1 {
            return Err(invalid(&format!("expected exactly one mask block, found {masks}")));
        }
        let mut slot_flags: [Option<SlotFlags>; 2] = [None, None];
        for segment in &segments {
            if let PatternSegment::Slot { which, flags } = segment {
                match slot_flags[which.index()] {
                    None => slot_flags[which.index()] = Some(*flags),
                    Some(existing) if existing != *flags => {
                        return Err(invalid("slot occurs with inconsistent flags"));
                    }
                    Some(_) => {}
                }
            }
        }
        if slot_flags[0].is_none() {
            return Err(invalid("no r1 slot"));
        }
        if slot_flags[1].is_none() {
            return Err(invalid("no r2 slot"));
        }
        Ok(Self { id, segments })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn segments(&self) -> &[PatternSegment] {
        &self.segments
    }

    /// Flags of the single (consistent) occurrence class of a slot.
    pub fn slot_flags(&self, which: SlotId) -> SlotFlags {
        self.segments
            .iter()
            .find_map(|s| match s {
                PatternSegment::Slot { which: w, flags } if *w == which => Some(*flags),
                _ => None,
            })
            .expect("validated template has both slots")
    }

    pub fn slot_count(&self, which: SlotId) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, PatternSegment::Slot { which: w, .. } if *w == which))
            .count()
    }

    /// Substitutes the pair into the template, expanding the mask block to
    /// `mask_count` consecutive mask markers. Quoting is emitted as literal
    /// quote pieces around the slot text so truncation can never eat a quote.
    pub fn render(&self, pair: &RequirementPair, mask_count: usize) -> RenderedCloze {
        assert!(mask_count >= 1, "mask_count must be at least 1");
        let cores = [
            preprocess_core(pair.r1(), self.slot_flags(SlotId::R1)),
            preprocess_core(pair.r2(), self.slot_flags(SlotId::R2)),
        ];
        let mut pieces = Vec::with_capacity(self.segments.len() + mask_count + 4);
        for segment in &self.segments {
            match segment {
                PatternSegment::Literal(text) => pieces.push(ClozePiece::Text {
                    text: text.clone(),
                    source: PieceSource::Literal,
                }),
                PatternSegment::Slot { which, flags } => {
                    if flags.quote {
                        pieces.push(ClozePiece::Text {
                            text: "\"".to_string(),
                            source: PieceSource::Literal,
                        });
                    }
                    pieces.push(ClozePiece::Text {
                        text: cores[which.index()].clone(),
                        source: PieceSource::Slot(*which),
                    });
                    if flags.quote {
                        pieces.push(ClozePiece::Text {
                            text: "\"".to_string(),
                            source: PieceSource::Literal,
                        });
                    }
                }
                PatternSegment::MaskBlock => {
                    for _ in 0..mask_count {
                        pieces.push(ClozePiece::Mask);
                    }
                }
                PatternSegment::Separator => pieces.push(ClozePiece::Separator),
            }
        }
        RenderedCloze {
            pair_id: pair.id().to_string(),
            pieces,
            slot_cores: cores,
            mask_count,
        }
    }
}

/// A bijective map from label names to verbalization words.
///
/// The entry order is the canonical label order. The machinery is generic
/// over finite label alphabets; the shipped task binds the three-label set
/// via [`Verbalizer::for_task`].
#[derive(Debug, Clone, PartialEq)]
pub struct Verbalizer {
    id: String,
    entries: Vec<(String, String)>,
}

impl Verbalizer {
    pub fn new(id: impl Into<String>, entries: Vec<(String, String)>) -> Result<Self> {
        let id = id.into();
        if entries.is_empty() {
            return Err(Error::InvalidConfig(format!("verbalizer `{id}` has no entries")));
        }
        for (i, (_, word)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(_, w)| w == word) {
                return Err(Error::NonInjectiveVerbalizer {
                    id,
                    word: word.clone(),
                });
            }
        }
        Ok(Self { id, entries })
    }

    /// The three-label task binding, words given in canonical label order.
    pub fn for_task(id: impl Into<String>, words: [&str; 3]) -> Result<Self> {
        let entries = Label::ALL
            .iter()
            .zip(words)
            .map(|(label, word)| (label.name().to_string(), word.to_string()))
            .collect();
        Verbalizer::new(id, entries)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn arity(&self) -> usize {
        self.entries.len()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.entries[index].1
    }

    pub fn label_name(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(_, w)| w.as_str())
    }

    /// v(label) for the task binding.
    pub fn word_for(&self, label: Label) -> &str {
        &self.entries[label.index()].1
    }

    /// v^{-1}(word): the label name a verbalization stands for.
    pub fn invert(&self, word: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, w)| w == word)
            .map(|(name, _)| name.as_str())
    }

    /// v^{-1} resolved to a task label, when the entry names are task labels.
    pub fn invert_label(&self, word: &str) -> Option<Label> {
        self.invert(word).and_then(Label::parse)
    }
}

/// A pattern-verbalizer pair; each one trains its own scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Pvp {
    pub pattern: PatternTemplate,
    pub verbalizer: Verbalizer,
}

impl Pvp {
    pub fn new(pattern: PatternTemplate, verbalizer: Verbalizer) -> Self {
        Self {
            pattern,
            verbalizer,
        }
    }

    /// "P3:v2"-style identifier used in configs and reports.
    pub fn id(&self) -> String {
        format!("{}:{}", self.pattern.id(), self.verbalizer.id())
    }

    pub fn render(&self, pair: &RequirementPair, mask_count: usize) -> RenderedCloze {
        self.pattern.render(pair, mask_count)
    }
}

/// Origin of a rendered text piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceSource {
    Literal,
    Slot(SlotId),
}

/// One resolved piece of a rendered cloze.
#[derive(Debug, Clone, PartialEq)]
pub enum ClozePiece {
    Text { text: String, source: PieceSource },
    Mask,
    Separator,
}

/// A pattern applied to a concrete pair: text pieces, mask markers, and
/// separator markers kept as structure, never flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedCloze {
    pair_id: String,
    pieces: Vec<ClozePiece>,
    /// Preprocessed (strip/lower, pre-quote) slot texts for r1 and r2.
    slot_cores: [String; 2],
    mask_count: usize,
}

impl RenderedCloze {
    pub fn pair_id(&self) -> &str {
        &self.pair_id
    }

    pub fn pieces(&self) -> &[ClozePiece] {
        &self.pieces
    }

    pub fn mask_count(&self) -> usize {
        self.mask_count
    }

    pub fn slot_core(&self, which: SlotId) -> &str {
        &self.slot_cores[which.index()]
    }

    /// Debug/fixture form: text verbatim, `[MASK]` per mask position
    /// (space-separated when consecutive), `|` for separators. All other
    /// spacing comes from the pattern's literals.
    pub fn flatten(&self) -> String {
        let mut out = String::new();
        let mut prev_mask = false;
        for piece in &self.pieces {
            match piece {
                ClozePiece::Text { text, .. } => {
                    out.push_str(text);
                    prev_mask = false;
                }
                ClozePiece::Mask => {
                    if prev_mask {
                        out.push(' ');
                    }
                    out.push_str("[MASK]");
                    prev_mask = true;
                }
                ClozePiece::Separator => {
                    out.push('|');
                    prev_mask = false;
                }
            }
        }
        out
    }

    /// Total token count under a tokenizer: text pieces tokenize normally,
    /// each mask and separator counts as one token.
    pub fn token_count(&self, tokenizer: &Tokenizer) -> usize {
        self.pieces
            .iter()
            .map(|piece| match piece {
                ClozePiece::Text { text, .. } => tokenizer.tokenize(text).len(),
                ClozePiece::Mask | ClozePiece::Separator => 1,
            })
            .sum()
    }
}

/// Strip/lower/quote preprocessing of a slot text, in that order.
///
/// The empty string passes through all flags unchanged.
pub fn preprocess_slot(text: &str, flags: SlotFlags) -> String {
    if text.is_empty() {
        return String::new();
    }
    let core = preprocess_core(text, flags);
    if flags.quote {
        format!("\"{core}\"")
    } else {
        core
    }
}

/// Strip and lower only; quoting is applied by the caller.
fn preprocess_core(text: &str, flags: SlotFlags) -> String {
    if text.is_empty() {
        return String::new();
    }
    let mut current = text.to_string();
    if flags.strip_terminal_punct {
        let trimmed = current.trim_end();
        let stripped = match trimmed.chars().last() {
            Some(c) if matches!(c, '.' | '!' | '?') => &trimmed[..trimmed.len() - c.len_utf8()],
            _ => trimmed,
        };
        current = stripped.to_string();
    }
    if flags.lower_first {
        let mut chars = current.chars();
        if let Some(first) = chars.next() {
            if first.is_uppercase() {
                current = first.to_lowercase().chain(chars).collect();
            }
        }
    }
    current
}

/// Whether a rendered cloze fits a token budget, and by how much it misses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitReport {
    pub fits: bool,
    pub overflow: usize,
}

/// Counts tokens (including mask and separator tokens) against
/// `max_seq_length`.
pub fn validate_budget(
    rendered: &RenderedCloze,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> FitReport {
    let count = rendered.token_count(tokenizer);
    let overflow = count.saturating_sub(max_seq_length);
    FitReport {
        fits: overflow == 0,
        overflow,
    }
}

/// Shortens slot texts until the render fits the budget.
///
/// Tokens are removed from the tail of whichever slot text is currently
/// longer (ties prefer r1); literal, separator, and mask tokens are never
/// touched. Shortened slot texts are re-joined with single spaces, which
/// re-tokenizes to exactly the surviving tokens.
pub fn truncate(
    rendered: &RenderedCloze,
    tokenizer: &Tokenizer,
    max_seq_length: usize,
) -> Result<RenderedCloze> {
    if validate_budget(rendered, tokenizer, max_seq_length).fits {
        return Ok(rendered.clone());
    }
    let fixed: usize = rendered
        .pieces
        .iter()
        .map(|piece| match piece {
            ClozePiece::Text {
                source: PieceSource::Literal,
                text,
            } => tokenizer.tokenize(text).len(),
            ClozePiece::Text { .. } => 0,
            ClozePiece::Mask | ClozePiece::Separator => 1,
        })
        .sum();
    if fixed > max_seq_length {
        return Err(Error::UnsatisfiableBudget {
            fixed,
            budget: max_seq_length,
        });
    }

    let occurrences = [
        rendered
            .pieces
            .iter()
            .filter(|p| matches!(p, ClozePiece::Text { source: PieceSource::Slot(SlotId::R1), .. }))
            .count(),
        rendered
            .pieces
            .iter()
            .filter(|p| matches!(p, ClozePiece::Text { source: PieceSource::Slot(SlotId::R2), .. }))
            .count(),
    ];
    let mut slot_tokens = [
        tokenizer.tokenize(&rendered.slot_cores[0]),
        tokenizer.tokenize(&rendered.slot_cores[1]),
    ];
    let original_lengths = [slot_tokens[0].len(), slot_tokens[1].len()];
    let total = |tokens: &[Vec<String>; 2]| {
        fixed + occurrences[0] * tokens[0].len() + occurrences[1] * tokens[1].len()
    };
    while total(&slot_tokens) > max_seq_length {
        let victim = if slot_tokens[0].len() >= slot_tokens[1].len() {
            0
        } else {
            1
        };
        let victim = if slot_tokens[victim].is_empty() {
            1 - victim
        } else {
            victim
        };
        if slot_tokens[victim].pop().is_none() {
            // both slots exhausted; fixed <= budget, so this cannot happen
            break;
        }
    }

    // untouched slots keep their original spelling
    let cores: [String; 2] = std::array::from_fn(|i| {
        if slot_tokens[i].len() == original_lengths[i] {
            rendered.slot_cores[i].clone()
        } else {
            slot_tokens[i].join(" ")
        }
    });
    let pieces = rendered
        .pieces
        .iter()
        .map(|piece| match piece {
            ClozePiece::Text {
                source: PieceSource::Slot(which),
                ..
            } => ClozePiece::Text {
                text: cores[which.index()].clone(),
                source: PieceSource::Slot(*which),
            },
            other => other.clone(),
        })
        .collect();
    Ok(RenderedCloze {
        pair_id: rendered.pair_id.clone(),
        pieces,
        slot_cores: cores,
        mask_count: rendered.mask_count,
    })
}

/// The six built-in pattern templates.
///
/// P1 and P2 strip r1's trailing punctuation (the template's `?` replaces
/// it) and keep r2 verbatim; P3 through P6 strip trailing punctuation from
/// both sides, fold the leading capital, and quote the slot texts.
pub fn builtin_patterns() -> Vec<PatternTemplate> {
    use SlotId::{R1, R2};
    let p1 = PatternTemplate::new(
        "P1",
        vec![
            slot(R1, true, false, true),
            lit("? "),
            PatternSegment::Separator,
            lit(" "),
            PatternSegment::MaskBlock,
            lit(", "),
            slot(R2, false, false, true),
        ],
    );
    let p2 = PatternTemplate::new(
        "P2",
        vec![
            slot(R1, true, false, false),
            lit("? "),
            PatternSegment::Separator,
            lit(" "),
            PatternSegment::MaskBlock,
            lit(", "),
            slot(R2, false, false, false),
        ],
    );
    let p3 = PatternTemplate::new(
        "P3",
        vec![
            lit("Given "),
            slot(R1, true, true, true),
            lit(", we can conclude that "),
            slot(R2, true, true, true),
            lit(" is "),
            PatternSegment::MaskBlock,
            lit("."),
        ],
    );
    let p4 = PatternTemplate::new(
        "P4",
        vec![
            slot(R1, true, true, true),
            lit(" means "),
            slot(R2, true, true, true),
            lit(". "),
            PatternSegment::Separator,
            lit(" "),
            PatternSegment::MaskBlock,
            lit("."),
        ],
    );
    let p5 = PatternTemplate::new(
        "P5",
        vec![
            slot(R1, true, true, true),
            lit(" implies "),
            slot(R2, true, true, true),
            lit(" and "),
            slot(R2, true, true, true),
            lit(" implies "),
            slot(R1, true, true, true),
            lit(". "),
            PatternSegment::Separator,
            lit(" The previous sentence is correct: "),
            PatternSegment::MaskBlock,
            lit("."),
        ],
    );
    let p6 = PatternTemplate::new(
        "P6",
        vec![
            slot(R1, true, true, true),
            lit(" is equivalent to "),
            slot(R2, true, true, true),
            lit(". Similarly, "),
            slot(R2, true, true, true),
            lit(" is equivalent to "),
            slot(R1, true, true, true),
            lit(". "),
            PatternSegment::Separator,
            lit(" The previous statements are "),
            PatternSegment::MaskBlock,
            lit("."),
        ],
    );
    vec![
        p1.unwrap(),
        p2.unwrap(),
        p3.unwrap(),
        p4.unwrap(),
        p5.unwrap(),
        p6.unwrap(),
    ]
}

/// The two built-in verbalizers.
pub fn builtin_verbalizers() -> Vec<Verbalizer> {
    vec![
        Verbalizer::for_task("v1", ["No", "Yes", "Maybe"]).unwrap(),
        Verbalizer::for_task("v2", ["False", "True", "Neither"]).unwrap(),
    ]
}

/// Resolves "P3:v2"-style ids against the built-ins plus any extras loaded
/// from a definition file.
pub fn resolve_pvp(spec: &str, extra: Option<&PvpLibrary>) -> Result<Pvp> {
    let (pid, vid) = spec.split_once(':').ok_or_else(|| {
        Error::InvalidConfig(format!("pvp spec `{spec}` must look like `P1:v1`"))
    })?;
    let pattern = builtin_patterns()
        .into_iter()
        .chain(extra.map(|l| l.patterns.clone()).unwrap_or_default())
        .find(|p| p.id() == pid)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown pattern `{pid}`")))?;
    let verbalizer = builtin_verbalizers()
        .into_iter()
        .chain(extra.map(|l| l.verbalizers.clone()).unwrap_or_default())
        .find(|v| v.id() == vid)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown verbalizer `{vid}`")))?;
    Ok(Pvp::new(pattern, verbalizer))
}

/// User-supplied pattern and verbalizer definitions.
#[derive(Debug, Clone, Default)]
pub struct PvpLibrary {
    pub patterns: Vec<PatternTemplate>,
    pub verbalizers: Vec<Verbalizer>,
}

#[derive(Deserialize)]
struct PvpFile {
    #[serde(default)]
    patterns: Vec<PatternSpec>,
    #[serde(default)]
    verbalizers: Vec<VerbalizerSpec>,
}

#[derive(Deserialize)]
struct PatternSpec {
    id: String,
    segments: Vec<SegmentSpec>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SegmentSpec {
    Literal {
        literal: String,
    },
    Slot {
        slot: String,
        #[serde(default)]
        strip_terminal_punct: bool,
        #[serde(default)]
        lower_first: bool,
        #[serde(default)]
        quote: bool,
    },
    Separator {
        separator: bool,
    },
    Mask {
        mask: bool,
    },
}

#[derive(Deserialize)]
struct VerbalizerSpec {
    id: String,
    words: WordMap,
}

#[derive(Deserialize)]
struct WordMap {
    conflict: String,
    duplicate: String,
    neutral: String,
}

/// Parses the declarative TOML pattern/verbalizer format.
pub fn load_pvp_definitions(text: &str) -> Result<PvpLibrary> {
    let file: PvpFile = toml::from_str(text)?;
    let mut library = PvpLibrary::default();
    for spec in file.patterns {
        let mut segments = Vec::with_capacity(spec.segments.len());
        for segment in spec.segments {
            segments.push(match segment {
                SegmentSpec::Literal { literal } => PatternSegment::Literal(literal),
                SegmentSpec::Slot {
                    slot,
                    strip_terminal_punct,
                    lower_first,
                    quote,
                } => {
                    let which = match slot.as_str() {
                        "r1" => SlotId::R1,
                        "r2" => SlotId::R2,
                        other => {
                            return Err(Error::InvalidPattern {
                                id: spec.id,
                                reason: format!("unknown slot `{other}` (expected r1 or r2)"),
                            })
                        }
                    };
                    PatternSegment::Slot {
                        which,
                        flags: SlotFlags::new(strip_terminal_punct, lower_first, quote),
                    }
                }
                SegmentSpec::Separator { separator } => {
                    if !separator {
                        return Err(Error::InvalidPattern {
                            id: spec.id,
                            reason: "separator must be `true`".to_string(),
                        });
                    }
                    PatternSegment::Separator
                }
                SegmentSpec::Mask { mask } => {
                    if !mask {
                        return Err(Error::InvalidPattern {
                            id: spec.id,
                            reason: "mask must be `true`".to_string(),
                        });
                    }
                    PatternSegment::MaskBlock
                }
            });
        }
        library.patterns.push(PatternTemplate::new(spec.id, segments)?);
    }
    for spec in file.verbalizers {
        library.verbalizers.push(Verbalizer::for_task(
            spec.id,
            [
                spec.words.conflict.as_str(),
                spec.words.duplicate.as_str(),
                spec.words.neutral.as_str(),
            ],
        )?);
    }
    Ok(library)
}
