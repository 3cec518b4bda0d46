//! Dialogue corpus model: speaker-tagged turns, semantic frame
//! annotations, system acts, and the derived label vocabularies.

mod bio;
mod input;
mod schema;
mod split;
mod synthetic;

pub use bio::{bio_decode, bio_encode, tag_vocabulary, TAG_OUTSIDE};
pub use input::{build_input_sequence, InputBuildConfig, ModelInput, Targets, SPEAKER_NONE, SPEAKER_SYSTEM, SPEAKER_USER};
pub use schema::{load_corpus, parse_corpus, save_corpus, serialize_corpus};
pub use split::split_corpus;
pub use synthetic::{ambiguous_turn_stats, generate_synthetic_corpus, strip_labels, SyntheticConfig};

use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("corpus file: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus JSON: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("dialogue {dialogue:?} turn {turn}: speaker must be \"user\" or \"system\", got {speaker:?}")]
    BadSpeaker { dialogue: String, turn: usize, speaker: String },
    #[error("dialogue {dialogue:?} turn {turn}: user turn carries system_acts")]
    UserTurnWithSystemActs { dialogue: String, turn: usize },
    #[error("dialogue {dialogue:?} turn {turn}: labels on a system turn")]
    SystemTurnWithLabels { dialogue: String, turn: usize },
    #[error("dialogue {dialogue:?} turn {turn}: empty system act type")]
    EmptyActType { dialogue: String, turn: usize },
    #[error("dialogue {dialogue:?} turn {turn}: span {slot:?} [{start_word}, {end_word}) exceeds {words} words")]
    SpanOutOfRange {
        dialogue: String,
        turn: usize,
        slot: String,
        start_word: usize,
        end_word: usize,
        words: usize,
    },
    #[error("dialogue {dialogue:?} turn {turn}: span {slot:?} is empty ([{start_word}, {end_word}))")]
    EmptySpan { dialogue: String, turn: usize, slot: String, start_word: usize, end_word: usize },
    #[error("dialogue {dialogue:?} turn {turn}: overlapping slot spans")]
    OverlappingSpans { dialogue: String, turn: usize },
    #[error("overlapping slot spans")]
    OverlappingBareSpans,
    #[error("dialogue {dialogue:?} turn {turn}: not a user turn")]
    NotUserTurn { dialogue: String, turn: usize },
    #[error("query of {query_tokens} subtokens cannot fit max sequence length {max} even without history")]
    QueryTooLong { query_tokens: usize, max: usize },
    #[error("label {label:?} not in the {kind} vocabulary")]
    UnknownLabel { kind: &'static str, label: String },
    #[error("split fractions must all be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
    #[error("split would leave an empty part ({0}/{1}/{2} of {3} dialogues)")]
    EmptySplit(usize, usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    User,
    System,
}

/// A structured system action: act type plus optional slot argument.
/// Slot values are dropped; only the type matters for the n-hot encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemAct {
    pub act_type: String,
    pub slot: Option<String>,
}

impl SystemAct {
    pub fn new(act_type: impl Into<String>, slot: Option<&str>) -> Self {
        SystemAct { act_type: act_type.into(), slot: slot.map(str::to_string) }
    }

    /// Entry in the system-act vocabulary: `request(date)` or `negate`.
    pub fn canonical(&self) -> String {
        match &self.slot {
            Some(s) => format!("{}({s})", self.act_type),
            None => self.act_type.clone(),
        }
    }
}

/// Word-level slot annotation; `end_word` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlotSpan {
    pub slot: String,
    pub start_word: usize,
    pub end_word: usize,
}

impl SlotSpan {
    pub fn new(slot: impl Into<String>, start_word: usize, end_word: usize) -> Self {
        SlotSpan { slot: slot.into(), start_word, end_word }
    }
}

/// Gold or predicted annotation of one user query: a single intent,
/// a set of user dialogue acts, and non-overlapping slot spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticFrame {
    pub intent: String,
    pub user_acts: BTreeSet<String>,
    pub slots: Vec<SlotSpan>,
}

#[derive(Debug, Clone)]
pub struct Turn {
    pub speaker: Speaker,
    pub utterance: String,
    pub system_acts: Vec<SystemAct>,
    pub labels: Option<SemanticFrame>,
}

impl Turn {
    pub fn user(utterance: impl Into<String>, labels: Option<SemanticFrame>) -> Self {
        Turn { speaker: Speaker::User, utterance: utterance.into(), system_acts: Vec::new(), labels }
    }

    pub fn system(utterance: impl Into<String>, acts: Vec<SystemAct>) -> Self {
        Turn { speaker: Speaker::System, utterance: utterance.into(), system_acts: acts, labels: None }
    }

    pub fn word_count(&self) -> usize {
        self.utterance.split_whitespace().count()
    }
}

#[derive(Debug, Clone)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

/// A corpus plus its deterministically sorted label vocabularies.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub intents: Vec<String>,
    pub user_acts: Vec<String>,
    pub slots: Vec<String>,
    /// Canonical system-act strings; index = n-hot position.
    pub system_acts: Vec<String>,
}

impl Corpus {
    /// Validates turn structure and spans, then derives sorted vocabularies.
    pub fn from_dialogues(dialogues: Vec<Dialogue>) -> Result<Self, DataError> {
        let mut intents = BTreeSet::new();
        let mut user_acts = BTreeSet::new();
        let mut slots = BTreeSet::new();
        let mut system_acts = BTreeSet::new();
        for d in &dialogues {
            for (ti, t) in d.turns.iter().enumerate() {
                match t.speaker {
                    Speaker::User => {
                        if !t.system_acts.is_empty() {
                            return Err(DataError::UserTurnWithSystemActs {
                                dialogue: d.id.clone(),
                                turn: ti,
                            });
                        }
                    }
                    Speaker::System => {
                        if t.labels.is_some() {
                            return Err(DataError::SystemTurnWithLabels {
                                dialogue: d.id.clone(),
                                turn: ti,
                            });
                        }
                        for act in &t.system_acts {
                            if act.act_type.is_empty() {
                                return Err(DataError::EmptyActType {
                                    dialogue: d.id.clone(),
                                    turn: ti,
                                });
                            }
                            system_acts.insert(act.canonical());
                        }
                    }
                }
                if let Some(frame) = &t.labels {
                    let words = t.word_count();
                    validate_spans(&frame.slots, words).map_err(|e| match e {
                        SpanIssue::OutOfRange(s) => DataError::SpanOutOfRange {
                            dialogue: d.id.clone(),
                            turn: ti,
                            slot: s.slot.clone(),
                            start_word: s.start_word,
                            end_word: s.end_word,
                            words,
                        },
                        SpanIssue::Empty(s) => DataError::EmptySpan {
                            dialogue: d.id.clone(),
                            turn: ti,
                            slot: s.slot.clone(),
                            start_word: s.start_word,
                            end_word: s.end_word,
                        },
                        SpanIssue::Overlap => DataError::OverlappingSpans {
                            dialogue: d.id.clone(),
                            turn: ti,
                        },
                    })?;
                    intents.insert(frame.intent.clone());
                    for a in &frame.user_acts {
                        user_acts.insert(a.clone());
                    }
                    for s in &frame.slots {
                        slots.insert(s.slot.clone());
                    }
                }
            }
        }
        Ok(Corpus {
            dialogues,
            intents: intents.into_iter().collect(),
            user_acts: user_acts.into_iter().collect(),
            slots: slots.into_iter().collect(),
            system_acts: system_acts.into_iter().collect(),
        })
    }

    pub fn intent_id(&self, intent: &str) -> Result<usize, DataError> {
        self.intents
            .iter()
            .position(|i| i == intent)
            .ok_or_else(|| DataError::UnknownLabel { kind: "intent", label: intent.to_string() })
    }

    pub fn user_act_id(&self, act: &str) -> Result<usize, DataError> {
        self.user_acts
            .iter()
            .position(|a| a == act)
            .ok_or_else(|| DataError::UnknownLabel { kind: "user act", label: act.to_string() })
    }

    pub fn system_act_id(&self, canonical: &str) -> Result<usize, DataError> {
        self.system_acts
            .iter()
            .position(|a| a == canonical)
            .ok_or_else(|| DataError::UnknownLabel { kind: "system act", label: canonical.to_string() })
    }

    /// Indices of (dialogue, turn) pairs for every labeled user turn.
    pub fn labeled_user_turns(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (di, d) in self.dialogues.iter().enumerate() {
            for (ti, t) in d.turns.iter().enumerate() {
                if t.speaker == Speaker::User && t.labels.is_some() {
                    out.push((di, ti));
                }
            }
        }
        out
    }

    /// BIO tag vocabulary derived from the slot vocabulary.
    pub fn slot_tags(&self) -> Vec<String> {
        tag_vocabulary(&self.slots)
    }

    /// Concatenation of all utterances; tokenizer training input.
    pub fn all_text(&self) -> String {
        let mut out = String::new();
        for d in &self.dialogues {
            for t in &d.turns {
                out.push_str(&t.utterance);
                out.push('\n');
            }
        }
        out
    }
}

pub(crate) enum SpanIssue<'a> {
    OutOfRange(&'a SlotSpan),
    Empty(&'a SlotSpan),
    Overlap,
}

/// Spans must be nonempty, in range, and pairwise non-overlapping.
pub(crate) fn validate_spans(spans: &[SlotSpan], word_count: usize) -> Result<(), SpanIssue<'_>> {
    for s in spans {
        if s.start_word >= s.end_word {
            return Err(SpanIssue::Empty(s));
        }
        if s.end_word > word_count {
            return Err(SpanIssue::OutOfRange(s));
        }
    }
    let mut sorted: Vec<&SlotSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| s.start_word);
    for pair in sorted.windows(2) {
        if pair[1].start_word < pair[0].end_word {
            return Err(SpanIssue::Overlap);
        }
    }
    Ok(())
}
