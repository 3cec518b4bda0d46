//! On-disk corpus format.
//!
//! ```json
//! {"dialogues":[{"id":"d1","turns":[
//!   {"speaker":"system","utterance":"what time",
//!    "system_acts":[{"act":"request","slot":"time"}]},
//!   {"speaker":"user","utterance":"5",
//!    "labels":{"intent":"book","user_acts":["inform"],
//!              "slots":[{"slot":"time","start_word":0,"end_word":1}]}}
//! ]}]}
//! ```
//!
//! `system_acts` may appear only on system turns, `labels` only on user
//! turns; words are whitespace tokens of `utterance`; `end_word` is
//! exclusive.

use super::{Corpus, DataError, Dialogue, SemanticFrame, SlotSpan, Speaker, SystemAct, Turn};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    dialogues: Vec<RawDialogue>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDialogue {
    id: String,
    turns: Vec<RawTurn>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTurn {
    speaker: String,
    utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    system_acts: Option<Vec<RawSystemAct>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<RawFrame>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystemAct {
    act: String,
    slot: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    intent: String,
    user_acts: Vec<String>,
    slots: Vec<RawSpan>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpan {
    slot: String,
    start_word: usize,
    end_word: usize,
}

fn convert(raw: RawCorpus) -> Result<Corpus, DataError> {
    let mut dialogues = Vec::with_capacity(raw.dialogues.len());
    for rd in raw.dialogues {
        let mut turns = Vec::with_capacity(rd.turns.len());
        for (ti, rt) in rd.turns.into_iter().enumerate() {
            let speaker = match rt.speaker.as_str() {
                "user" => Speaker::User,
                "system" => Speaker::System,
                other => {
                    return Err(DataError::BadSpeaker {
                        dialogue: rd.id.clone(),
                        turn: ti,
                        speaker: other.to_string(),
                    })
                }
            };
            if speaker == Speaker::User && rt.system_acts.is_some() {
                return Err(DataError::UserTurnWithSystemActs { dialogue: rd.id.clone(), turn: ti });
            }
            if speaker == Speaker::System && rt.labels.is_some() {
                return Err(DataError::SystemTurnWithLabels { dialogue: rd.id.clone(), turn: ti });
            }
            let system_acts = rt
                .system_acts
                .unwrap_or_default()
                .into_iter()
                .map(|a| SystemAct { act_type: a.act, slot: a.slot })
                .collect();
            let labels = rt.labels.map(|f| SemanticFrame {
                intent: f.intent,
                user_acts: f.user_acts.into_iter().collect(),
                slots: f
                    .slots
                    .into_iter()
                    .map(|s| SlotSpan { slot: s.slot, start_word: s.start_word, end_word: s.end_word })
                    .collect(),
            });
            turns.push(Turn { speaker, utterance: rt.utterance, system_acts, labels });
        }
        dialogues.push(Dialogue { id: rd.id, turns });
    }
    Corpus::from_dialogues(dialogues)
}

fn to_raw(corpus: &Corpus) -> RawCorpus {
    RawCorpus {
        dialogues: corpus
            .dialogues
            .iter()
            .map(|d| RawDialogue {
                id: d.id.clone(),
                turns: d
                    .turns
                    .iter()
                    .map(|t| RawTurn {
                        speaker: match t.speaker {
                            Speaker::User => "user".to_string(),
                            Speaker::System => "system".to_string(),
                        },
                        utterance: t.utterance.clone(),
                        system_acts: match t.speaker {
                            Speaker::System => Some(
                                t.system_acts
                                    .iter()
                                    .map(|a| RawSystemAct { act: a.act_type.clone(), slot: a.slot.clone() })
                                    .collect(),
                            ),
                            Speaker::User => None,
                        },
                        labels: t.labels.as_ref().map(|f| RawFrame {
                            intent: f.intent.clone(),
                            user_acts: f.user_acts.iter().cloned().collect(),
                            slots: f
                                .slots
                                .iter()
                                .map(|s| RawSpan {
                                    slot: s.slot.clone(),
                                    start_word: s.start_word,
                                    end_word: s.end_word,
                                })
                                .collect(),
                        }),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Parses and fully validates corpus JSON.
pub fn parse_corpus(json: &str) -> Result<Corpus, DataError> {
    let raw: RawCorpus = serde_json::from_str(json)?;
    convert(raw)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, DataError> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

/// Deterministic JSON for a corpus (identical structure, identical bytes).
pub fn serialize_corpus(corpus: &Corpus) -> String {
    serde_json::to_string_pretty(&to_raw(corpus)).expect("corpus serialization cannot fail")
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, serialize_corpus(corpus))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"dialogues":[{"id":"d1","turns":[
        {"speaker":"user","utterance":"book a table",
         "labels":{"intent":"book","user_acts":["inform"],"slots":[]}}
    ]}]}"#;

    #[test]
    fn minimal_corpus_loads() {
        let c = parse_corpus(MINIMAL).unwrap();
        assert_eq!(c.dialogues.len(), 1);
        assert_eq!(c.intents, vec!["book"]);
    }

    #[test]
    fn span_end_past_word_count_cites_the_turn() {
        let json = r#"{"dialogues":[{"id":"bad","turns":[
            {"speaker":"user","utterance":"two words",
             "labels":{"intent":"x","user_acts":[],"slots":[{"slot":"t","start_word":0,"end_word":3}]}}
        ]}]}"#;
        match parse_corpus(json) {
            Err(DataError::SpanOutOfRange { dialogue, turn, .. }) => {
                assert_eq!(dialogue, "bad");
                assert_eq!(turn, 0);
            }
            other => panic!("expected SpanOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn user_turn_with_system_acts_is_schema_error() {
        let json = r#"{"dialogues":[{"id":"d","turns":[
            {"speaker":"user","utterance":"hi","system_acts":[{"act":"greet","slot":null}]}
        ]}]}"#;
        assert!(matches!(parse_corpus(json), Err(DataError::UserTurnWithSystemActs { .. })));
    }

    #[test]
    fn malformed_json_is_distinct_error() {
        assert!(matches!(parse_corpus("{not json"), Err(DataError::Malformed(_))));
    }

    #[test]
    fn unknown_field_rejected() {
        let json = r#"{"dialogues":[{"id":"d","turns":[],"extra":1}]}"#;
        assert!(matches!(parse_corpus(json), Err(DataError::Malformed(_))));
    }

    #[test]
    fn round_trip_preserves_structure() {
        let c = parse_corpus(MINIMAL).unwrap();
        let json = serialize_corpus(&c);
        let c2 = parse_corpus(&json).unwrap();
        assert_eq!(serialize_corpus(&c2), json);
        assert_eq!(c2.dialogues[0].turns[0].utterance, "book a table");
    }
}
