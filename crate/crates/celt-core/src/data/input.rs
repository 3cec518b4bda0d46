//! Assembly of one model input from a dialogue position.
//!
//! Layout with history:
//!   `[CLS] u¹ [EOU] s¹ [EOU] … [EOU] [SEP] q₁…q_T [SEP]`
//! and without history (or when truncation drops it all):
//!   `[CLS] q₁…q_T [SEP]`
//!
//! Segment ids are 0 up to and including the first `[SEP]` and 1 after;
//! speaker ids tag utterance tokens by their turn's speaker, with a
//! third "non-utterance" id for specials; the system-act n-hot vector
//! comes from the most recent system turn before the query. When the
//! sequence overflows the length budget, whole oldest history turns are
//! dropped first — the query itself is never truncated.

use super::{bio_encode, Corpus, DataError, Dialogue, Speaker};
use crate::tokenizer::{encode_utterance, Vocab};

pub const SPEAKER_USER: usize = 0;
pub const SPEAKER_SYSTEM: usize = 1;
/// Specials ([CLS]/[SEP]/[EOU]/[PAD]) carry this speaker id.
pub const SPEAKER_NONE: usize = 2;

#[derive(Debug, Clone, Copy)]
pub struct InputBuildConfig {
    pub max_sequence_length: usize,
    /// When false, history utterances are omitted entirely (the
    /// system-act vector is still populated).
    pub include_context: bool,
}

/// Gold targets for one labeled user turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Targets {
    pub intent: usize,
    /// n-hot over the user-act vocabulary.
    pub user_acts: Vec<u8>,
    /// BIO tag id per query word.
    pub slot_tags: Vec<usize>,
}

/// One training or inference example.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub token_ids: Vec<usize>,
    pub position_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub speaker_ids: Vec<usize>,
    /// n-hot over the system-act vocabulary (0/1 entries).
    pub system_act_nhot: Vec<u8>,
    /// Absolute index of each query word's first subtoken.
    pub word_starts: Vec<usize>,
    /// First token of the current-query region.
    pub query_start: usize,
    /// One past the last query token (the trailing `[SEP]`).
    pub query_end: usize,
    /// 1 for real tokens, 0 for padding.
    pub attention_mask: Vec<u8>,
    pub targets: Option<Targets>,
}

impl ModelInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Extends the example with `[PAD]` columns up to `len`.
    pub fn pad_to(&self, len: usize, pad_id: usize) -> ModelInput {
        assert!(len >= self.len(), "pad_to: {} < current length {}", len, self.len());
        let mut out = self.clone();
        while out.token_ids.len() < len {
            out.position_ids.push(out.token_ids.len());
            out.token_ids.push(pad_id);
            out.segment_ids.push(0);
            out.speaker_ids.push(SPEAKER_NONE);
            out.attention_mask.push(0);
        }
        out
    }
}

/// Builds the encoder input for the user turn at `turn_index`.
pub fn build_input_sequence(
    dialogue: &Dialogue,
    turn_index: usize,
    vocab: &Vocab,
    corpus: &Corpus,
    config: &InputBuildConfig,
) -> Result<ModelInput, DataError> {
    let turn = &dialogue.turns[turn_index];
    if turn.speaker != Speaker::User {
        return Err(DataError::NotUserTurn { dialogue: dialogue.id.clone(), turn: turn_index });
    }
    let query = encode_utterance(&turn.utterance, vocab);
    // [CLS] + query + trailing [SEP] must fit even with all history dropped
    if 2 + query.ids.len() > config.max_sequence_length {
        return Err(DataError::QueryTooLong {
            query_tokens: query.ids.len(),
            max: config.max_sequence_length,
        });
    }

    // encode history turns, then drop whole oldest turns until we fit
    let mut history: Vec<(usize, Vec<usize>)> = Vec::new();
    if config.include_context {
        for t in &dialogue.turns[..turn_index] {
            let speaker_id = match t.speaker {
                Speaker::User => SPEAKER_USER,
                Speaker::System => SPEAKER_SYSTEM,
            };
            history.push((speaker_id, encode_utterance(&t.utterance, vocab).ids));
        }
    }
    let mut drop_from = 0;
    loop {
        let kept = &history[drop_from..];
        let hist_tokens: usize = kept.iter().map(|(_, ids)| ids.len() + 1).sum();
        let sep_for_history = usize::from(!kept.is_empty());
        let total = 1 + hist_tokens + sep_for_history + query.ids.len() + 1;
        if total <= config.max_sequence_length {
            break;
        }
        drop_from += 1;
    }

    let mut token_ids = vec![vocab.cls_id()];
    let mut speaker_ids = vec![SPEAKER_NONE];
    for (speaker, ids) in &history[drop_from..] {
        token_ids.extend_from_slice(ids);
        speaker_ids.extend(std::iter::repeat(*speaker).take(ids.len()));
        token_ids.push(vocab.eou_id());
        speaker_ids.push(SPEAKER_NONE);
    }
    // non-empty kept history gets its separating [SEP]
    if history.len() > drop_from {
        token_ids.push(vocab.sep_id());
        speaker_ids.push(SPEAKER_NONE);
    }
    let query_start = token_ids.len();
    token_ids.extend_from_slice(&query.ids);
    let query_end = token_ids.len();
    speaker_ids.extend(std::iter::repeat(SPEAKER_USER).take(query.ids.len()));
    token_ids.push(vocab.sep_id());
    speaker_ids.push(SPEAKER_NONE);

    // segment rule: 0 through the first [SEP] inclusive, 1 after
    let first_sep = token_ids
        .iter()
        .position(|&id| id == vocab.sep_id())
        .expect("assembled sequence always contains a [SEP]");
    let segment_ids: Vec<usize> =
        (0..token_ids.len()).map(|i| usize::from(i > first_sep)).collect();

    let position_ids: Vec<usize> = (0..token_ids.len()).collect();
    let word_starts: Vec<usize> = query.word_starts.iter().map(|&w| query_start + w).collect();

    // acts of the most recent system turn before the query; zeros if none
    let mut system_act_nhot = vec![0u8; corpus.system_acts.len()];
    if let Some(sys) = dialogue.turns[..turn_index].iter().rev().find(|t| t.speaker == Speaker::System)
    {
        for act in &sys.system_acts {
            let idx = corpus.system_act_id(&act.canonical())?;
            system_act_nhot[idx] = 1;
        }
    }

    let targets = match &turn.labels {
        Some(frame) => {
            let intent = corpus.intent_id(&frame.intent)?;
            let mut user_acts = vec![0u8; corpus.user_acts.len()];
            for act in &frame.user_acts {
                user_acts[corpus.user_act_id(act)?] = 1;
            }
            let tag_vocab = corpus.slot_tags();
            let tags = bio_encode(&frame.slots, turn.word_count())?;
            let slot_tags = tags
                .iter()
                .map(|t| {
                    tag_vocab.iter().position(|v| v == t).ok_or_else(|| DataError::UnknownLabel {
                        kind: "slot tag",
                        label: t.clone(),
                    })
                })
                .collect::<Result<Vec<usize>, DataError>>()?;
            Some(Targets { intent, user_acts, slot_tags })
        }
        None => None,
    };

    let attention_mask = vec![1u8; token_ids.len()];
    Ok(ModelInput {
        token_ids,
        position_ids,
        segment_ids,
        speaker_ids,
        system_act_nhot,
        word_starts,
        query_start,
        query_end,
        attention_mask,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SemanticFrame, SlotSpan, SystemAct, Turn};
    use crate::tokenizer::build_vocab;
    use std::collections::BTreeSet;

    fn fixture() -> (Dialogue, Corpus, Vocab) {
        let frame = |intent: &str, slots: Vec<SlotSpan>| SemanticFrame {
            intent: intent.into(),
            user_acts: BTreeSet::from(["inform".to_string()]),
            slots,
        };
        let d = Dialogue {
            id: "d0".into(),
            turns: vec![
                Turn::user("book a table", Some(frame("book", vec![]))),
                Turn::system("which date", vec![SystemAct::new("request", Some("date"))]),
                Turn::user("friday", Some(frame("book", vec![SlotSpan::new("date", 0, 1)]))),
                Turn::system("what time", vec![SystemAct::new("request", Some("time"))]),
                Turn::user("5 at sakoon", Some(frame("book", vec![SlotSpan::new("people", 0, 1)]))),
            ],
        };
        let corpus = Corpus::from_dialogues(vec![d.clone()]).unwrap();
        // repeat the text so every merge clears the ≥2 frequency floor and
        // each word becomes a single piece
        let text = "book a table which date friday what time 5 at sakoon\n".repeat(3);
        let vocab = build_vocab(&text, 96).unwrap();
        (d, corpus, vocab)
    }

    fn cfg(max: usize) -> InputBuildConfig {
        InputBuildConfig { max_sequence_length: max, include_context: true }
    }

    #[test]
    fn single_turn_layout_has_one_sep_and_zero_segments() {
        let (d, corpus, vocab) = fixture();
        let input = build_input_sequence(&d, 0, &vocab, &corpus, &cfg(64)).unwrap();
        assert_eq!(input.token_ids[0], vocab.cls_id());
        assert_eq!(*input.token_ids.last().unwrap(), vocab.sep_id());
        let seps = input.token_ids.iter().filter(|&&t| t == vocab.sep_id()).count();
        assert_eq!(seps, 1);
        assert!(input.token_ids.iter().all(|&t| t != vocab.eou_id()));
        assert!(input.segment_ids.iter().all(|&s| s == 0));
        // no preceding system turn: all-zero act vector
        assert!(input.system_act_nhot.iter().all(|&b| b == 0));
    }

    #[test]
    fn full_history_layout() {
        let (d, corpus, vocab) = fixture();
        let input = build_input_sequence(&d, 4, &vocab, &corpus, &cfg(64)).unwrap();
        // [CLS] u1(3) [EOU] s1(2) [EOU] u2(1) [EOU] s2(2) [EOU] [SEP] q(3) [SEP]
        let toks: Vec<&str> = input.token_ids.iter().map(|&t| vocab.token(t)).collect();
        assert_eq!(
            toks,
            vec![
                "[CLS]", "book", "a", "table", "[EOU]", "which", "date", "[EOU]", "friday",
                "[EOU]", "what", "time", "[EOU]", "[SEP]", "5", "at", "sakoon", "[SEP]"
            ]
        );
        // segments: 0 through the history [SEP] at index 13, then 1
        for (i, &s) in input.segment_ids.iter().enumerate() {
            assert_eq!(s, usize::from(i > 13), "segment at {i}");
        }
        // speakers: specials 2, history turns by speaker, query user
        assert_eq!(input.speaker_ids[1], SPEAKER_USER);
        assert_eq!(input.speaker_ids[5], SPEAKER_SYSTEM);
        assert_eq!(input.speaker_ids[4], SPEAKER_NONE);
        assert_eq!(input.speaker_ids[14], SPEAKER_USER);
        // positions are 0..T
        assert_eq!(input.position_ids, (0..18).collect::<Vec<_>>());
        // word starts point at the query region
        assert_eq!(input.word_starts, vec![14, 15, 16]);
        // most recent system turn was request(time) — index in sorted vocab
        let time_idx = corpus.system_act_id("request(time)").unwrap();
        let date_idx = corpus.system_act_id("request(date)").unwrap();
        assert_eq!(input.system_act_nhot[time_idx], 1);
        assert_eq!(input.system_act_nhot[date_idx], 0);
    }

    #[test]
    fn truncation_drops_whole_oldest_turns_first() {
        let (d, corpus, vocab) = fixture();
        let full = build_input_sequence(&d, 4, &vocab, &corpus, &cfg(64)).unwrap();
        assert_eq!(full.len(), 18);
        // budget of 14 forces dropping u1 (4 tokens incl [EOU])
        let trimmed = build_input_sequence(&d, 4, &vocab, &corpus, &cfg(14)).unwrap();
        let toks: Vec<&str> = trimmed.token_ids.iter().map(|&t| vocab.token(t)).collect();
        assert_eq!(
            toks,
            vec![
                "[CLS]", "which", "date", "[EOU]", "friday", "[EOU]", "what", "time", "[EOU]",
                "[SEP]", "5", "at", "sakoon", "[SEP]"
            ]
        );
        // dropping everything reverts to the single-turn layout
        let bare = build_input_sequence(&d, 4, &vocab, &corpus, &cfg(5)).unwrap();
        let toks: Vec<&str> = bare.token_ids.iter().map(|&t| vocab.token(t)).collect();
        assert_eq!(toks, vec!["[CLS]", "5", "at", "sakoon", "[SEP]"]);
    }

    #[test]
    fn oversized_query_is_an_error() {
        let (d, corpus, vocab) = fixture();
        let err = build_input_sequence(&d, 4, &vocab, &corpus, &cfg(4)).unwrap_err();
        assert!(matches!(err, DataError::QueryTooLong { .. }));
    }

    #[test]
    fn system_turn_index_is_rejected() {
        let (d, corpus, vocab) = fixture();
        let err = build_input_sequence(&d, 1, &vocab, &corpus, &cfg(64)).unwrap_err();
        assert!(matches!(err, DataError::NotUserTurn { .. }));
    }

    #[test]
    fn no_context_mode_keeps_act_vector() {
        let (d, corpus, vocab) = fixture();
        let config = InputBuildConfig { max_sequence_length: 64, include_context: false };
        let input = build_input_sequence(&d, 4, &vocab, &corpus, &config).unwrap();
        let toks: Vec<&str> = input.token_ids.iter().map(|&t| vocab.token(t)).collect();
        assert_eq!(toks, vec!["[CLS]", "5", "at", "sakoon", "[SEP]"]);
        let time_idx = corpus.system_act_id("request(time)").unwrap();
        assert_eq!(input.system_act_nhot[time_idx], 1);
    }

    #[test]
    fn targets_encode_intent_acts_and_bio_tags() {
        let (d, corpus, vocab) = fixture();
        let input = build_input_sequence(&d, 4, &vocab, &corpus, &cfg(64)).unwrap();
        let t = input.targets.unwrap();
        assert_eq!(t.intent, corpus.intent_id("book").unwrap());
        assert_eq!(t.user_acts, vec![1]);
        let tags = corpus.slot_tags();
        assert_eq!(tags[t.slot_tags[0]], "B-people");
        assert_eq!(tags[t.slot_tags[1]], "O");
        assert_eq!(tags[t.slot_tags[2]], "O");
    }

    #[test]
    fn zero_history_input_is_independent_of_context_configuration() {
        // a history-free input holds only query tokens and specials, so
        // the context/speaker configuration cannot reach it
        let (d, corpus, vocab) = fixture();
        let with_ctx = build_input_sequence(&d, 0, &vocab, &corpus, &cfg(64)).unwrap();
        let config = InputBuildConfig { max_sequence_length: 64, include_context: false };
        let without_ctx = build_input_sequence(&d, 0, &vocab, &corpus, &config).unwrap();
        assert_eq!(with_ctx, without_ctx);
    }

    #[test]
    fn padding_extends_with_masked_pad_columns() {
        let (d, corpus, vocab) = fixture();
        let input = build_input_sequence(&d, 0, &vocab, &corpus, &cfg(64)).unwrap();
        let padded = input.pad_to(12, vocab.pad_id());
        assert_eq!(padded.len(), 12);
        assert_eq!(&padded.token_ids[..input.len()], &input.token_ids[..]);
        assert!(padded.token_ids[input.len()..].iter().all(|&t| t == vocab.pad_id()));
        assert!(padded.attention_mask[input.len()..].iter().all(|&m| m == 0));
        assert_eq!(padded.position_ids, (0..12).collect::<Vec<_>>());
    }
}
