//! Next-sentence-prediction pairs from dialogues or plain text.
//!
//! A document is a dialogue (units = turns) or a blank-line-delimited
//! text block (units = lines). Half the pairs keep the true following
//! unit; half substitute a uniformly random unit from another document.

use super::TrainError;
use crate::data::{ModelInput, SPEAKER_NONE, SPEAKER_SYSTEM, SPEAKER_USER};
use crate::data::{Corpus, Speaker};
use crate::tokenizer::{encode_utterance, Vocab};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One ordered source of adjacent units.
#[derive(Debug, Clone)]
pub struct NspDocument {
    /// (speaker id, subtoken ids) per unit.
    pub units: Vec<(usize, Vec<usize>)>,
}

/// A rendered pair: segment A, segment B, and whether B truly followed A.
#[derive(Debug, Clone)]
pub struct PairExample {
    pub input: ModelInput,
    pub is_next: bool,
}

pub fn nsp_units_from_corpus(corpus: &Corpus, vocab: &Vocab) -> Vec<NspDocument> {
    corpus
        .dialogues
        .iter()
        .map(|d| NspDocument {
            units: d
                .turns
                .iter()
                .map(|t| {
                    let speaker = match t.speaker {
                        Speaker::User => SPEAKER_USER,
                        Speaker::System => SPEAKER_SYSTEM,
                    };
                    (speaker, encode_utterance(&t.utterance, vocab).ids)
                })
                .collect(),
        })
        .collect()
}

/// Documents are blank-line-separated; one sentence per line. Text
/// carries the non-utterance speaker id.
pub fn nsp_units_from_text(text: &str, vocab: &Vocab) -> Vec<NspDocument> {
    let mut docs = Vec::new();
    let mut current: Vec<(usize, Vec<usize>)> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(NspDocument { units: std::mem::take(&mut current) });
            }
            continue;
        }
        let ids = encode_utterance(line, vocab).ids;
        if !ids.is_empty() {
            current.push((SPEAKER_NONE, ids));
        }
    }
    if !current.is_empty() {
        docs.push(NspDocument { units: current });
    }
    docs
}

/// Renders `[CLS] A [SEP] B [SEP]` with segment 0 through the first
/// `[SEP]` and 1 after; tokens keep their unit's speaker id.
pub fn render_pair(
    a: &(usize, Vec<usize>),
    b: &(usize, Vec<usize>),
    vocab: &Vocab,
    num_system_acts: usize,
) -> ModelInput {
    let mut token_ids = vec![vocab.cls_id()];
    let mut speaker_ids = vec![SPEAKER_NONE];
    token_ids.extend_from_slice(&a.1);
    speaker_ids.extend(std::iter::repeat(a.0).take(a.1.len()));
    token_ids.push(vocab.sep_id());
    speaker_ids.push(SPEAKER_NONE);
    let first_sep = token_ids.len() - 1;
    let query_start = token_ids.len();
    token_ids.extend_from_slice(&b.1);
    speaker_ids.extend(std::iter::repeat(b.0).take(b.1.len()));
    let query_end = token_ids.len();
    token_ids.push(vocab.sep_id());
    speaker_ids.push(SPEAKER_NONE);
    let segment_ids: Vec<usize> = (0..token_ids.len()).map(|i| usize::from(i > first_sep)).collect();
    ModelInput {
        position_ids: (0..token_ids.len()).collect(),
        segment_ids,
        speaker_ids,
        system_act_nhot: vec![0u8; num_system_acts],
        word_starts: Vec::new(),
        query_start,
        query_end,
        attention_mask: vec![1u8; token_ids.len()],
        targets: None,
        token_ids,
    }
}

/// Builds labeled pairs over every adjacent unit pair. Needs at least
/// two documents with units (negatives must come from another document)
/// and at least one adjacent pair.
pub fn make_nsp_pairs(
    docs: &[NspDocument],
    vocab: &Vocab,
    num_system_acts: usize,
    max_sequence_length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PairExample>, TrainError> {
    let nonempty: Vec<usize> =
        (0..docs.len()).filter(|&i| !docs[i].units.is_empty()).collect();
    if nonempty.len() < 2 {
        return Err(TrainError::CorpusTooSmall(format!(
            "{} documents with units; negatives need another document",
            nonempty.len()
        )));
    }
    let mut pairs = Vec::new();
    for (di, doc) in docs.iter().enumerate() {
        for ui in 0..doc.units.len().saturating_sub(1) {
            let a = &doc.units[ui];
            let (b, is_next) = if rng.gen_bool(0.5) {
                (doc.units[ui + 1].clone(), true)
            } else {
                // uniformly random unit from another document
                let other = loop {
                    let cand = nonempty[rng.gen_range(0..nonempty.len())];
                    if cand != di {
                        break cand;
                    }
                };
                let units = &docs[other].units;
                (units[rng.gen_range(0..units.len())].clone(), false)
            };
            let input = render_pair(a, &b, vocab, num_system_acts);
            if input.len() <= max_sequence_length {
                pairs.push(PairExample { input, is_next });
            }
        }
    }
    if pairs.is_empty() {
        return Err(TrainError::CorpusTooSmall(
            "no adjacent unit pair fits the sequence budget".into(),
        ));
    }
    Ok(pairs)
}
