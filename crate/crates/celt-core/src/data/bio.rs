//! BIO tag codec for word-level slot spans.

use super::{validate_spans, DataError, SlotSpan, SpanIssue};

pub const TAG_OUTSIDE: &str = "O";

/// Sorted tag list: `O` first, then `B-`/`I-` per slot name.
pub fn tag_vocabulary(slot_names: &[String]) -> Vec<String> {
    let mut tags = vec![TAG_OUTSIDE.to_string()];
    let mut sorted: Vec<&String> = slot_names.iter().collect();
    sorted.sort();
    sorted.dedup();
    for name in sorted {
        tags.push(format!("B-{name}"));
        tags.push(format!("I-{name}"));
    }
    tags
}

/// Encodes non-overlapping spans as one tag per word.
pub fn bio_encode(spans: &[SlotSpan], word_count: usize) -> Result<Vec<String>, DataError> {
    validate_spans(spans, word_count).map_err(|e| match e {
        SpanIssue::Overlap => DataError::OverlappingBareSpans,
        SpanIssue::OutOfRange(s) | SpanIssue::Empty(s) => DataError::SpanOutOfRange {
            dialogue: String::new(),
            turn: 0,
            slot: s.slot.clone(),
            start_word: s.start_word,
            end_word: s.end_word,
            words: word_count,
        },
    })?;
    let mut tags = vec![TAG_OUTSIDE.to_string(); word_count];
    for s in spans {
        tags[s.start_word] = format!("B-{}", s.slot);
        for w in s.start_word + 1..s.end_word {
            tags[w] = format!("I-{}", s.slot);
        }
    }
    Ok(tags)
}

/// Decodes a tag sequence back to spans; total on ill-formed input.
///
/// A `B-x` always opens a span; an `I-x` continues a span of the same
/// type or, lacking one, leniently opens a new span. Unrecognized tags
/// read as `O`.
pub fn bio_decode(tags: &[String]) -> Vec<SlotSpan> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (w, tag) in tags.iter().enumerate() {
        let (kind, name) = match tag.split_once('-') {
            Some(("B", n)) => ('B', Some(n)),
            Some(("I", n)) => ('I', Some(n)),
            _ => ('O', None),
        };
        match (kind, name) {
            ('B', Some(n)) => {
                if let Some((slot, start)) = open.take() {
                    spans.push(SlotSpan::new(slot, start, w));
                }
                open = Some((n.to_string(), w));
            }
            ('I', Some(n)) => match &open {
                Some((slot, _)) if slot == n => {}
                _ => {
                    if let Some((slot, start)) = open.take() {
                        spans.push(SlotSpan::new(slot, start, w));
                    }
                    open = Some((n.to_string(), w));
                }
            },
            _ => {
                if let Some((slot, start)) = open.take() {
                    spans.push(SlotSpan::new(slot, start, w));
                }
            }
        }
    }
    if let Some((slot, start)) = open {
        spans.push(SlotSpan::new(slot, start, tags.len()));
    }
    spans
}
