//! Subword tokenizer with trainable vocabulary and word alignment.
//!
//! Vocabulary training counts adjacent-pair merge frequencies over the
//! corpus words and emits continuation pieces in the `##` style; greedy
//! longest-match segmentation and the slot-alignment map (first subtoken
//! of each whitespace word) consume it. Normalization is lowercasing plus
//! whitespace splitting, nothing else.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use thiserror::Error;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const EOU: &str = "[EOU]";
pub const MASK: &str = "[MASK]";

pub const SPECIALS: [&str; 6] = [PAD, UNK, CLS, SEP, EOU, MASK];

/// Words longer than this map straight to `[UNK]`, bounding greedy matching.
pub const MAX_WORD_CHARS: usize = 64;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocabulary training requires a nonempty corpus")]
    EmptyCorpus,
    #[error("target size {requested} too small: specials + alphabet need {needed}")]
    TargetSizeTooSmall { requested: usize, needed: usize },
    #[error("vocabulary file: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary file missing special token {0}")]
    MissingSpecial(String),
    #[error("vocabulary file: [PAD] must have id 0, found id {0}")]
    PadNotZero(usize),
    #[error("vocabulary file: duplicate token {0:?} at line {1}")]
    DuplicateToken(String, usize),
}

/// Bijective token↔id mapping with the six special tokens.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if token_to_id.insert(tok.clone(), id).is_some() {
                return Err(TokenizerError::DuplicateToken(tok.clone(), id + 1));
            }
        }
        for sp in SPECIALS {
            if !token_to_id.contains_key(sp) {
                return Err(TokenizerError::MissingSpecial(sp.to_string()));
            }
        }
        if token_to_id[PAD] != 0 {
            return Err(TokenizerError::PadNotZero(token_to_id[PAD]));
        }
        Ok(Vocab { token_to_id, id_to_token: tokens })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    pub fn pad_id(&self) -> usize {
        self.token_to_id[PAD]
    }
    pub fn unk_id(&self) -> usize {
        self.token_to_id[UNK]
    }
    pub fn cls_id(&self) -> usize {
        self.token_to_id[CLS]
    }
    pub fn sep_id(&self) -> usize {
        self.token_to_id[SEP]
    }
    pub fn eou_id(&self) -> usize {
        self.token_to_id[EOU]
    }
    pub fn mask_id(&self) -> usize {
        self.token_to_id[MASK]
    }

    pub fn is_special(&self, id: usize) -> bool {
        id < self.id_to_token.len() && SPECIALS.contains(&self.id_to_token[id].as_str())
    }

    /// Ids of non-special tokens, e.g. as replacement candidates in
    /// masked-language-model corruption.
    pub fn non_special_ids(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_special(i)).collect()
    }

    /// One token per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut out = String::new();
        for tok in &self.id_to_token {
            out.push_str(tok);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Self::from_tokens(tokens)
    }
}

/// Subtoken ids for one utterance, with the index of each whitespace
/// word's first subtoken (the alignment used by the slot classifier).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedUtterance {
    pub ids: Vec<usize>,
    pub word_starts: Vec<usize>,
}

fn merge_symbols(left: &str, right: &str) -> String {
    debug_assert!(right.starts_with("##"), "continuation expected, got {right:?}");
    format!("{left}{}", &right[2..])
}

/// Trains a vocabulary of at most `target_size` pieces from raw text.
///
/// All specials and both forms of every seen character (word-initial and
/// `##` continuation) are always included; remaining slots are filled by
/// adjacent-pair merges in frequency order (ties broken lexicographically),
/// stopping early when no pair occurs at least twice.
pub fn build_vocab(corpus_text: &str, target_size: usize) -> Result<Vocab, TokenizerError> {
    let mut word_freq: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    let mut chars: BTreeMap<char, ()> = BTreeMap::new();
    let mut seen_any = false;
    for word in corpus_text.to_lowercase().split_whitespace() {
        seen_any = true;
        if word.chars().count() > MAX_WORD_CHARS {
            continue;
        }
        let mut symbols = Vec::new();
        for (i, c) in word.chars().enumerate() {
            chars.insert(c, ());
            if i == 0 {
                symbols.push(c.to_string());
            } else {
                symbols.push(format!("##{c}"));
            }
        }
        *word_freq.entry(symbols).or_insert(0) += 1;
    }
    if !seen_any {
        return Err(TokenizerError::EmptyCorpus);
    }

    let mut alphabet: Vec<String> = Vec::new();
    for c in chars.keys() {
        alphabet.push(c.to_string());
        alphabet.push(format!("##{c}"));
    }
    alphabet.sort();

    let needed = SPECIALS.len() + alphabet.len() + 1;
    if target_size < needed {
        return Err(TokenizerError::TargetSizeTooSmall { requested: target_size, needed });
    }

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet);
    let mut present: HashMap<String, ()> = tokens.iter().map(|t| (t.clone(), ())).collect();

    let mut words: Vec<(Vec<String>, u64)> = word_freq.into_iter().collect();
    while tokens.len() < target_size {
        let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (symbols, freq) in &words {
            for w in symbols.windows(2) {
                *pair_counts.entry((w[0].clone(), w[1].clone())).or_insert(0) += freq;
            }
        }
        // highest count wins; BTreeMap iteration makes the lexicographically
        // smallest pair win ties
        let best = pair_counts
            .iter()
            .fold(None::<(&(String, String), u64)>, |acc, (pair, &count)| match acc {
                Some((_, c)) if c >= count => acc,
                _ => Some((pair, count)),
            });
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let (left, right) = pair.clone();
        let merged = merge_symbols(&left, &right);
        for (symbols, _) in words.iter_mut() {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == left && symbols[i + 1] == right {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                }
                i += 1;
            }
        }
        if present.insert(merged.clone(), ()).is_none() {
            tokens.push(merged);
        }
    }
    Vocab::from_tokens(tokens)
}

/// Greedy longest-match-first segmentation. Continuation pieces carry
/// `##`; a word with any unmatchable remainder collapses to `[UNK]`.
pub fn tokenize_word(word: &str, vocab: &Vocab) -> Vec<usize> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return vec![vocab.unk_id()];
    }
    let mut ids = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut matched = None;
        for end in (start + 1..=chars.len()).rev() {
            let piece: String = chars[start..end].iter().collect();
            let candidate = if start == 0 { piece } else { format!("##{piece}") };
            if let Some(id) = vocab.id(&candidate) {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                ids.push(id);
                start = end;
            }
            None => return vec![vocab.unk_id()],
        }
    }
    ids
}

/// Lowercases, splits on whitespace, tokenizes each word, and records
/// each word's first-subtoken index.
pub fn encode_utterance(text: &str, vocab: &Vocab) -> TokenizedUtterance {
    let lowered = text.to_lowercase();
    let mut ids = Vec::new();
    let mut word_starts = Vec::new();
    for word in lowered.split_whitespace() {
        word_starts.push(ids.len());
        ids.extend(tokenize_word(word, vocab));
    }
    TokenizedUtterance { ids, word_starts }
}
