//! Shared harness plumbing: corpus → inputs, prediction over a corpus,
//! and report generation.

use super::TrainError;
use crate::data::{build_input_sequence, Corpus, ModelInput, SemanticFrame, Speaker};
use crate::evaluation::{build_report, MetricsReport};
use crate::model::{predict_frame, LabelVocabs, ModelConfig, ModelParameters};
use crate::scalar::Scalar;
use crate::tokenizer::Vocab;

/// Encoder inputs for every labeled user turn, in corpus order.
pub fn build_supervised_inputs(
    corpus: &Corpus,
    vocab: &Vocab,
    config: &ModelConfig,
) -> Result<Vec<ModelInput>, TrainError> {
    let mut out = Vec::new();
    for (di, ti) in corpus.labeled_user_turns() {
        out.push(build_input_sequence(
            &corpus.dialogues[di],
            ti,
            vocab,
            corpus,
            &config.input_build_config(),
        )?);
    }
    Ok(out)
}

/// Gold frames aligned with [`build_supervised_inputs`].
pub fn gold_frames(corpus: &Corpus) -> Vec<SemanticFrame> {
    corpus
        .dialogues
        .iter()
        .flat_map(|d| d.turns.iter())
        .filter(|t| t.speaker == Speaker::User)
        .filter_map(|t| t.labels.clone())
        .collect()
}

/// Frame predictions for every labeled user turn, in corpus order.
pub fn predict_corpus<F: Scalar>(
    params: &ModelParameters<F>,
    config: &ModelConfig,
    corpus: &Corpus,
    vocab: &Vocab,
    labels: &LabelVocabs,
    t_u: f64,
) -> Result<Vec<SemanticFrame>, TrainError> {
    let inputs = build_supervised_inputs(corpus, vocab, config)?;
    Ok(inputs.iter().map(|i| predict_frame(i, params, config, t_u, labels)).collect())
}

/// Predicts and scores a labeled corpus. User acts join the frame
/// conjunction exactly when the corpus annotates any.
pub fn evaluate_corpus<F: Scalar>(
    params: &ModelParameters<F>,
    config: &ModelConfig,
    corpus: &Corpus,
    vocab: &Vocab,
    labels: &LabelVocabs,
    t_u: f64,
) -> Result<MetricsReport, TrainError> {
    let pred = predict_corpus(params, config, corpus, vocab, labels, t_u)?;
    let gold = gold_frames(corpus);
    let include_acts = !corpus.user_acts.is_empty();
    Ok(build_report(&pred, &gold, include_acts)?)
}
