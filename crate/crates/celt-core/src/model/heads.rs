//! Classifier heads over the encoder output, the joint loss, and
//! end-to-end frame prediction.
//!
//! Intent and user-act heads read h₁ (the [CLS] state) through separate
//! tanh feed-forward layers; the slot head reads each query word's
//! first-subtoken state through a GELU feed-forward layer, optionally
//! rescored by the CRF.

use super::{
    attention_mask_row, crf_decode, crf_negative_log_likelihood, embed_input, encode, ForwardMode,
    HeadParams, ModelConfig, ModelParameters,
};
use crate::data::{bio_decode, ModelInput, SemanticFrame, SlotSpan, Targets};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Label-id → string tables needed to turn head outputs into a frame.
#[derive(Debug, Clone)]
pub struct LabelVocabs {
    pub intents: Vec<String>,
    pub user_acts: Vec<String>,
    pub slot_tags: Vec<String>,
}

impl From<&crate::data::Corpus> for LabelVocabs {
    fn from(corpus: &crate::data::Corpus) -> Self {
        LabelVocabs {
            intents: corpus.intents.clone(),
            user_acts: corpus.user_acts.clone(),
            slot_tags: corpus.slot_tags(),
        }
    }
}

/// Which loss terms are active (disabled heads contribute zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossMask {
    pub intent: bool,
    pub user_acts: bool,
    pub slots: bool,
}

impl LossMask {
    pub fn all() -> Self {
        LossMask { intent: true, user_acts: true, slots: true }
    }
}

/// Logits from the three heads for one example.
pub struct HeadOutputs<F: Scalar> {
    pub intent_logits: Tensor<F>,
    pub user_act_logits: Tensor<F>,
    /// `[W×L]` slot-tag logits, one row per query word.
    pub slot_logits: Tensor<F>,
}

fn tanh_ff<F: Scalar>(x: &Tensor<F>, head: &HeadParams<F>) -> Tensor<F> {
    x.matmul(&head.ff_w).add_row(&head.ff_b).tanh_act()
}

fn gelu_ff<F: Scalar>(x: &Tensor<F>, head: &HeadParams<F>) -> Tensor<F> {
    x.matmul(&head.ff_w).add_row(&head.ff_b).gelu()
}

/// `[1×I]` intent logits from the [CLS] state.
pub fn intent_logits<F: Scalar>(h_cls: &Tensor<F>, params: &ModelParameters<F>) -> Tensor<F> {
    tanh_ff(h_cls, &params.intent_head).matmul(&params.intent_head.w).add_row(&params.intent_head.b)
}

/// Intent probability vector (softmax over logits).
pub fn predict_intent<F: Scalar>(h_cls: &Tensor<F>, params: &ModelParameters<F>) -> Tensor<F> {
    intent_logits(h_cls, params).softmax(1)
}

/// `[1×A]` user-act logits from the [CLS] state.
pub fn user_act_logits<F: Scalar>(h_cls: &Tensor<F>, params: &ModelParameters<F>) -> Tensor<F> {
    tanh_ff(h_cls, &params.user_act_head)
        .matmul(&params.user_act_head.w)
        .add_row(&params.user_act_head.b)
}

/// Elementwise logistic sigmoid on raw logit values.
pub fn sigmoid_probs<F: Scalar>(logits: &Tensor<F>) -> Vec<F> {
    logits
        .to_vec()
        .into_iter()
        .map(|z| {
            if z >= F::zero() {
                F::one() / (F::one() + (-z).exp())
            } else {
                let e = z.exp();
                e / (F::one() + e)
            }
        })
        .collect()
}

/// Per-act probabilities and the set with p > t_u (strict).
pub fn predict_user_acts<F: Scalar>(
    h_cls: &Tensor<F>,
    params: &ModelParameters<F>,
    t_u: f64,
) -> (Vec<F>, Vec<usize>) {
    assert!(t_u > 0.0 && t_u < 1.0, "threshold t_u must lie in (0,1), got {t_u}");
    let probs = sigmoid_probs(&user_act_logits(h_cls, params));
    let threshold = F::from_f64c(t_u);
    let chosen = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > threshold)
        .map(|(k, _)| k)
        .collect();
    (probs, chosen)
}

/// `[W×L]` slot-tag logits from the first-subtoken states.
pub fn slot_logits<F: Scalar>(
    encoder_output: &Tensor<F>,
    word_starts: &[usize],
    params: &ModelParameters<F>,
) -> Tensor<F> {
    let t = encoder_output.shape()[0];
    for &w in word_starts {
        assert!(w < t, "word start {w} out of range for {t} hidden states");
    }
    let states = encoder_output.lookup_rows(word_starts);
    gelu_ff(&states, &params.slot_head).matmul(&params.slot_head.w).add_row(&params.slot_head.b)
}

/// Per-word tag distributions (softmax rows of the slot logits).
pub fn predict_slots<F: Scalar>(
    encoder_output: &Tensor<F>,
    word_starts: &[usize],
    params: &ModelParameters<F>,
) -> Tensor<F> {
    slot_logits(encoder_output, word_starts, params).softmax(1)
}

/// Σ over rows of softmax cross-entropy against the target ids.
pub fn cross_entropy_rows<F: Scalar>(logits: &Tensor<F>, targets: &[usize]) -> Tensor<F> {
    let shape = logits.shape();
    assert_eq!(
        targets.len(),
        shape[0],
        "cross_entropy_rows: {} targets for {} rows",
        targets.len(),
        shape[0]
    );
    let cols = shape[1];
    let flat: Vec<usize> = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            assert!(t < cols, "target {t} out of range for {cols} classes");
            i * cols + t
        })
        .collect();
    logits.logsumexp(1).sub(&logits.pick(&flat)).sum_all()
}

/// Joint objective: softmax CE for the intent, per-word softmax CE (or
/// CRF negative log-likelihood) for slots, summed sigmoid CE for user
/// acts. Heads disabled in `mask` contribute exactly zero.
pub fn joint_loss<F: Scalar>(
    outputs: &HeadOutputs<F>,
    targets: &Targets,
    params: &ModelParameters<F>,
    config: &ModelConfig,
    mask: &LossMask,
) -> Tensor<F> {
    let mut loss = Tensor::scalar(F::zero());
    if mask.intent {
        loss = loss.add(&cross_entropy_rows(&outputs.intent_logits, &[targets.intent]));
    }
    if mask.slots && !targets.slot_tags.is_empty() {
        let slot_term = if config.use_crf {
            let crf = params.crf.as_ref().expect("use_crf set but CRF parameters missing");
            crf_negative_log_likelihood(&outputs.slot_logits, &targets.slot_tags, crf)
        } else {
            cross_entropy_rows(&outputs.slot_logits, &targets.slot_tags)
        };
        loss = loss.add(&slot_term);
    }
    if mask.user_acts {
        let y: Vec<F> = targets.user_acts.iter().map(|&b| F::from_f64c(b as f64)).collect();
        loss = loss.add(&outputs.user_act_logits.sigmoid_bce_sum(&y));
    }
    loss
}

/// Full forward pass producing the three heads' logits.
pub fn forward_heads<F: Scalar>(
    input: &ModelInput,
    params: &ModelParameters<F>,
    config: &ModelConfig,
    mode: &mut ForwardMode<'_>,
) -> HeadOutputs<F> {
    let mask: Vec<F> = attention_mask_row(&input.attention_mask);
    let needs_mask = input.attention_mask.iter().any(|&m| m == 0);
    let embedded = embed_input(input, params, config, mode);
    let hidden = encode(embedded, params, if needs_mask { Some(&mask) } else { None }, mode);
    let h_cls = hidden.slice_rows(0, 1);
    HeadOutputs {
        intent_logits: intent_logits(&h_cls, params),
        user_act_logits: user_act_logits(&h_cls, params),
        slot_logits: slot_logits(&hidden, &input.word_starts, params),
    }
}

fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference: embed, encode, argmax intent, threshold acts, decode slots
/// (argmax rows, or Viterbi when the CRF is enabled), then BIO spans.
pub fn predict_frame<F: Scalar>(
    input: &ModelInput,
    params: &ModelParameters<F>,
    config: &ModelConfig,
    t_u: f64,
    labels: &LabelVocabs,
) -> SemanticFrame {
    let outputs = forward_heads(input, params, config, &mut ForwardMode::Eval);
    let intent_row = outputs.intent_logits.to_vec();
    let intent = labels.intents[argmax(&intent_row)].clone();

    let (_, act_ids) = {
        let probs = sigmoid_probs(&outputs.user_act_logits);
        let threshold = F::from_f64c(t_u);
        let chosen: Vec<usize> = probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > threshold)
            .map(|(k, _)| k)
            .collect();
        (probs, chosen)
    };
    let user_acts = act_ids.iter().map(|&k| labels.user_acts[k].clone()).collect();

    let tag_ids: Vec<usize> = if input.word_starts.is_empty() {
        Vec::new()
    } else if config.use_crf {
        let crf = params.crf.as_ref().expect("use_crf set but CRF parameters missing");
        crf_decode(&outputs.slot_logits, crf)
    } else {
        let num_tags = outputs.slot_logits.shape()[1];
        let flat = outputs.slot_logits.to_vec();
        (0..input.word_starts.len())
            .map(|w| argmax(&flat[w * num_tags..(w + 1) * num_tags]))
            .collect()
    };
    let tags: Vec<String> = tag_ids.iter().map(|&t| labels.slot_tags[t].clone()).collect();
    let slots: Vec<SlotSpan> = bio_decode(&tags);
    SemanticFrame { intent, user_acts, slots }
}
