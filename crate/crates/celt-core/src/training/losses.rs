//! Stage-specific objectives on top of the model heads.

use super::{IcMode, TrainError};
use crate::model::{
    attention_mask_row, crf_negative_log_likelihood, cross_entropy_rows, embed_input, encode,
    ForwardMode, HeadOutputs, ModelConfig, ModelParameters,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::training::PairExample;
use crate::Tensor as T;

/// Masked-token + is-next objective from precomputed logits: mean
/// softmax cross-entropy over the vocabulary at predicted positions,
/// plus binary cross-entropy on the is-next logit. Zero positions leave
/// only the is-next term.
pub fn pretrain_loss<F: Scalar>(
    mlm_logits: Option<&Tensor<F>>,
    mlm_targets: &[usize],
    nsp_logit: &Tensor<F>,
    is_next: bool,
) -> Tensor<F> {
    let nsp_term =
        nsp_logit.sigmoid_bce_sum(&[if is_next { F::one() } else { F::zero() }]);
    match mlm_logits {
        Some(logits) if !mlm_targets.is_empty() => {
            let k = mlm_targets.len();
            let mlm_term =
                cross_entropy_rows(logits, mlm_targets).scale(F::one() / F::from_f64c(k as f64));
            mlm_term.add(&nsp_term)
        }
        _ => nsp_term,
    }
}

/// Forward pass for one corrupted pair example: encode, project the
/// predicted positions through the tied token-embedding output layer,
/// score is-next from the [CLS] state, and combine.
pub fn pretrain_forward_loss<F: Scalar>(
    pair: &PairExample,
    corrupted_ids: &[usize],
    mlm_positions: &[usize],
    mlm_targets: &[usize],
    params: &ModelParameters<F>,
    config: &ModelConfig,
    mode: &mut ForwardMode<'_>,
) -> Tensor<F> {
    let mut input = pair.input.clone();
    input.token_ids = corrupted_ids.to_vec();
    let mask: Vec<F> = attention_mask_row(&input.attention_mask);
    let needs_mask = input.attention_mask.iter().any(|&m| m == 0);
    let embedded = embed_input(&input, params, config, mode);
    let hidden = encode(embedded, params, if needs_mask { Some(&mask) } else { None }, mode);

    let mlm_logits = if mlm_positions.is_empty() {
        None
    } else {
        let states = hidden.lookup_rows(mlm_positions);
        Some(states.matmul_nt(&params.token_emb).add_row(&params.pretrain.mlm_bias))
    };
    let h_cls = hidden.slice_rows(0, 1);
    let nsp_logit = h_cls
        .matmul(&params.pretrain.nsp_w.reshape(&[config.hidden_size, 1]))
        .add_row(&params.pretrain.nsp_b);
    pretrain_loss(mlm_logits.as_ref(), mlm_targets, &nsp_logit, pair.is_next)
}

/// Intent targets for adaptive training; multiple intents are legal only
/// under the sigmoid intent mode.
#[derive(Debug, Clone)]
pub struct SupTargets {
    pub intents: Vec<usize>,
    pub slot_tags: Vec<usize>,
}

/// Combined intent + slot loss, no user-act term. Softmax mode demands a
/// single intent; sigmoid mode scores an n-hot intent target.
pub fn supervised_adaptive_loss<F: Scalar>(
    outputs: &HeadOutputs<F>,
    targets: &SupTargets,
    ic_mode: IcMode,
    params: &ModelParameters<F>,
    config: &ModelConfig,
) -> Result<Tensor<F>, TrainError> {
    let ic_term = match ic_mode {
        IcMode::Softmax => {
            if targets.intents.len() != 1 {
                return Err(TrainError::MultiIntentSoftmax);
            }
            cross_entropy_rows(&outputs.intent_logits, &[targets.intents[0]])
        }
        IcMode::Sigmoid => {
            let classes = outputs.intent_logits.shape()[1];
            let mut nhot = vec![F::zero(); classes];
            for &i in &targets.intents {
                nhot[i] = F::one();
            }
            outputs.intent_logits.sigmoid_bce_sum(&nhot)
        }
    };
    let sf_term: Tensor<F> = if targets.slot_tags.is_empty() {
        T::scalar(F::zero())
    } else if config.use_crf {
        let crf = params.crf.as_ref().expect("use_crf set but CRF parameters missing");
        crf_negative_log_likelihood(&outputs.slot_logits, &targets.slot_tags, crf)
    } else {
        cross_entropy_rows(&outputs.slot_logits, &targets.slot_tags)
    };
    Ok(ic_term.add(&sf_term))
}
