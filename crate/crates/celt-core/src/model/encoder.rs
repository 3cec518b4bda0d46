//! Input embedding composition and the transformer encoder stack.

use super::{LayerParams, ModelConfig, ModelParameters};
use crate::data::ModelInput;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

const LN_EPS: f64 = 1e-12;
const MASK_NEG: f64 = -1e9;

/// Training applies dropout from its own substream; evaluation is pure.
pub enum ForwardMode<'a> {
    Eval,
    Train { dropout_p: f64, rng: &'a mut ChaCha8Rng },
}

impl ForwardMode<'_> {
    fn apply<F: Scalar>(&mut self, x: Tensor<F>) -> Tensor<F> {
        match self {
            ForwardMode::Eval => x,
            ForwardMode::Train { dropout_p, rng } => x.dropout(*dropout_p, true, rng),
        }
    }
}

/// Softmax-weight rows recorded during a traced forward pass.
pub struct AttentionTrace<F: Scalar> {
    pub layer: usize,
    pub head: usize,
    pub seq_len: usize,
    /// Row-major `[T×T]` attention probabilities.
    pub probs: Vec<F>,
}

/// Additive attention mask over key positions: 0 where real, −1e9 where
/// padded.
pub fn attention_mask_row<F: Scalar>(attention_mask: &[u8]) -> Vec<F> {
    attention_mask
        .iter()
        .map(|&m| if m == 1 { F::zero() } else { F::from_f64c(MASK_NEG) })
        .collect()
}

/// Per-position sum of token, position, segment and (when enabled)
/// speaker embeddings, plus the system-act embedding e^a = aᵀE^a added to
/// the broadcast region; dropout in training mode.
pub fn embed_input<F: Scalar>(
    input: &ModelInput,
    params: &ModelParameters<F>,
    config: &ModelConfig,
    mode: &mut ForwardMode<'_>,
) -> Tensor<F> {
    let t = input.token_ids.len();
    let pos_rows = params.position_emb.shape()[0];
    assert!(
        t <= pos_rows,
        "sequence of {t} tokens exceeds the position table ({pos_rows} rows)"
    );
    let mut x = params.token_emb.lookup_rows(&input.token_ids);
    x = x.add(&params.position_emb.lookup_rows(&input.position_ids));
    x = x.add(&params.segment_emb.lookup_rows(&input.segment_ids));
    if config.enable_speaker_embeddings {
        x = x.add(&params.speaker_emb.lookup_rows(&input.speaker_ids));
    }
    // the act term stays in the graph even for a zero vector, so the act
    // table always receives a (possibly zero) gradient under this config
    if config.enable_system_act_embeddings && config.num_system_acts > 0 {
        let nhot = Tensor::new(
            input.system_act_nhot.iter().map(|&b| F::from_f64c(b as f64)).collect(),
            &[1, input.system_act_nhot.len()],
        );
        let e_act = nhot.matmul(&params.system_act_emb);
        // selector column marks the rows that receive e^a
        let selector: Vec<F> = match config.system_act_broadcast {
            super::SystemActBroadcast::AllPositions => vec![F::one(); t],
            super::SystemActBroadcast::QueryOnly => (0..t)
                .map(|i| {
                    if i >= input.query_start && i < input.query_end {
                        F::one()
                    } else {
                        F::zero()
                    }
                })
                .collect(),
        };
        let sel = Tensor::new(selector, &[t, 1]);
        x = x.add(&sel.matmul(&e_act));
    }
    mode.apply(x)
}

/// softmax(QKᵀ/√d_k + mask)·V over one head.
pub fn scaled_dot_attention<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    mask_row: Option<&[F]>,
) -> Tensor<F> {
    scaled_dot_attention_traced(q, k, v, mask_row).0
}

fn scaled_dot_attention_traced<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    mask_row: Option<&[F]>,
) -> (Tensor<F>, Tensor<F>) {
    let dk = k.shape()[1];
    let scale = F::one() / F::from_f64c((dk as f64).sqrt());
    let mut scores = q.matmul_nt(k).scale(scale);
    if let Some(mask) = mask_row {
        scores = scores.add_const_row(mask);
    }
    let probs = scores.softmax(1);
    (probs.matmul(v), probs)
}

/// Multi-head self-attention: per-head projections of (x,x,x), scaled
/// dot-product attention, concatenation, output projection.
pub fn multi_head_attention<F: Scalar>(
    x: &Tensor<F>,
    layer: &LayerParams<F>,
    mask_row: Option<&[F]>,
    trace: Option<(&mut Vec<AttentionTrace<F>>, usize)>,
) -> Tensor<F> {
    let num_heads = layer.wq.len();
    let mut heads = Vec::with_capacity(num_heads);
    let mut probs_out = Vec::new();
    for h in 0..num_heads {
        let q = x.matmul(&layer.wq[h]);
        let k = x.matmul(&layer.wk[h]);
        let v = x.matmul(&layer.wv[h]);
        let (out, probs) = scaled_dot_attention_traced(&q, &k, &v, mask_row);
        if trace.is_some() {
            probs_out.push(probs);
        }
        heads.push(out);
    }
    if let Some((sink, layer_idx)) = trace {
        let t = x.shape()[0];
        for (h, probs) in probs_out.into_iter().enumerate() {
            sink.push(AttentionTrace { layer: layer_idx, head: h, seq_len: t, probs: probs.to_vec() });
        }
    }
    Tensor::concat_cols(&heads).matmul(&layer.wo)
}

/// Position-wise W₂·GELU(W₁x + b₁) + b₂.
pub fn feed_forward<F: Scalar>(
    x: &Tensor<F>,
    w1: &Tensor<F>,
    b1: &Tensor<F>,
    w2: &Tensor<F>,
    b2: &Tensor<F>,
) -> Tensor<F> {
    x.matmul(w1).add_row(b1).gelu().matmul(w2).add_row(b2)
}

/// The encoder stack. Each block applies post-norm residual sublayers:
/// `x ← LN(x + Drop(MHA(x)))`, then `x ← LN(x + Drop(FFN(x)))`.
/// Zero layers return the embedded input unchanged.
pub fn encode<F: Scalar>(
    embedded: Tensor<F>,
    params: &ModelParameters<F>,
    mask_row: Option<&[F]>,
    mode: &mut ForwardMode<'_>,
) -> Tensor<F> {
    encode_traced(embedded, params, mask_row, mode, None)
}

pub fn encode_traced<F: Scalar>(
    embedded: Tensor<F>,
    params: &ModelParameters<F>,
    mask_row: Option<&[F]>,
    mode: &mut ForwardMode<'_>,
    mut trace: Option<&mut Vec<AttentionTrace<F>>>,
) -> Tensor<F> {
    let eps = F::from_f64c(LN_EPS);
    let mut x = embedded;
    for (i, layer) in params.layers.iter().enumerate() {
        let attn = multi_head_attention(&x, layer, mask_row, trace.as_mut().map(|t| (&mut **t, i)));
        let attn = mode.apply(attn);
        x = x.add(&attn).layer_norm(&layer.ln1_gamma, &layer.ln1_beta, eps);
        let ff = feed_forward(&x, &layer.ff_w1, &layer.ff_b1, &layer.ff_w2, &layer.ff_b2);
        let ff = mode.apply(ff);
        x = x.add(&ff).layer_norm(&layer.ln2_gamma, &layer.ln2_beta, eps);
    }
    x
}
