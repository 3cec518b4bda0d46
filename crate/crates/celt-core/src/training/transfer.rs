//! Weight transfer between stages: the input-embedding and encoder
//! layers carry over exactly; every classifier head (and the CRF and
//! pretraining heads) is freshly initialized, so label spaces may differ
//! between source and target.

use super::TrainError;
use crate::model::{ModelConfig, ModelParameters};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn copy_into<F: Scalar>(dst: &Tensor<F>, src: &Tensor<F>) {
    assert_eq!(dst.shape(), src.shape(), "transfer copy shape mismatch");
    let data = src.to_vec();
    dst.update_data(|d| d.copy_from_slice(&data));
}

/// Initializes a model for `target_config` (head init drawn from
/// `seed`'s init substream) and copies the source's embedding tables and
/// encoder weights into it bit-exactly.
pub fn transfer_weights<F: Scalar>(
    source: &ModelParameters<F>,
    source_config: &ModelConfig,
    target_config: &ModelConfig,
    seed: u64,
) -> Result<ModelParameters<F>, TrainError> {
    let mut mismatches = Vec::new();
    for (name, a, b) in [
        ("hidden_size", source_config.hidden_size, target_config.hidden_size),
        ("num_layers", source_config.num_layers, target_config.num_layers),
        ("num_heads", source_config.num_heads, target_config.num_heads),
        ("ff_size", source_config.ff_size, target_config.ff_size),
        ("token_vocab_size", source_config.token_vocab_size, target_config.token_vocab_size),
        (
            "max_sequence_length",
            source_config.max_sequence_length,
            target_config.max_sequence_length,
        ),
    ] {
        if a != b {
            mismatches.push(format!("{name}: {a} vs {b}"));
        }
    }
    if !mismatches.is_empty() {
        return Err(TrainError::ArchitectureMismatch(mismatches.join(", ")));
    }

    let target = ModelParameters::init_seeded(target_config, seed);
    copy_into(&target.token_emb, &source.token_emb);
    copy_into(&target.position_emb, &source.position_emb);
    copy_into(&target.segment_emb, &source.segment_emb);
    copy_into(&target.speaker_emb, &source.speaker_emb);
    // the system-act table transfers only when the act vocabulary agrees
    if source_config.num_system_acts == target_config.num_system_acts {
        copy_into(&target.system_act_emb, &source.system_act_emb);
    }
    for (dst, src) in target.layers.iter().zip(&source.layers) {
        for (d, s) in dst.wq.iter().zip(&src.wq) {
            copy_into(d, s);
        }
        for (d, s) in dst.wk.iter().zip(&src.wk) {
            copy_into(d, s);
        }
        for (d, s) in dst.wv.iter().zip(&src.wv) {
            copy_into(d, s);
        }
        copy_into(&dst.wo, &src.wo);
        copy_into(&dst.ff_w1, &src.ff_w1);
        copy_into(&dst.ff_b1, &src.ff_b1);
        copy_into(&dst.ff_w2, &src.ff_w2);
        copy_into(&dst.ff_b2, &src.ff_b2);
        copy_into(&dst.ln1_gamma, &src.ln1_gamma);
        copy_into(&dst.ln1_beta, &src.ln1_beta);
        copy_into(&dst.ln2_gamma, &src.ln2_gamma);
        copy_into(&dst.ln2_beta, &src.ln2_beta);
    }
    Ok(target)
}
