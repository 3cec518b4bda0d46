//! The stage runner: shuffled mini-batch Adam over a stage's objective,
//! deterministic given the stage seed, with per-epoch validation.

use super::{
    losses, make_mlm_example, MaskingConfig, ModelLineage, PairExample, Stage, StageSpec,
    SupTargets, TrainError,
};
use crate::data::{bio_decode, ModelInput, SlotSpan};
use crate::model::{
    crf_decode, forward_heads, joint_loss, sigmoid_probs, ForwardMode, HeadOutputs, LossMask,
    ModelConfig, ModelParameters,
};
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::tensor::{AdamState, Tensor};
use crate::tokenizer::Vocab;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_frame_accuracy: Option<f64>,
}

/// Stage inputs, already tokenized and assembled.
pub enum StageData {
    /// Pretraining and unsupervised adaptive training: next-unit pairs,
    /// corrupted freshly every epoch.
    Unsupervised {
        train: Vec<PairExample>,
        validation: Vec<PairExample>,
        masking: MaskingConfig,
        vocab: Vocab,
    },
    /// Supervised adaptive training and fine-tuning: labeled inputs plus
    /// the tag vocabulary for span-level validation accuracy.
    Supervised { train: Vec<ModelInput>, validation: Vec<ModelInput>, slot_tags: Vec<String> },
}

fn trainable_tensors<F: Scalar>(
    params: &ModelParameters<F>,
    config: &ModelConfig,
    spec: &StageSpec,
) -> Vec<Tensor<F>> {
    let mut out = params.embedding_tensors(config);
    out.extend(params.encoder_tensors());
    let flags = spec.loss_flags;
    if flags.mlm || flags.nsp {
        out.extend(params.pretrain_head_tensors());
    }
    if flags.ic {
        out.extend(params.intent_head_tensors());
    }
    if flags.sf {
        out.extend(params.slot_head_tensors());
    }
    if flags.uac {
        out.extend(params.user_act_head_tensors());
    }
    out
}

fn supervised_example_loss<F: Scalar>(
    input: &ModelInput,
    params: &ModelParameters<F>,
    config: &ModelConfig,
    spec: &StageSpec,
    mode: &mut ForwardMode<'_>,
) -> Result<Tensor<F>, TrainError> {
    let targets = input.targets.as_ref().ok_or(TrainError::EmptyCorpus)?;
    let outputs = forward_heads(input, params, config, mode);
    match spec.stage {
        Stage::Finetune => Ok(joint_loss(
            &outputs,
            targets,
            params,
            config,
            &LossMask { intent: spec.loss_flags.ic, user_acts: spec.loss_flags.uac, slots: spec.loss_flags.sf },
        )),
        Stage::SupAdapt => losses::supervised_adaptive_loss(
            &outputs,
            &SupTargets { intents: vec![targets.intent], slot_tags: targets.slot_tags.clone() },
            spec.ic_mode,
            params,
            config,
        ),
        _ => unreachable!("supervised loss on an unsupervised stage"),
    }
}

fn unsupervised_example_loss<F: Scalar>(
    pair: &PairExample,
    params: &ModelParameters<F>,
    config: &ModelConfig,
    masking: &MaskingConfig,
    vocab: &Vocab,
    mask_rng: &mut rand_chacha::ChaCha8Rng,
    mode: &mut ForwardMode<'_>,
) -> Tensor<F> {
    let mlm = make_mlm_example(&pair.input.token_ids, vocab, masking, mask_rng);
    losses::pretrain_forward_loss(
        pair,
        &mlm.corrupted_ids,
        &mlm.positions,
        &mlm.original_ids,
        params,
        config,
        mode,
    )
}

/// Predicted-vs-gold exact frame match at the id level: intent argmax,
/// acts thresholded at 0.5, slot spans from decoded tags.
fn frame_matches<F: Scalar>(
    outputs: &HeadOutputs<F>,
    input: &ModelInput,
    params: &ModelParameters<F>,
    config: &ModelConfig,
    slot_tags: &[String],
    include_acts: bool,
) -> bool {
    let targets = input.targets.as_ref().expect("validation inputs are labeled");
    let intent_row = outputs.intent_logits.to_vec();
    let mut best = 0;
    for (i, v) in intent_row.iter().enumerate() {
        if *v > intent_row[best] {
            best = i;
        }
    }
    if best != targets.intent {
        return false;
    }
    if include_acts {
        let probs = sigmoid_probs(&outputs.user_act_logits);
        let half = F::from_f64c(0.5);
        for (p, &gold) in probs.iter().zip(&targets.user_acts) {
            if (*p > half) != (gold == 1) {
                return false;
            }
        }
    }
    let words = input.word_starts.len();
    if words == 0 {
        return targets.slot_tags.is_empty();
    }
    let pred_ids: Vec<usize> = if config.use_crf {
        crf_decode(&outputs.slot_logits, params.crf.as_ref().expect("crf params"))
    } else {
        let l = outputs.slot_logits.shape()[1];
        let flat = outputs.slot_logits.to_vec();
        (0..words)
            .map(|w| {
                let row = &flat[w * l..(w + 1) * l];
                let mut b = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[b] {
                        b = i;
                    }
                }
                b
            })
            .collect()
    };
    let to_spans = |ids: &[usize]| -> Vec<SlotSpan> {
        let tags: Vec<String> = ids.iter().map(|&t| slot_tags[t].clone()).collect();
        let mut spans = bio_decode(&tags);
        spans.sort();
        spans
    };
    to_spans(&pred_ids) == to_spans(&targets.slot_tags)
}

/// Epochs of shuffled mini-batch Adam on the stage's loss. Deterministic
/// given the spec seed; the last partial batch is kept. Zero epochs
/// leave the parameters untouched but still append the stage digest.
pub fn run_stage<F: Scalar>(
    params: ModelParameters<F>,
    lineage: &ModelLineage,
    spec: &StageSpec,
    config: &ModelConfig,
    data: &StageData,
) -> Result<(ModelParameters<F>, ModelLineage, Vec<EpochMetrics>), TrainError> {
    spec.validate()?;
    let new_lineage = lineage.advance(spec.stage, spec.digest())?;
    let train_len = match data {
        StageData::Unsupervised { train, masking, .. } => {
            masking.validate()?;
            train.len()
        }
        StageData::Supervised { train, .. } => train.len(),
    };
    if train_len == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    if let StageData::Supervised { train, validation, .. } = data {
        if train.iter().chain(validation).any(|i| i.targets.is_none()) {
            return Err(TrainError::EmptyCorpus);
        }
    }

    let trainable = trainable_tensors(&params, config, spec);
    for t in &trainable {
        t.zero_grad();
    }
    let mut adam = AdamState::for_params(F::from_f64c(spec.learning_rate), &trainable);
    let mut metrics = Vec::with_capacity(spec.epochs);

    for epoch in 0..spec.epochs {
        let mut order: Vec<usize> = (0..train_len).collect();
        order.shuffle(&mut substream(spec.seed, "shuffle", epoch as u64));
        let mut dropout_rng = substream(spec.seed, "dropout", epoch as u64);
        let mut mask_rng = substream(spec.seed, "masking", epoch as u64);

        let mut loss_sum = 0.0;
        for batch in order.chunks(spec.batch_size.max(1)) {
            let mut batch_loss: Option<Tensor<F>> = None;
            for &idx in batch {
                let mut mode =
                    ForwardMode::Train { dropout_p: config.dropout_p, rng: &mut dropout_rng };
                let example_loss = match data {
                    StageData::Unsupervised { train, masking, vocab, .. } => {
                        unsupervised_example_loss(
                            &train[idx],
                            &params,
                            config,
                            masking,
                            vocab,
                            &mut mask_rng,
                            &mut mode,
                        )
                    }
                    StageData::Supervised { train, .. } => {
                        supervised_example_loss(&train[idx], &params, config, spec, &mut mode)?
                    }
                };
                batch_loss = Some(match batch_loss {
                    None => example_loss,
                    Some(acc) => acc.add(&example_loss),
                });
            }
            let loss =
                batch_loss.expect("nonempty batch").scale(F::one() / F::from_f64c(batch.len() as f64));
            loss.backward();
            adam.step(&trainable);
            loss_sum += loss.item().to_f64().expect("finite loss") * batch.len() as f64;
        }
        let train_loss = loss_sum / train_len as f64;

        let (val_loss, val_frame_accuracy) = match data {
            StageData::Unsupervised { validation, masking, vocab, .. } if !validation.is_empty() => {
                // fixed corruption stream keeps validation loss comparable
                // across epochs
                let mut val_rng = substream(spec.seed, "masking", u64::MAX);
                let mut sum = 0.0;
                for pair in validation {
                    let loss = unsupervised_example_loss(
                        pair,
                        &params,
                        config,
                        masking,
                        vocab,
                        &mut val_rng,
                        &mut ForwardMode::Eval,
                    );
                    sum += loss.item().to_f64().expect("finite loss");
                }
                (Some(sum / validation.len() as f64), None)
            }
            StageData::Supervised { validation, slot_tags, .. } if !validation.is_empty() => {
                let mut sum = 0.0;
                let mut hits = 0usize;
                for input in validation {
                    let loss = supervised_example_loss(
                        input,
                        &params,
                        config,
                        spec,
                        &mut ForwardMode::Eval,
                    )?;
                    sum += loss.item().to_f64().expect("finite loss");
                    let outputs = forward_heads(input, &params, config, &mut ForwardMode::Eval);
                    if frame_matches(
                        &outputs,
                        input,
                        &params,
                        config,
                        slot_tags,
                        spec.loss_flags.uac,
                    ) {
                        hits += 1;
                    }
                }
                (
                    Some(sum / validation.len() as f64),
                    Some(hits as f64 / validation.len() as f64),
                )
            }
            _ => (None, None),
        };
        metrics.push(EpochMetrics { epoch, train_loss, val_loss, val_frame_accuracy });
    }
    Ok((params, new_lineage, metrics))
}

/// Fine-tuning engine with an explicit head mask, for the per-head
/// (separate-model) comparison harness. Bypasses lineage bookkeeping.
pub fn finetune_with_mask<F: Scalar>(
    params: ModelParameters<F>,
    config: &ModelConfig,
    train: &[ModelInput],
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
    mask: LossMask,
) -> Result<ModelParameters<F>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut tensors = params.embedding_tensors(config);
    tensors.extend(params.encoder_tensors());
    if mask.intent {
        tensors.extend(params.intent_head_tensors());
    }
    if mask.slots {
        tensors.extend(params.slot_head_tensors());
    }
    if mask.user_acts {
        tensors.extend(params.user_act_head_tensors());
    }
    for t in &tensors {
        t.zero_grad();
    }
    let mut adam = AdamState::for_params(F::from_f64c(learning_rate), &tensors);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut substream(seed, "shuffle", epoch as u64));
        let mut dropout_rng = substream(seed, "dropout", epoch as u64);
        for batch in order.chunks(batch_size.max(1)) {
            let mut batch_loss: Option<Tensor<F>> = None;
            for &idx in batch {
                let input = &train[idx];
                let targets = input.targets.as_ref().ok_or(TrainError::EmptyCorpus)?;
                let mut mode =
                    ForwardMode::Train { dropout_p: config.dropout_p, rng: &mut dropout_rng };
                let outputs = forward_heads(input, &params, config, &mut mode);
                let loss = joint_loss(&outputs, targets, &params, config, &mask);
                batch_loss = Some(match batch_loss {
                    None => loss,
                    Some(acc) => acc.add(&loss),
                });
            }
            let loss = batch_loss
                .expect("nonempty batch")
                .scale(F::one() / F::from_f64c(batch.len() as f64));
            loss.backward();
            adam.step(&tensors);
        }
    }
    Ok(params)
}
