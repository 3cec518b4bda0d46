//! User-act decision-threshold tuning on the validation set.

use super::TrainError;
use crate::data::ModelInput;
use crate::model::{forward_heads, sigmoid_probs, ForwardMode, ModelConfig, ModelParameters};
use crate::scalar::Scalar;

pub const THRESHOLD_GRID: [f64; 3] = [0.3, 0.4, 0.5];

/// Evaluates micro user-act F1 at each grid threshold and returns the
/// maximizer; ties resolve toward the largest threshold.
pub fn tune_threshold<F: Scalar>(
    params: &ModelParameters<F>,
    config: &ModelConfig,
    validation: &[ModelInput],
) -> Result<f64, TrainError> {
    if config.num_user_acts == 0 || validation.is_empty() {
        return Err(TrainError::MissingActLabels);
    }
    let mut scored: Vec<(Vec<f64>, Vec<u8>)> = Vec::with_capacity(validation.len());
    for input in validation {
        let targets = input.targets.as_ref().ok_or(TrainError::MissingActLabels)?;
        let outputs = forward_heads(input, params, config, &mut ForwardMode::Eval);
        let probs = sigmoid_probs(&outputs.user_act_logits)
            .into_iter()
            .map(|p| p.to_f64().expect("finite probability"))
            .collect();
        scored.push((probs, targets.user_acts.clone()));
    }
    let mut best = (THRESHOLD_GRID[0], f64::NEG_INFINITY);
    for &t_u in &THRESHOLD_GRID {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (probs, gold) in &scored {
            for (p, &g) in probs.iter().zip(gold) {
                let predicted = *p > t_u;
                match (predicted, g == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        // ascending grid + non-strict comparison: ties go to the largest
        if f1 >= best.1 {
            best = (t_u, f1);
        }
    }
    Ok(best.0)
}
