//! Masked-token corruption for the language-model objective.

use super::TrainError;
use crate::tokenizer::Vocab;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Selection probability plus the [MASK] / random-token / keep split
/// applied to selected positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    pub mask_probability: f64,
    pub mask_token_fraction: f64,
    pub random_token_fraction: f64,
    pub keep_fraction: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_probability: 0.15,
            mask_token_fraction: 0.8,
            random_token_fraction: 0.1,
            keep_fraction: 0.1,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let sum = self.mask_token_fraction + self.random_token_fraction + self.keep_fraction;
        if self.mask_probability <= 0.0
            || self.mask_probability >= 1.0
            || (sum - 1.0).abs() > 1e-9
            || self.mask_token_fraction < 0.0
            || self.random_token_fraction < 0.0
            || self.keep_fraction < 0.0
        {
            return Err(TrainError::BadMasking(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmExample {
    pub corrupted_ids: Vec<usize>,
    /// Positions the model must predict, ascending.
    pub positions: Vec<usize>,
    /// Original token ids at those positions.
    pub original_ids: Vec<usize>,
}

/// Independently selects each non-special position with
/// `mask_probability`, then replaces it with [MASK] / a random
/// non-special token / itself per the configured fractions. Special
/// tokens are never selected; zero selections yield an empty set.
pub fn make_mlm_example(
    token_ids: &[usize],
    vocab: &Vocab,
    masking: &MaskingConfig,
    rng: &mut ChaCha8Rng,
) -> MlmExample {
    debug_assert!(masking.validate().is_ok());
    let replacements = vocab.non_special_ids();
    let mut corrupted = token_ids.to_vec();
    let mut positions = Vec::new();
    let mut original = Vec::new();
    for (i, &id) in token_ids.iter().enumerate() {
        if vocab.is_special(id) {
            continue;
        }
        if rng.gen::<f64>() >= masking.mask_probability {
            continue;
        }
        positions.push(i);
        original.push(id);
        let roll = rng.gen::<f64>();
        if roll < masking.mask_token_fraction {
            corrupted[i] = vocab.mask_id();
        } else if roll < masking.mask_token_fraction + masking.random_token_fraction {
            corrupted[i] = replacements[rng.gen_range(0..replacements.len())];
        }
        // else: keep the original token at a selected position
    }
    MlmExample { corrupted_ids: corrupted, positions, original_ids: original }
}
