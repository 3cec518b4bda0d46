//! Effective configuration assembly: CLI flag > config file > default.

use crate::args::StageOverrides;
use crate::error::AppError;
use celt_core::model::{ModelConfig, SystemActBroadcast};
use celt_core::training::{Stage, StageSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Optional `model` section: absent fields keep the desk-scale defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPatch {
    pub num_layers: Option<usize>,
    pub hidden_size: Option<usize>,
    pub ff_size: Option<usize>,
    pub num_heads: Option<usize>,
    pub max_sequence_length: Option<usize>,
    pub dropout_p: Option<f64>,
    pub use_crf: Option<bool>,
    pub enable_speaker_embeddings: Option<bool>,
    pub enable_system_act_embeddings: Option<bool>,
    pub enable_context: Option<bool>,
    pub system_act_broadcast: Option<SystemActBroadcast>,
}

impl ModelPatch {
    pub fn apply(&self, mut config: ModelConfig) -> ModelConfig {
        macro_rules! patch {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        patch!(
            num_layers,
            hidden_size,
            ff_size,
            num_heads,
            max_sequence_length,
            dropout_p,
            use_crf,
            enable_speaker_embeddings,
            enable_system_act_embeddings,
            enable_context,
            system_act_broadcast
        );
        config
    }
}

/// Optional `stage` section mirroring the stage-spec fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePatch {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { fractions: [0.8, 0.1, 0.1], seed: 42 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelPatch,
    #[serde(default)]
    pub stage: StagePatch,
    pub split: Option<SplitSection>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, AppError> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| AppError::Io(format!("config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| AppError::Validation(format!("config {}: {e}", p.display())))
            }
        }
    }
}

/// Resolves the effective stage spec: defaults, then file, then flags.
pub fn resolve_stage_spec(
    stage: Stage,
    corpus_ref: &str,
    cli_seed: u64,
    file: &FileConfig,
    overrides: &StageOverrides,
) -> StageSpec {
    let mut spec = StageSpec::defaults_for(stage, corpus_ref, cli_seed);
    if let Some(v) = file.stage.epochs {
        spec.epochs = v;
    }
    if let Some(v) = file.stage.batch_size {
        spec.batch_size = v;
    }
    if let Some(v) = file.stage.learning_rate {
        spec.learning_rate = v;
    }
    if let Some(v) = file.stage.seed {
        spec.seed = v;
    }
    if let Some(v) = overrides.epochs {
        spec.epochs = v;
    }
    if let Some(v) = overrides.batch_size {
        spec.batch_size = v;
    }
    if let Some(v) = overrides.learning_rate {
        spec.learning_rate = v;
    }
    spec
}

/// Split settings: flags > file section > (0.8, 0.1, 0.1) with seed 42.
pub fn resolve_split(
    file: &FileConfig,
    overrides: &StageOverrides,
) -> Result<((f64, f64, f64), u64), AppError> {
    let base = file.split.clone().unwrap_or_default();
    let fractions = match &overrides.split {
        None => (base.fractions[0], base.fractions[1], base.fractions[2]),
        Some(raw) => {
            let parts: Vec<f64> = raw
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| AppError::Usage(format!("--split: {e}")))?;
            if parts.len() != 3 {
                return Err(AppError::Usage(format!(
                    "--split needs three comma-separated fractions, got {raw:?}"
                )));
            }
            (parts[0], parts[1], parts[2])
        }
    };
    Ok((fractions, overrides.split_seed.unwrap_or(base.seed)))
}
