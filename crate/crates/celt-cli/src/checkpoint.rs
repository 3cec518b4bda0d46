//! Versioned checkpoint persistence.
//!
//! A checkpoint is two files sharing a base path: `<base>.json` (the
//! manifest) and `<base>.bin` (little-endian f32 tensor data concatenated
//! in manifest index order). The manifest records the format version,
//! lineage, model config, label vocabularies, tokenizer-vocab hash, the
//! tensor index, and the binary's content hash.

use celt_core::model::{ModelConfig, ModelParameters};
use celt_core::training::ModelLineage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported checkpoint format_version {found} (reader supports {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("checkpoint binary hash mismatch: manifest {expected}, file {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("checkpoint binary is {actual} bytes, index needs {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("tensor {name}: shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint tensor set differs from the model: {0}")]
    TensorSetMismatch(String),
    #[error("checkpoint config mismatch: {0}")]
    ConfigMismatch(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    /// Byte offset into the binary file.
    pub offset: u64,
    pub shape: Vec<usize>,
    pub dtype: String,
}

/// Label-string tables carried alongside the weights so `predict` can
/// name its outputs without the training corpus.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct LabelTables {
    pub intents: Vec<String>,
    pub user_acts: Vec<String>,
    pub slots: Vec<String>,
    pub system_acts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub lineage: ModelLineage,
    pub model_config: ModelConfig,
    pub labels: LabelTables,
    /// SHA-256 of the tokenizer vocabulary file this model was built with.
    pub vocab_sha256: String,
    /// Tuned user-act decision threshold.
    pub threshold_t_u: f64,
    pub tensors: Vec<TensorEntry>,
    pub binary_sha256: String,
    pub created_unix_seconds: u64,
}

pub fn manifest_path(base: &Path) -> PathBuf {
    base.with_extension("json")
}

pub fn binary_path(base: &Path) -> PathBuf {
    base.with_extension("bin")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes parameters as f32 regardless of the in-memory scalar type.
pub fn save_checkpoint(
    params: &ModelParameters<f32>,
    config: &ModelConfig,
    lineage: &ModelLineage,
    labels: &LabelTables,
    vocab_sha256: &str,
    threshold_t_u: f64,
    base: &Path,
) -> Result<CheckpointManifest, CheckpointError> {
    let mut blob: Vec<u8> = Vec::new();
    let mut entries = Vec::new();
    for (name, tensor) in params.named_tensors() {
        let offset = blob.len() as u64;
        for v in tensor.to_vec() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry { name, offset, shape: tensor.shape(), dtype: "f32".into() });
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        lineage: lineage.clone(),
        model_config: config.clone(),
        labels: labels.clone(),
        vocab_sha256: vocab_sha256.to_string(),
        threshold_t_u,
        tensors: entries,
        binary_sha256: sha256_hex(&blob),
        created_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    std::fs::write(binary_path(base), &blob)?;
    std::fs::write(manifest_path(base), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Architecture dimensions that must agree between a checkpoint and the
/// config a caller expects to run.
fn compare_dims(expected: &ModelConfig, found: &ModelConfig) -> Result<(), CheckpointError> {
    let mut mismatches = Vec::new();
    for (name, a, b) in [
        ("num_layers", expected.num_layers, found.num_layers),
        ("hidden_size", expected.hidden_size, found.hidden_size),
        ("ff_size", expected.ff_size, found.ff_size),
        ("num_heads", expected.num_heads, found.num_heads),
        ("max_sequence_length", expected.max_sequence_length, found.max_sequence_length),
        ("token_vocab_size", expected.token_vocab_size, found.token_vocab_size),
        ("num_system_acts", expected.num_system_acts, found.num_system_acts),
        ("num_intents", expected.num_intents, found.num_intents),
        ("num_user_acts", expected.num_user_acts, found.num_user_acts),
        ("num_slot_tags", expected.num_slot_tags, found.num_slot_tags),
    ] {
        if a != b {
            mismatches.push(format!("{name}: expected {a}, checkpoint has {b}"));
        }
    }
    if expected.use_crf != found.use_crf {
        mismatches.push(format!(
            "use_crf: expected {}, checkpoint has {}",
            expected.use_crf, found.use_crf
        ));
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(CheckpointError::ConfigMismatch(mismatches.join("; ")))
    }
}

/// Loads and fully validates a checkpoint. With `expected`, the stored
/// architecture must match it dimension for dimension; shape validation
/// against the stored config runs either way.
pub fn load_checkpoint(
    base: &Path,
    expected: Option<&ModelConfig>,
) -> Result<(ModelParameters<f32>, CheckpointManifest), CheckpointError> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&std::fs::read_to_string(manifest_path(base))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: manifest.format_version,
            supported: FORMAT_VERSION,
        });
    }
    if let Some(expected) = expected {
        compare_dims(expected, &manifest.model_config)?;
    }
    let blob = std::fs::read(binary_path(base))?;
    let needed: u64 = manifest
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>() as u64 * 4)
        .sum();
    if blob.len() as u64 != needed {
        return Err(CheckpointError::SizeMismatch { expected: needed, actual: blob.len() as u64 });
    }
    let actual_hash = sha256_hex(&blob);
    if actual_hash != manifest.binary_sha256 {
        return Err(CheckpointError::HashMismatch {
            expected: manifest.binary_sha256.clone(),
            actual: actual_hash,
        });
    }

    // materialize a parameter set for the stored config, then overwrite
    // every tensor from the binary, validating names and shapes
    let params = ModelParameters::<f32>::init_seeded(&manifest.model_config, 0);
    let named = params.named_tensors();
    if named.len() != manifest.tensors.len() {
        return Err(CheckpointError::TensorSetMismatch(format!(
            "model has {} tensors, manifest indexes {}",
            named.len(),
            manifest.tensors.len()
        )));
    }
    for ((name, tensor), entry) in named.iter().zip(&manifest.tensors) {
        if *name != entry.name {
            return Err(CheckpointError::TensorSetMismatch(format!(
                "expected tensor {name}, manifest has {}",
                entry.name
            )));
        }
        if tensor.shape() != entry.shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                expected: tensor.shape(),
                found: entry.shape.clone(),
            });
        }
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let b = &blob[start + i * 4..start + i * 4 + 4];
            data.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        tensor.update_data(|d| d.copy_from_slice(&data));
    }
    Ok((params, manifest))
}
