//! The context-encoding transformer: architecture configuration, learned
//! parameters, encoder forward pass, and the three classifier heads.

mod crf;
mod encoder;
mod heads;

pub use crf::{crf_decode, crf_log_partition, crf_negative_log_likelihood, CrfParams};
pub use encoder::{
    attention_mask_row, embed_input, encode, encode_traced, feed_forward, multi_head_attention,
    scaled_dot_attention, AttentionTrace, ForwardMode,
};
pub use heads::{
    cross_entropy_rows, forward_heads, intent_logits, joint_loss, predict_frame, predict_intent,
    predict_slots, predict_user_acts, sigmoid_probs, slot_logits, user_act_logits, HeadOutputs,
    LabelVocabs, LossMask,
};

use crate::rng::substream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEGMENT_VOCAB: usize = 2;
pub const SPEAKER_VOCAB: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// Where the system-act embedding is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SystemActBroadcast {
    /// Every position receives e^a (the default reading).
    #[default]
    AllPositions,
    /// Only current-query positions receive e^a.
    QueryOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub ff_size: usize,
    pub num_heads: usize,
    pub max_sequence_length: usize,
    pub token_vocab_size: usize,
    pub num_system_acts: usize,
    pub num_intents: usize,
    pub num_user_acts: usize,
    pub num_slot_tags: usize,
    pub dropout_p: f64,
    pub use_crf: bool,
    pub enable_speaker_embeddings: bool,
    pub enable_system_act_embeddings: bool,
    pub enable_context: bool,
    #[serde(default)]
    pub system_act_broadcast: SystemActBroadcast,
}

impl ModelConfig {
    /// CPU-friendly default: 2 layers, 64 hidden, 256 feed-forward, 4 heads.
    pub fn desk_scale() -> Self {
        ModelConfig {
            num_layers: 2,
            hidden_size: 64,
            ff_size: 256,
            num_heads: 4,
            max_sequence_length: 128,
            token_vocab_size: 0,
            num_system_acts: 0,
            num_intents: 0,
            num_user_acts: 0,
            num_slot_tags: 1,
            dropout_p: 0.1,
            use_crf: false,
            enable_speaker_embeddings: true,
            enable_system_act_embeddings: true,
            enable_context: true,
            system_act_broadcast: SystemActBroadcast::AllPositions,
        }
    }

    /// Full-size architecture: 12 layers, 768 hidden, 3072 feed-forward,
    /// 12 heads.
    pub fn paper_scale() -> Self {
        ModelConfig {
            num_layers: 12,
            hidden_size: 768,
            ff_size: 3072,
            num_heads: 12,
            ..Self::desk_scale()
        }
    }

    /// Fills the label-space sizes from a corpus's vocabularies.
    pub fn with_label_spaces(mut self, corpus: &crate::data::Corpus) -> Self {
        self.num_system_acts = corpus.system_acts.len();
        self.num_intents = corpus.intents.len();
        self.num_user_acts = corpus.user_acts.len();
        self.num_slot_tags = corpus.slot_tags().len();
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_size == 0 || self.num_heads == 0 {
            return Err(ModelError::InvalidConfig("hidden_size and num_heads must be positive".into()));
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if self.ff_size == 0 || self.max_sequence_length < 3 || self.token_vocab_size == 0 {
            return Err(ModelError::InvalidConfig(
                "ff_size, max_sequence_length and token_vocab_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout_p must be in [0,1), got {}",
                self.dropout_p
            )));
        }
        if self.num_slot_tags == 0 {
            return Err(ModelError::InvalidConfig("num_slot_tags must be at least 1 (O)".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn input_build_config(&self) -> crate::data::InputBuildConfig {
        crate::data::InputBuildConfig {
            max_sequence_length: self.max_sequence_length,
            include_context: self.enable_context,
        }
    }
}

/// One transformer block's weights. Per-head projections are stored
/// separately; `wo` recombines the concatenated heads.
pub struct LayerParams<F: Scalar> {
    pub wq: Vec<Tensor<F>>,
    pub wk: Vec<Tensor<F>>,
    pub wv: Vec<Tensor<F>>,
    pub wo: Tensor<F>,
    pub ff_w1: Tensor<F>,
    pub ff_b1: Tensor<F>,
    pub ff_w2: Tensor<F>,
    pub ff_b2: Tensor<F>,
    pub ln1_gamma: Tensor<F>,
    pub ln1_beta: Tensor<F>,
    pub ln2_gamma: Tensor<F>,
    pub ln2_beta: Tensor<F>,
}

/// One classifier head: a nonlinear feed-forward layer into a projection.
pub struct HeadParams<F: Scalar> {
    pub ff_w: Tensor<F>,
    pub ff_b: Tensor<F>,
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

/// Pretraining-only heads: the masked-token output projection is tied to
/// the token embedding table, so only its bias is learned here.
pub struct PretrainHeads<F: Scalar> {
    pub mlm_bias: Tensor<F>,
    pub nsp_w: Tensor<F>,
    pub nsp_b: Tensor<F>,
}

pub struct ModelParameters<F: Scalar> {
    pub token_emb: Tensor<F>,
    pub position_emb: Tensor<F>,
    pub segment_emb: Tensor<F>,
    pub speaker_emb: Tensor<F>,
    pub system_act_emb: Tensor<F>,
    pub layers: Vec<LayerParams<F>>,
    pub intent_head: HeadParams<F>,
    pub user_act_head: HeadParams<F>,
    pub slot_head: HeadParams<F>,
    pub crf: Option<CrfParams<F>>,
    pub pretrain: PretrainHeads<F>,
}

fn trunc_normal<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<F> {
    let dist = Normal::new(0.0, std).expect("valid normal");
    let n: usize = shape.iter().product();
    let data: Vec<F> = (0..n)
        .map(|_| loop {
            let v = dist.sample(rng);
            if v.abs() <= 2.0 * std {
                break F::from_f64c(v);
            }
        })
        .collect();
    Tensor::param(data, shape)
}

fn zeros_param<F: Scalar>(shape: &[usize]) -> Tensor<F> {
    let n: usize = shape.iter().product();
    Tensor::param(vec![F::zero(); n], shape)
}

fn ones_param<F: Scalar>(shape: &[usize]) -> Tensor<F> {
    let n: usize = shape.iter().product();
    Tensor::param(vec![F::one(); n], shape)
}

fn init_head<F: Scalar>(rng: &mut ChaCha8Rng, hidden: usize, classes: usize) -> HeadParams<F> {
    HeadParams {
        ff_w: trunc_normal(rng, &[hidden, hidden], 0.02),
        ff_b: zeros_param(&[hidden]),
        w: trunc_normal(rng, &[hidden, classes], 0.02),
        b: zeros_param(&[classes]),
    }
}

impl<F: Scalar> ModelParameters<F> {
    /// Fresh parameters: truncated normal (σ=0.02, clipped at 2σ) for
    /// weights; zero biases; unit layer-norm gains; zero CRF scores.
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        config.validate().expect("config must validate before init");
        let h = config.hidden_size;
        let dk = config.head_dim();
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                wq: (0..config.num_heads).map(|_| trunc_normal(rng, &[h, dk], 0.02)).collect(),
                wk: (0..config.num_heads).map(|_| trunc_normal(rng, &[h, dk], 0.02)).collect(),
                wv: (0..config.num_heads).map(|_| trunc_normal(rng, &[h, dk], 0.02)).collect(),
                wo: trunc_normal(rng, &[h, h], 0.02),
                ff_w1: trunc_normal(rng, &[h, config.ff_size], 0.02),
                ff_b1: zeros_param(&[config.ff_size]),
                ff_w2: trunc_normal(rng, &[config.ff_size, h], 0.02),
                ff_b2: zeros_param(&[h]),
                ln1_gamma: ones_param(&[h]),
                ln1_beta: zeros_param(&[h]),
                ln2_gamma: ones_param(&[h]),
                ln2_beta: zeros_param(&[h]),
            })
            .collect();
        ModelParameters {
            token_emb: trunc_normal(rng, &[config.token_vocab_size, h], 0.02),
            position_emb: trunc_normal(rng, &[config.max_sequence_length, h], 0.02),
            segment_emb: trunc_normal(rng, &[SEGMENT_VOCAB, h], 0.02),
            speaker_emb: trunc_normal(rng, &[SPEAKER_VOCAB, h], 0.02),
            system_act_emb: trunc_normal(rng, &[config.num_system_acts.max(1), h], 0.02),
            layers,
            intent_head: init_head(rng, h, config.num_intents.max(1)),
            user_act_head: init_head(rng, h, config.num_user_acts.max(1)),
            slot_head: init_head(rng, h, config.num_slot_tags.max(1)),
            crf: config.use_crf.then(|| CrfParams {
                transitions: zeros_param(&[config.num_slot_tags, config.num_slot_tags]),
                start: zeros_param(&[config.num_slot_tags]),
                end: zeros_param(&[config.num_slot_tags]),
            }),
            pretrain: PretrainHeads {
                mlm_bias: zeros_param(&[config.token_vocab_size]),
                nsp_w: trunc_normal(rng, &[h], 0.02),
                nsp_b: zeros_param(&[1]),
            },
        }
    }

    /// Convenience over [`init`] with the crate's seeding scheme.
    pub fn init_seeded(config: &ModelConfig, seed: u64) -> Self {
        Self::init(config, &mut substream(seed, "init", 0))
    }

    /// Every tensor with a stable name, in canonical (checkpoint) order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<F>)> {
        let mut out: Vec<(String, Tensor<F>)> = vec![
            ("embeddings.token".into(), self.token_emb.clone()),
            ("embeddings.position".into(), self.position_emb.clone()),
            ("embeddings.segment".into(), self.segment_emb.clone()),
            ("embeddings.speaker".into(), self.speaker_emb.clone()),
            ("embeddings.system_act".into(), self.system_act_emb.clone()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (j, t) in l.wq.iter().enumerate() {
                out.push((format!("encoder.{i}.attn.head{j}.wq"), t.clone()));
            }
            for (j, t) in l.wk.iter().enumerate() {
                out.push((format!("encoder.{i}.attn.head{j}.wk"), t.clone()));
            }
            for (j, t) in l.wv.iter().enumerate() {
                out.push((format!("encoder.{i}.attn.head{j}.wv"), t.clone()));
            }
            out.push((format!("encoder.{i}.attn.wo"), l.wo.clone()));
            out.push((format!("encoder.{i}.ffn.w1"), l.ff_w1.clone()));
            out.push((format!("encoder.{i}.ffn.b1"), l.ff_b1.clone()));
            out.push((format!("encoder.{i}.ffn.w2"), l.ff_w2.clone()));
            out.push((format!("encoder.{i}.ffn.b2"), l.ff_b2.clone()));
            out.push((format!("encoder.{i}.ln1.gamma"), l.ln1_gamma.clone()));
            out.push((format!("encoder.{i}.ln1.beta"), l.ln1_beta.clone()));
            out.push((format!("encoder.{i}.ln2.gamma"), l.ln2_gamma.clone()));
            out.push((format!("encoder.{i}.ln2.beta"), l.ln2_beta.clone()));
        }
        for (name, head) in [
            ("intent", &self.intent_head),
            ("user_act", &self.user_act_head),
            ("slot", &self.slot_head),
        ] {
            out.push((format!("heads.{name}.ff_w"), head.ff_w.clone()));
            out.push((format!("heads.{name}.ff_b"), head.ff_b.clone()));
            out.push((format!("heads.{name}.w"), head.w.clone()));
            out.push((format!("heads.{name}.b"), head.b.clone()));
        }
        if let Some(crf) = &self.crf {
            out.push(("crf.transitions".into(), crf.transitions.clone()));
            out.push(("crf.start".into(), crf.start.clone()));
            out.push(("crf.end".into(), crf.end.clone()));
        }
        out.push(("pretrain.mlm_bias".into(), self.pretrain.mlm_bias.clone()));
        out.push(("pretrain.nsp_w".into(), self.pretrain.nsp_w.clone()));
        out.push(("pretrain.nsp_b".into(), self.pretrain.nsp_b.clone()));
        out
    }

    /// Embedding tables that participate under `config` (disabled tables
    /// receive no gradient and stay out of the optimizer).
    pub fn embedding_tensors(&self, config: &ModelConfig) -> Vec<Tensor<F>> {
        let mut out = vec![self.token_emb.clone(), self.position_emb.clone(), self.segment_emb.clone()];
        if config.enable_speaker_embeddings {
            out.push(self.speaker_emb.clone());
        }
        if config.enable_system_act_embeddings && config.num_system_acts > 0 {
            out.push(self.system_act_emb.clone());
        }
        out
    }

    pub fn encoder_tensors(&self) -> Vec<Tensor<F>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.wq.iter().cloned());
            out.extend(l.wk.iter().cloned());
            out.extend(l.wv.iter().cloned());
            out.extend([
                l.wo.clone(),
                l.ff_w1.clone(),
                l.ff_b1.clone(),
                l.ff_w2.clone(),
                l.ff_b2.clone(),
                l.ln1_gamma.clone(),
                l.ln1_beta.clone(),
                l.ln2_gamma.clone(),
                l.ln2_beta.clone(),
            ]);
        }
        out
    }

    fn head_tensors(head: &HeadParams<F>) -> Vec<Tensor<F>> {
        vec![head.ff_w.clone(), head.ff_b.clone(), head.w.clone(), head.b.clone()]
    }

    pub fn intent_head_tensors(&self) -> Vec<Tensor<F>> {
        Self::head_tensors(&self.intent_head)
    }

    pub fn user_act_head_tensors(&self) -> Vec<Tensor<F>> {
        Self::head_tensors(&self.user_act_head)
    }

    pub fn slot_head_tensors(&self) -> Vec<Tensor<F>> {
        let mut out = Self::head_tensors(&self.slot_head);
        if let Some(crf) = &self.crf {
            out.extend([crf.transitions.clone(), crf.start.clone(), crf.end.clone()]);
        }
        out
    }

    pub fn pretrain_head_tensors(&self) -> Vec<Tensor<F>> {
        vec![
            self.pretrain.mlm_bias.clone(),
            self.pretrain.nsp_w.clone(),
            self.pretrain.nsp_b.clone(),
        ]
    }

    /// Deep copy with fresh leaf tensors (no shared state, no grads).
    pub fn deep_clone(&self) -> Self {
        let clone_t = |t: &Tensor<F>| Tensor::param(t.to_vec(), &t.shape());
        let clone_head = |h: &HeadParams<F>| HeadParams {
            ff_w: clone_t(&h.ff_w),
            ff_b: clone_t(&h.ff_b),
            w: clone_t(&h.w),
            b: clone_t(&h.b),
        };
        ModelParameters {
            token_emb: clone_t(&self.token_emb),
            position_emb: clone_t(&self.position_emb),
            segment_emb: clone_t(&self.segment_emb),
            speaker_emb: clone_t(&self.speaker_emb),
            system_act_emb: clone_t(&self.system_act_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    wq: l.wq.iter().map(&clone_t).collect(),
                    wk: l.wk.iter().map(&clone_t).collect(),
                    wv: l.wv.iter().map(&clone_t).collect(),
                    wo: clone_t(&l.wo),
                    ff_w1: clone_t(&l.ff_w1),
                    ff_b1: clone_t(&l.ff_b1),
                    ff_w2: clone_t(&l.ff_w2),
                    ff_b2: clone_t(&l.ff_b2),
                    ln1_gamma: clone_t(&l.ln1_gamma),
                    ln1_beta: clone_t(&l.ln1_beta),
                    ln2_gamma: clone_t(&l.ln2_gamma),
                    ln2_beta: clone_t(&l.ln2_beta),
                })
                .collect(),
            intent_head: clone_head(&self.intent_head),
            user_act_head: clone_head(&self.user_act_head),
            slot_head: clone_head(&self.slot_head),
            crf: self.crf.as_ref().map(|c| CrfParams {
                transitions: clone_t(&c.transitions),
                start: clone_t(&c.start),
                end: clone_t(&c.end),
            }),
            pretrain: PretrainHeads {
                mlm_bias: clone_t(&self.pretrain.mlm_bias),
                nsp_w: clone_t(&self.pretrain.nsp_w),
                nsp_b: clone_t(&self.pretrain.nsp_b),
            },
        }
    }

    pub fn zero_grads(&self) {
        for (_, t) in self.named_tensors() {
            t.zero_grad();
        }
    }
}
