//! Ablation harness: fine-tunes and scores model variants that
//! cumulatively remove pretraining, speaker embeddings, context
//! utterances, and system-act embeddings.

use super::pipeline::{build_supervised_inputs, evaluate_corpus};
use super::{run_stage, ModelLineage, Stage, StageData, StageSpec, TrainError};
use crate::data::{split_corpus, Corpus};
use crate::evaluation::MetricsReport;
use crate::model::{LabelVocabs, ModelConfig, ModelParameters};
use crate::scalar::Scalar;
use crate::tokenizer::Vocab;
use crate::training::transfer_weights;

pub struct AblationConfig<F: Scalar> {
    pub corpus: Corpus,
    pub vocab: Vocab,
    /// Architecture template; label spaces are filled from the corpus.
    pub base_config: ModelConfig,
    /// Pretrained weights for the baseline row, with their config.
    pub pretrained: Option<(ModelParameters<F>, ModelConfig)>,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub split: (f64, f64, f64),
    pub split_seed: u64,
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub report: MetricsReport,
}

struct Variant {
    name: &'static str,
    use_pretrained: bool,
    speaker: bool,
    context: bool,
    system_acts: bool,
}

/// Cumulative-removal rows in fixed order: baseline, then −pretrain,
/// −speaker, −context, −system acts.
fn variants() -> Vec<Variant> {
    vec![
        Variant { name: "baseline", use_pretrained: true, speaker: true, context: true, system_acts: true },
        Variant { name: "-pretrain", use_pretrained: false, speaker: true, context: true, system_acts: true },
        Variant {
            name: "-pretrain -speaker",
            use_pretrained: false,
            speaker: false,
            context: true,
            system_acts: true,
        },
        Variant {
            name: "-pretrain -speaker -context",
            use_pretrained: false,
            speaker: false,
            context: false,
            system_acts: true,
        },
        Variant {
            name: "-pretrain -speaker -context -system_acts",
            use_pretrained: false,
            speaker: false,
            context: false,
            system_acts: false,
        },
    ]
}

/// Trains one configuration on the train split and reports test metrics.
pub fn train_and_score_variant<F: Scalar>(
    init: ModelParameters<F>,
    config: &ModelConfig,
    train: &Corpus,
    test: &Corpus,
    vocab: &Vocab,
    labels: &LabelVocabs,
    spec: &StageSpec,
) -> Result<MetricsReport, TrainError> {
    let train_inputs = build_supervised_inputs(train, vocab, config)?;
    let data = StageData::Supervised {
        train: train_inputs,
        validation: Vec::new(),
        slot_tags: labels.slot_tags.clone(),
    };
    let (params, _, _) = run_stage(init, &ModelLineage::fresh(), spec, config, &data)?;
    evaluate_corpus(&params, config, test, vocab, labels, 0.5)
}

/// Runs every variant; rows come back in the fixed removal order.
pub fn run_ablation<F: Scalar>(cfg: &AblationConfig<F>) -> Result<Vec<AblationRow>, TrainError> {
    let (train, _val, test) = split_corpus(&cfg.corpus, cfg.split, cfg.split_seed)?;
    let labels = LabelVocabs::from(&cfg.corpus);
    let mut rows = Vec::new();
    for variant in variants() {
        let mut config = cfg.base_config.clone().with_label_spaces(&cfg.corpus);
        config.enable_speaker_embeddings = variant.speaker;
        config.enable_context = variant.context;
        config.enable_system_act_embeddings = variant.system_acts;
        config.validate().map_err(|e| TrainError::ArchitectureMismatch(e.to_string()))?;

        let init = match (&cfg.pretrained, variant.use_pretrained) {
            (Some((params, source_config)), true) => {
                transfer_weights(params, source_config, &config, cfg.seed)?
            }
            _ => ModelParameters::init_seeded(&config, cfg.seed),
        };
        let spec = StageSpec {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            ..StageSpec::defaults_for(Stage::Finetune, format!("ablation:{}", variant.name), cfg.seed)
        };
        let report =
            train_and_score_variant(init, &config, &train, &test, &cfg.vocab, &labels, &spec)?;
        rows.push(AblationRow { name: variant.name.to_string(), report });
    }
    Ok(rows)
}
