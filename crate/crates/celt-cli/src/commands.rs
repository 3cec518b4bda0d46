//! Subcommand implementations.

use crate::args::{Cli, StageOverrides};
use crate::checkpoint::{load_checkpoint, save_checkpoint, sha256_hex, CheckpointManifest, LabelTables};
use crate::config::{resolve_split, resolve_stage_spec, FileConfig};
use crate::error::AppError;
use celt_core::data::{
    self, generate_synthetic_corpus, load_corpus, save_corpus, split_corpus, Corpus, Dialogue,
    SemanticFrame, SyntheticConfig, Turn,
};
use celt_core::evaluation::MetricsReport;
use celt_core::model::{predict_frame, LabelVocabs, ModelConfig, ModelParameters};
use celt_core::tokenizer::{build_vocab, Vocab};
use celt_core::training::{
    build_supervised_inputs, make_nsp_pairs, nsp_units_from_corpus, nsp_units_from_text,
    run_ablation, run_stage, tune_threshold, AblationConfig, ModelLineage, Stage, StageData,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, AppError> {
    value.as_ref().ok_or_else(|| AppError::Usage(format!("missing required flag --{flag}")))
}

fn load_vocab_with_hash(path: &Path) -> Result<(Vocab, String), AppError> {
    let bytes = std::fs::read(path)
        .map_err(|e| AppError::Io(format!("vocabulary {}: {e}", path.display())))?;
    let vocab = Vocab::load(path)?;
    Ok((vocab, sha256_hex(&bytes)))
}

fn write_or_print(out: Option<&PathBuf>, content: &str) -> Result<(), AppError> {
    match out {
        Some(path) => {
            std::fs::write(path, content)
                .map_err(|e| AppError::Io(format!("writing {}: {e}", path.display())))?;
        }
        None => println!("{content}"),
    }
    Ok(())
}

pub fn gen_data(cli: &Cli, dialogues: usize, ambiguous_prob: f64) -> Result<(), AppError> {
    let out = require(&cli.out, "out")?;
    let config = SyntheticConfig {
        num_dialogues: dialogues,
        ambiguous_answer_prob: ambiguous_prob,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(cli.seed, &config);
    save_corpus(&corpus, out)?;
    let (ambiguous, total) = data::ambiguous_turn_stats(&corpus);
    eprintln!(
        "wrote {} dialogues ({total} user turns, {ambiguous} context-ambiguous) to {}",
        corpus.dialogues.len(),
        out.display()
    );
    Ok(())
}

pub fn build_vocab_cmd(cli: &Cli, text: Option<&PathBuf>, size: usize) -> Result<(), AppError> {
    let out = require(&cli.out, "out")?;
    let mut training_text = String::new();
    if let Some(corpus_path) = &cli.corpus {
        training_text.push_str(&load_corpus(corpus_path)?.all_text());
    }
    if let Some(text_path) = text {
        training_text.push_str(
            &std::fs::read_to_string(text_path)
                .map_err(|e| AppError::Io(format!("text {}: {e}", text_path.display())))?,
        );
        training_text.push('\n');
    }
    if training_text.is_empty() {
        return Err(AppError::Usage("build-vocab needs --corpus and/or --text".into()));
    }
    let vocab = build_vocab(&training_text, size)?;
    vocab.save(out)?;
    eprintln!("wrote {} tokens to {}", vocab.len(), out.display());
    Ok(())
}

/// Target architecture for this run: desk-scale defaults, the config
/// file's model section, label spaces from the corpus, vocab size from
/// the tokenizer.
fn target_config(file: &FileConfig, corpus: &Corpus, vocab: &Vocab) -> Result<ModelConfig, AppError> {
    let mut config = file.model.apply(ModelConfig::desk_scale()).with_label_spaces(corpus);
    config.token_vocab_size = vocab.len();
    config.validate()?;
    Ok(config)
}

/// Starting parameters: fresh init, the checkpoint as-is when its
/// architecture and label spaces match the target exactly, or an
/// encoder/embedding transfer into freshly initialized heads otherwise.
fn initial_params(
    cli: &Cli,
    target: &ModelConfig,
    spec_seed: u64,
) -> Result<(ModelParameters<f32>, ModelLineage), AppError> {
    match &cli.checkpoint_in {
        None => Ok((ModelParameters::init_seeded(target, spec_seed), ModelLineage::fresh())),
        Some(path) => {
            let (params, manifest) = load_checkpoint(path, None)?;
            let same_shape = load_checkpoint(path, Some(target)).is_ok();
            if same_shape {
                Ok((params, manifest.lineage))
            } else {
                let transferred = celt_core::training::transfer_weights(
                    &params,
                    &manifest.model_config,
                    target,
                    spec_seed,
                )?;
                Ok((transferred, manifest.lineage))
            }
        }
    }
}

fn print_epoch_metrics(metrics: &[celt_core::training::EpochMetrics]) {
    for m in metrics {
        let mut line = format!("epoch {:>3}: train_loss {:.4}", m.epoch + 1, m.train_loss);
        if let Some(v) = m.val_loss {
            line.push_str(&format!("  val_loss {v:.4}"));
        }
        if let Some(a) = m.val_frame_accuracy {
            line.push_str(&format!("  val_frame_acc {a:.4}"));
        }
        eprintln!("{line}");
    }
}

fn labels_from_corpus(corpus: &Corpus) -> LabelTables {
    LabelTables {
        intents: corpus.intents.clone(),
        user_acts: corpus.user_acts.clone(),
        slots: corpus.slots.clone(),
        system_acts: corpus.system_acts.clone(),
    }
}

pub fn stage_command(
    cli: &Cli,
    stage: Stage,
    overrides: &StageOverrides,
    text: Option<&PathBuf>,
    ic_mode: Option<&str>,
) -> Result<(), AppError> {
    let corpus_path = require(&cli.corpus, "corpus")?;
    let vocab_path = require(&cli.vocab, "vocab")?;
    let checkpoint_out = require(&cli.checkpoint_out, "checkpoint-out")?;
    if matches!(stage, Stage::UnsupAdapt | Stage::SupAdapt) && cli.checkpoint_in.is_none() {
        return Err(AppError::Usage(format!(
            "{} continues from a pretrained model; pass --checkpoint-in",
            match stage {
                Stage::UnsupAdapt => "adapt-unsup",
                _ => "adapt-sup",
            }
        )));
    }
    if stage == Stage::Pretrain && cli.checkpoint_in.is_some() {
        return Err(AppError::Usage("pretrain starts from scratch; drop --checkpoint-in".into()));
    }

    let file = FileConfig::load(cli.config.as_deref())?;
    let corpus = load_corpus(corpus_path)?;
    let (vocab, vocab_hash) = load_vocab_with_hash(vocab_path)?;
    let mut spec = resolve_stage_spec(
        stage,
        &corpus_path.display().to_string(),
        cli.seed,
        &file,
        overrides,
    );
    if let Some(mode) = ic_mode {
        spec.ic_mode = match mode {
            "softmax" => celt_core::training::IcMode::Softmax,
            "sigmoid" => celt_core::training::IcMode::Sigmoid,
            other => return Err(AppError::Usage(format!("--ic-mode must be softmax or sigmoid, got {other}"))),
        };
    }
    let (fractions, split_seed) = resolve_split(&file, overrides)?;
    let config = target_config(&file, &corpus, &vocab)?;
    let (params, lineage) = initial_params(cli, &config, spec.seed)?;

    let (train_corpus, val_corpus, _test) = split_corpus(&corpus, fractions, split_seed)?;
    let data = match stage {
        Stage::Pretrain | Stage::UnsupAdapt => {
            let mut train_docs = nsp_units_from_corpus(&train_corpus, &vocab);
            if let Some(text_path) = text {
                let raw = std::fs::read_to_string(text_path)
                    .map_err(|e| AppError::Io(format!("text {}: {e}", text_path.display())))?;
                train_docs.extend(nsp_units_from_text(&raw, &vocab));
            }
            let val_docs = nsp_units_from_corpus(&val_corpus, &vocab);
            let mut pair_rng = celt_core::rng::substream(spec.seed, "nsp", 0);
            let train = make_nsp_pairs(
                &train_docs,
                &vocab,
                config.num_system_acts,
                config.max_sequence_length,
                &mut pair_rng,
            )?;
            let mut val_rng = celt_core::rng::substream(spec.seed, "nsp", 1);
            let validation = make_nsp_pairs(
                &val_docs,
                &vocab,
                config.num_system_acts,
                config.max_sequence_length,
                &mut val_rng,
            )
            .unwrap_or_default();
            StageData::Unsupervised {
                train,
                validation,
                masking: celt_core::training::MaskingConfig::default(),
                vocab: vocab.clone(),
            }
        }
        Stage::SupAdapt | Stage::Finetune => StageData::Supervised {
            train: build_supervised_inputs(&train_corpus, &vocab, &config)?,
            validation: build_supervised_inputs(&val_corpus, &vocab, &config)?,
            slot_tags: corpus.slot_tags(),
        },
    };

    let (params, lineage, metrics) = run_stage(params, &lineage, &spec, &config, &data)?;
    print_epoch_metrics(&metrics);

    // tune the act threshold after fine-tuning, when acts are annotated
    let threshold_t_u = if stage == Stage::Finetune && config.num_user_acts > 0 {
        match &data {
            StageData::Supervised { validation, .. } if !validation.is_empty() => {
                let t = tune_threshold(&params, &config, validation)?;
                eprintln!("tuned user-act threshold t_u = {t}");
                t
            }
            _ => 0.5,
        }
    } else {
        0.5
    };

    save_checkpoint(
        &params,
        &config,
        &lineage,
        &labels_from_corpus(&corpus),
        &vocab_hash,
        threshold_t_u,
        checkpoint_out,
    )?;
    eprintln!("wrote checkpoint {}", checkpoint_out.display());
    Ok(())
}

fn label_vocabs_from_tables(labels: &LabelTables) -> LabelVocabs {
    LabelVocabs {
        intents: labels.intents.clone(),
        user_acts: labels.user_acts.clone(),
        slot_tags: data::tag_vocabulary(&labels.slots),
    }
}

fn check_vocab_hash(manifest: &CheckpointManifest, vocab_hash: &str) -> Result<(), AppError> {
    if manifest.vocab_sha256 != vocab_hash {
        return Err(AppError::Validation(format!(
            "vocabulary hash {} does not match the checkpoint's {}",
            vocab_hash, manifest.vocab_sha256
        )));
    }
    Ok(())
}

/// Metrics artifact: the report fields flat at the top level, plus the
/// effective configuration that produced them.
#[derive(Serialize)]
struct MetricsArtifact<'a> {
    #[serde(flatten)]
    report: &'a MetricsReport,
    effective_config: EffectiveConfig<'a>,
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    model: &'a ModelConfig,
    t_u: f64,
    split_part: &'a str,
    split_fractions: (f64, f64, f64),
    split_seed: u64,
    corpus: String,
    checkpoint: String,
}

pub fn eval_cmd(
    cli: &Cli,
    split_part: &str,
    overrides: &StageOverrides,
    t_u_flag: Option<f64>,
) -> Result<(), AppError> {
    let corpus_path = require(&cli.corpus, "corpus")?;
    let vocab_path = require(&cli.vocab, "vocab")?;
    let checkpoint_in = require(&cli.checkpoint_in, "checkpoint-in")?;
    let file = FileConfig::load(cli.config.as_deref())?;
    let corpus = load_corpus(corpus_path)?;
    let (vocab, vocab_hash) = load_vocab_with_hash(vocab_path)?;
    let (params, manifest) = load_checkpoint(checkpoint_in, None)?;
    check_vocab_hash(&manifest, &vocab_hash)?;
    if corpus.system_acts != manifest.labels.system_acts {
        return Err(AppError::Validation(format!(
            "corpus system-act vocabulary {:?} does not match the checkpoint's {:?}",
            corpus.system_acts, manifest.labels.system_acts
        )));
    }

    let (fractions, split_seed) = resolve_split(&file, overrides)?;
    let part = match split_part {
        "all" => corpus.clone(),
        "train" => split_corpus(&corpus, fractions, split_seed)?.0,
        "validation" => split_corpus(&corpus, fractions, split_seed)?.1,
        "test" => split_corpus(&corpus, fractions, split_seed)?.2,
        other => {
            return Err(AppError::Usage(format!(
                "--split-part must be train, validation, test or all, got {other}"
            )))
        }
    };
    let t_u = t_u_flag.unwrap_or(manifest.threshold_t_u);
    let labels = label_vocabs_from_tables(&manifest.labels);
    let report = celt_core::training::evaluate_corpus(
        &params,
        &manifest.model_config,
        &part,
        &vocab,
        &labels,
        t_u,
    )?;
    let artifact = MetricsArtifact {
        report: &report,
        effective_config: EffectiveConfig {
            model: &manifest.model_config,
            t_u,
            split_part,
            split_fractions: fractions,
            split_seed,
            corpus: corpus_path.display().to_string(),
            checkpoint: checkpoint_in.display().to_string(),
        },
    };
    let json = serde_json::to_string_pretty(&artifact)
        .map_err(|e| AppError::Validation(e.to_string()))?;
    write_or_print(cli.out.as_ref(), &json)?;
    Ok(())
}

pub fn predict_cmd(cli: &Cli, utterance: &str, t_u_flag: Option<f64>) -> Result<(), AppError> {
    let vocab_path = require(&cli.vocab, "vocab")?;
    let checkpoint_in = require(&cli.checkpoint_in, "checkpoint-in")?;
    let (vocab, vocab_hash) = load_vocab_with_hash(vocab_path)?;
    let (params, manifest) = load_checkpoint(checkpoint_in, None)?;
    check_vocab_hash(&manifest, &vocab_hash)?;

    let dialogue =
        Dialogue { id: "query".into(), turns: vec![Turn::user(utterance.to_string(), None)] };
    let corpus = Corpus {
        dialogues: vec![dialogue],
        intents: manifest.labels.intents.clone(),
        user_acts: manifest.labels.user_acts.clone(),
        slots: manifest.labels.slots.clone(),
        system_acts: manifest.labels.system_acts.clone(),
    };
    let input = data::build_input_sequence(
        &corpus.dialogues[0],
        0,
        &vocab,
        &corpus,
        &manifest.model_config.input_build_config(),
    )?;
    let labels = label_vocabs_from_tables(&manifest.labels);
    let t_u = t_u_flag.unwrap_or(manifest.threshold_t_u);
    let frame: SemanticFrame =
        predict_frame(&input, &params, &manifest.model_config, t_u, &labels);
    #[derive(Serialize)]
    struct SpanOut<'a> {
        slot: &'a str,
        start_word: usize,
        end_word: usize,
    }
    #[derive(Serialize)]
    struct FrameOut<'a> {
        intent: &'a str,
        user_acts: Vec<&'a str>,
        slots: Vec<SpanOut<'a>>,
    }
    let out = FrameOut {
        intent: &frame.intent,
        user_acts: frame.user_acts.iter().map(String::as_str).collect(),
        slots: frame
            .slots
            .iter()
            .map(|s| SpanOut { slot: &s.slot, start_word: s.start_word, end_word: s.end_word })
            .collect(),
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("frame serializes"));
    Ok(())
}

pub fn ablate_cmd(cli: &Cli, overrides: &StageOverrides) -> Result<(), AppError> {
    let corpus_path = require(&cli.corpus, "corpus")?;
    let vocab_path = require(&cli.vocab, "vocab")?;
    let file = FileConfig::load(cli.config.as_deref())?;
    let corpus = load_corpus(corpus_path)?;
    let (vocab, _) = load_vocab_with_hash(vocab_path)?;
    let spec = resolve_stage_spec(
        Stage::Finetune,
        &corpus_path.display().to_string(),
        cli.seed,
        &file,
        overrides,
    );
    let (fractions, split_seed) = resolve_split(&file, overrides)?;
    let mut base_config = file.model.apply(ModelConfig::desk_scale());
    base_config.token_vocab_size = vocab.len();
    let pretrained = match &cli.checkpoint_in {
        None => None,
        Some(path) => {
            let (params, manifest) = load_checkpoint(path, None)?;
            Some((params, manifest.model_config))
        }
    };
    let rows = run_ablation(&AblationConfig {
        corpus,
        vocab,
        base_config,
        pretrained,
        seed: spec.seed,
        epochs: spec.epochs,
        batch_size: spec.batch_size,
        learning_rate: spec.learning_rate,
        split: fractions,
        split_seed,
    })?;
    println!(
        "{:<44} {:>10} {:>8} {:>8} {:>10}",
        "variant", "intent_acc", "act_f1", "slot_f1", "frame_acc"
    );
    for row in &rows {
        println!(
            "{:<44} {:>10.4} {:>8.4} {:>8.4} {:>10.4}",
            row.name,
            row.report.intent_accuracy,
            row.report.user_act_f1,
            row.report.slot_f1,
            row.report.frame_accuracy
        );
    }
    if let Some(out) = &cli.out {
        #[derive(Serialize)]
        struct RowOut<'a> {
            variant: &'a str,
            #[serde(flatten)]
            report: &'a MetricsReport,
        }
        let rows_out: Vec<RowOut> =
            rows.iter().map(|r| RowOut { variant: &r.name, report: &r.report }).collect();
        std::fs::write(
            out,
            serde_json::to_string_pretty(&rows_out).expect("rows serialize"),
        )
        .map_err(|e| AppError::Io(format!("writing {}: {e}", out.display())))?;
    }
    Ok(())
}

pub fn grad_check_cmd(cli: &Cli) -> Result<(), AppError> {
    let reports = celt_core::check::full_gradient_suite(cli.seed);
    let mut failed = 0;
    for r in &reports {
        let ok = r.passes(1e-4);
        println!(
            "{} {:<24} max rel err {:>10.3e}  ({} elements)",
            if ok { "ok  " } else { "FAIL" },
            r.name,
            r.max_rel_err,
            r.elements_checked
        );
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(AppError::Validation(format!("{failed} gradient checks failed")));
    }
    Ok(())
}
