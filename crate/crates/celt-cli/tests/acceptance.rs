//! Acceptance suite. Each test prints one pass line with its runtime;
//! numbered to run in criterion order under the default test harness.
//!
//! The heavier criteria (4, 5, 6) train real models on the synthetic
//! corpus, so this suite takes several minutes on one CPU core.

use celt_core::data::{
    ambiguous_turn_stats, bio_decode, bio_encode, generate_synthetic_corpus, split_corpus,
    SlotSpan, SyntheticConfig,
};
use celt_core::evaluation::{build_report, frame_accuracy, slot_f1, user_act_f1};
use celt_core::model::{
    attention_mask_row, crf_decode, crf_log_partition, embed_input, encode_traced, predict_frame,
    CrfParams, ForwardMode, LabelVocabs, ModelConfig, ModelParameters,
};
use celt_core::rng::substream;
use celt_core::tensor::Tensor;
use celt_core::tokenizer::build_vocab;
use celt_core::training::{
    build_supervised_inputs, finetune_with_mask, gold_frames, make_nsp_pairs,
    nsp_units_from_corpus, nsp_units_from_text, predict_corpus, run_stage, transfer_weights,
    MaskingConfig, ModelLineage, Stage, StageData, StageSpec,
};
use rand::Rng;
use std::collections::BTreeSet;
use std::time::Instant;

fn pass(criterion: &str, detail: &str, t0: Instant) {
    println!("[PASS] {criterion}: {detail} ({:.1}s)", t0.elapsed().as_secs_f64());
}

#[test]
fn criterion_1_gradient_suite() {
    let t0 = Instant::now();
    let reports = celt_core::check::full_gradient_suite(2024);
    let mut worst: f64 = 0.0;
    for r in &reports {
        assert!(
            r.passes(1e-4),
            "{}: max rel err {:.3e} over {} elements",
            r.name,
            r.max_rel_err,
            r.elements_checked
        );
        worst = worst.max(r.max_rel_err);
    }
    let names: Vec<&str> = reports.iter().map(|r| r.name.as_str()).collect();
    assert!(names.contains(&"joint_loss"), "suite must cover the full joint loss");
    assert!(names.contains(&"joint_loss_with_crf"), "suite must cover the CRF joint loss");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient suite took {elapsed:.1}s, budget is 60s");
    pass(
        "criterion 1 (gradient suite)",
        &format!("{} checks, worst rel err {worst:.2e} < 1e-4", reports.len()),
        t0,
    );
}

#[test]
fn criterion_2_crf_oracle() {
    let t0 = Instant::now();
    let mut rng = substream(2025, "crf-oracle", 0);
    let mut checked = 0;
    for _ in 0..200 {
        let t = rng.gen_range(1..=5usize);
        let l = rng.gen_range(2..=4usize);
        let rand_vec = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        let crf = CrfParams {
            transitions: Tensor::param(rand_vec(&mut rng, l * l), &[l, l]),
            start: Tensor::param(rand_vec(&mut rng, l), &[l]),
            end: Tensor::param(rand_vec(&mut rng, l), &[l]),
        };
        let emit = rand_vec(&mut rng, t * l);
        let emissions = Tensor::new(emit.clone(), &[t, l]);
        let trans = crf.transitions.to_vec();
        let start = crf.start.to_vec();
        let end = crf.end.to_vec();
        let score = |tags: &[usize]| -> f64 {
            let mut s = start[tags[0]] + end[tags[t - 1]];
            for (pos, &tag) in tags.iter().enumerate() {
                s += emit[pos * l + tag];
            }
            for w in tags.windows(2) {
                s += trans[w[0] * l + w[1]];
            }
            s
        };
        // enumerate all l^t paths
        let mut paths = vec![vec![0usize; t]];
        loop {
            let current = paths.last().unwrap().clone();
            let mut next = current.clone();
            let mut pos = t;
            let mut done = false;
            loop {
                if pos == 0 {
                    done = true;
                    break;
                }
                pos -= 1;
                next[pos] += 1;
                if next[pos] < l {
                    break;
                }
                next[pos] = 0;
            }
            if done {
                break;
            }
            paths.push(next);
        }
        let scores: Vec<f64> = paths.iter().map(|p| score(p)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let brute_log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let log_z = crf_log_partition(&emissions, &crf).item();
        assert!(
            (log_z - brute_log_z).abs() < 1e-8,
            "logZ {log_z} vs brute {brute_log_z} (T={t}, L={l})"
        );
        let best_idx = scores
            .iter()
            .enumerate()
            .fold(0, |b, (i, s)| if *s > scores[b] { i } else { b });
        let decoded = crf_decode(&emissions, &crf);
        assert_eq!(decoded, paths[best_idx], "Viterbi disagrees with exhaustive argmax");
        checked += 1;
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "CRF oracle took {elapsed:.1}s, budget is 10s");
    pass("criterion 2 (CRF oracle)", &format!("{checked} instances, logZ within 1e-8"), t0);
}

#[test]
fn criterion_3_structural_invariants() {
    let t0 = Instant::now();
    // ≥1000 labeled user turns across random dialogues
    let corpus = generate_synthetic_corpus(
        303,
        &SyntheticConfig { num_dialogues: 250, ..Default::default() },
    );
    let vocab = build_vocab(&corpus.all_text(), 300).unwrap();
    let config = {
        let mut c = ModelConfig::desk_scale().with_label_spaces(&corpus);
        c.hidden_size = 16;
        c.ff_size = 32;
        c.num_heads = 2;
        c.token_vocab_size = vocab.len();
        c
    };
    let inputs = build_supervised_inputs(&corpus, &vocab, &config).unwrap();
    assert!(inputs.len() >= 1000, "need ≥1000 inputs, got {}", inputs.len());

    // layout: [CLS] at 0 only, history utterances each closed by [EOU],
    // one separating [SEP] iff history exists, one trailing [SEP],
    // segments 0 through the first [SEP] then 1, word starts in-query
    for input in inputs.iter().take(1000) {
        let cls = vocab.cls_id();
        let sep = vocab.sep_id();
        let eou = vocab.eou_id();
        assert_eq!(input.token_ids[0], cls);
        assert_eq!(input.token_ids.iter().filter(|&&t| t == cls).count(), 1);
        assert_eq!(*input.token_ids.last().unwrap(), sep);
        let sep_count = input.token_ids.iter().filter(|&&t| t == sep).count();
        let eou_count = input.token_ids.iter().filter(|&&t| t == eou).count();
        if eou_count > 0 {
            assert_eq!(sep_count, 2, "history present: separating + trailing [SEP]");
            // the [EOU] block ends right before the separating [SEP]
            let first_sep = input.token_ids.iter().position(|&t| t == sep).unwrap();
            assert_eq!(input.token_ids[first_sep - 1], eou);
        } else {
            assert_eq!(sep_count, 1, "no history: trailing [SEP] only");
        }
        let first_sep = input.token_ids.iter().position(|&t| t == sep).unwrap();
        for (i, &s) in input.segment_ids.iter().enumerate() {
            assert_eq!(s, usize::from(i > first_sep));
        }
        for &w in &input.word_starts {
            assert!(w >= input.query_start && w < input.query_end);
        }
        assert_eq!(input.position_ids, (0..input.len()).collect::<Vec<_>>());
    }

    // attention rows over unpadded keys sum to 1 (tolerance 1e-9), for
    // every head and layer, on padded random inputs
    let params = ModelParameters::<f64>::init_seeded(&config, 7);
    for input in inputs.iter().take(25) {
        let padded = input.pad_to(input.len() + 5, vocab.pad_id());
        let mask: Vec<f64> = attention_mask_row(&padded.attention_mask);
        let mut traces = Vec::new();
        let x = embed_input(&padded, &params, &config, &mut ForwardMode::Eval);
        let _ = encode_traced(x, &params, Some(&mask), &mut ForwardMode::Eval, Some(&mut traces));
        assert_eq!(traces.len(), config.num_layers * config.num_heads);
        for tr in &traces {
            for q in 0..input.len() {
                let row = &tr.probs[q * tr.seq_len..(q + 1) * tr.seq_len];
                let sum: f64 = row[..input.len()].iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "attention row sums to {sum}");
                for &p in &row[input.len()..] {
                    assert_eq!(p, 0.0, "padded key got weight {p}");
                }
            }
        }
    }

    // padding invariance of predict_frame
    let labels = LabelVocabs::from(&corpus);
    for input in inputs.iter().take(50) {
        let frame = predict_frame(input, &params, &config, 0.5, &labels);
        let padded = input.pad_to(input.len() + 9, vocab.pad_id());
        let frame_padded = predict_frame(&padded, &params, &config, 0.5, &labels);
        assert_eq!(frame, frame_padded, "padding changed the predicted frame");
    }

    // BIO round trip over random non-overlapping span sets
    let mut rng = substream(304, "bio", 0);
    for _ in 0..500 {
        let words = rng.gen_range(1..12usize);
        let mut spans = Vec::new();
        let mut cursor = 0;
        while cursor < words {
            let start = cursor + rng.gen_range(0..3usize);
            let end = start + rng.gen_range(1..3usize);
            if end > words {
                break;
            }
            spans.push(SlotSpan::new(format!("s{}", rng.gen_range(0..4)), start, end));
            cursor = end;
        }
        let tags = bio_encode(&spans, words).unwrap();
        let mut decoded = bio_decode(&tags);
        decoded.sort();
        spans.sort();
        assert_eq!(decoded, spans);
    }
    pass(
        "criterion 3 (structural invariants)",
        "layout × 1000, attention sums, padding invariance, BIO round trip",
        t0,
    );
}

/// Fine-tunes a fresh model and returns test-split frame accuracy.
fn train_and_frame_accuracy(
    corpus: &celt_core::data::Corpus,
    vocab: &celt_core::tokenizer::Vocab,
    config: &ModelConfig,
    init: ModelParameters<f32>,
    seed: u64,
    epochs: usize,
    split_seed: u64,
) -> f64 {
    let (train, _val, test) = split_corpus(corpus, (0.8, 0.1, 0.1), split_seed).unwrap();
    let inputs = build_supervised_inputs(&train, vocab, config).unwrap();
    let spec = StageSpec {
        epochs,
        batch_size: 16,
        learning_rate: 1e-3,
        ..StageSpec::defaults_for(Stage::Finetune, "acceptance", seed)
    };
    let data = StageData::Supervised {
        train: inputs,
        validation: Vec::new(),
        slot_tags: corpus.slot_tags(),
    };
    let (params, _, _) = run_stage(init, &ModelLineage::fresh(), &spec, config, &data).unwrap();
    let labels = LabelVocabs::from(corpus);
    let pred = predict_corpus(&params, config, &test, vocab, &labels, 0.5).unwrap();
    let gold = gold_frames(&test);
    frame_accuracy(&pred, &gold, true).unwrap()
}

#[test]
fn criterion_4_context_ablation() {
    let t0 = Instant::now();
    let corpus = generate_synthetic_corpus(
        404,
        &SyntheticConfig { num_dialogues: 500, ..Default::default() },
    );
    let (ambiguous, total) = ambiguous_turn_stats(&corpus);
    assert!(
        ambiguous as f64 / total as f64 >= 0.20,
        "corpus must be ≥20% context-ambiguous, got {ambiguous}/{total}"
    );
    let vocab = build_vocab(&corpus.all_text(), 400).unwrap();
    let full_config = {
        let mut c = ModelConfig::desk_scale().with_label_spaces(&corpus);
        c.token_vocab_size = vocab.len();
        c
    };
    let no_context_config = {
        let mut c = full_config.clone();
        c.enable_context = false;
        c.enable_system_act_embeddings = false;
        c.enable_speaker_embeddings = false;
        c
    };
    let mut full_accs = Vec::new();
    let mut bare_accs = Vec::new();
    for seed in [1u64, 2, 3] {
        let full_init = ModelParameters::init_seeded(&full_config, seed);
        full_accs.push(train_and_frame_accuracy(&corpus, &vocab, &full_config, full_init, seed, 30, 97));
        let bare_init = ModelParameters::init_seeded(&no_context_config, seed);
        bare_accs.push(train_and_frame_accuracy(
            &corpus,
            &vocab,
            &no_context_config,
            bare_init,
            seed,
            30,
            97,
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (full_mean, bare_mean) = (mean(&full_accs), mean(&bare_accs));
    assert!(
        full_mean >= 0.90,
        "full-context frame accuracy {full_mean:.4} below 0.90 (per-seed {full_accs:?})"
    );
    assert!(
        full_mean - bare_mean >= 0.10,
        "context gap {:.4} below 10 points (full {full_accs:?}, bare {bare_accs:?})",
        full_mean - bare_mean
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "context ablation took {elapsed:.1}s, budget is 600s");
    pass(
        "criterion 4 (context ablation)",
        &format!("full {full_mean:.3} ≥ 0.90, no-context {bare_mean:.3}, gap {:.1} points", (full_mean - bare_mean) * 100.0),
        t0,
    );
}

#[test]
fn criterion_5_transfer_learning_lift() {
    let t0 = Instant::now();
    // one corpus; 15% of dialogues (~52) train the supervised arm, the
    // 80% test split scores it; a separate unlabeled corpus pretrains
    let labeled = generate_synthetic_corpus(
        505,
        &SyntheticConfig { num_dialogues: 350, ..Default::default() },
    );
    let unlabeled = celt_core::data::strip_labels(&generate_synthetic_corpus(
        506,
        &SyntheticConfig { num_dialogues: 400, ..Default::default() },
    ));
    let text = include_str!("../assets/pretrain_text.txt");
    let mut vocab_text = unlabeled.all_text();
    vocab_text.push_str(text);
    let vocab = build_vocab(&vocab_text, 400).unwrap();

    let target_config = {
        let mut c = ModelConfig::desk_scale().with_label_spaces(&labeled);
        c.token_vocab_size = vocab.len();
        c
    };
    // pretraining stage configs share the architecture; label spaces come
    // from the unlabeled corpus (none)
    let pretrain_config = {
        let mut c = ModelConfig::desk_scale().with_label_spaces(&unlabeled);
        c.token_vocab_size = vocab.len();
        c
    };

    // θ_A: masked-token + next-unit training on general text
    let text_docs = nsp_units_from_text(text, &vocab);
    let mut rng_a = substream(507, "nsp", 0);
    let text_pairs =
        make_nsp_pairs(&text_docs, &vocab, pretrain_config.num_system_acts, 128, &mut rng_a)
            .unwrap();
    let spec_a = StageSpec {
        epochs: 8,
        batch_size: 32,
        learning_rate: 1e-3,
        ..StageSpec::defaults_for(Stage::Pretrain, "text", 508)
    };
    let data_a = StageData::Unsupervised {
        train: text_pairs,
        validation: Vec::new(),
        masking: MaskingConfig::default(),
        vocab: vocab.clone(),
    };
    let theta_0 = ModelParameters::<f32>::init_seeded(&pretrain_config, 509);
    let (theta_a, lineage_a, _) =
        run_stage(theta_0, &ModelLineage::fresh(), &spec_a, &pretrain_config, &data_a).unwrap();

    // θ_B: unsupervised adaptation on the unlabeled dialogue corpus
    let dialogue_docs = nsp_units_from_corpus(&unlabeled, &vocab);
    let mut rng_b = substream(510, "nsp", 0);
    let dialogue_pairs =
        make_nsp_pairs(&dialogue_docs, &vocab, pretrain_config.num_system_acts, 128, &mut rng_b)
            .unwrap();
    let spec_b = StageSpec {
        epochs: 6,
        batch_size: 32,
        learning_rate: 5e-4,
        ..StageSpec::defaults_for(Stage::UnsupAdapt, "dialogues", 511)
    };
    let data_b = StageData::Unsupervised {
        train: dialogue_pairs,
        validation: Vec::new(),
        masking: MaskingConfig::default(),
        vocab: vocab.clone(),
    };
    let (theta_b, _, _) = run_stage(theta_a, &lineage_a, &spec_b, &pretrain_config, &data_b).unwrap();

    // both arms fine-tune on ~50 labeled dialogues under the same budget
    let (train, _val, test) = split_corpus(&labeled, (0.15, 0.05, 0.8), 512).unwrap();
    assert!((45..=60).contains(&train.dialogues.len()), "got {} train dialogues", train.dialogues.len());
    let labels = LabelVocabs::from(&labeled);
    let gold = gold_frames(&test);
    let finetune = |init: ModelParameters<f32>, seed: u64| -> f64 {
        let inputs = build_supervised_inputs(&train, &vocab, &target_config).unwrap();
        let spec = StageSpec {
            epochs: 8,
            batch_size: 16,
            learning_rate: 1e-3,
            ..StageSpec::defaults_for(Stage::Finetune, "lift", seed)
        };
        let data = StageData::Supervised {
            train: inputs,
            validation: Vec::new(),
            slot_tags: labeled.slot_tags(),
        };
        let (params, _, _) =
            run_stage(init, &ModelLineage::fresh(), &spec, &target_config, &data).unwrap();
        let pred = predict_corpus(&params, &target_config, &test, &vocab, &labels, 0.5).unwrap();
        frame_accuracy(&pred, &gold, true).unwrap()
    };

    let mut scratch = Vec::new();
    let mut warm = Vec::new();
    for seed in [101u64, 102, 103] {
        scratch.push(finetune(ModelParameters::init_seeded(&target_config, seed), seed));
        let init = transfer_weights(&theta_b, &pretrain_config, &target_config, seed).unwrap();
        warm.push(finetune(init, seed));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let lift = mean(&warm) - mean(&scratch);
    assert!(
        lift >= 0.05,
        "transfer lift {:.4} below 5 points (warm {warm:?}, scratch {scratch:?})",
        lift
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 900.0, "transfer lift took {elapsed:.1}s, budget is 900s");
    pass(
        "criterion 5 (transfer lift)",
        &format!(
            "warm {:.3} vs scratch {:.3}, lift {:.1} points",
            mean(&warm),
            mean(&scratch),
            lift * 100.0
        ),
        t0,
    );
}

#[test]
fn criterion_6_joint_vs_separate() {
    let t0 = Instant::now();
    let corpus = generate_synthetic_corpus(
        606,
        &SyntheticConfig { num_dialogues: 150, ..Default::default() },
    );
    let vocab = build_vocab(&corpus.all_text(), 400).unwrap();
    let config = {
        let mut c = ModelConfig::desk_scale().with_label_spaces(&corpus);
        c.token_vocab_size = vocab.len();
        c
    };
    let (train, _val, test) = split_corpus(&corpus, (0.8, 0.1, 0.1), 607).unwrap();
    let train_inputs = build_supervised_inputs(&train, &vocab, &config).unwrap();
    let labels = LabelVocabs::from(&corpus);
    let gold = gold_frames(&test);

    let masks = [
        celt_core::model::LossMask::all(),
        celt_core::model::LossMask { intent: true, user_acts: false, slots: false },
        celt_core::model::LossMask { intent: false, user_acts: false, slots: true },
        celt_core::model::LossMask { intent: false, user_acts: true, slots: false },
    ];
    let mut joint_accs = Vec::new();
    let mut separate_accs = Vec::new();
    for seed in [11u64, 12, 13] {
        let mut trained = Vec::new();
        for mask in &masks {
            let init = ModelParameters::<f32>::init_seeded(&config, seed);
            trained.push(
                finetune_with_mask(init, &config, &train_inputs, 15, 16, 1e-3, seed, *mask)
                    .unwrap(),
            );
        }
        let frames =
            |p: &ModelParameters<f32>| predict_corpus(p, &config, &test, &vocab, &labels, 0.5).unwrap();
        let joint_frames = frames(&trained[0]);
        joint_accs.push(frame_accuracy(&joint_frames, &gold, true).unwrap());
        // combine the per-head specialists into one frame per example
        let (ic, sf, uac) = (frames(&trained[1]), frames(&trained[2]), frames(&trained[3]));
        let combined: Vec<celt_core::data::SemanticFrame> = ic
            .iter()
            .zip(&sf)
            .zip(&uac)
            .map(|((i, s), u)| celt_core::data::SemanticFrame {
                intent: i.intent.clone(),
                user_acts: u.user_acts.clone(),
                slots: s.slots.clone(),
            })
            .collect();
        separate_accs.push(frame_accuracy(&combined, &gold, true).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (joint_mean, separate_mean) = (mean(&joint_accs), mean(&separate_accs));
    assert!(
        joint_mean >= separate_mean - 0.01,
        "joint {joint_mean:.4} (per-seed {joint_accs:?}) trails separate {separate_mean:.4} \
         (per-seed {separate_accs:?}) by more than 1 point"
    );
    pass(
        "criterion 6 (joint vs separate)",
        &format!("joint {joint_mean:.3} vs separate {separate_mean:.3} (non-inferiority 1 point)"),
        t0,
    );
}

#[test]
fn criterion_7_determinism_and_persistence() {
    let t0 = Instant::now();
    let run_pipeline = |dir: &std::path::Path| -> Vec<u8> {
        let celt = env!("CARGO_BIN_EXE_celt");
        let run = |args: &[&str]| {
            let out = std::process::Command::new(celt)
                .current_dir(dir)
                .args(args)
                .output()
                .expect("command runs");
            assert!(
                out.status.success(),
                "celt {args:?} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        };
        std::fs::write(dir.join("pretrain.txt"), include_str!("../assets/pretrain_text.txt"))
            .unwrap();
        run(&["gen-data", "--seed", "77", "--dialogues", "120", "--out", "corpus.json"]);
        run(&["build-vocab", "--corpus", "corpus.json", "--text", "pretrain.txt", "--size", "320", "--out", "vocab.txt"]);
        run(&[
            "pretrain", "--corpus", "corpus.json", "--text", "pretrain.txt", "--vocab", "vocab.txt",
            "--checkpoint-out", "theta_a", "--seed", "78", "--epochs", "1", "--batch-size", "32",
            "--learning-rate", "1e-3",
        ]);
        run(&[
            "adapt-unsup", "--corpus", "corpus.json", "--vocab", "vocab.txt", "--checkpoint-in",
            "theta_a", "--checkpoint-out", "theta_b", "--seed", "79", "--epochs", "1",
            "--batch-size", "32", "--learning-rate", "5e-4",
        ]);
        run(&[
            "adapt-sup", "--corpus", "corpus.json", "--vocab", "vocab.txt", "--checkpoint-in",
            "theta_b", "--checkpoint-out", "theta_c", "--seed", "80", "--epochs", "1",
            "--batch-size", "16", "--learning-rate", "1e-3",
        ]);
        run(&[
            "finetune", "--corpus", "corpus.json", "--vocab", "vocab.txt", "--checkpoint-in",
            "theta_c", "--checkpoint-out", "final", "--seed", "81", "--epochs", "2",
            "--batch-size", "16", "--learning-rate", "1e-3",
        ]);
        run(&[
            "eval", "--corpus", "corpus.json", "--vocab", "vocab.txt", "--checkpoint-in", "final",
            "--out", "metrics.json",
        ]);
        std::fs::read(dir.join("metrics.json")).unwrap()
    };
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let metrics1 = run_pipeline(dir1.path());
    let metrics2 = run_pipeline(dir2.path());
    assert_eq!(metrics1, metrics2, "end-to-end metrics JSON must be bit-identical");

    // checkpoint round trip: load + save reproduces the binary bit for bit
    let base = dir1.path().join("final");
    let (params, manifest) = celt_cli::checkpoint::load_checkpoint(&base, None).unwrap();
    let resaved = dir1.path().join("resaved");
    celt_cli::checkpoint::save_checkpoint(
        &params,
        &manifest.model_config,
        &manifest.lineage,
        &manifest.labels,
        &manifest.vocab_sha256,
        manifest.threshold_t_u,
        &resaved,
    )
    .unwrap();
    let original = std::fs::read(dir1.path().join("final.bin")).unwrap();
    let round_tripped = std::fs::read(dir1.path().join("resaved.bin")).unwrap();
    assert_eq!(original, round_tripped, "checkpoint round trip must be bit-exact");
    pass(
        "criterion 7 (determinism & persistence)",
        "two pipeline runs byte-identical; checkpoint round trip bit-exact",
        t0,
    );
}

#[test]
fn criterion_8_metric_oracles() {
    let t0 = Instant::now();
    let mut rng = substream(808, "metric-oracle", 0);
    // independent brute-force span matcher: literal set intersection of
    // (name, start, end) triples, counted with nested loops
    let brute_slot = |pred: &[celt_core::data::SemanticFrame],
                      gold: &[celt_core::data::SemanticFrame]|
     -> (f64, f64, f64) {
        let (mut tp, mut pred_n, mut gold_n) = (0u64, 0u64, 0u64);
        for (p, g) in pred.iter().zip(gold) {
            pred_n += p.slots.len() as u64;
            gold_n += g.slots.len() as u64;
            for ps in &p.slots {
                let hit = g
                    .slots
                    .iter()
                    .any(|gs| gs.slot == ps.slot && gs.start_word == ps.start_word && gs.end_word == ps.end_word);
                if hit {
                    tp += 1;
                }
            }
        }
        let precision = if pred_n == 0 { 0.0 } else { tp as f64 / pred_n as f64 };
        let recall = if gold_n == 0 { 0.0 } else { tp as f64 / gold_n as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        (precision, recall, f1)
    };
    let brute_acts =
        |pred: &[BTreeSet<String>], gold: &[BTreeSet<String>]| -> (f64, f64, f64) {
            let (mut tp, mut pred_n, mut gold_n) = (0u64, 0u64, 0u64);
            for (p, g) in pred.iter().zip(gold) {
                pred_n += p.len() as u64;
                gold_n += g.len() as u64;
                for a in p {
                    if g.contains(a) {
                        tp += 1;
                    }
                }
            }
            let precision = if pred_n == 0 { 0.0 } else { tp as f64 / pred_n as f64 };
            let recall = if gold_n == 0 { 0.0 } else { tp as f64 / gold_n as f64 };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            (precision, recall, f1)
        };

    for case in 0..100 {
        let n = rng.gen_range(1..12usize);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..n {
            let mk_frame = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut slots = Vec::new();
                let mut cursor = 0usize;
                for _ in 0..rng.gen_range(0..3) {
                    let start = cursor + rng.gen_range(0..2);
                    let end = start + rng.gen_range(1..3);
                    slots.push(SlotSpan::new(format!("s{}", rng.gen_range(0..3)), start, end));
                    cursor = end + rng.gen_range(0..2);
                }
                let acts: BTreeSet<String> =
                    (0..rng.gen_range(0..3)).map(|_| format!("a{}", rng.gen_range(0..4))).collect();
                celt_core::data::SemanticFrame {
                    intent: format!("i{}", rng.gen_range(0..3)),
                    user_acts: acts,
                    slots,
                }
            };
            gold.push(mk_frame(&mut rng));
            pred.push(mk_frame(&mut rng));
        }
        let prf = slot_f1(&pred, &gold).unwrap();
        let (bp, br, bf) = brute_slot(&pred, &gold);
        assert_eq!((prf.precision, prf.recall, prf.f1), (bp, br, bf), "slot case {case}");

        let pred_acts: Vec<BTreeSet<String>> = pred.iter().map(|f| f.user_acts.clone()).collect();
        let gold_acts: Vec<BTreeSet<String>> = gold.iter().map(|f| f.user_acts.clone()).collect();
        let prf = user_act_f1(&pred_acts, &gold_acts).unwrap();
        let (bp, br, bf) = brute_acts(&pred_acts, &gold_acts);
        assert_eq!((prf.precision, prf.recall, prf.f1), (bp, br, bf), "act case {case}");

        // the aggregate report carries the same numbers
        let report = build_report(&pred, &gold, true).unwrap();
        assert_eq!(report.slot_f1, prf_f1_of(&pred, &gold));
    }
    fn prf_f1_of(
        pred: &[celt_core::data::SemanticFrame],
        gold: &[celt_core::data::SemanticFrame],
    ) -> f64 {
        slot_f1(pred, gold).unwrap().f1
    }
    pass("criterion 8 (metric oracles)", "100 randomized corpora agree exactly", t0);
}
