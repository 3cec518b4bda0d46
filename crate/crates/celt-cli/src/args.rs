//! Command-line surface.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "celt",
    about = "Context-encoding transformer for multi-turn dialogue understanding",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master random seed; every stage derives named substreams from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// JSON config file (model / stage / split sections). CLI flags win
    /// over file values; file values win over built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Checkpoint to start from (base path; .json/.bin are implied).
    #[arg(long, global = true)]
    pub checkpoint_in: Option<PathBuf>,

    /// Checkpoint to write (base path; .json/.bin are implied).
    #[arg(long, global = true)]
    pub checkpoint_out: Option<PathBuf>,

    /// Dialogue corpus JSON.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,

    /// Output path (corpus, metrics, or table, per subcommand).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Tokenizer vocabulary file (one token per line).
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct StageOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_name = "LR")]
    pub learning_rate: Option<f64>,
    /// Corpus split fractions train,validation,test.
    #[arg(long, value_name = "TR,VA,TE")]
    pub split: Option<String>,
    /// Seed for the dialogue-level split (independent of --seed).
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multi-turn dialogue corpus.
    GenData {
        /// Number of dialogues.
        #[arg(long, default_value_t = 100)]
        dialogues: usize,
        /// Probability that a people/time answer is a bare numeral.
        #[arg(long, default_value_t = 0.6)]
        ambiguous_prob: f64,
    },
    /// Train a subword vocabulary from a corpus and/or plain text.
    BuildVocab {
        /// Plain-text training input (one sentence per line).
        #[arg(long)]
        text: Option<PathBuf>,
        /// Target vocabulary size (specials + alphabet + merges).
        #[arg(long, default_value_t = 400)]
        size: usize,
    },
    /// Masked-token + next-unit pretraining from scratch (θ_A).
    Pretrain {
        /// Additional plain-text documents (blank-line separated).
        #[arg(long)]
        text: Option<PathBuf>,
        #[command(flatten)]
        stage: StageOverrides,
    },
    /// Unsupervised adaptive training on dialogue corpora (θ_A → θ_B).
    AdaptUnsup {
        #[command(flatten)]
        stage: StageOverrides,
    },
    /// Supervised adaptive training: intent + slot losses (→ θ_C).
    AdaptSup {
        /// Intent loss form: softmax (single intent) or sigmoid.
        #[arg(long, default_value = "softmax")]
        ic_mode: String,
        #[command(flatten)]
        stage: StageOverrides,
    },
    /// Target-domain fine-tuning with the joint intent/slot/act loss.
    Finetune {
        #[command(flatten)]
        stage: StageOverrides,
    },
    /// Evaluate a checkpoint on a corpus split and emit metrics JSON.
    Eval {
        /// Which split to score: train, validation, test, or all.
        #[arg(long, default_value = "test")]
        split_part: String,
        #[command(flatten)]
        stage: StageOverrides,
        /// User-act decision threshold (default: the tuned value stored
        /// in the checkpoint).
        #[arg(long)]
        t_u: Option<f64>,
    },
    /// Predict the semantic frame of one utterance (JSON on stdout).
    Predict {
        #[arg(long)]
        utterance: String,
        #[arg(long)]
        t_u: Option<f64>,
    },
    /// Fine-tune and score the cumulative-removal model variants.
    Ablate {
        #[command(flatten)]
        stage: StageOverrides,
    },
    /// Finite-difference verification of every gradient path.
    GradCheck,
}
