//! Command-line driver tying the pipeline together: synthetic data,
//! vocabulary training, the four training stages, evaluation, single
//! utterance prediction, ablations, and gradient verification.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;

use args::{Cli, Command};
use clap::error::ErrorKind;
use clap::Parser;
use error::AppError;

pub fn dispatch(cli: &Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::GenData { dialogues, ambiguous_prob } => {
            commands::gen_data(cli, *dialogues, *ambiguous_prob)
        }
        Command::BuildVocab { text, size } => commands::build_vocab_cmd(cli, text.as_ref(), *size),
        Command::Pretrain { text, stage } => commands::stage_command(
            cli,
            celt_core::training::Stage::Pretrain,
            stage,
            text.as_ref(),
            None,
        ),
        Command::AdaptUnsup { stage } => commands::stage_command(
            cli,
            celt_core::training::Stage::UnsupAdapt,
            stage,
            None,
            None,
        ),
        Command::AdaptSup { ic_mode, stage } => commands::stage_command(
            cli,
            celt_core::training::Stage::SupAdapt,
            stage,
            None,
            Some(ic_mode),
        ),
        Command::Finetune { stage } => commands::stage_command(
            cli,
            celt_core::training::Stage::Finetune,
            stage,
            None,
            None,
        ),
        Command::Eval { split_part, stage, t_u } => commands::eval_cmd(cli, split_part, stage, *t_u),
        Command::Predict { utterance, t_u } => commands::predict_cmd(cli, utterance, *t_u),
        Command::Ablate { stage } => commands::ablate_cmd(cli, stage),
        Command::GradCheck => commands::grad_check_cmd(cli),
    }
}

/// Parses and runs; returns the process exit code
/// (0 success, 1 usage, 2 validation, 3 i/o).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return error::EXIT_USAGE;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
