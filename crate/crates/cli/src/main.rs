mod args;
mod commands;
mod resolve;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Exit status 2 for anything the caller got wrong, 1 for failures while
/// running.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl From<embedalign::Error> for CliError {
    fn from(e: embedalign::Error) -> Self {
        match e {
            embedalign::Error::Parameter(_) => CliError::Usage(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    let result = match &cli.command {
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::TrainAligner(a) => commands::train_aligner_cmd(a),
        Command::TrainTask(a) => commands::train_task_cmd(a),
        Command::Pipeline(a) => commands::pipeline_cmd(a),
        Command::ReverseInfer(a) => commands::reverse_infer_cmd(a),
        Command::Cosine(a) => commands::cosine_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Ablation(a) => commands::ablation_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
