use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimicry_core::{Error, ErrorKind};

mod commands;
mod config;
mod tables;

use config::Scale;

/// Speaker-verification mimicry attack simulation.
#[derive(Debug, Parser)]
#[command(name = "mimicry", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML run configuration; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact store root.
    #[arg(long, global = true, env = "MIMICRY_STORE")]
    pub store: Option<PathBuf>,
    /// Corpus manifest CSV.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Omit run timings so repeated runs produce byte-identical files.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Model sizes: desk-scale or full-size presets.
    #[arg(long, global = true, value_enum)]
    pub scale: Option<Scale>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, or add attack sessions to one.
    SynthCorpus(commands::SynthArgs),
    /// Train UBM, total variability, LDA, whitener and PLDA for a profile.
    Train(commands::ProfileArgs),
    /// Extract embeddings for every evaluation utterance.
    Extract(commands::ProfileArgs),
    /// Rank targets for attackers and pick closest/median/furthest.
    Rank(commands::RankArgs),
    /// Choose the held-out target test utterances for each assignment.
    SelectUtterances(commands::SelectArgs),
    /// Build and score genuine, zero-effort and mimicry trials.
    Attack(commands::AttackArgs),
    /// Check whether the target ordering carries over between systems.
    TransferReport(commands::TransferArgs),
    /// F0, speaking-rate and formant comparison of attacker and target speech.
    Prosody(commands::ProsodyArgs),
    /// Generate listening-test or verification trial lists.
    Trials(commands::TrialsArgs),
    /// Consolidated report bundle, tables and plot data.
    Report(commands::ReportArgs),
    /// Score a trial list or compute the EER of a score file.
    Eer(commands::EerArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
