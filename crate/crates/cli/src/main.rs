//! Command-line front end for the constrained-erasure-channel library.
//!
//! Every command is deterministic given its full flag set including the seed;
//! `RLLFBC_SEED` supplies a default seed, flags override it. CSV headers and
//! JSON keys are fixed strings so the outputs are scriptable.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 channel-use budget exhausted.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "rllfbc",
    version,
    about = "Feedback capacity of the no-consecutive-ones erasure channel: \
             closed form, dynamic program, and a zero-error coding scheme"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity table: p*, capacity, its alternative form, and the
    /// non-causal entropy-rate maximum per erasure probability
    Capacity(CapacityArgs),
    /// Value iteration for the average-reward dynamic program
    ValueIter(ValueIterArgs),
    /// Closed-loop simulation of the dynamic program under the optimal policy
    DpSim(DpSimArgs),
    /// Zero-error message transmissions over a simulated feedback channel
    Transmit(TransmitArgs),
}

#[derive(Args)]
struct CapacityArgs {
    /// Single erasure probability in [0, 1]
    #[arg(long, conflicts_with = "sweep")]
    eps: Option<f64>,
    /// Range `start:end:step`, endpoints inclusive within half a step
    #[arg(long)]
    sweep: Option<String>,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValueIterArgs {
    /// Erasure probability in [0, 1]
    #[arg(long)]
    eps: f64,
    /// Grid points for both the state and the action
    #[arg(long, default_value_t = 5000)]
    grid: usize,
    /// Operator sweeps
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// CSV output path for the value/policy curves (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary path (stdout when omitted)
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct DpSimArgs {
    /// Erasure probability in [0, 1]
    #[arg(long)]
    eps: f64,
    /// Closed-loop steps
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    /// RNG seed; falls back to RLLFBC_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path for the state histogram (stdout when omitted)
    #[arg(long)]
    hist_out: Option<PathBuf>,
    /// JSON summary path (stdout when omitted)
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct TransmitArgs {
    /// Erasure probability in [0, 1)
    #[arg(long)]
    eps: f64,
    /// Message size in bits; each trial draws a fresh uniform message
    #[arg(long)]
    msg_bits: u64,
    /// Two-phase split: switch to the repetition code at 2^lambda messages
    #[arg(long, default_value_t = 20)]
    lambda: u32,
    /// RNG seed; falls back to RLLFBC_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Independent sessions to run
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// JSON-lines output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Step-level JSON-lines transcript of the first trial
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Exhausted(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Exhausted(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Exhausted(m) => m.clone(),
            CliError::Io(e) => format!("i/o error: {e}"),
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("RLLFBC_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("RLLFBC_SEED is not a 64-bit integer: {raw}"))),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Capacity(args) => commands::capacity(args),
        Command::ValueIter(args) => commands::value_iter(args),
        Command::DpSim(args) => commands::dp_sim(args),
        Command::Transmit(args) => commands::transmit(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
