//! `psn`: record traces, train surrogates and proposals, run inference,
//! evaluate surrogate fidelity and benchmark throughput.

mod bench;
mod common;
mod eval;
mod infer;
mod manifest;
mod obs;
mod record;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "psn", version, about = "Probabilistic surrogate networks for stochastic simulators")]
struct Cli {
    /// Worker threads for trace generation and importance sampling (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write prior traces as JSON lines.
    Record(record::RecordArgs),
    /// Train (or resume training) a surrogate network on a trace dataset.
    TrainPsn(train::TrainPsnArgs),
    /// Train (or resume training) an inference-compilation proposal.
    TrainIc(train::TrainIcArgs),
    /// Importance-sample posterior estimates of a query.
    Infer(infer::InferArgs),
    /// Compare surrogate and simulator output statistics at fixed settings.
    EvalSurrogate(eval::EvalArgs),
    /// Measure traces per second of simulator and surrogate.
    Bench(bench::BenchArgs),
    /// Write an observation file from clamped program runs.
    MakeObs(obs::MakeObsArgs),
}

#[derive(Args, Clone, Debug)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 10)]
    epochs: u32,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Per-epoch learning rate multiplier.
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    /// Hold out every n-th trace for the validation loss (0 disables).
    #[arg(long, default_value_t = 10)]
    holdout_every: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = common::init_workers(cli.workers).and_then(|workers| {
        let ctx = common::RunContext { workers, argv };
        match cli.command {
            Command::Record(a) => record::run(&ctx, a),
            Command::TrainPsn(a) => train::run_psn(&ctx, a),
            Command::TrainIc(a) => train::run_ic(&ctx, a),
            Command::Infer(a) => infer::run(&ctx, a),
            Command::EvalSurrogate(a) => eval::run(&ctx, a),
            Command::Bench(a) => bench::run(&ctx, a),
            Command::MakeObs(a) => obs::run(&ctx, a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", common::error_json(&e));
            ExitCode::FAILURE
        }
    }
}

/// Sibling file `<path><suffix>`, e.g. `model.ckpt.loss.csv`.
pub fn sibling(path: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
