//! `dart` — duplication-aware token reduction.
//!
//! Exit codes: 0 success, 1 bound violation from `verify`, 2 input or
//! validation error (details on stderr as `{"code", "message"}` JSON).

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dart_cli::commands::{
    run_compare, run_flops, run_prune, run_synth, run_verify, CompareArgs, FlopsArgs, PruneArgs,
    SynthArgs, VerifyArgs,
};
use dart_cli::CmdError;

#[derive(Parser)]
#[command(
    name = "dart",
    version,
    about = "Duplication-aware token reduction over embedding matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prune a token matrix by duplication and write a JSON report
    Prune(PruneArgs),
    /// Run two retention strategies and report their overlap
    Compare(CompareArgs),
    /// Evaluate the transformer FLOPs formulas for one shape
    Flops(FlopsArgs),
    /// Check the distance/output bounds on a reduction (exit 1 on violation)
    Verify(VerifyArgs),
    /// Generate a synthetic token matrix as DTOK
    Synth(SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<ExitCode, CmdError> = match &cli.command {
        Command::Prune(args) => run_prune(args).map(|report| {
            println!("{report}");
            ExitCode::SUCCESS
        }),
        Command::Compare(args) => run_compare(args).map(|report| {
            println!("{report}");
            ExitCode::SUCCESS
        }),
        Command::Flops(args) => run_flops(args).map(|(report, warning)| {
            if let Some(w) = warning {
                eprintln!("{w}");
            }
            println!("{report}");
            ExitCode::SUCCESS
        }),
        Command::Verify(args) => run_verify(args).map(|(report, all_ok)| {
            println!("{report}");
            if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }),
        Command::Synth(args) => run_synth(args).map(|summary| {
            println!("{summary}");
            ExitCode::SUCCESS
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(2)
        }
    }
}
