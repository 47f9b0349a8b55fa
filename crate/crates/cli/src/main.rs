//! Command-line workbench for the chunk-wise streaming encoder.
//!
//! Subcommands: `bench` (scaling benchmark, CSV records), `mask-dump`
//! (attention masks as text grids), `probe` (finite-difference causality
//! probe) and `stream` (chunk-by-chunk demo with offline consistency check).
//!
//! Exit codes: 0 on success, 1 when a checked property is violated, 2 on
//! usage or input errors.

mod bench;
mod config_flags;
mod frames;
mod mask_dump;
mod probe_cmd;
mod stream_cmd;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chunkwise", version, about = "Chunk-wise streaming encoder workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark attention scopes over a length grid; emits CSV records and
    /// per-kind scaling fits.
    Bench(bench::BenchArgs),
    /// Print an attention mask as a '1'/'0' grid.
    MaskDump(mask_dump::MaskDumpArgs),
    /// Perturb each input frame of a seeded encoder and verify that no
    /// output reacts to a strictly-future chunk.
    Probe(probe_cmd::ProbeArgs),
    /// Stream a frame file chunk by chunk and compare each emitted chunk
    /// against the offline forward over the same prefix.
    Stream(stream_cmd::StreamArgs),
}

/// Failure modes mapped onto process exit codes.
pub(crate) enum Failure {
    /// Bad flags, files, or configuration: exit code 2.
    Usage(String),
    /// A checked property did not hold: exit code 1.
    Violation(String),
}

impl From<chunkwise_core::Error> for Failure {
    fn from(e: chunkwise_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => bench::run(args),
        Command::MaskDump(args) => mask_dump::run(args),
        Command::Probe(args) => probe_cmd::run(args),
        Command::Stream(args) => stream_cmd::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
