//! `probe`: finite-difference causality check over a seeded encoder.
//!
//! Exits 0 when no emitted output depends on a strictly-future input chunk,
//! 1 with the offending pairs otherwise.

use chunkwise_core::probe::run_probe;
use chunkwise_core::stream::StreamMode;
use clap::{Args, ValueEnum};

use crate::config_flags::ConfigFlags;
use crate::Failure;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbeModeArg {
    Offline,
    Recompute,
    Cached,
}

impl std::fmt::Display for ProbeModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProbeModeArg::Offline => "offline",
            ProbeModeArg::Recompute => "recompute",
            ProbeModeArg::Cached => "cached",
        })
    }
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Which inference path to probe.
    #[arg(long, value_enum, default_value_t = ProbeModeArg::Recompute)]
    pub mode: ProbeModeArg,

    /// Input length in frames; must be a multiple of the chunk size.
    #[arg(long, default_value_t = 32)]
    pub len: usize,

    /// Perturbation added to every component of the probed frame.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,

    /// Negative control: run the offline probe with the sampled-chunk mask's
    /// causality restriction removed. The probe must then report leaks.
    #[arg(long)]
    pub sabotage_ssc: bool,

    #[command(flatten)]
    pub config: ConfigFlags,
}

const MAX_REPORTED: usize = 32;

pub fn run(args: ProbeArgs) -> Result<(), Failure> {
    let config = args.config.resolve()?;
    if args.len == 0 || !args.len.is_multiple_of(config.chunk_size) {
        return Err(Failure::Usage(format!(
            "probe length {} must be a positive multiple of chunk size {}",
            args.len, config.chunk_size
        )));
    }
    if args.sabotage_ssc && args.mode != ProbeModeArg::Offline {
        return Err(Failure::Usage(
            "--sabotage-ssc applies to the offline probe only".into(),
        ));
    }
    let mode = match args.mode {
        ProbeModeArg::Offline => None,
        ProbeModeArg::Recompute => Some(StreamMode::Recompute),
        ProbeModeArg::Cached => Some(StreamMode::Cached),
    };
    let report = run_probe::<f64>(&config, args.len, mode, args.delta, args.sabotage_ssc)?;
    println!(
        "probe mode={} L={} W={} d_model={} heads={} blocks={} checked_pairs={} violations={}",
        match args.mode {
            ProbeModeArg::Offline => "offline",
            ProbeModeArg::Recompute => "recompute",
            ProbeModeArg::Cached => "cached",
        },
        args.len,
        config.chunk_size,
        config.d_model,
        config.n_heads,
        config.n_blocks(),
        report.checked_pairs,
        report.violations.len()
    );
    for v in report.violations.iter().take(MAX_REPORTED) {
        println!(
            "leak: output token {} (chunk {}) depends on input token {} (chunk {})",
            v.output_index, v.output_chunk, v.input_index, v.input_chunk
        );
    }
    if report.violations.len() > MAX_REPORTED {
        println!("... and {} more", report.violations.len() - MAX_REPORTED);
    }
    if !report.is_clean() {
        return Err(Failure::Violation(format!(
            "{} causality violations detected",
            report.violations.len()
        )));
    }
    Ok(())
}
