//! `stream`: consume a frame file chunk by chunk and report, per emitted
//! chunk, the largest deviation from the offline forward pass over the same
//! prefix. Recompute mode must show exactly zero; so must cached mode on a
//! chunk-only stack.

use std::path::PathBuf;

use chunkwise_core::encoder::{encoder_forward, init_encoder, BlockPattern};
use chunkwise_core::stream::{stream_flush, stream_push, StreamMode, StreamState};
use chunkwise_core::Tensor;
use clap::{Args, ValueEnum};

use crate::config_flags::ConfigFlags;
use crate::frames;
use crate::Failure;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum StreamModeArg {
    Recompute,
    Cached,
}

impl std::fmt::Display for StreamModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StreamModeArg::Recompute => "recompute",
            StreamModeArg::Cached => "cached",
        })
    }
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    /// Frame file: one frame per line, space-separated reals, '#' comments.
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = StreamModeArg::Recompute)]
    pub mode: StreamModeArg,

    /// Write the emitted output rows here, one row per line.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub config: ConfigFlags,
}

pub fn run(args: StreamArgs) -> Result<(), Failure> {
    let rows = frames::read_frames(&args.input)?;
    if rows.is_empty() {
        println!("0 chunks (empty input)");
        return Ok(());
    }
    let mut config = args.config.resolve()?;
    config.input_dim = rows[0].len();

    let mode = match args.mode {
        StreamModeArg::Recompute => StreamMode::Recompute,
        StreamModeArg::Cached => StreamMode::Cached,
    };
    let x = Tensor::<f64>::from_rows(&rows)?;
    let total = x.nrows();
    let w = config.chunk_size;
    let params = init_encoder::<f64>(&config)?;
    let mut state = StreamState::new(mode, &config)?;

    let mut emitted_rows: Vec<Vec<f64>> = Vec::new();
    let mut worst: f64 = 0.0;
    let mut chunk_idx = 0usize;
    let mut consumed = 0usize;
    while consumed < total {
        let end = (consumed + w).min(total);
        let block = x.slice_rows(consumed, end);
        let emitted = if end - consumed == w {
            stream_push(&mut state, &params, &config, &block)?
        } else {
            stream_flush(&mut state, &params, &config, &block)?
        };
        // Offline reference: forward over exactly the consumed prefix.
        let prefix = x.slice_rows(0, end);
        let offline = encoder_forward(&prefix, &params, &config, end)?;
        let reference = offline.slice_rows(consumed, end);
        let diff = emitted.max_abs_diff(&reference);
        worst = worst.max(diff);
        println!(
            "chunk {chunk_idx}: rows {consumed}..{end} ({} emitted), max|stream-offline| = {diff:e}",
            emitted.nrows()
        );
        for i in 0..emitted.nrows() {
            emitted_rows.push(emitted.row(i).to_vec());
        }
        consumed = end;
        chunk_idx += 1;
    }
    println!(
        "streamed {total} frames as {chunk_idx} chunks, consistency max = {worst:e}"
    );

    if let Some(path) = &args.out {
        std::fs::write(path, frames::format_frames(&emitted_rows))?;
    }

    let exactness_promised = mode == StreamMode::Recompute
        || config.block_pattern == BlockPattern::ChunkOnly;
    if exactness_promised && worst != 0.0 {
        return Err(Failure::Violation(format!(
            "streaming/offline consistency violated: max deviation {worst:e}"
        )));
    }
    Ok(())
}
