//! `mask-dump`: print an attention mask as a '1'/'0' grid.

use std::path::PathBuf;

use chunkwise_core::layout::{ChunkLayout, SamplingPlan};
use chunkwise_core::masks::AttnMask;
use clap::{Args, ValueEnum};

use crate::Failure;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum MaskKindArg {
    Chunk,
    Ssc,
    TimeRestricted,
}

#[derive(Args, Debug)]
pub struct MaskDumpArgs {
    /// Mask family to print.
    #[arg(long)]
    pub kind: MaskKindArg,

    /// Sequence length (rows of the grid after padding).
    #[arg(long)]
    pub len: usize,

    #[arg(long, default_value_t = 4)]
    pub chunk_size: usize,

    /// Write the grid to a file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: MaskDumpArgs) -> Result<(), Failure> {
    let layout = ChunkLayout::new(args.len, args.chunk_size)?;
    let mask = match args.kind {
        MaskKindArg::Chunk => AttnMask::chunk(&layout, args.len),
        MaskKindArg::Ssc => {
            let plan = SamplingPlan::new(&layout);
            AttnMask::ssc(&layout, &plan, args.len)
        }
        MaskKindArg::TimeRestricted => AttnMask::time_restricted(&layout, args.len),
    };
    let grid = mask.render();
    match args.out {
        Some(path) => std::fs::write(path, grid)?,
        None => print!("{grid}"),
    }
    Ok(())
}
