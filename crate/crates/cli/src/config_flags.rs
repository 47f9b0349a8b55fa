//! Encoder configuration shared by the probe and stream subcommands:
//! defaults, then an optional config file, then individual flag overrides.

use std::path::PathBuf;

use chunkwise_core::encoder::{BlockPattern, EncoderConfig};
use clap::Args;

use crate::Failure;

#[derive(Args, Debug, Clone)]
pub struct ConfigFlags {
    /// Encoder config file with key=value lines; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub chunk_size: Option<usize>,

    #[arg(long)]
    pub d_model: Option<usize>,

    #[arg(long)]
    pub heads: Option<usize>,

    /// Number of block pairs (the stack holds twice this many blocks).
    #[arg(long)]
    pub pairs: Option<usize>,

    /// Blend weight of the chunked convolution branch, in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Depthwise kernel size; the causal right mask follows as (kernel-1)/2.
    #[arg(long)]
    pub kernel: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Block kind layout: interleaved or chunk_only.
    #[arg(long, value_parser = parse_pattern)]
    pub block_pattern: Option<BlockPattern>,
}

fn parse_pattern(s: &str) -> Result<BlockPattern, String> {
    BlockPattern::parse(s).ok_or_else(|| format!("expected 'interleaved' or 'chunk_only', got {s:?}"))
}

impl ConfigFlags {
    pub fn resolve(&self) -> Result<EncoderConfig, Failure> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                EncoderConfig::from_key_value_str(&text)?
            }
            None => EncoderConfig::default(),
        };
        if let Some(v) = self.chunk_size {
            config.chunk_size = v;
        }
        if let Some(v) = self.d_model {
            config.d_model = v;
        }
        if let Some(v) = self.heads {
            config.n_heads = v;
        }
        if let Some(v) = self.pairs {
            config.block_pairs = v;
        }
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(k) = self.kernel {
            if k == 0 || k % 2 == 0 {
                return Err(Failure::Usage(format!("kernel size must be odd, got {k}")));
            }
            config.kernel_size = k;
            config.right_mask = (k - 1) / 2;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.block_pattern {
            config.block_pattern = v;
        }
        config.validate()?;
        Ok(config)
    }
}
