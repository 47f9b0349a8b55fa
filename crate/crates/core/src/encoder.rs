//! The encoder stack: interleaved chunk-attention and sampled-chunk-attention
//! blocks, each a Macaron pair of half-weighted MLPs around masked attention
//! and the blended convolution sub-block.
//!
//! Block composition, with LN = layer norm and residuals after every module:
//!
//! ```text
//! h1  = z  + 0.5 * MLP(LN(z))
//! h2  = h1 + MHSA(LN(h1))          // chunk- or sampled-chunk-masked
//! h3  = h2 + ConvBlock(LN(h2))
//! out = LN(h3 + 0.5 * MLP(LN(h3)))
//! ```
//!
//! The frontend is a bias-free linear projection plus one sinusoidal
//! positional encoding added at the input.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{mhsa, MhsaParams};
use crate::conv::{conv_block, C2ConvParams};
use crate::error::{Error, Result};
use crate::layout::{ChunkLayout, SamplingPlan};
use crate::masks::{AttnMask, MaskKind};
use crate::tensor::{add, add_bias, add_scaled, layer_norm, matmul, swish, Element, Tensor};

/// Attention scope of one encoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Chunk,
    Ssc,
}

/// How block kinds are assigned across the stack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlockPattern {
    /// Chunk block then sampled-chunk block, repeated (the default stack).
    #[default]
    Interleaved,
    /// Chunk blocks only; streaming caches are exact for this pattern.
    ChunkOnly,
}

impl BlockPattern {
    pub fn name(&self) -> &'static str {
        match self {
            BlockPattern::Interleaved => "interleaved",
            BlockPattern::ChunkOnly => "chunk_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "interleaved" => Some(BlockPattern::Interleaved),
            "chunk_only" => Some(BlockPattern::ChunkOnly),
            _ => None,
        }
    }
}

/// Encoder hyperparameters. Serializable to and from `key=value` text.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Number of (chunk, sampled-chunk) block pairs; the stack has twice this
    /// many blocks.
    pub block_pairs: usize,
    pub chunk_size: usize,
    pub kernel_size: usize,
    pub right_mask: usize,
    pub lambda: f64,
    pub ff_expansion: usize,
    pub eps: f64,
    pub seed: u64,
    pub block_pattern: BlockPattern,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 80,
            d_model: 64,
            n_heads: 4,
            block_pairs: 6,
            chunk_size: 16,
            kernel_size: 15,
            right_mask: 7,
            lambda: 0.7,
            ff_expansion: 4,
            eps: 1e-5,
            seed: 42,
            block_pattern: BlockPattern::Interleaved,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.d_model == 0
            || self.n_heads == 0
            || self.block_pairs == 0
            || self.chunk_size == 0
            || self.ff_expansion == 0
        {
            return Err(Error::Config("all encoder dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel_size {} must be odd",
                self.kernel_size
            )));
        }
        if self.right_mask != (self.kernel_size - 1) / 2 {
            return Err(Error::Config(format!(
                "right_mask {} must equal (kernel_size - 1) / 2 = {}",
                self.right_mask,
                (self.kernel_size - 1) / 2
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} must lie in [0, 1]", self.lambda)));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config(format!("eps {} must be positive", self.eps)));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        2 * self.block_pairs
    }

    /// Block kinds in stack order. Interleaved stacks put the chunk block
    /// first in every pair.
    pub fn block_kinds(&self) -> Vec<BlockKind> {
        (0..self.n_blocks())
            .map(|i| match self.block_pattern {
                BlockPattern::ChunkOnly => BlockKind::Chunk,
                BlockPattern::Interleaved => {
                    if i % 2 == 0 {
                        BlockKind::Chunk
                    } else {
                        BlockKind::Ssc
                    }
                }
            })
            .collect()
    }

    /// Parse `key=value` lines. Unset keys keep their defaults; `#` starts a
    /// comment line.
    pub fn from_key_value_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Parse {
                line: line_no,
                msg: format!("invalid {what} value {value:?}"),
            };
            match key {
                "input_dim" => config.input_dim = value.parse().map_err(|_| bad(key))?,
                "d_model" => config.d_model = value.parse().map_err(|_| bad(key))?,
                "n_heads" => config.n_heads = value.parse().map_err(|_| bad(key))?,
                "block_pairs" => config.block_pairs = value.parse().map_err(|_| bad(key))?,
                "chunk_size" => config.chunk_size = value.parse().map_err(|_| bad(key))?,
                "kernel_size" => config.kernel_size = value.parse().map_err(|_| bad(key))?,
                "right_mask" => config.right_mask = value.parse().map_err(|_| bad(key))?,
                "lambda" => config.lambda = value.parse().map_err(|_| bad(key))?,
                "ff_expansion" => config.ff_expansion = value.parse().map_err(|_| bad(key))?,
                "eps" => config.eps = value.parse().map_err(|_| bad(key))?,
                "seed" => config.seed = value.parse().map_err(|_| bad(key))?,
                "block_pattern" => {
                    config.block_pattern = BlockPattern::parse(value).ok_or_else(|| bad(key))?
                }
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_key_value_string(&self) -> String {
        format!(
            "input_dim={}\nd_model={}\nn_heads={}\nblock_pairs={}\nchunk_size={}\n\
             kernel_size={}\nright_mask={}\nlambda={}\nff_expansion={}\neps={}\nseed={}\n\
             block_pattern={}\n",
            self.input_dim,
            self.d_model,
            self.n_heads,
            self.block_pairs,
            self.chunk_size,
            self.kernel_size,
            self.right_mask,
            self.lambda,
            self.ff_expansion,
            self.eps,
            self.seed,
            self.block_pattern.name()
        )
    }
}

/// Layer norm gain and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LnParams<T> {
    pub gain: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Element> LnParams<T> {
    pub fn identity(width: usize) -> Self {
        Self {
            gain: vec![T::one(); width],
            bias: vec![T::zero(); width],
        }
    }
}

/// Two-layer MLP with a swish in between.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub w1: Tensor<T>,
    pub b1: Vec<T>,
    pub w2: Tensor<T>,
    pub b2: Vec<T>,
}

/// All parameters of one encoder block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub ln_mlp1: LnParams<T>,
    pub mlp1: MlpParams<T>,
    pub ln_attn: LnParams<T>,
    pub attn: MhsaParams<T>,
    pub ln_conv: LnParams<T>,
    pub conv: C2ConvParams<T>,
    pub ln_mlp2: LnParams<T>,
    pub mlp2: MlpParams<T>,
    pub ln_out: LnParams<T>,
}

/// All encoder parameters: input projection plus the block stack.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub input_proj: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
}

struct WeightSampler {
    rng: ChaCha8Rng,
}

impl WeightSampler {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)`, where `fan_in` is the input width.
    fn matrix<T: Element>(&mut self, rows: usize, cols: usize) -> Tensor<T> {
        let bound = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::of(self.rng.random_range(-bound..=bound)))
            .collect();
        Tensor::new(vec![rows, cols], data).expect("sampler shape is consistent")
    }
}

/// Deterministic seeded initialization: identical seeds give bit-identical
/// parameters; every weight obeys `|w| <= 1/sqrt(fan_in)`.
pub fn init_encoder<T: Element>(config: &EncoderConfig) -> Result<EncoderParams<T>> {
    config.validate()?;
    let c = config.d_model;
    let ff = config.ff_expansion * c;
    let mut sampler = WeightSampler::new(config.seed);
    let input_proj = sampler.matrix::<T>(config.input_dim, c);
    let mut blocks = Vec::with_capacity(config.n_blocks());
    for _ in 0..config.n_blocks() {
        let mlp = |s: &mut WeightSampler| MlpParams {
            w1: s.matrix::<T>(c, ff),
            b1: vec![T::zero(); ff],
            w2: s.matrix::<T>(ff, c),
            b2: vec![T::zero(); c],
        };
        let ln_mlp1 = LnParams::identity(c);
        let mlp1 = mlp(&mut sampler);
        let ln_attn = LnParams::identity(c);
        let attn = MhsaParams::new(
            c,
            config.n_heads,
            sampler.matrix::<T>(c, c),
            sampler.matrix::<T>(c, c),
            sampler.matrix::<T>(c, c),
            sampler.matrix::<T>(c, c),
        )?;
        let ln_conv = LnParams::identity(c);
        let conv = C2ConvParams::new(
            config.kernel_size,
            config.right_mask,
            config.lambda,
            config.chunk_size,
            sampler.matrix::<T>(config.kernel_size, c),
            sampler.matrix::<T>(c, 2 * c),
            sampler.matrix::<T>(c, c),
            vec![T::one(); c],
            vec![T::zero(); c],
            config.eps,
        )?;
        let ln_mlp2 = LnParams::identity(c);
        let mlp2 = mlp(&mut sampler);
        let ln_out = LnParams::identity(c);
        blocks.push(BlockParams {
            ln_mlp1,
            mlp1,
            ln_attn,
            attn,
            ln_conv,
            conv,
            ln_mlp2,
            mlp2,
            ln_out,
        });
    }
    Ok(EncoderParams { input_proj, blocks })
}

/// Sinusoidal absolute positional encoding for `len` positions starting at
/// `offset`, width `d`.
pub fn positional_encoding<T: Element>(len: usize, offset: usize, d: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(&[len, d]);
    for i in 0..len {
        let pos = (offset + i) as f64;
        let row = out.row_mut(i);
        for j in 0..d.div_ceil(2) {
            let freq = (-((2 * j) as f64) * (10000f64).ln() / d as f64).exp();
            row[2 * j] = T::of((pos * freq).sin());
            if 2 * j + 1 < d {
                row[2 * j + 1] = T::of((pos * freq).cos());
            }
        }
    }
    out
}

pub(crate) fn mlp_forward<T: Element>(x: &Tensor<T>, mlp: &MlpParams<T>) -> Result<Tensor<T>> {
    let hidden = add_bias(&matmul(x, &mlp.w1)?, &mlp.b1)?;
    add_bias(&matmul(&swish(&hidden), &mlp.w2)?, &mlp.b2)
}

/// One encoder block applied to `[Lp, C]` activations.
pub fn block_forward<T: Element>(
    z: &Tensor<T>,
    block: &BlockParams<T>,
    kind: BlockKind,
    layout: &ChunkLayout,
    mask: &AttnMask,
    eps: f64,
) -> Result<Tensor<T>> {
    let matches = matches!(
        (kind, mask.kind()),
        (BlockKind::Chunk, MaskKind::Chunk) | (BlockKind::Ssc, MaskKind::Ssc)
    );
    if !matches {
        return Err(Error::Config(format!(
            "block kind {kind:?} does not match mask kind {:?}",
            mask.kind()
        )));
    }
    let eps_t = T::of(eps);
    let half = T::of(0.5);
    let normed = layer_norm(z, &block.ln_mlp1.gain, &block.ln_mlp1.bias, eps_t)?;
    let h1 = add_scaled(z, &mlp_forward(&normed, &block.mlp1)?, half)?;

    let normed = layer_norm(&h1, &block.ln_attn.gain, &block.ln_attn.bias, eps_t)?;
    let (attn_out, _) = mhsa(&normed, &block.attn, mask)?;
    let h2 = add(&h1, &attn_out)?;

    let normed = layer_norm(&h2, &block.ln_conv.gain, &block.ln_conv.bias, eps_t)?;
    let h3 = add(&h2, &conv_block(&normed, &block.conv, layout)?)?;

    let normed = layer_norm(&h3, &block.ln_mlp2.gain, &block.ln_mlp2.bias, eps_t)?;
    let inner = add_scaled(&h3, &mlp_forward(&normed, &block.mlp2)?, half)?;
    layer_norm(&inner, &block.ln_out.gain, &block.ln_out.bias, eps_t)
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ForwardOpts {
    /// Replace the sampled-chunk masks with their causality-free variant.
    /// Probe negative control only.
    pub ssc_unrestricted: bool,
}

pub(crate) fn forward_with_opts<T: Element>(
    x: &Tensor<T>,
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    valid_len: usize,
    opts: ForwardOpts,
) -> Result<Tensor<T>> {
    config.validate()?;
    let (l_in, c_in) = x.dims2("encoder_forward")?;
    if c_in != config.input_dim {
        return Err(Error::Dimension {
            op: "encoder_forward",
            left: vec![l_in, c_in],
            right: vec![config.input_dim],
        });
    }
    if valid_len == 0 || valid_len > l_in {
        return Err(Error::Config(format!(
            "valid_len {valid_len} must lie in 1..={l_in}"
        )));
    }
    if params.blocks.len() != config.n_blocks() {
        return Err(Error::Config(format!(
            "parameter stack has {} blocks, config expects {}",
            params.blocks.len(),
            config.n_blocks()
        )));
    }
    let layout = ChunkLayout::new(l_in, config.chunk_size)?;
    let lp = layout.padded_len();

    // Zero both the right padding and any caller rows beyond valid_len, so
    // padding always enters the stack as zero vectors.
    let mut padded = Tensor::zeros(&[lp, c_in]);
    for i in 0..valid_len {
        padded.row_mut(i).copy_from_slice(x.row(i));
    }

    let mut z = matmul(&padded, &params.input_proj)?;
    z = add(&z, &positional_encoding(lp, 0, config.d_model))?;

    let plan = SamplingPlan::new(&layout);
    let chunk_mask = AttnMask::chunk(&layout, valid_len);
    let ssc_mask = if opts.ssc_unrestricted {
        AttnMask::ssc_unrestricted(&layout, &plan, valid_len)
    } else {
        AttnMask::ssc(&layout, &plan, valid_len)
    };
    for (block, kind) in params.blocks.iter().zip(config.block_kinds()) {
        let mask = match kind {
            BlockKind::Chunk => &chunk_mask,
            BlockKind::Ssc => &ssc_mask,
        };
        z = block_forward(&z, block, kind, &layout, mask, config.eps)?;
    }
    for i in valid_len..lp {
        z.row_mut(i).fill(T::zero());
    }
    Ok(z)
}

/// Offline forward pass over `[L, input_dim]` features. Output is `[Lp, C]`
/// with padded rows zeroed; masks are built from `valid_len`.
pub fn encoder_forward<T: Element>(
    x: &Tensor<T>,
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    valid_len: usize,
) -> Result<Tensor<T>> {
    forward_with_opts(x, params, config, valid_len, ForwardOpts::default())
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: a text manifest of names and shapes followed by the flat
// little-endian f64 payload. Round-trips are bit-exact.
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &str = "chunkwise-checkpoint v1";

enum ParamRef<'a, T> {
    Matrix(&'a Tensor<T>),
    Vector(&'a [T]),
}

fn visit_params<'a, T: Element>(params: &'a EncoderParams<T>) -> Vec<(String, ParamRef<'a, T>)> {
    let mut out: Vec<(String, ParamRef<'a, T>)> = Vec::new();
    out.push(("input_proj".into(), ParamRef::Matrix(&params.input_proj)));
    for (i, b) in params.blocks.iter().enumerate() {
        let mut push = |field: &str, p: ParamRef<'a, T>| out.push((format!("block{i}.{field}"), p));
        push("ln_mlp1.gain", ParamRef::Vector(&b.ln_mlp1.gain));
        push("ln_mlp1.bias", ParamRef::Vector(&b.ln_mlp1.bias));
        push("mlp1.w1", ParamRef::Matrix(&b.mlp1.w1));
        push("mlp1.b1", ParamRef::Vector(&b.mlp1.b1));
        push("mlp1.w2", ParamRef::Matrix(&b.mlp1.w2));
        push("mlp1.b2", ParamRef::Vector(&b.mlp1.b2));
        push("ln_attn.gain", ParamRef::Vector(&b.ln_attn.gain));
        push("ln_attn.bias", ParamRef::Vector(&b.ln_attn.bias));
        push("attn.w_q", ParamRef::Matrix(&b.attn.w_q));
        push("attn.w_k", ParamRef::Matrix(&b.attn.w_k));
        push("attn.w_v", ParamRef::Matrix(&b.attn.w_v));
        push("attn.w_o", ParamRef::Matrix(&b.attn.w_o));
        push("ln_conv.gain", ParamRef::Vector(&b.ln_conv.gain));
        push("ln_conv.bias", ParamRef::Vector(&b.ln_conv.bias));
        push("conv.pw_in", ParamRef::Matrix(&b.conv.pw_in));
        push("conv.depthwise", ParamRef::Matrix(&b.conv.depthwise));
        push("conv.norm_gain", ParamRef::Vector(&b.conv.norm_gain));
        push("conv.norm_bias", ParamRef::Vector(&b.conv.norm_bias));
        push("conv.pw_out", ParamRef::Matrix(&b.conv.pw_out));
        push("ln_mlp2.gain", ParamRef::Vector(&b.ln_mlp2.gain));
        push("ln_mlp2.bias", ParamRef::Vector(&b.ln_mlp2.bias));
        push("mlp2.w1", ParamRef::Matrix(&b.mlp2.w1));
        push("mlp2.b1", ParamRef::Vector(&b.mlp2.b1));
        push("mlp2.w2", ParamRef::Matrix(&b.mlp2.w2));
        push("mlp2.b2", ParamRef::Vector(&b.mlp2.b2));
        push("ln_out.gain", ParamRef::Vector(&b.ln_out.gain));
        push("ln_out.bias", ParamRef::Vector(&b.ln_out.bias));
    }
    out
}

/// Write the parameters as a shape manifest plus flat 64-bit payload.
pub fn save_checkpoint<T: Element>(params: &EncoderParams<T>, path: &Path) -> Result<()> {
    let entries = visit_params(params);
    let mut manifest = String::from(CHECKPOINT_MAGIC);
    manifest.push('\n');
    let mut values: Vec<f64> = Vec::new();
    for (name, p) in &entries {
        match p {
            ParamRef::Matrix(t) => {
                manifest.push_str(&format!("tensor {name} {} {}\n", t.shape()[0], t.shape()[1]));
                values.extend(t.data().iter().map(|v| v.as_f64()));
            }
            ParamRef::Vector(v) => {
                manifest.push_str(&format!("tensor {name} {}\n", v.len()));
                values.extend(v.iter().map(|v| v.as_f64()));
            }
        }
    }
    manifest.push_str(&format!("data {}\n", values.len()));
    let mut file = std::fs::File::create(path)?;
    file.write_all(manifest.as_bytes())?;
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}

struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

struct CheckpointReader {
    entries: Vec<ManifestEntry>,
    values: Vec<f64>,
    next_entry: usize,
    offset: usize,
}

impl CheckpointReader {
    fn open(path: &Path) -> Result<Self> {
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        let mut entries = Vec::new();
        let mut line_no = 0usize;
        let mut cursor = 0usize;
        let mut declared: Option<usize> = None;
        while cursor < raw.len() {
            line_no += 1;
            let end = raw[cursor..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|p| cursor + p)
                .ok_or(Error::Parse {
                    line: line_no,
                    msg: "unterminated manifest line".into(),
                })?;
            let line = std::str::from_utf8(&raw[cursor..end]).map_err(|_| Error::Parse {
                line: line_no,
                msg: "manifest is not valid UTF-8".into(),
            })?;
            cursor = end + 1;
            if line_no == 1 {
                if line != CHECKPOINT_MAGIC {
                    return Err(Error::Parse {
                        line: 1,
                        msg: format!("bad checkpoint magic {line:?}"),
                    });
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["tensor", name, dims @ ..] if !dims.is_empty() => {
                    let shape = dims
                        .iter()
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("bad shape in {line:?}"),
                        })?;
                    entries.push(ManifestEntry {
                        name: (*name).to_string(),
                        shape,
                    });
                }
                ["data", count] => {
                    declared = Some(count.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("bad value count {count:?}"),
                    })?);
                    break;
                }
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unrecognized manifest line {line:?}"),
                    })
                }
            }
        }
        let count = declared.ok_or(Error::Parse {
            line: line_no,
            msg: "missing data declaration".into(),
        })?;
        let payload = &raw[cursor..];
        if payload.len() != count * 8 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "payload holds {} bytes, manifest declares {}",
                    payload.len(),
                    count * 8
                ),
            });
        }
        let values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunks_exact yields 8 bytes")))
            .collect();
        Ok(Self {
            entries,
            values,
            next_entry: 0,
            offset: 0,
        })
    }

    fn take<T: Element>(&mut self, name: &str, shape: &[usize]) -> Result<Vec<T>> {
        let entry = self.entries.get(self.next_entry).ok_or_else(|| {
            Error::Config(format!("checkpoint ends before expected entry {name}"))
        })?;
        if entry.name != name || entry.shape != shape {
            return Err(Error::Config(format!(
                "checkpoint entry mismatch: expected {name} {shape:?}, found {} {:?}",
                entry.name, entry.shape
            )));
        }
        self.next_entry += 1;
        let n: usize = shape.iter().product();
        let slice = &self.values[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice.iter().map(|&v| T::of(v)).collect())
    }

    fn matrix<T: Element>(&mut self, name: &str, rows: usize, cols: usize) -> Result<Tensor<T>> {
        Tensor::new(vec![rows, cols], self.take(name, &[rows, cols])?)
    }

    fn finish(self) -> Result<()> {
        if self.next_entry != self.entries.len() || self.offset != self.values.len() {
            return Err(Error::Config(
                "checkpoint holds more entries than the config expects".into(),
            ));
        }
        Ok(())
    }
}

/// Load a checkpoint written by [`save_checkpoint`]; the config determines
/// the expected structure and every name and shape is verified.
pub fn load_checkpoint<T: Element>(path: &Path, config: &EncoderConfig) -> Result<EncoderParams<T>> {
    config.validate()?;
    let c = config.d_model;
    let ff = config.ff_expansion * c;
    let k = config.kernel_size;
    let mut reader = CheckpointReader::open(path)?;
    let input_proj = reader.matrix::<T>("input_proj", config.input_dim, c)?;
    let mut blocks = Vec::with_capacity(config.n_blocks());
    for i in 0..config.n_blocks() {
        let field = |f: &str| format!("block{i}.{f}");
        let ln = |reader: &mut CheckpointReader, f: &str| -> Result<LnParams<T>> {
            Ok(LnParams {
                gain: reader.take(&format!("block{i}.{f}.gain"), &[c])?,
                bias: reader.take(&format!("block{i}.{f}.bias"), &[c])?,
            })
        };
        let mlp = |reader: &mut CheckpointReader, f: &str| -> Result<MlpParams<T>> {
            Ok(MlpParams {
                w1: reader.matrix(&format!("block{i}.{f}.w1"), c, ff)?,
                b1: reader.take(&format!("block{i}.{f}.b1"), &[ff])?,
                w2: reader.matrix(&format!("block{i}.{f}.w2"), ff, c)?,
                b2: reader.take(&format!("block{i}.{f}.b2"), &[c])?,
            })
        };
        let ln_mlp1 = ln(&mut reader, "ln_mlp1")?;
        let mlp1 = mlp(&mut reader, "mlp1")?;
        let ln_attn = ln(&mut reader, "ln_attn")?;
        let attn = MhsaParams::new(
            c,
            config.n_heads,
            reader.matrix(&field("attn.w_q"), c, c)?,
            reader.matrix(&field("attn.w_k"), c, c)?,
            reader.matrix(&field("attn.w_v"), c, c)?,
            reader.matrix(&field("attn.w_o"), c, c)?,
        )?;
        let ln_conv = ln(&mut reader, "ln_conv")?;
        let pw_in = reader.matrix(&field("conv.pw_in"), c, 2 * c)?;
        let depthwise = reader.matrix(&field("conv.depthwise"), k, c)?;
        let norm_gain = reader.take(&field("conv.norm_gain"), &[c])?;
        let norm_bias = reader.take(&field("conv.norm_bias"), &[c])?;
        let pw_out = reader.matrix(&field("conv.pw_out"), c, c)?;
        let conv = C2ConvParams::new(
            k,
            config.right_mask,
            config.lambda,
            config.chunk_size,
            depthwise,
            pw_in,
            pw_out,
            norm_gain,
            norm_bias,
            config.eps,
        )?;
        let ln_mlp2 = ln(&mut reader, "ln_mlp2")?;
        let mlp2 = mlp(&mut reader, "mlp2")?;
        let ln_out = ln(&mut reader, "ln_out")?;
        blocks.push(BlockParams {
            ln_mlp1,
            mlp1,
            ln_attn,
            attn,
            ln_conv,
            conv,
            ln_mlp2,
            mlp2,
            ln_out,
        });
    }
    reader.finish()?;
    Ok(EncoderParams { input_proj, blocks })
}
