//! Chunk-by-chunk streaming inference.
//!
//! Two modes share one state type:
//!
//! * `Recompute` keeps every received frame and re-runs the offline forward
//!   pass over the whole prefix on each push, emitting the newest chunk. It
//!   is the normative reference: emitted rows equal the offline forward over
//!   exactly that prefix, bit for bit.
//! * `Cached` processes only the new chunk through each block, carrying a
//!   per-block left-history of depthwise-conv inputs (`right_mask` rows) and,
//!   for sampled-chunk blocks, the key/value rows of all previous chunks.
//!   The sampling interval at step `t` is `t`, the number of chunks seen so
//!   far; history keys are reused as computed, never refreshed. For stacks
//!   containing only chunk blocks the cached path is exact.
//!
//! Both paths funnel through the same row kernels, which is what makes the
//! promised equalities bit-exact rather than approximate.

use crate::attention::attend_row_into;
use crate::encoder::{
    mlp_forward, positional_encoding, BlockKind, EncoderConfig, EncoderParams,
};
use crate::error::{Error, Result};
use crate::tensor::{
    add, add_scaled, depthwise_conv_masked, glu, layer_norm, matmul, swish, Element, PadPolicy,
    Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamMode {
    Recompute,
    Cached,
}

impl StreamMode {
    pub fn name(&self) -> &'static str {
        match self {
            StreamMode::Recompute => "recompute",
            StreamMode::Cached => "cached",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "recompute" => Some(StreamMode::Recompute),
            "cached" => Some(StreamMode::Cached),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    /// Most recent depthwise-conv input rows, oldest first, at most
    /// `right_mask` of them.
    conv_left: Vec<Vec<T>>,
    /// Key rows of all previous chunks, indexed by global token position.
    keys: Vec<Vec<T>>,
    /// Value rows of all previous chunks, indexed by global token position.
    vals: Vec<Vec<T>>,
}

impl<T> Default for BlockCache<T> {
    fn default() -> Self {
        Self {
            conv_left: Vec::new(),
            keys: Vec::new(),
            vals: Vec::new(),
        }
    }
}

/// Single-owner state of one stream. Parameters may be shared across many
/// concurrent streams; each state is advanced by one caller at a time.
#[derive(Clone, Debug)]
pub struct StreamState<T> {
    mode: StreamMode,
    frames: Vec<Vec<T>>,
    frames_received: usize,
    chunks_emitted: usize,
    closed: bool,
    block_caches: Vec<BlockCache<T>>,
}

impl<T: Element> StreamState<T> {
    pub fn new(mode: StreamMode, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            mode,
            frames: Vec::new(),
            frames_received: 0,
            chunks_emitted: 0,
            closed: false,
            block_caches: vec![BlockCache::default(); config.n_blocks()],
        })
    }

    pub fn mode(&self) -> StreamMode {
        self.mode
    }

    pub fn chunks_emitted(&self) -> usize {
        self.chunks_emitted
    }

    pub fn frames_received(&self) -> usize {
        self.frames_received
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Conv-cache depths per block (cached mode); used by invariants tests.
    pub fn conv_cache_depths(&self) -> Vec<usize> {
        self.block_caches.iter().map(|c| c.conv_left.len()).collect()
    }

    fn ensure_open(&self) -> Result<()> {
        if self.closed {
            return Err(Error::State("stream already flushed".into()));
        }
        Ok(())
    }
}

/// Feed exactly one chunk of frames; returns the `[W, C]` encoder output for
/// that chunk.
pub fn stream_push<T: Element>(
    state: &mut StreamState<T>,
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    frames: &Tensor<T>,
) -> Result<Tensor<T>> {
    state.ensure_open()?;
    let (rows, width) = frames.dims2("stream_push")?;
    if width != config.input_dim || rows != config.chunk_size {
        return Err(Error::Dimension {
            op: "stream_push",
            left: vec![rows, width],
            right: vec![config.chunk_size, config.input_dim],
        });
    }
    let out = match state.mode {
        StreamMode::Recompute => recompute_emit(state, params, config, frames)?,
        StreamMode::Cached => cached_process_chunk(state, params, config, frames)?,
    };
    state.frames_received += rows;
    state.chunks_emitted += 1;
    Ok(out)
}

/// Close the stream, processing a final partial chunk of fewer than `W`
/// frames (possibly zero). Returns only the valid output rows.
pub fn stream_flush<T: Element>(
    state: &mut StreamState<T>,
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    frames: &Tensor<T>,
) -> Result<Tensor<T>> {
    state.ensure_open()?;
    let (rows, width) = frames.dims2("stream_flush")?;
    if rows >= config.chunk_size {
        return Err(Error::Dimension {
            op: "stream_flush",
            left: vec![rows, width],
            right: vec![config.chunk_size - 1, config.input_dim],
        });
    }
    if rows > 0 && width != config.input_dim {
        return Err(Error::Dimension {
            op: "stream_flush",
            left: vec![rows, width],
            right: vec![config.chunk_size - 1, config.input_dim],
        });
    }
    state.closed = true;
    if rows == 0 {
        return Ok(Tensor::zeros(&[0, config.d_model]));
    }
    let out = match state.mode {
        StreamMode::Recompute => recompute_emit(state, params, config, frames)?,
        StreamMode::Cached => cached_process_chunk(state, params, config, frames)?,
    };
    state.frames_received += rows;
    Ok(out)
}

fn recompute_emit<T: Element>(
    state: &mut StreamState<T>,
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    frames: &Tensor<T>,
) -> Result<Tensor<T>> {
    for i in 0..frames.nrows() {
        state.frames.push(frames.row(i).to_vec());
    }
    let total = state.frames.len();
    let x = Tensor::from_rows(&state.frames)?;
    let out = crate::encoder::encoder_forward(&x, params, config, total)?;
    Ok(out.slice_rows(total - frames.nrows(), total))
}

/// Advance the cached engine by one (possibly partial, zero-padded) chunk.
fn cached_process_chunk<T: Element>(
    state: &mut StreamState<T>,
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    frames: &Tensor<T>,
) -> Result<Tensor<T>> {
    let w = config.chunk_size;
    let c = config.d_model;
    let valid_rows = frames.nrows();
    let chunk_index = state.chunks_emitted;
    let base = chunk_index * w;
    // Sampling interval for this step: the number of chunks seen so far.
    let interval = chunk_index + 1;
    let kinds = config.block_kinds();
    let half = T::of(0.5);
    let eps_t = T::of(config.eps);

    let mut x = Tensor::zeros(&[w, config.input_dim]);
    for i in 0..valid_rows {
        x.row_mut(i).copy_from_slice(frames.row(i));
    }
    let mut z = matmul(&x, &params.input_proj)?;
    z = add(&z, &positional_encoding(w, base, c))?;

    for (bi, block) in params.blocks.iter().enumerate() {
        let normed = layer_norm(&z, &block.ln_mlp1.gain, &block.ln_mlp1.bias, eps_t)?;
        let h1 = add_scaled(&z, &mlp_forward(&normed, &block.mlp1)?, half)?;

        let a_in = layer_norm(&h1, &block.ln_attn.gain, &block.ln_attn.bias, eps_t)?;
        let q_t = matmul(&a_in, &block.attn.w_q)?;
        let k_t = matmul(&a_in, &block.attn.w_k)?;
        let v_t = matmul(&a_in, &block.attn.w_v)?;
        let mut heads = Tensor::zeros(&[w, c]);
        {
            let cache = &state.block_caches[bi];
            match kinds[bi] {
                BlockKind::Chunk => {
                    let k_refs: Vec<&[T]> = (0..w).map(|i| k_t.row(i)).collect();
                    let v_refs: Vec<&[T]> = (0..w).map(|i| v_t.row(i)).collect();
                    let mut admit = vec![false; w];
                    for qi in 0..w {
                        for (ki, a) in admit.iter_mut().enumerate() {
                            *a = qi < valid_rows && ki < valid_rows;
                        }
                        attend_row_into(
                            heads.row_mut(qi),
                            q_t.row(qi),
                            &k_refs,
                            &v_refs,
                            &admit,
                            block.attn.n_heads(),
                        );
                    }
                }
                BlockKind::Ssc => {
                    for qi in 0..w {
                        let class = (base + qi) % interval;
                        let mut k_refs: Vec<&[T]> = Vec::new();
                        let mut v_refs: Vec<&[T]> = Vec::new();
                        let mut admit: Vec<bool> = Vec::new();
                        // History keys of this sampled class, ascending
                        // global position; all of them come from full chunks.
                        let mut g = class;
                        while g < base {
                            k_refs.push(&cache.keys[g]);
                            v_refs.push(&cache.vals[g]);
                            admit.push(qi < valid_rows);
                            g += interval;
                        }
                        for ki in 0..w {
                            if (base + ki) % interval == class {
                                k_refs.push(k_t.row(ki));
                                v_refs.push(v_t.row(ki));
                                admit.push(qi < valid_rows && ki < valid_rows);
                            }
                        }
                        attend_row_into(
                            heads.row_mut(qi),
                            q_t.row(qi),
                            &k_refs,
                            &v_refs,
                            &admit,
                            block.attn.n_heads(),
                        );
                    }
                }
            }
        }
        let h2 = add(&h1, &matmul(&heads, &block.attn.w_o)?)?;

        let normed = layer_norm(&h2, &block.ln_conv.gain, &block.ln_conv.bias, eps_t)?;
        let gated = glu(&matmul(&normed, &block.conv.pw_in)?)?;
        let hist = state.block_caches[bi].conv_left.len();
        let mut buf = Tensor::zeros(&[hist + w, c]);
        for (i, row) in state.block_caches[bi].conv_left.iter().enumerate() {
            buf.row_mut(i).copy_from_slice(row);
        }
        for i in 0..w {
            buf.row_mut(hist + i).copy_from_slice(gated.row(i));
        }
        let causal_full = depthwise_conv_masked(
            &buf,
            &block.conv.depthwise,
            &block.conv.causal_taps(),
            PadPolicy::ZeroGlobal,
        )?;
        let chunked = depthwise_conv_masked(
            &gated,
            &block.conv.depthwise,
            &vec![true; block.conv.kernel_size()],
            PadPolicy::ZeroPerChunk(w),
        )?;
        let lambda = T::of(block.conv.lambda());
        let one_minus = T::of(1.0 - block.conv.lambda());
        let mut mixed = Tensor::zeros(&[w, c]);
        for i in 0..w {
            let ca = causal_full.row(hist + i);
            let ch = chunked.row(i);
            for ((m, &chv), &cav) in mixed.row_mut(i).iter_mut().zip(ch).zip(ca) {
                *m = lambda * chv + one_minus * cav;
            }
        }
        let normed = layer_norm(
            &mixed,
            &block.conv.norm_gain,
            &block.conv.norm_bias,
            T::of(block.conv.eps),
        )?;
        let h3 = add(&h2, &matmul(&swish(&normed), &block.conv.pw_out)?)?;

        let normed = layer_norm(&h3, &block.ln_mlp2.gain, &block.ln_mlp2.bias, eps_t)?;
        let inner = add_scaled(&h3, &mlp_forward(&normed, &block.mlp2)?, half)?;
        let z_next = layer_norm(&inner, &block.ln_out.gain, &block.ln_out.bias, eps_t)?;

        let cache = &mut state.block_caches[bi];
        for i in 0..w {
            cache.conv_left.push(gated.row(i).to_vec());
        }
        let depth = block.conv.right_mask();
        if cache.conv_left.len() > depth {
            let drop = cache.conv_left.len() - depth;
            cache.conv_left.drain(..drop);
        }
        if kinds[bi] == BlockKind::Ssc {
            for i in 0..valid_rows {
                cache.keys.push(k_t.row(i).to_vec());
                cache.vals.push(v_t.row(i).to_vec());
            }
        }
        z = z_next;
    }
    Ok(z.slice_rows(0, valid_rows))
}
