//! Causality verification: finite-difference dependency probes over the
//! encoder, and a boolean reachability closure built from the per-block mask
//! and convolution reach relations.
//!
//! The contract being checked: an output at token `t` may depend on an input
//! token `j` only if `j` lies at or before the end of `t`'s chunk. Outputs
//! must never react to tokens in strictly later chunks, offline or streamed.

use crate::encoder::{
    forward_with_opts, BlockKind, EncoderConfig, EncoderParams, ForwardOpts,
};
use crate::error::{Error, Result};
use crate::layout::{ChunkLayout, SamplingPlan};
use crate::masks::AttnMask;
use crate::stream::{stream_push, StreamMode, StreamState};
use crate::tensor::{Element, Tensor};

/// Square boolean matrix; entry `(t, j)` means "output t may reach input j".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolMat {
    n: usize,
    bits: Vec<bool>,
}

impl BoolMat {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::empty(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, t: usize, j: usize) -> bool {
        self.bits[t * self.n + j]
    }

    pub fn set(&mut self, t: usize, j: usize, value: bool) {
        self.bits[t * self.n + j] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Boolean matrix product: `self` applied after `earlier`.
    pub fn compose(&self, earlier: &BoolMat) -> BoolMat {
        assert_eq!(self.n, earlier.n);
        let n = self.n;
        let mut out = BoolMat::empty(n);
        for t in 0..n {
            for m in 0..n {
                if self.get(t, m) {
                    for j in 0..n {
                        if earlier.get(m, j) {
                            out.set(t, j, true);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn union_in_place(&mut self, other: &BoolMat) {
        assert_eq!(self.n, other.n);
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a = *a || b;
        }
    }

    pub fn is_subset_of(&self, other: &BoolMat) -> bool {
        assert_eq!(self.n, other.n);
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn is_strict_subset_of(&self, other: &BoolMat) -> bool {
        self.is_subset_of(other) && self.bits != other.bits
    }
}

/// Per-block dependency relation: residual identity, plus the attention mask,
/// plus the convolution reach, composed as conv-after-attention.
fn block_relation(config: &EncoderConfig, layout: &ChunkLayout, kind: BlockKind) -> BoolMat {
    let n = layout.padded_len();
    let plan = SamplingPlan::new(layout);
    let mask = match kind {
        BlockKind::Chunk => AttnMask::chunk(layout, n),
        BlockKind::Ssc => AttnMask::ssc(layout, &plan, n),
    };
    let mut attn = BoolMat::identity(n);
    for q in 0..n {
        for k in 0..n {
            if mask.admissible(q, k) {
                attn.set(q, k, true);
            }
        }
    }
    let mut conv = BoolMat::identity(n);
    let half = (config.kernel_size - 1) / 2;
    for t in 0..n {
        if config.lambda < 1.0 {
            // Causal branch: up to `half` tokens back, across chunks.
            for j in t.saturating_sub(half)..=t {
                conv.set(t, j, true);
            }
        }
        if config.lambda > 0.0 {
            // Chunked branch: the kernel window clipped to t's chunk.
            let chunk = layout.chunk_of(t);
            let lo = (t.saturating_sub(half)).max(layout.chunk_range(chunk).start);
            let hi = (t + half).min(layout.chunk_range(chunk).end - 1).min(n - 1);
            for j in lo..=hi {
                conv.set(t, j, true);
            }
        }
    }
    conv.compose(&attn)
}

/// Dependency ceiling of the whole stack: the composition of every block's
/// relation, later blocks applied on the left.
pub fn reachability_closure(config: &EncoderConfig, seq_len: usize) -> Result<BoolMat> {
    config.validate()?;
    let layout = ChunkLayout::new(seq_len, config.chunk_size)?;
    let mut closure = BoolMat::identity(layout.padded_len());
    for kind in config.block_kinds() {
        let rel = block_relation(config, &layout, kind);
        closure = rel.compose(&closure);
    }
    Ok(closure)
}

/// Empirical dependency pattern of the offline forward pass: entry `(t, j)`
/// is set when perturbing input frame `j` by `delta` changes output row `t`.
pub fn offline_dependency<T: Element>(
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    x: &Tensor<T>,
    delta: f64,
    ssc_unrestricted: bool,
) -> Result<BoolMat> {
    let (l, _) = x.dims2("offline_dependency")?;
    let opts = ForwardOpts { ssc_unrestricted };
    let base = forward_with_opts(x, params, config, l, opts)?;
    let lp = base.nrows();
    let mut deps = BoolMat::empty(lp);
    let bump = T::of(delta);
    for j in 0..l {
        let mut probe = x.clone();
        for v in probe.row_mut(j) {
            *v = *v + bump;
        }
        let out = forward_with_opts(&probe, params, config, l, opts)?;
        for t in 0..lp {
            if out.row(t) != base.row(t) {
                deps.set(t, j, true);
            }
        }
    }
    Ok(deps)
}

/// One detected causality leak: an output that reacted to a strictly-future
/// input chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation {
    pub input_index: usize,
    pub input_chunk: usize,
    pub output_index: usize,
    pub output_chunk: usize,
}

/// Outcome of a causality probe.
#[derive(Clone, Debug, Default)]
pub struct CausalityReport {
    pub checked_pairs: usize,
    pub violations: Vec<Violation>,
}

impl CausalityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Offline probe: perturb each input frame and require every output row of a
/// strictly earlier chunk to be unchanged bit-exactly.
pub fn probe_offline<T: Element>(
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    x: &Tensor<T>,
    delta: f64,
    ssc_unrestricted: bool,
) -> Result<CausalityReport> {
    let (l, _) = x.dims2("probe_offline")?;
    let deps = offline_dependency(params, config, x, delta, ssc_unrestricted)?;
    let w = config.chunk_size;
    let mut report = CausalityReport::default();
    for j in 0..l {
        for t in 0..deps.n() {
            report.checked_pairs += 1;
            if deps.get(t, j) && j / w > t / w {
                report.violations.push(Violation {
                    input_index: j,
                    input_chunk: j / w,
                    output_index: t,
                    output_chunk: t / w,
                });
            }
        }
    }
    Ok(report)
}

/// Streaming probe: run base and perturbed streams side by side; chunks
/// emitted strictly before the perturbed frame's chunk must be identical.
pub fn probe_streaming<T: Element>(
    params: &EncoderParams<T>,
    config: &EncoderConfig,
    x: &Tensor<T>,
    mode: StreamMode,
    delta: f64,
) -> Result<CausalityReport> {
    let (l, _) = x.dims2("probe_streaming")?;
    let w = config.chunk_size;
    if l % w != 0 {
        return Err(Error::Config(format!(
            "streaming probe needs L ({l}) to be a multiple of W ({w})"
        )));
    }
    let run = |input: &Tensor<T>| -> Result<Vec<Tensor<T>>> {
        let mut state = StreamState::new(mode, config)?;
        let mut chunks = Vec::new();
        for c in 0..l / w {
            let frame_block = input.slice_rows(c * w, (c + 1) * w);
            chunks.push(stream_push(&mut state, params, config, &frame_block)?);
        }
        Ok(chunks)
    };
    let base = run(x)?;
    let bump = T::of(delta);
    let mut report = CausalityReport::default();
    for j in 0..l {
        let mut probe = x.clone();
        for v in probe.row_mut(j) {
            *v = *v + bump;
        }
        let perturbed = run(&probe)?;
        for c in 0..j / w {
            for t in 0..w {
                report.checked_pairs += 1;
                if base[c].row(t) != perturbed[c].row(t) {
                    report.violations.push(Violation {
                        input_index: j,
                        input_chunk: j / w,
                        output_index: c * w + t,
                        output_chunk: c,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Convenience wrapper used by the CLI and the acceptance suite: seeded
/// input, seeded parameters, one report.
pub fn run_probe<T: Element>(
    config: &EncoderConfig,
    seq_len: usize,
    mode: Option<StreamMode>,
    delta: f64,
    ssc_unrestricted: bool,
) -> Result<CausalityReport> {
    let params = crate::encoder::init_encoder::<T>(config)?;
    let x = Tensor::<T>::seeded(&[seq_len, config.input_dim], config.seed ^ 0x5eed, 1.0);
    match mode {
        None => probe_offline(&params, config, &x, delta, ssc_unrestricted),
        Some(m) => {
            if ssc_unrestricted {
                return Err(Error::Config(
                    "the unrestricted-mask negative control applies to the offline probe".into(),
                ));
            }
            probe_streaming(&params, config, &x, m, delta)
        }
    }
}

/// Witness of the long-range context the sampled-chunk blocks add: the
/// interleaved stack's reachability, the chunk-only stack's reachability,
/// and whether the former strictly contains the latter.
pub fn context_growth(config: &EncoderConfig, seq_len: usize) -> Result<(BoolMat, BoolMat, bool)> {
    let interleaved = reachability_closure(config, seq_len)?;
    let mut chunk_only = *config;
    chunk_only.block_pattern = crate::encoder::BlockPattern::ChunkOnly;
    let chunk = reachability_closure(&chunk_only, seq_len)?;
    let strict = chunk.is_strict_subset_of(&interleaved);
    Ok((interleaved, chunk, strict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_encoder, BlockPattern};

    fn probe_config() -> EncoderConfig {
        EncoderConfig {
            input_dim: 4,
            d_model: 8,
            n_heads: 2,
            block_pairs: 2,
            chunk_size: 4,
            kernel_size: 5,
            right_mask: 2,
            lambda: 0.7,
            ff_expansion: 2,
            eps: 1e-5,
            seed: 70,
            block_pattern: BlockPattern::Interleaved,
        }
    }

    #[test]
    fn offline_probe_finds_no_leaks() {
        let config = probe_config();
        let report = run_probe::<f64>(&config, 16, None, 1e-3, false).unwrap();
        assert!(report.is_clean(), "{:?}", report.violations);
        assert!(report.checked_pairs > 0);
    }

    #[test]
    fn unrestricted_masks_are_caught_as_leaks() {
        let config = probe_config();
        let report = run_probe::<f64>(&config, 16, None, 1e-3, true).unwrap();
        assert!(!report.is_clean());
        // Every reported pair must genuinely point at a future input chunk.
        for v in &report.violations {
            assert!(v.input_chunk > v.output_chunk);
        }
    }

    #[test]
    fn streaming_probes_find_no_leaks() {
        let config = probe_config();
        for mode in [StreamMode::Recompute, StreamMode::Cached] {
            let report = run_probe::<f64>(&config, 12, Some(mode), 1e-3, false).unwrap();
            assert!(report.is_clean(), "{mode:?}: {:?}", report.violations);
        }
    }

    #[test]
    fn closure_contains_empirical_pattern_and_no_forbidden_pair() {
        let config = probe_config();
        let params = init_encoder::<f64>(&config).unwrap();
        let x = Tensor::<f64>::seeded(&[16, 4], 71, 1.0);
        let deps = offline_dependency(&params, &config, &x, 1e-3, false).unwrap();
        let closure = reachability_closure(&config, 16).unwrap();
        assert!(deps.is_subset_of(&closure));
        let w = config.chunk_size;
        for t in 0..closure.n() {
            for j in 0..closure.n() {
                if j / w > t / w {
                    assert!(!closure.get(t, j), "forbidden pair ({t}, {j})");
                }
            }
        }
    }

    #[test]
    fn interleaved_closure_strictly_grows_past_chunk_only() {
        // Two block pairs; the sampled-chunk hops reach far beyond what the
        // causal convolution accumulates over four blocks.
        let mut config = probe_config();
        config.kernel_size = 5;
        config.right_mask = 2;
        let (interleaved, chunk_only, strict) = context_growth(&config, 32).unwrap();
        assert!(strict);
        // Concrete witness: the last token reaches token 0 only with the
        // sampled-chunk blocks in place.
        assert!(interleaved.get(31, 0));
        assert!(!chunk_only.get(31, 0));
    }

    #[test]
    fn bool_mat_algebra() {
        let mut a = BoolMat::empty(3);
        a.set(2, 1, true);
        let mut b = BoolMat::empty(3);
        b.set(1, 0, true);
        let c = a.compose(&b);
        assert!(c.get(2, 0));
        assert_eq!(c.count(), 1);
        let id = BoolMat::identity(3);
        assert!(a.compose(&id) == a && id.compose(&a) == a);
        let mut u = a.clone();
        u.union_in_place(&b);
        assert!(a.is_strict_subset_of(&u));
    }
}
