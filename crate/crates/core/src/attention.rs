//! Multi-head self-attention over chunk-local, sampled-chunk, time-restricted
//! or global scopes, plus an exact multiply-accumulate accountant.
//!
//! Chunk-scoped attention never computes a score outside its blocks, so the
//! measured MAC count is the per-scope closed form: `4LC^2 + 2WLC` for the
//! chunk scopes against `4LC^2 + 2L^2C` for global attention.

use crate::error::{Error, Result};
use crate::masks::{AttnMask, MaskKind};
use crate::tensor::{matmul, softmax_row_in_place, Element, Tensor};

/// Projection weights for one attention module. No biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MhsaParams<T> {
    d_model: usize,
    n_heads: usize,
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub w_o: Tensor<T>,
}

impl<T: Element> MhsaParams<T> {
    pub fn new(
        d_model: usize,
        n_heads: usize,
        w_q: Tensor<T>,
        w_k: Tensor<T>,
        w_v: Tensor<T>,
        w_o: Tensor<T>,
    ) -> Result<Self> {
        if n_heads == 0 || d_model == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(Error::Config(format!(
                "d_model {d_model} must be a positive multiple of n_heads {n_heads}"
            )));
        }
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v), ("w_o", &w_o)] {
            let (r, c) = w.dims2("mhsa_params")?;
            if r != d_model || c != d_model {
                return Err(Error::Dimension {
                    op: "mhsa_params",
                    left: vec![d_model, d_model],
                    right: vec![r, c],
                });
            }
            if !w.all_finite() {
                return Err(Error::Config(format!("{name} contains non-finite values")));
            }
        }
        Ok(Self {
            d_model,
            n_heads,
            w_q,
            w_k,
            w_v,
            w_o,
        })
    }

    /// Deterministic random projections, uniform in `±1/sqrt(d_model)`.
    pub fn seeded(d_model: usize, n_heads: usize, seed: u64) -> Result<Self> {
        let bound = 1.0 / (d_model as f64).sqrt();
        let w = |salt: u64| Tensor::seeded(&[d_model, d_model], seed.wrapping_add(salt), bound);
        Self::new(d_model, n_heads, w(1), w(2), w(3), w(4))
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Multiply-accumulate counts for one attention call, split by stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacCount {
    /// Q, K and V projections.
    pub projections: u64,
    /// Query-key dot products.
    pub qk_scores: u64,
    /// Attention-weighted value mixing.
    pub av_mix: u64,
    /// Final output projection.
    pub output_proj: u64,
}

impl MacCount {
    pub fn total(&self) -> u64 {
        self.projections + self.qk_scores + self.av_mix + self.output_proj
    }
}

/// Attention scope for complexity prediction and benchmarking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttnScope {
    Global,
    Chunk,
    Ssc,
    TimeRestricted,
}

impl AttnScope {
    pub fn name(&self) -> &'static str {
        match self {
            AttnScope::Global => "global",
            AttnScope::Chunk => "chunk",
            AttnScope::Ssc => "ssc",
            AttnScope::TimeRestricted => "time_restricted",
        }
    }
}

impl From<MaskKind> for AttnScope {
    fn from(kind: MaskKind) -> Self {
        match kind {
            MaskKind::Chunk => AttnScope::Chunk,
            MaskKind::Ssc => AttnScope::Ssc,
            MaskKind::TimeRestricted => AttnScope::TimeRestricted,
        }
    }
}

/// Attention for one query row over an explicit key list.
///
/// `k_rows`/`v_rows`/`admit` are listed in ascending original-token order.
/// Scores are scaled by `1/sqrt(head_dim)`; masked keys get probability
/// exactly zero; a fully masked query leaves `out_row` untouched (zero).
/// The streaming engine and the offline block iteration both funnel through
/// this kernel, which is what makes their outputs bit-identical wherever the
/// key lists agree.
pub(crate) fn attend_row_into<T: Element>(
    out_row: &mut [T],
    q_row: &[T],
    k_rows: &[&[T]],
    v_rows: &[&[T]],
    admit: &[bool],
    n_heads: usize,
) {
    let d_model = q_row.len();
    let head_dim = d_model / n_heads;
    let scale = T::of(1.0 / (head_dim as f64).sqrt());
    let mut scores = vec![T::zero(); k_rows.len()];
    for h in 0..n_heads {
        let lo = h * head_dim;
        let hi = lo + head_dim;
        let q_head = &q_row[lo..hi];
        for (s, k_row) in scores.iter_mut().zip(k_rows) {
            let mut dot = T::zero();
            for (&a, &b) in q_head.iter().zip(&k_row[lo..hi]) {
                dot = dot + a * b;
            }
            *s = dot * scale;
        }
        softmax_row_in_place(&mut scores, admit);
        let out_head = &mut out_row[lo..hi];
        for (&p, v_row) in scores.iter().zip(v_rows) {
            for (o, &v) in out_head.iter_mut().zip(&v_row[lo..hi]) {
                *o = *o + p * v;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attend_block<T: Element>(
    heads_out: &mut Tensor<T>,
    q_t: &Tensor<T>,
    k_t: &Tensor<T>,
    v_t: &Tensor<T>,
    q_rows: &[usize],
    k_rows: &[usize],
    mask: &AttnMask,
    n_heads: usize,
) {
    let k_refs: Vec<&[T]> = k_rows.iter().map(|&k| k_t.row(k)).collect();
    let v_refs: Vec<&[T]> = k_rows.iter().map(|&k| v_t.row(k)).collect();
    let mut admit = vec![false; k_rows.len()];
    for &qi in q_rows {
        for (a, &ki) in admit.iter_mut().zip(k_rows) {
            *a = mask.admissible(qi, ki);
        }
        // Rows are written exactly once per query; split to appease borrowck.
        let row = heads_out.row_mut(qi);
        attend_row_into(row, q_t.row(qi), &k_refs, &v_refs, &admit, n_heads);
    }
}

/// Masked multi-head self-attention with per-scope block iteration.
///
/// Chunk and sampled-chunk masks limit score computation to their diagonal
/// blocks; time-restricted masks compute each query chunk against its
/// admissible prefix. Output rows of fully masked (padded) queries are zero.
pub fn mhsa<T: Element>(
    x: &Tensor<T>,
    params: &MhsaParams<T>,
    mask: &AttnMask,
) -> Result<(Tensor<T>, MacCount)> {
    let (lp, c) = x.dims2("mhsa")?;
    if c != params.d_model {
        return Err(Error::Dimension {
            op: "mhsa",
            left: vec![lp, c],
            right: vec![params.d_model, params.d_model],
        });
    }
    if mask.padded_len() != lp {
        return Err(Error::Dimension {
            op: "mhsa",
            left: vec![lp],
            right: vec![mask.padded_len()],
        });
    }
    let q_t = matmul(x, &params.w_q)?;
    let k_t = matmul(x, &params.w_k)?;
    let v_t = matmul(x, &params.w_v)?;
    let mut heads_out = Tensor::zeros(&[lp, c]);
    let mut pairs: u64 = 0;

    match mask.kind() {
        MaskKind::Chunk | MaskKind::Ssc => {
            let blocks = mask
                .diagonal_blocks()
                .expect("chunk-scoped masks always carry diagonal blocks");
            for rows in blocks {
                attend_block(
                    &mut heads_out,
                    &q_t,
                    &k_t,
                    &v_t,
                    &rows,
                    &rows,
                    mask,
                    params.n_heads,
                );
                pairs += (rows.len() * rows.len()) as u64;
            }
        }
        MaskKind::TimeRestricted => {
            let layout = mask.layout();
            for chunk in 0..layout.num_chunks() {
                let q_rows: Vec<usize> = layout.chunk_range(chunk).collect();
                let k_rows: Vec<usize> = (0..(chunk + 1) * layout.chunk_size()).collect();
                attend_block(
                    &mut heads_out,
                    &q_t,
                    &k_t,
                    &v_t,
                    &q_rows,
                    &k_rows,
                    mask,
                    params.n_heads,
                );
                pairs += (q_rows.len() * k_rows.len()) as u64;
            }
        }
    }

    let out = matmul(&heads_out, &params.w_o)?;
    Ok((out, mac_count(lp as u64, c as u64, pairs)))
}

/// Unmasked global attention over the full sequence. Serves as the quadratic
/// baseline for the complexity benchmarks.
pub fn mhsa_global<T: Element>(
    x: &Tensor<T>,
    params: &MhsaParams<T>,
) -> Result<(Tensor<T>, MacCount)> {
    let (lp, c) = x.dims2("mhsa_global")?;
    if c != params.d_model {
        return Err(Error::Dimension {
            op: "mhsa_global",
            left: vec![lp, c],
            right: vec![params.d_model, params.d_model],
        });
    }
    let q_t = matmul(x, &params.w_q)?;
    let k_t = matmul(x, &params.w_k)?;
    let v_t = matmul(x, &params.w_v)?;
    let k_refs: Vec<&[T]> = (0..lp).map(|i| k_t.row(i)).collect();
    let v_refs: Vec<&[T]> = (0..lp).map(|i| v_t.row(i)).collect();
    let admit = vec![true; lp];
    let mut heads_out = Tensor::zeros(&[lp, c]);
    for qi in 0..lp {
        let row = heads_out.row_mut(qi);
        attend_row_into(row, q_t.row(qi), &k_refs, &v_refs, &admit, params.n_heads);
    }
    let out = matmul(&heads_out, &params.w_o)?;
    let pairs = (lp * lp) as u64;
    Ok((out, mac_count(lp as u64, c as u64, pairs)))
}

fn mac_count(l: u64, c: u64, pairs: u64) -> MacCount {
    MacCount {
        projections: 3 * l * c * c,
        qk_scores: pairs * c,
        av_mix: pairs * c,
        output_proj: l * c * c,
    }
}

/// Closed-form MAC prediction per scope.
///
/// Global: `4LC^2 + 2L^2C`. Chunk and sampled-chunk: `4LC^2 + 2WLC`.
/// Time-restricted: `4LC^2 + 2C W^2 sum(1..=Cn)`, whose score term tends to
/// half the global one. Chunked scopes require `L` to be a chunk multiple.
pub fn predict_macs(scope: AttnScope, l: usize, w: usize, c: usize) -> Result<MacCount> {
    let (l64, c64) = (l as u64, c as u64);
    let pairs = match scope {
        AttnScope::Global => l64 * l64,
        AttnScope::Chunk | AttnScope::Ssc | AttnScope::TimeRestricted => {
            if w == 0 || !l.is_multiple_of(w) {
                return Err(Error::Config(format!(
                    "{} complexity needs L ({l}) to be a multiple of W ({w})",
                    scope.name()
                )));
            }
            let w64 = w as u64;
            let cn = l64 / w64;
            match scope {
                AttnScope::TimeRestricted => w64 * w64 * cn * (cn + 1) / 2,
                _ => cn * w64 * w64,
            }
        }
    };
    Ok(mac_count(l64, c64, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{ChunkLayout, SamplingPlan};

    /// Independent oracle: global attention with a boolean mask, computed
    /// with full score matrices and explicit exp-normalization.
    fn masked_global_oracle(x: &Tensor<f64>, params: &MhsaParams<f64>, mask: &AttnMask) -> Tensor<f64> {
        let lp = x.nrows();
        let c = params.d_model();
        let h = params.n_heads();
        let hd = c / h;
        let q = matmul(x, &params.w_q).unwrap();
        let k = matmul(x, &params.w_k).unwrap();
        let v = matmul(x, &params.w_v).unwrap();
        let mut heads = Tensor::<f64>::zeros(&[lp, c]);
        for head in 0..h {
            let lo = head * hd;
            for qi in 0..lp {
                let mut scores = vec![f64::NEG_INFINITY; lp];
                for (ki, score) in scores.iter_mut().enumerate() {
                    if mask.admissible(qi, ki) {
                        let mut dot = 0.0;
                        for d in 0..hd {
                            dot += q.row(qi)[lo + d] * k.row(ki)[lo + d];
                        }
                        *score = dot / (hd as f64).sqrt();
                    }
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    continue;
                }
                let mut denom = 0.0;
                let mut probs = vec![0.0; lp];
                for (prob, &score) in probs.iter_mut().zip(&scores) {
                    if score > f64::NEG_INFINITY {
                        *prob = (score - max).exp();
                        denom += *prob;
                    }
                }
                for (ki, &prob) in probs.iter().enumerate() {
                    let p = prob / denom;
                    for d in 0..hd {
                        heads.row_mut(qi)[lo + d] += p * v.row(ki)[lo + d];
                    }
                }
            }
        }
        matmul(&heads, &params.w_o).unwrap()
    }

    #[test]
    fn single_chunk_mask_equals_global_attention() {
        let layout = ChunkLayout::new(6, 8).unwrap();
        let mask = AttnMask::chunk(&layout, 6);
        let params = MhsaParams::<f64>::seeded(4, 2, 7).unwrap();
        let x = Tensor::<f64>::seeded(&[8, 4], 8, 1.0);
        // Zero the padded rows so global attention sees the same inputs that
        // the mask marks valid -- but global has no notion of padding, so
        // compare on a fully valid single chunk instead.
        let layout_full = ChunkLayout::new(8, 8).unwrap();
        let mask_full = AttnMask::chunk(&layout_full, 8);
        let (blocked, _) = mhsa(&x, &params, &mask_full).unwrap();
        let (global, _) = mhsa_global(&x, &params).unwrap();
        assert!(blocked.max_abs_diff(&global) <= 1e-12);
        let _ = mask;
    }

    #[test]
    fn zero_value_projection_gives_zero_output() {
        let layout = ChunkLayout::new(8, 4).unwrap();
        let mask = AttnMask::chunk(&layout, 8);
        let mut params = MhsaParams::<f64>::seeded(4, 2, 9).unwrap();
        params.w_v = Tensor::zeros(&[4, 4]);
        let x = Tensor::<f64>::seeded(&[8, 4], 10, 1.0);
        let (out, _) = mhsa(&x, &params, &mask).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ssc_attention_matches_masked_global_oracle() {
        let layout = ChunkLayout::new(12, 4).unwrap();
        let plan = SamplingPlan::new(&layout);
        let mask = AttnMask::ssc(&layout, &plan, 12);
        let params = MhsaParams::<f64>::seeded(4, 2, 11).unwrap();
        let x = Tensor::<f64>::seeded(&[12, 4], 12, 1.0);
        let (got, _) = mhsa(&x, &params, &mask).unwrap();
        let want = masked_global_oracle(&x, &params, &mask);
        assert!(got.max_abs_diff(&want) <= 1e-10);
    }

    #[test]
    fn chunk_and_time_restricted_match_masked_global_oracle() {
        let layout = ChunkLayout::new(16, 4).unwrap();
        let params = MhsaParams::<f64>::seeded(8, 4, 13).unwrap();
        let x = Tensor::<f64>::seeded(&[16, 8], 14, 1.0);
        for mask in [
            AttnMask::chunk(&layout, 16),
            AttnMask::time_restricted(&layout, 16),
            AttnMask::chunk(&layout, 14),
            AttnMask::time_restricted(&layout, 13),
        ] {
            let (got, _) = mhsa(&x, &params, &mask).unwrap();
            let want = masked_global_oracle(&x, &params, &mask);
            assert!(
                got.max_abs_diff(&want) <= 1e-10,
                "{:?} valid={}",
                mask.kind(),
                mask.valid_len()
            );
        }
    }

    #[test]
    fn padded_queries_produce_zero_rows() {
        let layout = ChunkLayout::new(10, 4).unwrap();
        let mask = AttnMask::chunk(&layout, 10);
        let params = MhsaParams::<f64>::seeded(4, 2, 15).unwrap();
        let x = Tensor::<f64>::seeded(&[12, 4], 16, 1.0);
        let (out, _) = mhsa(&x, &params, &mask).unwrap();
        assert!(out.row(10).iter().all(|&v| v == 0.0));
        assert!(out.row(11).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_macs_evaluates_the_closed_forms() {
        // Global, L=12, C=2: 4*12*4 + 2*144*2 = 768.
        let g = predict_macs(AttnScope::Global, 12, 1, 2).unwrap();
        assert_eq!(g.total(), 768);
        // Chunk, L=12, W=4, C=2: 4*12*4 + 2*4*12*2 = 384.
        let c = predict_macs(AttnScope::Chunk, 12, 4, 2).unwrap();
        assert_eq!(c.total(), 384);
        // W = L makes the chunked and global counts coincide.
        let w_eq_l = predict_macs(AttnScope::Chunk, 12, 12, 2).unwrap();
        assert_eq!(w_eq_l.total(), g.total());
    }

    #[test]
    fn predict_macs_rejects_ragged_lengths_for_chunk_scopes() {
        assert!(predict_macs(AttnScope::Chunk, 10, 4, 2).is_err());
        assert!(predict_macs(AttnScope::Global, 10, 4, 2).is_ok());
    }

    #[test]
    fn measured_macs_equal_predictions() {
        for &w in &[2usize, 4, 8] {
            for &l in &[8usize, 16, 32] {
                for &c in &[4usize, 8] {
                    let layout = ChunkLayout::new(l, w).unwrap();
                    let plan = SamplingPlan::new(&layout);
                    let params = MhsaParams::<f64>::seeded(c, 2, 99).unwrap();
                    let x = Tensor::<f64>::seeded(&[l, c], 100, 1.0);

                    let (_, m) = mhsa(&x, &params, &AttnMask::chunk(&layout, l)).unwrap();
                    assert_eq!(m, predict_macs(AttnScope::Chunk, l, w, c).unwrap());

                    let (_, m) = mhsa(&x, &params, &AttnMask::ssc(&layout, &plan, l)).unwrap();
                    assert_eq!(m, predict_macs(AttnScope::Ssc, l, w, c).unwrap());

                    let (_, m) =
                        mhsa(&x, &params, &AttnMask::time_restricted(&layout, l)).unwrap();
                    assert_eq!(m, predict_macs(AttnScope::TimeRestricted, l, w, c).unwrap());

                    let (_, m) = mhsa_global(&x, &params).unwrap();
                    assert_eq!(m, predict_macs(AttnScope::Global, l, w, c).unwrap());
                }
            }
        }
    }

    #[test]
    fn chunk_counts_grow_linearly_and_global_quadratically() {
        let c = 4usize;
        let w = 4usize;
        // Evenly spaced grid: zero second difference for the chunk scope.
        let totals: Vec<i64> = [16usize, 32, 48, 64]
            .iter()
            .map(|&l| predict_macs(AttnScope::Chunk, l, w, c).unwrap().total() as i64)
            .collect();
        for win in totals.windows(3) {
            assert_eq!(win[2] - 2 * win[1] + win[0], 0);
        }
        // Unit steps: global second difference is exactly 4C.
        let g: Vec<i64> = [8usize, 9, 10]
            .iter()
            .map(|&l| predict_macs(AttnScope::Global, l, w, c).unwrap().total() as i64)
            .collect();
        assert_eq!(g[2] - 2 * g[1] + g[0], 4 * c as i64);
    }

    #[test]
    fn mac_total_is_the_sum_of_parts() {
        let m = predict_macs(AttnScope::TimeRestricted, 32, 4, 8).unwrap();
        assert_eq!(
            m.total(),
            m.projections + m.qk_scores + m.av_mix + m.output_proj
        );
    }

    #[test]
    fn params_reject_bad_head_split_and_shapes() {
        let w = Tensor::<f64>::zeros(&[6, 6]);
        assert!(MhsaParams::new(6, 4, w.clone(), w.clone(), w.clone(), w.clone()).is_err());
        let bad = Tensor::<f64>::zeros(&[6, 4]);
        assert!(MhsaParams::new(6, 2, bad, w.clone(), w.clone(), w).is_err());
    }

    #[test]
    fn mask_dimension_mismatch_is_rejected() {
        let layout = ChunkLayout::new(8, 4).unwrap();
        let mask = AttnMask::chunk(&layout, 8);
        let params = MhsaParams::<f64>::seeded(4, 2, 1).unwrap();
        let x = Tensor::<f64>::seeded(&[12, 4], 2, 1.0);
        assert!(mhsa(&x, &params, &mask).is_err());
    }
}
