//! Chunk partitioning: the regular chunk layout, the sequential-sampling
//! re-partition, and the batched gather/scatter that realizes it.
//!
//! The re-partition is defined on the padded length, so padded tokens take
//! part in the permutations and are excluded later by the attention masks.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Regular partition of a sequence into fixed-size chunks, plus the padding
/// bookkeeping required to make the length a chunk multiple.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkLayout {
    original_len: usize,
    chunk_size: usize,
    padded_len: usize,
    num_chunks: usize,
}

impl ChunkLayout {
    pub fn new(original_len: usize, chunk_size: usize) -> Result<Self> {
        if original_len == 0 || chunk_size == 0 {
            return Err(Error::Config(format!(
                "chunk layout needs positive sizes, got len={original_len} chunk_size={chunk_size}"
            )));
        }
        let num_chunks = original_len.div_ceil(chunk_size);
        Ok(Self {
            original_len,
            chunk_size,
            padded_len: num_chunks * chunk_size,
            num_chunks,
        })
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    pub fn num_chunks(&self) -> usize {
        self.num_chunks
    }

    /// Rows of zero padding appended on the right.
    pub fn padding(&self) -> usize {
        self.padded_len - self.original_len
    }

    /// Chunk index of a token position.
    pub fn chunk_of(&self, index: usize) -> usize {
        index / self.chunk_size
    }

    /// Token range covered by chunk `c`.
    pub fn chunk_range(&self, c: usize) -> std::ops::Range<usize> {
        c * self.chunk_size..(c + 1) * self.chunk_size
    }
}

/// Mutually inverse gather/scatter permutations realizing the sequential
/// sampling re-partition: sampled chunk `k` collects the original indices
/// congruent to `k` modulo the chunk count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingPlan {
    gather: Vec<usize>,
    scatter: Vec<usize>,
}

impl SamplingPlan {
    pub fn new(layout: &ChunkLayout) -> Self {
        let lp = layout.padded_len();
        let cn = layout.num_chunks();
        let w = layout.chunk_size();
        let mut gather = Vec::with_capacity(lp);
        for k in 0..cn {
            for j in 0..w {
                gather.push(j * cn + k);
            }
        }
        let mut scatter = vec![0usize; lp];
        for (pos, &src) in gather.iter().enumerate() {
            scatter[src] = pos;
        }
        Self { gather, scatter }
    }

    /// `gather[p]` is the original index placed at permuted position `p`.
    pub fn gather(&self) -> &[usize] {
        &self.gather
    }

    /// `scatter[i]` is the permuted position of original index `i`.
    pub fn scatter(&self) -> &[usize] {
        &self.scatter
    }

    pub fn len(&self) -> usize {
        self.gather.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gather.is_empty()
    }

    /// Original indices making up sampled chunk `k`, in ascending order.
    pub fn sampled_chunk(&self, k: usize, chunk_size: usize) -> &[usize] {
        &self.gather[k * chunk_size..(k + 1) * chunk_size]
    }
}

/// Which index list of a [`SamplingPlan`] to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanDirection {
    Gather,
    Scatter,
}

/// Permute the rows of `x` by the plan. Gather followed by scatter is the
/// identity, bit-exactly.
pub fn apply_plan<T: Element>(
    x: &Tensor<T>,
    plan: &SamplingPlan,
    direction: PlanDirection,
) -> Result<Tensor<T>> {
    let (rows, cols) = x.dims2("apply_plan")?;
    if rows != plan.len() {
        return Err(Error::Dimension {
            op: "apply_plan",
            left: vec![rows, cols],
            right: vec![plan.len()],
        });
    }
    let index = match direction {
        PlanDirection::Gather => plan.gather(),
        PlanDirection::Scatter => plan.scatter(),
    };
    let mut out = Tensor::zeros(&[rows, cols]);
    for (pos, &src) in index.iter().enumerate() {
        out.row_mut(pos).copy_from_slice(x.row(src));
    }
    Ok(out)
}

/// Zero-pad a batch of `[L_b, d]` sequences to the batch maximum rounded up
/// to a chunk multiple. Returns the `[B, Lp, d]` tensor and the true lengths.
pub fn pad_batch<T: Element>(
    sequences: &[Tensor<T>],
    chunk_size: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    if sequences.is_empty() {
        return Err(Error::Config("pad_batch: empty batch".into()));
    }
    if chunk_size == 0 {
        return Err(Error::Config("pad_batch: chunk size must be positive".into()));
    }
    let mut lengths = Vec::with_capacity(sequences.len());
    let (_, width) = sequences[0].dims2("pad_batch")?;
    let mut max_len = 0usize;
    for seq in sequences {
        let (rows, cols) = seq.dims2("pad_batch")?;
        if cols != width {
            return Err(Error::Dimension {
                op: "pad_batch",
                left: vec![width],
                right: vec![cols],
            });
        }
        lengths.push(rows);
        max_len = max_len.max(rows);
    }
    let padded = max_len.div_ceil(chunk_size) * chunk_size;
    let mut data = vec![T::zero(); sequences.len() * padded * width];
    for (b, seq) in sequences.iter().enumerate() {
        let base = b * padded * width;
        data[base..base + seq.data().len()].copy_from_slice(seq.data());
    }
    let out = Tensor::new(vec![sequences.len(), padded, width], data)?;
    Ok((out, lengths))
}
