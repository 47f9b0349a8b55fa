//! Attention admissibility masks for the three streaming attention scopes:
//! chunk-local, sampled-chunk, and time-restricted.
//!
//! Masks live in original token coordinates (entry `[q][k]` says whether
//! query `q` may attend key `k`); the attention module permutes them alongside
//! activations when it works in sampled-chunk order. Padded queries and keys
//! are inadmissible everywhere.

use crate::error::{Error, Result};
use crate::layout::{ChunkLayout, SamplingPlan};

/// Which admissibility rule a mask encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskKind {
    /// Query and key in the same chunk.
    Chunk,
    /// Query and key in the same sampled chunk, key from a chunk no later
    /// than the query's.
    Ssc,
    /// Key from a chunk no later than the query's (current plus all
    /// previous chunks).
    TimeRestricted,
}

impl MaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            MaskKind::Chunk => "chunk",
            MaskKind::Ssc => "ssc",
            MaskKind::TimeRestricted => "time_restricted",
        }
    }
}

/// Boolean query/key admissibility matrix in original token coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnMask {
    kind: MaskKind,
    layout: ChunkLayout,
    valid_len: usize,
    bits: Vec<bool>,
    plan: Option<SamplingPlan>,
}

impl AttnMask {
    /// Block-diagonal mask: attend within your own chunk only.
    pub fn chunk(layout: &ChunkLayout, valid_len: usize) -> Self {
        Self::build(MaskKind::Chunk, layout, valid_len, None, |l, q, k| {
            l.chunk_of(q) == l.chunk_of(k)
        })
    }

    /// Sampled-chunk mask: attend tokens of your own sampled chunk whose
    /// chunk index does not exceed yours.
    pub fn ssc(layout: &ChunkLayout, plan: &SamplingPlan, valid_len: usize) -> Self {
        assert_eq!(
            plan.len(),
            layout.padded_len(),
            "sampling plan inconsistent with layout"
        );
        let mut mask = Self::build(MaskKind::Ssc, layout, valid_len, Some(plan.clone()), |_, _, _| false);
        mask.fill_from_sampled_chunks(plan, |l, q, k| l.chunk_of(k) <= l.chunk_of(q));
        mask
    }

    /// Lower block-triangular mask: attend the current and all previous chunks.
    pub fn time_restricted(layout: &ChunkLayout, valid_len: usize) -> Self {
        Self::build(MaskKind::TimeRestricted, layout, valid_len, None, |l, q, k| {
            l.chunk_of(k) <= l.chunk_of(q)
        })
    }

    /// Sampled-chunk mask with the chunk-order restriction removed, so a
    /// query may attend every token of its sampled chunk including ones from
    /// later chunks. This deliberately breaks causality; it exists as the
    /// negative control for the causality probes and must never be used for
    /// inference.
    pub fn ssc_unrestricted(layout: &ChunkLayout, plan: &SamplingPlan, valid_len: usize) -> Self {
        assert_eq!(plan.len(), layout.padded_len());
        let mut mask = Self::build(MaskKind::Ssc, layout, valid_len, Some(plan.clone()), |_, _, _| false);
        mask.fill_from_sampled_chunks(plan, |_, _, _| true);
        mask
    }

    fn build(
        kind: MaskKind,
        layout: &ChunkLayout,
        valid_len: usize,
        plan: Option<SamplingPlan>,
        rule: impl Fn(&ChunkLayout, usize, usize) -> bool,
    ) -> Self {
        let lp = layout.padded_len();
        assert!(valid_len <= lp, "valid_len exceeds padded length");
        let mut bits = vec![false; lp * lp];
        for q in 0..valid_len {
            for k in 0..valid_len {
                bits[q * lp + k] = rule(layout, q, k);
            }
        }
        Self {
            kind,
            layout: *layout,
            valid_len,
            bits,
            plan,
        }
    }

    fn fill_from_sampled_chunks(
        &mut self,
        plan: &SamplingPlan,
        rule: impl Fn(&ChunkLayout, usize, usize) -> bool,
    ) {
        let lp = self.layout.padded_len();
        let w = self.layout.chunk_size();
        for c in 0..self.layout.num_chunks() {
            let members = plan.sampled_chunk(c, w);
            for &q in members {
                for &k in members {
                    if q < self.valid_len && k < self.valid_len && rule(&self.layout, q, k) {
                        self.bits[q * lp + k] = true;
                    }
                }
            }
        }
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn layout(&self) -> &ChunkLayout {
        &self.layout
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn padded_len(&self) -> usize {
        self.layout.padded_len()
    }

    /// May query `q` attend key `k`?
    pub fn admissible(&self, q: usize, k: usize) -> bool {
        self.bits[q * self.layout.padded_len() + k]
    }

    /// Number of admissible (query, key) pairs.
    pub fn count_admissible(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Elementwise boolean implication: every admissible pair of `self` is
    /// admissible in `other`.
    pub fn subset_of(&self, other: &AttnMask) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(&a, &b)| !a || b)
    }

    /// Row-index groups over which attention is computed block-locally:
    /// chunk ranges for chunk masks, sampled chunks for sampled-chunk masks.
    /// Time-restricted masks have no diagonal block structure.
    pub fn diagonal_blocks(&self) -> Option<Vec<Vec<usize>>> {
        let w = self.layout.chunk_size();
        match self.kind {
            MaskKind::Chunk => Some(
                (0..self.layout.num_chunks())
                    .map(|c| self.layout.chunk_range(c).collect())
                    .collect(),
            ),
            MaskKind::Ssc => {
                let plan = self.plan.as_ref()?;
                Some(
                    (0..self.layout.num_chunks())
                        .map(|c| plan.sampled_chunk(c, w).to_vec())
                        .collect(),
                )
            }
            MaskKind::TimeRestricted => None,
        }
    }

    /// The per-chunk `W x W` admissibility stack in permuted coordinates,
    /// derived from the original-coordinate matrix.
    pub fn per_chunk_stack(&self) -> Option<Vec<Vec<bool>>> {
        let blocks = self.diagonal_blocks()?;
        Some(
            blocks
                .iter()
                .map(|rows| {
                    let mut grid = Vec::with_capacity(rows.len() * rows.len());
                    for &q in rows {
                        for &k in rows {
                            grid.push(self.admissible(q, k));
                        }
                    }
                    grid
                })
                .collect(),
        )
    }

    /// Plain-text dump: one row per query, `'1'` admissible / `'0'` not.
    pub fn render(&self) -> String {
        let lp = self.layout.padded_len();
        let mut out = String::with_capacity(lp * (lp + 1));
        for q in 0..lp {
            for k in 0..lp {
                out.push(if self.bits[q * lp + k] { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

/// One mask per batch element, all on the shared padded length, each using
/// its element's true length. Masks are rebuilt from scratch on every call;
/// nothing is cached across chunk sizes or length sets.
pub fn batched_masks(
    padded_len: usize,
    chunk_size: usize,
    lengths: &[usize],
    kind: MaskKind,
) -> Result<Vec<AttnMask>> {
    if padded_len == 0 || chunk_size == 0 || !padded_len.is_multiple_of(chunk_size) {
        return Err(Error::Config(format!(
            "batched_masks: padded_len {padded_len} must be a positive multiple of chunk_size {chunk_size}"
        )));
    }
    let layout = ChunkLayout::new(padded_len, chunk_size)?;
    let plan = SamplingPlan::new(&layout);
    lengths
        .iter()
        .map(|&len| {
            if len > padded_len {
                return Err(Error::Dimension {
                    op: "batched_masks",
                    left: vec![len],
                    right: vec![padded_len],
                });
            }
            Ok(match kind {
                MaskKind::Chunk => AttnMask::chunk(&layout, len),
                MaskKind::Ssc => AttnMask::ssc(&layout, &plan, len),
                MaskKind::TimeRestricted => AttnMask::time_restricted(&layout, len),
            })
        })
        .collect()
}
