//! Dense numeric kernels: matrix multiply, masked softmax, layer norm,
//! activations, and a tap-masked depthwise convolution.
//!
//! Every reduction uses a fixed left-to-right summation order and no fused
//! reassociation, so results are bit-reproducible across runs and across the
//! streaming/offline code paths that share these kernels.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Scalar element type. Implemented for `f32` and `f64`.
pub trait Element:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const DTYPE: &'static str;

    /// Convert an `f64` literal; panics on values outside the type's range.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("value not representable as f64")
    }
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
}

/// Dense row-major tensor with an explicit shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::Config(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        if expected != data.len() {
            return Err(Error::Dimension {
                op: "tensor_new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    /// Build a 2-D tensor from row vectors; all rows must share one width.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("from_rows: empty row list".into()));
        }
        let width = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            if row.len() != width {
                return Err(Error::Dimension {
                    op: "from_rows",
                    left: vec![width],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), width], data)
    }

    /// Deterministic pseudo-random tensor, uniform in `[-bound, bound]`.
    pub fn seeded(shape: &[usize], seed: u64, bound: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(rng.random_range(-bound..=bound)))
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    /// Number of rows of a 2-D tensor. Panics on other ranks.
    pub fn nrows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "nrows on non-2-D tensor");
        self.shape[0]
    }

    /// Number of columns of a 2-D tensor. Panics on other ranks.
    pub fn ncols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "ncols on non-2-D tensor");
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.ncols();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.ncols();
        &mut self.data[i * w..(i + 1) * w]
    }

    /// Copy of rows `start..end` of a 2-D tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor<T> {
        let w = self.ncols();
        assert!(start <= end && end <= self.nrows());
        Tensor {
            shape: vec![end - start, w],
            data: self.data[start * w..end * w].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest elementwise absolute difference, as `f64`.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max)
    }
}

/// Matrix product of `a: [m, k]` and `b: [k, n]`.
///
/// The reduction over `k` runs left to right for every output element; the
/// result is bit-identical no matter how callers batch their rows.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, ka) = a.dims2("matmul")?;
    let (kb, n) = b.dims2("matmul")?;
    if ka != kb {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let a_row = a.row(i);
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b.data()[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_ip * b_pj;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Elementwise `a + b`.
pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op: "add",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Elementwise `base + coef * delta` (used for the half-weighted residuals).
pub fn add_scaled<T: Element>(base: &Tensor<T>, delta: &Tensor<T>, coef: T) -> Result<Tensor<T>> {
    if base.shape() != delta.shape() {
        return Err(Error::Dimension {
            op: "add_scaled",
            left: base.shape().to_vec(),
            right: delta.shape().to_vec(),
        });
    }
    let data = base
        .data()
        .iter()
        .zip(delta.data())
        .map(|(&x, &d)| x + coef * d)
        .collect();
    Tensor::new(base.shape().to_vec(), data)
}

/// Add a bias vector to every row along the last axis.
pub fn add_bias<T: Element>(x: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let d = *x.shape().last().unwrap_or(&0);
    if d == 0 || bias.len() != d {
        return Err(Error::Dimension {
            op: "add_bias",
            left: x.shape().to_vec(),
            right: vec![bias.len()],
        });
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(d) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
    Ok(out)
}

/// Numerically stable masked softmax over a single row, in place.
///
/// Masked positions get probability exactly zero. A fully masked row becomes
/// all zeros (this happens only for padded queries).
pub fn softmax_row_in_place<T: Element>(row: &mut [T], admit: &[bool]) {
    debug_assert_eq!(row.len(), admit.len());
    let mut max: Option<T> = None;
    for (v, &a) in row.iter().zip(admit) {
        if a {
            max = Some(match max {
                Some(m) => m.max(*v),
                None => *v,
            });
        }
    }
    let Some(max) = max else {
        for v in row.iter_mut() {
            *v = T::zero();
        }
        return;
    };
    let mut denom = T::zero();
    for (v, &a) in row.iter_mut().zip(admit) {
        if a {
            *v = (*v - max).exp();
            denom = denom + *v;
        } else {
            *v = T::zero();
        }
    }
    for v in row.iter_mut() {
        *v = *v / denom;
    }
}

/// Masked softmax over the last axis; one boolean mask row is broadcast over
/// all leading axes.
pub fn softmax_masked<T: Element>(scores: &Tensor<T>, mask: &[bool]) -> Result<Tensor<T>> {
    let n = *scores.shape().last().unwrap_or(&0);
    if n == 0 || mask.len() != n {
        return Err(Error::Dimension {
            op: "softmax_masked",
            left: scores.shape().to_vec(),
            right: vec![mask.len()],
        });
    }
    let mut out = scores.clone();
    for row in out.data_mut().chunks_mut(n) {
        softmax_row_in_place(row, mask);
    }
    Ok(out)
}

/// Layer normalization over the last axis with learnable gain and bias.
pub fn layer_norm<T: Element>(
    x: &Tensor<T>,
    gain: &[T],
    bias: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let d = *x.shape().last().unwrap_or(&0);
    if d == 0 || gain.len() != d || bias.len() != d {
        return Err(Error::Dimension {
            op: "layer_norm",
            left: x.shape().to_vec(),
            right: vec![gain.len(), bias.len()],
        });
    }
    let inv_d = T::one() / T::of(d as f64);
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(d) {
        let mut sum = T::zero();
        for &v in row.iter() {
            sum = sum + v;
        }
        let mean = sum * inv_d;
        let mut var = T::zero();
        for &v in row.iter() {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let inv_std = T::one() / (var + eps).sqrt();
        for (v, (&g, &b)) in row.iter_mut().zip(gain.iter().zip(bias)) {
            *v = (*v - mean) * inv_std * g + b;
        }
    }
    Ok(out)
}

fn sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Swish activation `x * sigmoid(x)`, elementwise.
pub fn swish<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid(v))
}

/// Gated linear unit: split the last axis in half, `out = a * sigmoid(b)`.
pub fn glu<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let d2 = *x.shape().last().unwrap_or(&0);
    if d2 == 0 || !d2.is_multiple_of(2) {
        return Err(Error::Dimension {
            op: "glu",
            left: x.shape().to_vec(),
            right: vec![2],
        });
    }
    let d = d2 / 2;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = d;
    let mut data = Vec::with_capacity(x.data().len() / 2);
    for row in x.data().chunks(d2) {
        for j in 0..d {
            data.push(row[j] * sigmoid(row[d + j]));
        }
    }
    Tensor::new(shape, data)
}

/// Zero-padding policy for [`depthwise_conv_masked`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadPolicy {
    /// Out-of-range reads anywhere in `[0, L)` are zero.
    ZeroGlobal,
    /// Each chunk of the given size is convolved in isolation; reads outside
    /// the chunk are zero.
    ZeroPerChunk(usize),
}

/// 1-D depthwise convolution with per-tap masking.
///
/// `x` is `[L, d]`, `kernel` is `[K, d]` with odd `K`; tap `j` reads offset
/// `j - (K-1)/2`. Masked taps and out-of-range reads (per the pad policy)
/// contribute nothing.
pub fn depthwise_conv_masked<T: Element>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    tap_mask: &[bool],
    pad: PadPolicy,
) -> Result<Tensor<T>> {
    let (len, width) = x.dims2("depthwise_conv_masked")?;
    let (k, kw) = kernel.dims2("depthwise_conv_masked")?;
    if k % 2 == 0 {
        return Err(Error::Config(format!(
            "depthwise kernel size must be odd, got {k}"
        )));
    }
    if kw != width || tap_mask.len() != k {
        return Err(Error::Dimension {
            op: "depthwise_conv_masked",
            left: vec![len, width],
            right: vec![k, kw, tap_mask.len()],
        });
    }
    if let PadPolicy::ZeroPerChunk(w) = pad {
        if w == 0 {
            return Err(Error::Config("per-chunk pad policy needs chunk size >= 1".into()));
        }
    }
    let half = (k - 1) / 2;
    let mut out = Tensor::zeros(&[len, width]);
    for t in 0..len {
        let (lo, hi) = match pad {
            PadPolicy::ZeroGlobal => (0usize, len),
            PadPolicy::ZeroPerChunk(w) => {
                let start = (t / w) * w;
                (start, (start + w).min(len))
            }
        };
        let out_row = out.row_mut(t);
        for (j, &active) in tap_mask.iter().enumerate() {
            if !active {
                continue;
            }
            let s = t as isize + j as isize - half as isize;
            if s < lo as isize || s >= hi as isize {
                continue;
            }
            let x_row = x.row(s as usize);
            let k_row = kernel.row(j);
            for ((o, &kv), &xv) in out_row.iter_mut().zip(k_row).zip(x_row) {
                *o = *o + kv * xv;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_identity() {
        let id = Tensor::<f64>::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(matmul(&id, &m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::<f64>::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        // Independent oracle: explicit (i, j) loops with an inner sum over p.
        for m in 1..=8usize {
            for k in 1..=8usize {
                for n in 1..=8usize {
                    let seed = (m * 100 + k * 10 + n) as u64;
                    let a = Tensor::<f64>::seeded(&[m, k], seed, 1.0);
                    let b = Tensor::<f64>::seeded(&[k, n], seed + 999, 1.0);
                    let got = matmul(&a, &b).unwrap();
                    for i in 0..m {
                        for j in 0..n {
                            let mut acc = 0.0f64;
                            for p in 0..k {
                                acc += a.row(i)[p] * b.row(p)[j];
                            }
                            assert_eq!(got.row(i)[j], acc, "({m},{k},{n}) at ({i},{j})");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn softmax_uniform_row() {
        let s = Tensor::<f64>::new(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap();
        let p = softmax_masked(&s, &[true, true, true]).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_single_admissible() {
        let s = Tensor::<f64>::new(vec![1, 2], vec![5.0, 5.0]).unwrap();
        let p = softmax_masked(&s, &[true, false]).unwrap();
        assert_eq!(p.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let s = Tensor::<f64>::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let p = softmax_masked(&s, &[true, true, true]).unwrap();
        let z: f64 = (1.0f64).exp() + (2.0f64).exp() + (3.0f64).exp();
        for (got, want) in p.data().iter().zip([1.0f64, 2.0, 3.0]) {
            assert!((got - want.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_fully_masked_row_is_zero() {
        let s = Tensor::<f64>::new(vec![2, 2], vec![3.0, -1.0, 0.5, 0.5]).unwrap();
        let p = softmax_masked(&s, &[false, false]).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::<f64>::new(vec![1, 3], vec![4.2, 4.2, 4.2]).unwrap();
        let out = layer_norm(&x, &[1.0; 3], &[0.0; 3], 1e-5).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_already_normalized_row() {
        let x = Tensor::<f64>::new(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let out = layer_norm(&x, &[1.0; 2], &[0.0; 2], 1e-12).unwrap();
        assert!((out.data()[0] - 1.0).abs() < 1e-9);
        assert!((out.data()[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_matches_direct_formula() {
        let x = Tensor::<f64>::seeded(&[1, 7], 7, 3.0);
        let eps = 1e-5;
        let out = layer_norm(&x, &[1.0; 7], &[0.0; 7], eps).unwrap();
        let row = x.row(0);
        let mean: f64 = row.iter().sum::<f64>() / 7.0;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 7.0;
        for (got, &v) in out.data().iter().zip(row) {
            let want = (v - mean) / (var + eps).sqrt();
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn layer_norm_standardizes_random_rows() {
        let x = Tensor::<f64>::seeded(&[5, 16], 11, 2.0);
        let out = layer_norm(&x, &[1.0; 16], &[0.0; 16], 1e-5).unwrap();
        for i in 0..5 {
            let row = out.row(i);
            let mean: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() <= 1e-6);
            assert!((var - 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn swish_basics() {
        let x = Tensor::<f64>::new(vec![1, 3], vec![0.0, -1e4, 1e4]).unwrap();
        let out = swish(&x);
        assert_eq!(out.data()[0], 0.0);
        assert!(out.data()[1].abs() < 1e-300 && out.data()[1].is_finite());
        assert!((out.data()[2] - 1e4).abs() < 1e-6);
    }

    #[test]
    fn glu_with_zero_gate_halves() {
        let x = Tensor::<f64>::new(vec![1, 4], vec![3.0, -2.0, 0.0, 0.0]).unwrap();
        let out = glu(&x).unwrap();
        assert_eq!(out.data(), &[1.5, -1.0]);
    }

    #[test]
    fn glu_rejects_odd_axis() {
        let x = Tensor::<f64>::zeros(&[2, 3]);
        assert!(glu(&x).is_err());
    }

    #[test]
    fn conv_zero_kernel_is_zero() {
        let x = Tensor::<f64>::seeded(&[6, 2], 3, 1.0);
        let kernel = Tensor::<f64>::zeros(&[3, 2]);
        let out = depthwise_conv_masked(&x, &kernel, &[true; 3], PadPolicy::ZeroGlobal).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_k1_is_identity() {
        let x = Tensor::<f64>::seeded(&[5, 3], 4, 1.0);
        let kernel = Tensor::<f64>::new(vec![1, 3], vec![1.0; 3]).unwrap();
        let out = depthwise_conv_masked(&x, &kernel, &[true], PadPolicy::ZeroGlobal).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_causal_hand_case() {
        // K=3 with the +1 tap masked over [1, 2, 3] and an all-ones kernel.
        let x = Tensor::<f64>::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let kernel = Tensor::<f64>::new(vec![3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let out =
            depthwise_conv_masked(&x, &kernel, &[true, true, false], PadPolicy::ZeroGlobal)
                .unwrap();
        assert_eq!(out.data(), &[1.0, 3.0, 5.0]);
    }

    #[test]
    fn conv_rejects_even_kernel() {
        let x = Tensor::<f64>::zeros(&[4, 1]);
        let kernel = Tensor::<f64>::zeros(&[2, 1]);
        let err = depthwise_conv_masked(&x, &kernel, &[true; 2], PadPolicy::ZeroGlobal);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn conv_unmasked_matches_reference_oracle() {
        // Independent reference: direct windowed sum over offsets.
        let x = Tensor::<f64>::seeded(&[10, 3], 21, 1.0);
        let kernel = Tensor::<f64>::seeded(&[5, 3], 22, 1.0);
        let out =
            depthwise_conv_masked(&x, &kernel, &[true; 5], PadPolicy::ZeroGlobal).unwrap();
        for t in 0..10usize {
            for c in 0..3usize {
                let mut want = 0.0f64;
                for (j, off) in (-2isize..=2).enumerate() {
                    let s = t as isize + off;
                    if (0..10).contains(&s) {
                        want += kernel.row(j)[c] * x.row(s as usize)[c];
                    }
                }
                assert_eq!(out.row(t)[c], want);
            }
        }
    }

    #[test]
    fn conv_per_chunk_padding_isolates_chunks() {
        let x = Tensor::<f64>::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernel = Tensor::<f64>::new(vec![3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let out =
            depthwise_conv_masked(&x, &kernel, &[true; 3], PadPolicy::ZeroPerChunk(2)).unwrap();
        assert_eq!(out.data(), &[3.0, 3.0, 7.0, 7.0]);
    }

    proptest! {
        #[test]
        fn softmax_mask_and_sum_invariants(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..24),
            mask_seed in any::<u64>(),
            shift in -10.0f64..10.0,
        ) {
            let n = scores.len();
            let mut mask = Vec::with_capacity(n);
            let mut s = mask_seed;
            for _ in 0..n {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                mask.push(s >> 63 == 1);
            }
            let t = Tensor::<f64>::new(vec![1, n], scores.clone()).unwrap();
            let p = softmax_masked(&t, &mask).unwrap();
            let mut total = 0.0;
            for (i, &v) in p.data().iter().enumerate() {
                if mask[i] {
                    total += v;
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
            if mask.iter().any(|&m| m) {
                prop_assert!((total - 1.0).abs() < 1e-6);
                // Adding a constant to all admissible scores leaves the result.
                let shifted: Vec<f64> = scores.iter().map(|v| v + shift).collect();
                let t2 = Tensor::<f64>::new(vec![1, n], shifted).unwrap();
                let p2 = softmax_masked(&t2, &mask).unwrap();
                prop_assert!(p.max_abs_diff(&p2) <= 1e-6);
            } else {
                prop_assert_eq!(total, 0.0);
            }
        }

        #[test]
        fn kernels_preserve_finiteness(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            let x = Tensor::<f64>::seeded(&[rows, cols], seed, 100.0);
            prop_assert!(swish(&x).all_finite());
            prop_assert!(layer_norm(&x, &vec![1.0; cols], &vec![0.0; cols], 1e-5).unwrap().all_finite());
            let w = Tensor::<f64>::seeded(&[cols, cols], seed ^ 1, 1.0);
            prop_assert!(matmul(&x, &w).unwrap().all_finite());
        }
    }
}
