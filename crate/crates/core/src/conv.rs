//! Blended causal / chunk-local depthwise convolution and the convolution
//! sub-block that hosts it.
//!
//! One depthwise kernel backs two branches. The causal branch masks every
//! right-of-center tap and zero-pads globally, so its left context crosses
//! chunk boundaries. The chunked branch keeps all taps but convolves each
//! chunk in isolation, so it sees within-chunk future tokens and nothing
//! outside the chunk. The output is `lambda * chunked + (1 - lambda) * causal`.

use crate::error::{Error, Result};
use crate::layout::ChunkLayout;
use crate::tensor::{
    depthwise_conv_masked, glu, layer_norm, matmul, swish, Element, PadPolicy, Tensor,
};

/// Parameters of one convolution sub-block.
#[derive(Clone, Debug, PartialEq)]
pub struct C2ConvParams<T> {
    kernel_size: usize,
    right_mask: usize,
    lambda: f64,
    chunk_size: usize,
    /// Depthwise kernel `[K, C]`, shared verbatim by both branches.
    pub depthwise: Tensor<T>,
    /// Pointwise expansion `[C, 2C]` feeding the GLU.
    pub pw_in: Tensor<T>,
    /// Pointwise projection `[C, C]` back to the model width.
    pub pw_out: Tensor<T>,
    pub norm_gain: Vec<T>,
    pub norm_bias: Vec<T>,
    pub eps: f64,
}

impl<T: Element> C2ConvParams<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kernel_size: usize,
        right_mask: usize,
        lambda: f64,
        chunk_size: usize,
        depthwise: Tensor<T>,
        pw_in: Tensor<T>,
        pw_out: Tensor<T>,
        norm_gain: Vec<T>,
        norm_bias: Vec<T>,
        eps: f64,
    ) -> Result<Self> {
        if kernel_size.is_multiple_of(2) || kernel_size == 0 {
            return Err(Error::Config(format!(
                "kernel size must be odd, got {kernel_size}"
            )));
        }
        if right_mask != (kernel_size - 1) / 2 {
            return Err(Error::Config(format!(
                "right mask {right_mask} must equal (kernel_size - 1) / 2 = {}",
                (kernel_size - 1) / 2
            )));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} must lie in [0, 1]")));
        }
        if chunk_size == 0 {
            return Err(Error::Config("chunk size must be positive".into()));
        }
        let (k, c) = depthwise.dims2("c2conv_params")?;
        if k != kernel_size {
            return Err(Error::Dimension {
                op: "c2conv_params",
                left: vec![kernel_size, c],
                right: vec![k, c],
            });
        }
        let (ri, ci) = pw_in.dims2("c2conv_params")?;
        let (ro, co) = pw_out.dims2("c2conv_params")?;
        if ri != c || ci != 2 * c || ro != c || co != c || norm_gain.len() != c || norm_bias.len() != c
        {
            return Err(Error::Dimension {
                op: "c2conv_params",
                left: vec![c],
                right: vec![ri, ci, ro, co, norm_gain.len(), norm_bias.len()],
            });
        }
        Ok(Self {
            kernel_size,
            right_mask,
            lambda,
            chunk_size,
            depthwise,
            pw_in,
            pw_out,
            norm_gain,
            norm_bias,
            eps,
        })
    }

    /// Deterministic random parameters with identity-like norm defaults.
    pub fn seeded(
        width: usize,
        kernel_size: usize,
        lambda: f64,
        chunk_size: usize,
        eps: f64,
        seed: u64,
    ) -> Result<Self> {
        let kb = 1.0 / (kernel_size as f64).sqrt();
        let cb = 1.0 / (width as f64).sqrt();
        Self::new(
            kernel_size,
            (kernel_size.max(1) - 1) / 2,
            lambda,
            chunk_size,
            Tensor::seeded(&[kernel_size, width], seed.wrapping_add(1), kb),
            Tensor::seeded(&[width, 2 * width], seed.wrapping_add(2), cb),
            Tensor::seeded(&[width, width], seed.wrapping_add(3), cb),
            vec![T::one(); width],
            vec![T::zero(); width],
            eps,
        )
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn right_mask(&self) -> usize {
        self.right_mask
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Change the blend weight; everything else, the shared kernel included,
    /// stays untouched.
    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} must lie in [0, 1]")));
        }
        self.lambda = lambda;
        Ok(())
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn width(&self) -> usize {
        self.depthwise.ncols()
    }

    /// Tap mask of the causal branch: offsets `+1..=+right_mask` disabled.
    pub fn causal_taps(&self) -> Vec<bool> {
        let half = (self.kernel_size - 1) / 2;
        (0..self.kernel_size).map(|j| j <= half).collect()
    }
}

/// The blended depthwise stage: both branches share `params.depthwise`.
pub fn c2_depthwise<T: Element>(
    x: &Tensor<T>,
    params: &C2ConvParams<T>,
    layout: &ChunkLayout,
) -> Result<Tensor<T>> {
    if layout.chunk_size() != params.chunk_size {
        return Err(Error::Config(format!(
            "layout chunk size {} does not match conv chunk size {}",
            layout.chunk_size(),
            params.chunk_size
        )));
    }
    let causal = depthwise_conv_masked(
        x,
        &params.depthwise,
        &params.causal_taps(),
        PadPolicy::ZeroGlobal,
    )?;
    let all_taps = vec![true; params.kernel_size];
    let chunked = depthwise_conv_masked(
        x,
        &params.depthwise,
        &all_taps,
        PadPolicy::ZeroPerChunk(params.chunk_size),
    )?;
    let lambda = T::of(params.lambda);
    let one_minus = T::of(1.0 - params.lambda);
    let data = chunked
        .data()
        .iter()
        .zip(causal.data())
        .map(|(&ch, &ca)| lambda * ch + one_minus * ca)
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Full convolution sub-block: pointwise expansion, GLU, blended depthwise,
/// layer norm, swish, pointwise projection.
pub fn conv_block<T: Element>(
    x: &Tensor<T>,
    params: &C2ConvParams<T>,
    layout: &ChunkLayout,
) -> Result<Tensor<T>> {
    let expanded = matmul(x, &params.pw_in)?;
    let gated = glu(&expanded)?;
    let mixed = c2_depthwise(&gated, params, layout)?;
    let normed = layer_norm(&mixed, &params.norm_gain, &params.norm_bias, T::of(params.eps))?;
    matmul(&swish(&normed), &params.pw_out)
}
