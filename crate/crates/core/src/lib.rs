//! Streaming chunk-wise encoder building blocks.
//!
//! The crate implements a Conformer-style encoder that consumes sequences in
//! fixed-size chunks: chunk-local multi-head attention, a sampled-chunk
//! re-partition that gives chunk-local attention long-range context at linear
//! cost, a parameter-shared causal/chunk-local depthwise convolution blended
//! by a scalar weight, and a chunk-by-chunk streaming engine with a recompute
//! reference mode and a cached incremental mode.
//!
//! Everything is deterministic: seeded initialization, fixed reduction
//! orders, and shared row kernels between the offline and streaming paths.

pub mod attention;
pub mod conv;
pub mod encoder;
pub mod error;
pub mod fit;
pub mod layout;
pub mod masks;
pub mod probe;
pub mod stream;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
