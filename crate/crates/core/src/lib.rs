//! Pixel-space low-light image enhancement.
//!
//! The network denoises a three-level feature pyramid with channel-attention
//! transformer blocks, embeds each level with multi-receptive-field
//! convolutions, and refines it with blocks whose normalization is modulated
//! per pixel by a field predicted from semantic token grids. The enhanced
//! image is the input plus a predicted residual.
//!
//! Modules, bottom up:
//!
//! - [`tensor`]: NCHW tensors and deterministic kernels.
//! - [`restormer`]: transposed channel attention, gated feed-forward, and the
//!   cross-scale denoising stream.
//! - [`prompt`]: semantic token grids, their file format, and a synthetic
//!   generator.
//! - [`enhance`]: pixel embedding, compacted attention, modulation fields and
//!   the prompted pixel block.
//! - [`pipeline`]: configuration, weights, the full forward pass, and
//!   parameter/FLOP accounting.
//! - [`metrics`]: PSNR, SSIM and the seam-energy diagnostic.
//! - [`pnm`]: binary PPM/PGM codec.

mod binio;
pub mod enhance;
pub mod error;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod pnm;
pub mod prompt;
pub mod restormer;
pub mod rng;
pub mod tensor;

pub use error::{PixieError, Result};
pub use tensor::{Shape4, Tensor4};
