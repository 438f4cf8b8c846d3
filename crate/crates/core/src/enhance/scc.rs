use super::SccVariant;
use crate::error::{shape_err, Result};
use crate::params::{ConvInit, ParamLayout, ParamReader};
use crate::restormer::{mdta_forward, MdtaParams};
use crate::tensor::{conv2d, pixel_shuffle, pixel_unshuffle, Conv2dParams, PadMode, Tensor4};

/// Head count of the attention inside every SCC variant.
pub const SCC_HEADS: usize = 4;

/// Attention branch of a pixel block, with or without compaction.
#[derive(Debug, Clone, PartialEq)]
pub enum SccParams {
    Full {
        patch: usize,
        compress: Conv2dParams,
        mdta: MdtaParams,
        expand: Conv2dParams,
    },
    ChannelOnly {
        compress: Conv2dParams,
        mdta: MdtaParams,
        expand: Conv2dParams,
    },
    SpatialOnly {
        patch: usize,
        mdta: MdtaParams,
    },
    None {
        mdta: MdtaParams,
    },
}

/// Width at which the inner attention runs.
pub(crate) fn inner_width(variant: SccVariant, width: usize, patch: usize, d_attn: usize) -> usize {
    match variant {
        SccVariant::Full | SccVariant::ChannelOnly => d_attn,
        SccVariant::SpatialOnly => width * patch * patch,
        SccVariant::None => width,
    }
}

impl SccParams {
    pub fn declare(l: &mut ParamLayout, prefix: &str, variant: SccVariant, width: usize, patch: usize, d_attn: usize) {
        let inner = inner_width(variant, width, patch, d_attn);
        let outer = match variant {
            SccVariant::Full => width * patch * patch,
            _ => width,
        };
        if matches!(variant, SccVariant::Full | SccVariant::ChannelOnly) {
            l.conv(&format!("{prefix}.compress"), inner, outer, 1, ConvInit::Uniform);
        }
        MdtaParams::declare(l, &format!("{prefix}.mdta"), inner, SCC_HEADS);
        if matches!(variant, SccVariant::Full | SccVariant::ChannelOnly) {
            l.conv(&format!("{prefix}.expand"), outer, inner, 1, ConvInit::Uniform);
        }
    }

    pub fn read(
        r: &mut ParamReader,
        prefix: &str,
        variant: SccVariant,
        width: usize,
        patch: usize,
        d_attn: usize,
    ) -> Result<Self> {
        let inner = inner_width(variant, width, patch, d_attn);
        let folded = width * patch * patch;
        let mdta = |r: &mut ParamReader| MdtaParams::read(r, &format!("{prefix}.mdta"), inner, SCC_HEADS);
        let pw = |r: &mut ParamReader, name: &str, c_out, c_in| {
            r.conv(&format!("{prefix}.{name}"), c_out, c_in, 1, 1, PadMode::Zeros)
        };
        Ok(match variant {
            SccVariant::Full => {
                let compress = pw(r, "compress", inner, folded)?;
                let mdta = mdta(r)?;
                let expand = pw(r, "expand", folded, inner)?;
                Self::Full {
                    patch,
                    compress,
                    mdta,
                    expand,
                }
            }
            SccVariant::ChannelOnly => {
                let compress = pw(r, "compress", inner, width)?;
                let mdta = mdta(r)?;
                let expand = pw(r, "expand", width, inner)?;
                Self::ChannelOnly { compress, mdta, expand }
            }
            SccVariant::SpatialOnly => Self::SpatialOnly { patch, mdta: mdta(r)? },
            SccVariant::None => Self::None { mdta: mdta(r)? },
        })
    }

    pub fn variant(&self) -> SccVariant {
        match self {
            Self::Full { .. } => SccVariant::Full,
            Self::ChannelOnly { .. } => SccVariant::ChannelOnly,
            Self::SpatialOnly { .. } => SccVariant::SpatialOnly,
            Self::None { .. } => SccVariant::None,
        }
    }

    pub fn mdta(&self) -> &MdtaParams {
        match self {
            Self::Full { mdta, .. }
            | Self::ChannelOnly { mdta, .. }
            | Self::SpatialOnly { mdta, .. }
            | Self::None { mdta } => mdta,
        }
    }
}

fn check_patch(x: &Tensor4, patch: usize) -> Result<()> {
    if !x.height().is_multiple_of(patch) || !x.width().is_multiple_of(patch) {
        return Err(shape_err!(
            "SCC patch {patch} does not divide feature map {}x{}",
            x.height(),
            x.width()
        ));
    }
    Ok(())
}

/// Runs the attention branch; the output always has the shape of `x`.
pub fn scc_attention_forward(x: &Tensor4, p: &SccParams) -> Result<Tensor4> {
    match p {
        SccParams::Full {
            patch,
            compress,
            mdta,
            expand,
        } => {
            check_patch(x, *patch)?;
            let folded = pixel_unshuffle(x, *patch)?;
            let z = mdta_forward(&conv2d(&folded, compress)?, mdta)?;
            pixel_shuffle(&conv2d(&z, expand)?, *patch)
        }
        SccParams::ChannelOnly { compress, mdta, expand } => {
            let z = mdta_forward(&conv2d(x, compress)?, mdta)?;
            conv2d(&z, expand)
        }
        SccParams::SpatialOnly { patch, mdta } => {
            check_patch(x, *patch)?;
            pixel_shuffle(&mdta_forward(&pixel_unshuffle(x, *patch)?, mdta)?, *patch)
        }
        SccParams::None { mdta } => mdta_forward(x, mdta),
    }
}
