use super::modulation::{build_modulation_field, predict_modulation, ModulationField, ModulationParams};
use super::scc::{scc_attention_forward, SccParams};
use super::{ModulationStrategy, SccVariant, UpsampleMode};
use crate::error::{shape_err, Result};
use crate::params::{ConvInit, Init, ParamLayout, ParamReader};
use crate::restormer::NORM_EPS;
use crate::tensor::{add, conv2d, gelu, mul, rms_norm, Conv2dParams, PadMode, Tensor4};

/// FFN hidden width as a multiple of the block width.
pub const FFN_EXPANSION: usize = 2;

/// Pointwise feed-forward network: `fc2(gelu(fc1(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub fc1: Conv2dParams,
    pub fc2: Conv2dParams,
}

impl FfnParams {
    pub fn declare(l: &mut ParamLayout, prefix: &str, width: usize) {
        let hidden = width * FFN_EXPANSION;
        l.conv(&format!("{prefix}.fc1"), hidden, width, 1, ConvInit::Uniform);
        l.conv(&format!("{prefix}.fc2"), width, hidden, 1, ConvInit::Uniform);
    }

    pub fn read(r: &mut ParamReader, prefix: &str, width: usize) -> Result<Self> {
        let hidden = width * FFN_EXPANSION;
        Ok(Self {
            fc1: r.conv(&format!("{prefix}.fc1"), hidden, width, 1, 1, PadMode::Zeros)?,
            fc2: r.conv(&format!("{prefix}.fc2"), width, hidden, 1, 1, PadMode::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        conv2d(&gelu(&conv2d(x, &self.fc1)?), &self.fc2)
    }
}

/// Shape and variant choices for one prompted pixel block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DppbConfig {
    pub width: usize,
    /// Channels of the concatenated token grids, `L * D_d`.
    pub token_channels: usize,
    pub patch: usize,
    pub d_attn: usize,
    pub strategy: ModulationStrategy,
    pub upsample: UpsampleMode,
    pub scc: SccVariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppbParams {
    pub modulation: ModulationParams,
    pub attn_norm: Vec<f32>,
    pub scc: SccParams,
    pub ffn_norm: Vec<f32>,
    pub ffn: FfnParams,
}

impl DppbParams {
    pub fn declare(l: &mut ParamLayout, prefix: &str, c: &DppbConfig) {
        ModulationParams::declare(l, &format!("{prefix}.mod"), c.token_channels, c.width, c.strategy);
        l.tensor(format!("{prefix}.attn_norm.scale"), vec![c.width], Init::Ones);
        SccParams::declare(l, &format!("{prefix}.scc"), c.scc, c.width, c.patch, c.d_attn);
        l.tensor(format!("{prefix}.ffn_norm.scale"), vec![c.width], Init::Ones);
        FfnParams::declare(l, &format!("{prefix}.ffn"), c.width);
    }

    pub fn read(r: &mut ParamReader, prefix: &str, c: &DppbConfig) -> Result<Self> {
        Ok(Self {
            modulation: ModulationParams::read(
                r,
                &format!("{prefix}.mod"),
                c.token_channels,
                c.width,
                c.strategy,
                c.upsample,
                c.patch,
            )?,
            attn_norm: r.vector(&format!("{prefix}.attn_norm.scale"), c.width)?,
            scc: SccParams::read(r, &format!("{prefix}.scc"), c.scc, c.width, c.patch, c.d_attn)?,
            ffn_norm: r.vector(&format!("{prefix}.ffn_norm.scale"), c.width)?,
            ffn: FfnParams::read(r, &format!("{prefix}.ffn"), c.width)?,
        })
    }

    pub fn width(&self) -> usize {
        self.attn_norm.len()
    }
}

/// `alpha * u + beta`, elementwise.
pub fn modulate(u: &Tensor4, alpha: &Tensor4, beta: &Tensor4) -> Result<Tensor4> {
    add(&mul(alpha, u)?, beta)
}

/// Two gated residual updates, attention then FFN, each on a modulated RMS-normalized input.
pub fn dppb_forward(x: &Tensor4, field: &ModulationField, p: &DppbParams) -> Result<Tensor4> {
    if field.shape() != x.shape() {
        return Err(shape_err!(
            "modulation field {} does not match features {}",
            field.shape(),
            x.shape()
        ));
    }
    let u = modulate(&rms_norm(x, &p.attn_norm, NORM_EPS)?, &field.alpha_a, &field.beta_a)?;
    let x = add(x, &mul(&field.gamma_a, &scc_attention_forward(&u, &p.scc)?)?)?;
    let u = modulate(&rms_norm(&x, &p.ffn_norm, NORM_EPS)?, &field.alpha_f, &field.beta_f)?;
    add(&x, &mul(&field.gamma_f, &p.ffn.forward(&u)?)?)
}

/// Predicts this block's field from the token grids and applies the block.
pub fn dppb_forward_prompted(x: &Tensor4, tokens: &Tensor4, p: &DppbParams) -> Result<Tensor4> {
    let m = predict_modulation(tokens, &p.modulation)?;
    let field = build_modulation_field(&m, x.height(), x.width(), &p.modulation.field)?;
    dppb_forward(x, &field, p)
}
