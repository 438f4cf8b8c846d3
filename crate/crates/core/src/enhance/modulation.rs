//! Token-grid modulation: a per-token MLP predicts scale/shift/gate maps,
//! which are then spread over pixels according to a strategy.

use super::{ModulationStrategy, UpsampleMode};
use crate::error::{shape_err, Result};
use crate::params::{ConvInit, ParamLayout, ParamReader};
use crate::tensor::{bicubic_resize, bilinear_resize, conv2d, gelu, Conv2dParams, PadMode, Shape4, Tensor4};

/// Number of per-pixel maps the field is split into.
pub const MODULATION_SLICES: usize = 6;
/// Hidden width of the modulation MLP as a multiple of the block width.
const MLP_EXPANSION: usize = 4;

/// How a `6C` token-resolution map becomes a full-resolution field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    pub strategy: ModulationStrategy,
    pub upsample: UpsampleMode,
    /// Pixels per token along each axis.
    pub patch: usize,
    /// Depthwise 3x3 smoothing of the upsampled field; only the continuous strategy has one.
    pub smoother: Option<Conv2dParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulationParams {
    pub fc1: Conv2dParams,
    pub fc2: Conv2dParams,
    pub field: FieldParams,
}

impl ModulationParams {
    pub fn declare(
        l: &mut ParamLayout,
        prefix: &str,
        token_channels: usize,
        width: usize,
        strategy: ModulationStrategy,
    ) {
        let hidden = width * MLP_EXPANSION;
        let out = width * MODULATION_SLICES;
        l.conv(&format!("{prefix}.mlp.fc1"), hidden, token_channels, 1, ConvInit::Uniform);
        l.conv(&format!("{prefix}.mlp.fc2"), out, hidden, 1, ConvInit::Zero);
        if strategy == ModulationStrategy::Continuous {
            l.conv(&format!("{prefix}.smoother"), out, 1, 3, ConvInit::CenterTap);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn read(
        r: &mut ParamReader,
        prefix: &str,
        token_channels: usize,
        width: usize,
        strategy: ModulationStrategy,
        upsample: UpsampleMode,
        patch: usize,
    ) -> Result<Self> {
        let hidden = width * MLP_EXPANSION;
        let out = width * MODULATION_SLICES;
        let fc1 = r.conv(&format!("{prefix}.mlp.fc1"), hidden, token_channels, 1, 1, PadMode::Zeros)?;
        let fc2 = r.conv(&format!("{prefix}.mlp.fc2"), out, hidden, 1, 1, PadMode::Zeros)?;
        let smoother = match strategy {
            ModulationStrategy::Continuous => Some(r.conv(
                &format!("{prefix}.smoother"),
                out,
                1,
                3,
                out,
                PadMode::Reflect,
            )?),
            _ => None,
        };
        Ok(Self {
            fc1,
            fc2,
            field: FieldParams {
                strategy,
                upsample,
                patch,
                smoother,
            },
        })
    }

    /// Block width this MLP modulates.
    pub fn width(&self) -> usize {
        self.fc2.out_channels() / MODULATION_SLICES
    }
}

/// Per-token MLP: `fc2(gelu(fc1(tokens)))`, giving `6C` channels on the token grid.
pub fn predict_modulation(tokens: &Tensor4, p: &ModulationParams) -> Result<Tensor4> {
    if tokens.channels() != p.fc1.in_channels() {
        return Err(shape_err!(
            "modulation MLP expects {} token channels, got {}",
            p.fc1.in_channels(),
            tokens.channels()
        ));
    }
    conv2d(&gelu(&conv2d(tokens, &p.fc1)?), &p.fc2)
}

fn global_broadcast(m: &Tensor4, out_h: usize, out_w: usize) -> Tensor4 {
    let s = m.shape();
    let mut out = Tensor4::zeros(Shape4::new(s.batch, s.channels, out_h, out_w));
    for b in 0..s.batch {
        for c in 0..s.channels {
            let plane = m.plane(b, c);
            let mean = (plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64) as f32;
            out.plane_mut(b, c).fill(mean);
        }
    }
    out
}

fn replicate(m: &Tensor4, patch: usize) -> Tensor4 {
    let s = m.shape();
    let (oh, ow) = (s.height * patch, s.width * patch);
    let mut out = Tensor4::zeros(Shape4::new(s.batch, s.channels, oh, ow));
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = m.plane(b, c);
            let dst = out.plane_mut(b, c);
            for y in 0..oh {
                let row = &src[(y / patch) * s.width..(y / patch + 1) * s.width];
                for (x, v) in dst[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                    *v = row[x / patch];
                }
            }
        }
    }
    out
}

/// Spreads a token-resolution map `m` to `(out_h, out_w)` without splitting it.
pub fn build_field_tensor(m: &Tensor4, out_h: usize, out_w: usize, p: &FieldParams) -> Result<Tensor4> {
    if p.strategy != ModulationStrategy::Global
        && (out_h != m.height() * p.patch || out_w != m.width() * p.patch)
    {
        return Err(shape_err!(
            "{} field of {}x{} tokens at patch {} cannot cover {out_h}x{out_w}",
            p.strategy,
            m.height(),
            m.width(),
            p.patch
        ));
    }
    match p.strategy {
        ModulationStrategy::Global => Ok(global_broadcast(m, out_h, out_w)),
        ModulationStrategy::Patchwise => Ok(replicate(m, p.patch)),
        ModulationStrategy::Continuous => {
            let up = match p.upsample {
                UpsampleMode::Bilinear => bilinear_resize(m, out_h, out_w)?,
                UpsampleMode::Bicubic => bicubic_resize(m, out_h, out_w)?,
            };
            match &p.smoother {
                Some(s) => conv2d(&up, s),
                None => Ok(up),
            }
        }
    }
}

/// Scale, shift and gate maps for the attention (`_a`) and FFN (`_f`) updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationField {
    pub alpha_a: Tensor4,
    pub beta_a: Tensor4,
    pub gamma_a: Tensor4,
    pub alpha_f: Tensor4,
    pub beta_f: Tensor4,
    pub gamma_f: Tensor4,
}

impl ModulationField {
    /// Splits a `6C`-channel field in slice order `alpha_a, beta_a, gamma_a, alpha_f, beta_f, gamma_f`.
    pub fn split(field: &Tensor4) -> Result<Self> {
        let mut it = field.split_channels(MODULATION_SLICES)?.into_iter();
        let mut next = || it.next().expect("six slices");
        Ok(Self {
            alpha_a: next(),
            beta_a: next(),
            gamma_a: next(),
            alpha_f: next(),
            beta_f: next(),
            gamma_f: next(),
        })
    }

    /// An all-zero field, under which every block is the identity.
    pub fn zeros(shape: impl Into<Shape4>) -> Self {
        let z = Tensor4::zeros(shape);
        Self {
            alpha_a: z.clone(),
            beta_a: z.clone(),
            gamma_a: z.clone(),
            alpha_f: z.clone(),
            beta_f: z.clone(),
            gamma_f: z,
        }
    }

    pub fn shape(&self) -> Shape4 {
        self.alpha_a.shape()
    }

    pub fn slices(&self) -> [&Tensor4; MODULATION_SLICES] {
        [
            &self.alpha_a,
            &self.beta_a,
            &self.gamma_a,
            &self.alpha_f,
            &self.beta_f,
            &self.gamma_f,
        ]
    }
}

pub fn build_modulation_field(m: &Tensor4, out_h: usize, out_w: usize, p: &FieldParams) -> Result<ModulationField> {
    ModulationField::split(&build_field_tensor(m, out_h, out_w, p)?)
}
