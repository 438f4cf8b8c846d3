//! Channel-domain transformer blocks and the fine-to-coarse denoising stream.
//!
//! Attention here is "transposed": for each head the `d x d` affinity between
//! channels is computed from all pixels, so cost grows linearly with the
//! pixel count instead of quadratically.

use crate::error::{shape_err, Result};
use crate::params::{ConvInit, Init, ParamLayout, ParamReader};
use crate::tensor::{
    add, concat_channels, conv2d, gelu, matmul_batched, mul, pixel_unshuffle, rms_norm,
    softmax_axis, Axis, Conv2dParams, MatrixBatch, PadMode, Tensor4,
};

/// Epsilon of every RMS normalization in the network.
pub const NORM_EPS: f32 = 1e-6;
/// Floor on the L2 norm when normalizing query/key rows.
pub const L2_EPS: f32 = 1e-12;
/// GDFN hidden width as a multiple of the block width.
pub const GDFN_EXPANSION: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MdtaParams {
    /// RMS-norm scale applied to the input, one entry per channel.
    pub norm: Vec<f32>,
    pub q_pw: Conv2dParams,
    pub q_dw: Conv2dParams,
    pub k_pw: Conv2dParams,
    pub k_dw: Conv2dParams,
    pub v_pw: Conv2dParams,
    pub v_dw: Conv2dParams,
    pub out: Conv2dParams,
    /// Per-head divisor of the attention logits; its length is the head count.
    pub temperature: Vec<f32>,
}

impl MdtaParams {
    pub fn width(&self) -> usize {
        self.norm.len()
    }

    pub fn heads(&self) -> usize {
        self.temperature.len()
    }

    fn validate(&self, x: &Tensor4) -> Result<()> {
        let (w, h) = (self.width(), self.heads());
        if x.channels() != w {
            return Err(shape_err!("MDTA of width {w} got {} channels", x.channels()));
        }
        if h == 0 || w % h != 0 {
            return Err(shape_err!("{h} heads do not divide MDTA width {w}"));
        }
        if let Some(t) = self.temperature.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(shape_err!("MDTA temperature must be finite and positive, got {t}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdfnParams {
    pub norm: Vec<f32>,
    pub u1_pw: Conv2dParams,
    pub u1_dw: Conv2dParams,
    pub u2_pw: Conv2dParams,
    pub u2_dw: Conv2dParams,
    pub out: Conv2dParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBlockParams {
    pub mdta: MdtaParams,
    pub gdfn: GdfnParams,
}

impl MdtaParams {
    pub fn declare(l: &mut ParamLayout, prefix: &str, width: usize, heads: usize) {
        l.tensor(format!("{prefix}.norm.scale"), vec![width], Init::Ones);
        for n in ["q", "k", "v"] {
            l.conv(&format!("{prefix}.{n}_pw"), width, width, 1, ConvInit::Uniform);
            l.conv(&format!("{prefix}.{n}_dw"), width, 1, 3, ConvInit::Uniform);
        }
        l.conv(&format!("{prefix}.out"), width, width, 1, ConvInit::Uniform);
        l.tensor(format!("{prefix}.temperature"), vec![heads], Init::Ones);
    }

    pub fn read(r: &mut ParamReader, prefix: &str, width: usize, heads: usize) -> Result<Self> {
        let norm = r.vector(&format!("{prefix}.norm.scale"), width)?;
        let pw = |r: &mut ParamReader, n: &str| r.conv(&format!("{prefix}.{n}"), width, width, 1, 1, PadMode::Zeros);
        let q_pw = pw(r, "q_pw")?;
        let q_dw = r.conv(&format!("{prefix}.q_dw"), width, 1, 3, width, PadMode::Zeros)?;
        let k_pw = pw(r, "k_pw")?;
        let k_dw = r.conv(&format!("{prefix}.k_dw"), width, 1, 3, width, PadMode::Zeros)?;
        let v_pw = pw(r, "v_pw")?;
        let v_dw = r.conv(&format!("{prefix}.v_dw"), width, 1, 3, width, PadMode::Zeros)?;
        let out = pw(r, "out")?;
        let temperature = r.vector(&format!("{prefix}.temperature"), heads)?;
        Ok(Self {
            norm,
            q_pw,
            q_dw,
            k_pw,
            k_dw,
            v_pw,
            v_dw,
            out,
            temperature,
        })
    }
}

impl GdfnParams {
    pub fn declare(l: &mut ParamLayout, prefix: &str, width: usize) {
        let hidden = width * GDFN_EXPANSION;
        l.tensor(format!("{prefix}.norm.scale"), vec![width], Init::Ones);
        for n in ["u1", "u2"] {
            l.conv(&format!("{prefix}.{n}_pw"), hidden, width, 1, ConvInit::Uniform);
            l.conv(&format!("{prefix}.{n}_dw"), hidden, 1, 3, ConvInit::Uniform);
        }
        l.conv(&format!("{prefix}.out"), width, hidden, 1, ConvInit::Uniform);
    }

    pub fn read(r: &mut ParamReader, prefix: &str, width: usize) -> Result<Self> {
        let hidden = width * GDFN_EXPANSION;
        let norm = r.vector(&format!("{prefix}.norm.scale"), width)?;
        let u1_pw = r.conv(&format!("{prefix}.u1_pw"), hidden, width, 1, 1, PadMode::Zeros)?;
        let u1_dw = r.conv(&format!("{prefix}.u1_dw"), hidden, 1, 3, hidden, PadMode::Zeros)?;
        let u2_pw = r.conv(&format!("{prefix}.u2_pw"), hidden, width, 1, 1, PadMode::Zeros)?;
        let u2_dw = r.conv(&format!("{prefix}.u2_dw"), hidden, 1, 3, hidden, PadMode::Zeros)?;
        let out = r.conv(&format!("{prefix}.out"), width, hidden, 1, 1, PadMode::Zeros)?;
        Ok(Self {
            norm,
            u1_pw,
            u1_dw,
            u2_pw,
            u2_dw,
            out,
        })
    }
}

impl TransformerBlockParams {
    pub fn declare(l: &mut ParamLayout, prefix: &str, width: usize, heads: usize) {
        MdtaParams::declare(l, &format!("{prefix}.mdta"), width, heads);
        GdfnParams::declare(l, &format!("{prefix}.gdfn"), width);
    }

    pub fn read(r: &mut ParamReader, prefix: &str, width: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            mdta: MdtaParams::read(r, &format!("{prefix}.mdta"), width, heads)?,
            gdfn: GdfnParams::read(r, &format!("{prefix}.gdfn"), width)?,
        })
    }
}

/// One pyramid level of the denoising stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseScaleParams {
    /// Builds this level's input from the unshuffled finer input (absent at the finest level).
    pub input_proj: Option<Conv2dParams>,
    pub blocks: [TransformerBlockParams; 2],
    /// Fusion projections applied after each block (absent at the finest level).
    pub fuse: Option<[Conv2dParams; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseStreamParams {
    pub scales: Vec<DenoiseScaleParams>,
}

impl DenoiseStreamParams {
    /// Level `s` (0-based) has width `base_channels * 2^s` and `2^s` heads.
    pub fn declare(l: &mut ParamLayout, prefix: &str, base_channels: usize, levels: usize) {
        for s in 0..levels {
            let width = base_channels << s;
            let p = format!("{prefix}.s{}", s + 1);
            if s > 0 {
                l.conv(&format!("{p}.input_proj"), width, 2 * width, 1, ConvInit::Uniform);
            }
            for k in 1..=2 {
                TransformerBlockParams::declare(l, &format!("{p}.block{k}"), width, 1 << s);
                if s > 0 {
                    l.conv(&format!("{p}.fuse{k}"), width, 3 * width, 1, ConvInit::Uniform);
                }
            }
        }
    }

    pub fn read(r: &mut ParamReader, prefix: &str, base_channels: usize, levels: usize) -> Result<Self> {
        let mut scales = Vec::with_capacity(levels);
        for s in 0..levels {
            let width = base_channels << s;
            let p = format!("{prefix}.s{}", s + 1);
            let input_proj = if s > 0 {
                Some(r.conv(&format!("{p}.input_proj"), width, 2 * width, 1, 1, PadMode::Zeros)?)
            } else {
                None
            };
            let mut blocks = Vec::with_capacity(2);
            let mut fuse = Vec::with_capacity(2);
            for k in 1..=2 {
                blocks.push(TransformerBlockParams::read(r, &format!("{p}.block{k}"), width, 1 << s)?);
                if s > 0 {
                    fuse.push(r.conv(&format!("{p}.fuse{k}"), width, 3 * width, 1, 1, PadMode::Zeros)?);
                }
            }
            let blocks: [TransformerBlockParams; 2] = blocks.try_into().expect("two blocks");
            let fuse = fuse.try_into().ok();
            scales.push(DenoiseScaleParams {
                input_proj,
                blocks,
                fuse,
            });
        }
        Ok(Self { scales })
    }
}

fn l2_normalize_rows(m: &mut MatrixBatch) {
    let cols = m.cols;
    for row in m.data.chunks_mut(cols) {
        let mut ss = 0.0f32;
        for v in row.iter() {
            ss += v * v;
        }
        let n = ss.sqrt().max(L2_EPS);
        for v in row.iter_mut() {
            *v /= n;
        }
    }
}

/// Splits a `(B, C, H, W)` tensor into `B * heads` matrices of `d x HW`.
fn head_matrices(t: Tensor4, heads: usize) -> MatrixBatch {
    let s = t.shape();
    let d = s.channels / heads;
    MatrixBatch::new(s.batch * heads, d, s.plane(), t.into_vec()).expect("layout matches")
}

struct Projected {
    q: MatrixBatch,
    k: MatrixBatch,
    v: MatrixBatch,
}

fn project(x: &Tensor4, p: &MdtaParams) -> Result<Projected> {
    p.validate(x)?;
    let y = rms_norm(x, &p.norm, NORM_EPS)?;
    let heads = p.heads();
    let q = conv2d(&conv2d(&y, &p.q_pw)?, &p.q_dw)?;
    let k = conv2d(&conv2d(&y, &p.k_pw)?, &p.k_dw)?;
    let v = conv2d(&conv2d(&y, &p.v_pw)?, &p.v_dw)?;
    Ok(Projected {
        q: head_matrices(q, heads),
        k: head_matrices(k, heads),
        v: head_matrices(v, heads),
    })
}

fn attention_from(q: &mut MatrixBatch, k: &mut MatrixBatch, temperature: &[f32]) -> Result<MatrixBatch> {
    l2_normalize_rows(q);
    l2_normalize_rows(k);
    let mut logits = matmul_batched(q, &k.transpose())?;
    let heads = temperature.len();
    let d = logits.rows;
    for (i, m) in logits.data.chunks_mut(d * d).enumerate() {
        let t = temperature[i % heads];
        m.iter_mut().for_each(|v| *v /= t);
    }
    let as_tensor = Tensor4::from_vec([logits.batch, 1, d, d], logits.data)?;
    let a = softmax_axis(&as_tensor, Axis::Width);
    MatrixBatch::new(logits.batch, d, d, a.into_vec())
}

/// The per-head `d x d` channel attention maps of an MDTA layer, stacked over
/// batch and heads. Row `i` holds the weights output channel `i` assigns to
/// every value channel; each row sums to one.
pub fn mdta_attention_map(x: &Tensor4, p: &MdtaParams) -> Result<MatrixBatch> {
    let Projected { mut q, mut k, .. } = project(x, p)?;
    attention_from(&mut q, &mut k, &p.temperature)
}

/// Multi-Dconv head transposed attention.
///
/// Normalizes, projects Q/K/V with a pointwise then a depthwise 3x3 conv,
/// L2-normalizes Q and K along the pixel axis, forms
/// `softmax(Q K^T / temperature)` per head and applies it to V before the
/// output projection.
pub fn mdta_forward(x: &Tensor4, p: &MdtaParams) -> Result<Tensor4> {
    let Projected { mut q, mut k, v } = project(x, p)?;
    let a = attention_from(&mut q, &mut k, &p.temperature)?;
    let mixed = matmul_batched(&a, &v)?;
    let attended = Tensor4::from_vec(x.shape(), mixed.data)?;
    conv2d(&attended, &p.out)
}

/// Gated-Dconv feed-forward: `out(gelu(U1) * U2)` with two pointwise+depthwise branches.
pub fn gdfn_forward(x: &Tensor4, p: &GdfnParams) -> Result<Tensor4> {
    if x.channels() != p.norm.len() {
        return Err(shape_err!("GDFN of width {} got {} channels", p.norm.len(), x.channels()));
    }
    let y = rms_norm(x, &p.norm, NORM_EPS)?;
    let u1 = conv2d(&conv2d(&y, &p.u1_pw)?, &p.u1_dw)?;
    let u2 = conv2d(&conv2d(&y, &p.u2_pw)?, &p.u2_dw)?;
    conv2d(&mul(&gelu(&u1), &u2)?, &p.out)
}

/// `x + MDTA(x)` followed by `x + GDFN(x)`.
pub fn transformer_block_forward(x: &Tensor4, p: &TransformerBlockParams) -> Result<Tensor4> {
    let x = add(x, &mdta_forward(x, &p.mdta)?)?;
    add(&x, &gdfn_forward(&x, &p.gdfn)?)
}

/// Runs the denoising pyramid on the stem features.
///
/// Level `s > 0` takes the unshuffled input of level `s - 1` through its input
/// projection. After block `k` at that level, the block output is concatenated
/// with the unshuffled output of block `k` one level finer and projected back
/// to the level width. Returns the final features of every level, finest first.
pub fn denoise_stream_forward(f0: &Tensor4, p: &DenoiseStreamParams) -> Result<Vec<Tensor4>> {
    let levels = p.scales.len();
    let factor = 1usize << levels.saturating_sub(1);
    if !f0.height().is_multiple_of(factor) || !f0.width().is_multiple_of(factor) {
        return Err(shape_err!(
            "denoise stream with {levels} levels needs dims divisible by {factor}, got {}x{}",
            f0.height(),
            f0.width()
        ));
    }

    let mut outputs = Vec::with_capacity(levels);
    let mut level_input = f0.clone();
    let mut finer_blocks: Option<Vec<Tensor4>> = None;
    for (s, level) in p.scales.iter().enumerate() {
        if s > 0 {
            let proj = level
                .input_proj
                .as_ref()
                .ok_or_else(|| shape_err!("denoise level {} lacks an input projection", s + 1))?;
            level_input = conv2d(&pixel_unshuffle(&level_input, 2)?, proj)?;
        }
        let mut cur = level_input.clone();
        let mut block_outputs = Vec::with_capacity(2);
        for (k, block) in level.blocks.iter().enumerate() {
            cur = transformer_block_forward(&cur, block)?;
            if let Some(finer) = &finer_blocks {
                let fuse = level
                    .fuse
                    .as_ref()
                    .ok_or_else(|| shape_err!("denoise level {} lacks fusion projections", s + 1))?;
                let down = pixel_unshuffle(&finer[k], 2)?;
                cur = conv2d(&concat_channels(&[&cur, &down])?, &fuse[k])?;
            }
            block_outputs.push(cur.clone());
        }
        finer_blocks = Some(block_outputs);
        outputs.push(cur);
    }
    Ok(outputs)
}
