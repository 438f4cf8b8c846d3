//! Semantic token grids that condition the pixel blocks.
//!
//! A [`PromptSet`] holds one `(B, D, H/16, W/16)` grid per selected encoder
//! layer. Grids come from a PIXT file written by an external encoder, or from
//! [`synth_prompts`], a deterministic stand-in that needs no pretrained model.
//!
//! # PIXT layout (little-endian)
//!
//! ```text
//! "PIXT" | u32 version = 1 | u32 L | u32 D | u32 Hp | u32 Wp | u32 B
//! u32 layer[L]                       (strictly ascending)
//! f32 grid[L][B][D][Hp][Wp]
//! ```

use std::path::Path;

use crate::binio::{put_f32s, put_u32, to_u32, ByteReader};
use crate::error::{shape_err, PixieError, Result};
use crate::rng::SplitMix64;
use crate::tensor::{area_resize, concat_channels, Shape4, Tensor4};

pub const PIXT_MAGIC: &[u8; 4] = b"PIXT";
pub const PIXT_VERSION: u32 = 1;
/// Side of the square image patch summarized by one token.
pub const TOKEN_PATCH: usize = 16;
pub const DEFAULT_LAYERS: [u32; 4] = [2, 5, 8, 11];
pub const DEFAULT_TOKEN_DIM: usize = 384;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    layers: Vec<u32>,
    grids: Vec<Tensor4>,
}

impl PromptSet {
    /// Validates that there is one grid per layer, all grids share a shape,
    /// layers are strictly ascending and every value is finite.
    pub fn new(layers: Vec<u32>, grids: Vec<Tensor4>) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape_err!("a prompt set needs at least one layer"));
        }
        if layers.len() != grids.len() {
            return Err(shape_err!("{} layer indices for {} grids", layers.len(), grids.len()));
        }
        if layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PixieError::Config(format!(
                "prompt layers must be strictly ascending, got {layers:?}"
            )));
        }
        let shape = grids[0].shape();
        if let Some(g) = grids.iter().find(|g| g.shape() != shape) {
            return Err(shape_err!("prompt grids disagree: {} vs {shape}", g.shape()));
        }
        if shape.channels == 0 {
            return Err(shape_err!("prompt token dimension must be positive"));
        }
        if !grids.iter().all(Tensor4::is_finite) {
            return Err(PixieError::Config("prompt grids contain non-finite values".into()));
        }
        Ok(Self { layers, grids })
    }

    pub fn layers(&self) -> &[u32] {
        &self.layers
    }

    pub fn grids(&self) -> &[Tensor4] {
        &self.grids
    }

    /// Shape shared by every grid: `(B, D, Hp, Wp)`.
    pub fn grid_shape(&self) -> Shape4 {
        self.grids[0].shape()
    }

    pub fn token_dim(&self) -> usize {
        self.grid_shape().channels
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = self.grid_shape();
        let mut out = Vec::with_capacity(32 + 4 * self.layers.len() + 4 * s.numel() * self.layers.len());
        out.extend_from_slice(PIXT_MAGIC);
        put_u32(&mut out, PIXT_VERSION);
        put_u32(&mut out, to_u32(self.layers.len(), "layer count")?);
        for v in [s.channels, s.height, s.width, s.batch] {
            put_u32(&mut out, to_u32(v, "grid dimension")?);
        }
        for &l in &self.layers {
            put_u32(&mut out, l);
        }
        for g in &self.grids {
            put_f32s(&mut out, g.data());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "PIXT prompt file");
        r.expect_magic(PIXT_MAGIC)?;
        let version = r.u32()?;
        if version != PIXT_VERSION {
            return Err(PixieError::Format(format!("unsupported PIXT version {version}")));
        }
        let count = r.u32()? as usize;
        let d = r.u32()? as usize;
        let hp = r.u32()? as usize;
        let wp = r.u32()? as usize;
        let b = r.u32()? as usize;
        if count == 0 || d == 0 || hp == 0 || wp == 0 || b == 0 {
            return Err(shape_err!(
                "PIXT header has a zero dimension (L={count}, D={d}, Hp={hp}, Wp={wp}, B={b})"
            ));
        }
        let layers = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let shape = Shape4::new(b, d, hp, wp);
        let mut grids = Vec::with_capacity(count);
        for _ in 0..count {
            grids.push(Tensor4::from_vec(shape, r.f32s(shape.numel())?)?);
        }
        r.finish()?;
        Self::new(layers, grids).map_err(|e| match e {
            PixieError::Config(m) => PixieError::Format(m),
            other => other,
        })
    }
}

pub fn save_prompts(prompts: &PromptSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, prompts.to_bytes()?)?;
    Ok(())
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<PromptSet> {
    PromptSet::from_bytes(&std::fs::read(path)?)
}

/// Settings of the synthetic token generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPromptConfig {
    pub seed: u64,
    pub token_dim: usize,
    pub layers: Vec<u32>,
}

impl Default for SyntheticPromptConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            token_dim: DEFAULT_TOKEN_DIM,
            layers: DEFAULT_LAYERS.to_vec(),
        }
    }
}

/// Per-patch statistics of every image channel: mean, population standard
/// deviation, mean absolute horizontal step and mean absolute vertical step.
fn patch_descriptor(image: &Tensor4, b: usize, py: usize, px: usize) -> Vec<f64> {
    let p = TOKEN_PATCH;
    let mut desc = Vec::with_capacity(4 * image.channels());
    for c in 0..image.channels() {
        let at = |y: usize, x: usize| image.get(b, c, py * p + y, px * p + x) as f64;
        let n = (p * p) as f64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for y in 0..p {
            for x in 0..p {
                let v = at(y, x);
                sum += v;
                sq += v * v;
                if x + 1 < p {
                    gx += (at(y, x + 1) - v).abs();
                }
                if y + 1 < p {
                    gy += (at(y + 1, x) - v).abs();
                }
            }
        }
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(0.0);
        let pairs = (p * (p - 1)) as f64;
        desc.extend([mean, var.sqrt(), gx / pairs, gy / pairs]);
    }
    desc
}

/// Deterministic token grids derived from image statistics.
///
/// Each 16x16 patch is summarized by [`patch_descriptor`] and projected to
/// `token_dim` values by a random +-1 matrix drawn from a SplitMix64 stream
/// keyed by `(seed, layer)`, scaled by `1 / sqrt(descriptor length)`.
pub fn synth_prompts(image: &Tensor4, cfg: &SyntheticPromptConfig) -> Result<PromptSet> {
    let s = image.shape();
    if !s.height.is_multiple_of(TOKEN_PATCH) || !s.width.is_multiple_of(TOKEN_PATCH) || s.height == 0 || s.width == 0 {
        return Err(shape_err!(
            "synthetic prompts need image dims divisible by {TOKEN_PATCH}, got {}x{}",
            s.height,
            s.width
        ));
    }
    if cfg.token_dim == 0 {
        return Err(PixieError::Config("token_dim must be at least 1".into()));
    }
    let (hp, wp) = (s.height / TOKEN_PATCH, s.width / TOKEN_PATCH);
    let features = 4 * s.channels;
    let norm = 1.0 / (features.max(1) as f64).sqrt();

    let mut descriptors = Vec::with_capacity(s.batch * hp * wp);
    for b in 0..s.batch {
        for py in 0..hp {
            for px in 0..wp {
                descriptors.push(patch_descriptor(image, b, py, px));
            }
        }
    }

    let mut grids = Vec::with_capacity(cfg.layers.len());
    for &layer in &cfg.layers {
        let mut rng = SplitMix64::for_index(cfg.seed, layer as u64);
        let signs: Vec<f32> = (0..cfg.token_dim * features).map(|_| rng.sign()).collect();
        let grid = Tensor4::from_fn([s.batch, cfg.token_dim, hp, wp], |b, d, y, x| {
            let desc = &descriptors[(b * hp + y) * wp + x];
            let row = &signs[d * features..(d + 1) * features];
            let dot: f64 = row.iter().zip(desc).map(|(&s, &v)| s as f64 * v).sum();
            (dot * norm) as f32
        });
        grids.push(grid);
    }
    PromptSet::new(cfg.layers.clone(), grids)
}

/// Area-downsamples every grid by `2^(scale - 1)`; `scale` is 1-based.
pub fn resize_prompts_for_scale(prompts: &PromptSet, scale: usize) -> Result<PromptSet> {
    if scale == 0 {
        return Err(shape_err!("scale index is 1-based, got 0"));
    }
    let factor = 1usize << (scale - 1);
    let grids = prompts
        .grids
        .iter()
        .map(|g| area_resize(g, factor))
        .collect::<Result<Vec<_>>>()?;
    Ok(PromptSet {
        layers: prompts.layers.clone(),
        grids,
    })
}

/// Stacks all grids along channels in layer order: `(B, L * D, Hp, Wp)`.
pub fn concat_prompt_layers(prompts: &PromptSet) -> Result<Tensor4> {
    let refs: Vec<&Tensor4> = prompts.grids.iter().collect();
    concat_channels(&refs)
}
