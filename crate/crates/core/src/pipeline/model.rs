use super::complexity::count_params;
use super::config::PipelineConfig;
use crate::enhance::{dppb_forward_prompted, mrpe_forward, DppbConfig, DppbParams, MrpeParams};
use crate::error::{shape_err, PixieError, Result};
use crate::params::{ConvInit, ParamLayout, ParamReader, WeightStore};
use crate::prompt::{concat_prompt_layers, resize_prompts_for_scale, PromptSet};
use crate::restormer::{denoise_stream_forward, DenoiseStreamParams};
use crate::tensor::{add, concat_channels, conv2d, pixel_shuffle, Conv2dParams, PadMode, Tensor4};

/// Largest parameter count `init_weights` will materialize (2 GiB of f32).
///
/// The spatial-only attention variant runs pointwise convolutions at width
/// `C * P^2`, which passes this bound for all but the smallest configs.
pub const MAX_INIT_PARAMS: u64 = 1 << 29;

/// Pixel refinement at one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelParams {
    pub mrpe: MrpeParams,
    pub blocks: Vec<DppbParams>,
}

/// The residual head: two 3x3 convs from the fused pyramid to RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub conv1: Conv2dParams,
    pub conv2: Conv2dParams,
}

/// A fully assembled network.
#[derive(Debug, Clone, PartialEq)]
pub struct Pixie {
    cfg: PipelineConfig,
    pub stem: Conv2dParams,
    pub denoise: DenoiseStreamParams,
    pub levels: Vec<LevelParams>,
    pub fusion: FusionParams,
}

/// Intermediate tensors of one forward pass.
#[derive(Debug, Clone)]
pub struct PipelineTrace {
    pub stem: Tensor4,
    /// Denoising stream output per level, finest first.
    pub denoised: Vec<Tensor4>,
    /// Pixel-refined features per level, finest first.
    pub refined: Vec<Tensor4>,
    pub residual: Tensor4,
    pub output: Tensor4,
}

fn dppb_config(cfg: &PipelineConfig, s: usize) -> DppbConfig {
    DppbConfig {
        width: cfg.width(s),
        token_channels: cfg.token_channels(),
        patch: cfg.patch,
        d_attn: cfg.d_attn,
        strategy: cfg.strategy,
        upsample: cfg.upsample,
        scc: cfg.scc_variant,
    }
}

/// Declares every tensor of the network in definition order.
pub fn param_layout(cfg: &PipelineConfig) -> Result<ParamLayout> {
    cfg.validate()?;
    let c = cfg.base_channels;
    let mut l = ParamLayout::new();
    l.conv("stem", c, 3, 3, ConvInit::Uniform);
    DenoiseStreamParams::declare(&mut l, "denoise", c, cfg.scales);
    for s in 0..cfg.scales {
        let p = format!("pixel.s{}", s + 1);
        MrpeParams::declare(&mut l, &format!("{p}.mrpe"), cfg.width(s), cfg.mrpe_allocation)?;
        let dc = dppb_config(cfg, s);
        for n in 1..=cfg.dppb_per_scale {
            DppbParams::declare(&mut l, &format!("{p}.dppb{n}"), &dc);
        }
    }
    l.conv("fusion.conv1", c, cfg.fusion_width(), 3, ConvInit::Uniform);
    l.conv("fusion.conv2", 3, c, 3, ConvInit::Zero);
    Ok(l)
}

/// Seeded initialization; see [`ParamLayout::materialize`].
pub fn init_weights(cfg: &PipelineConfig) -> Result<WeightStore> {
    let total = count_params(cfg)?.total();
    if total > MAX_INIT_PARAMS {
        return Err(PixieError::Config(format!(
            "configuration has {total} parameters, more than the {MAX_INIT_PARAMS} this build will materialize \
             (the spatial_only variant grows with C * P^2; use a smaller base_channels or dppb_per_scale)"
        )));
    }
    Ok(param_layout(cfg)?.materialize(cfg.seed))
}

impl Pixie {
    /// Builds the network from a store, checking every tensor's dims and
    /// rejecting tensors the configuration does not use.
    pub fn from_store(cfg: &PipelineConfig, store: WeightStore) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.base_channels;
        let mut r = ParamReader::new(store);
        let stem = r.conv("stem", c, 3, 3, 1, PadMode::Reflect)?;
        let denoise = DenoiseStreamParams::read(&mut r, "denoise", c, cfg.scales)?;
        let mut levels = Vec::with_capacity(cfg.scales);
        for s in 0..cfg.scales {
            let p = format!("pixel.s{}", s + 1);
            let mrpe = MrpeParams::read(&mut r, &format!("{p}.mrpe"), cfg.width(s), cfg.mrpe_allocation)?;
            let dc = dppb_config(cfg, s);
            let blocks = (1..=cfg.dppb_per_scale)
                .map(|n| DppbParams::read(&mut r, &format!("{p}.dppb{n}"), &dc))
                .collect::<Result<Vec<_>>>()?;
            levels.push(LevelParams { mrpe, blocks });
        }
        let fusion = FusionParams {
            conv1: r.conv("fusion.conv1", c, cfg.fusion_width(), 3, 1, PadMode::Reflect)?,
            conv2: r.conv("fusion.conv2", 3, c, 3, 1, PadMode::Reflect)?,
        };
        r.finish()?;
        Ok(Self {
            cfg: cfg.clone(),
            stem,
            denoise,
            levels,
            fusion,
        })
    }

    /// `init_weights` followed by `from_store`.
    pub fn init(cfg: &PipelineConfig) -> Result<Self> {
        Self::from_store(cfg, init_weights(cfg)?)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn check_inputs(&self, image: &Tensor4, prompts: &PromptSet) -> Result<()> {
        let cfg = &self.cfg;
        if image.channels() != 3 {
            return Err(shape_err!("expected an RGB image, got {} channels", image.channels()));
        }
        cfg.check_dims(image.height(), image.width())?;
        if prompts.layers() != cfg.layers.as_slice() {
            return Err(shape_err!(
                "prompt layers {:?} do not match configured layers {:?}",
                prompts.layers(),
                cfg.layers
            ));
        }
        let g = prompts.grid_shape();
        let want = [image.batch(), cfg.token_dim, image.height() / cfg.patch, image.width() / cfg.patch];
        if g.as_array() != want {
            return Err(shape_err!(
                "prompt grids are {g}, expected {}x{}x{}x{} for a {}x{} image",
                want[0],
                want[1],
                want[2],
                want[3],
                image.height(),
                image.width()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, image: &Tensor4, prompts: &PromptSet) -> Result<Tensor4> {
        Ok(self.forward_traced(image, prompts)?.output)
    }

    pub fn forward_traced(&self, image: &Tensor4, prompts: &PromptSet) -> Result<PipelineTrace> {
        self.check_inputs(image, prompts)?;
        let stem = conv2d(image, &self.stem)?;
        let denoised = denoise_stream_forward(&stem, &self.denoise)?;
        let mut refined = Vec::with_capacity(self.levels.len());
        for (s, (level, feats)) in self.levels.iter().zip(&denoised).enumerate() {
            let tokens = concat_prompt_layers(&resize_prompts_for_scale(prompts, s + 1)?)?;
            let mut x = mrpe_forward(feats, &level.mrpe)?;
            for block in &level.blocks {
                x = dppb_forward_prompted(&x, &tokens, block)?;
            }
            refined.push(x);
        }
        let mut parts = vec![refined[0].clone()];
        for (s, f) in refined.iter().enumerate().skip(1) {
            parts.push(pixel_shuffle(f, 1 << s)?);
        }
        let refs: Vec<&Tensor4> = parts.iter().collect();
        let fused = conv2d(&concat_channels(&refs)?, &self.fusion.conv1)?;
        let residual = conv2d(&fused, &self.fusion.conv2)?;
        let output = add(image, &residual)?;
        Ok(PipelineTrace {
            stem,
            denoised,
            refined,
            residual,
            output,
        })
    }
}

/// One-shot forward pass from a weight store.
pub fn pipeline_forward(
    image: &Tensor4,
    weights: &WeightStore,
    prompts: &PromptSet,
    cfg: &PipelineConfig,
) -> Result<Tensor4> {
    Pixie::from_store(cfg, weights.clone())?.forward(image, prompts)
}
