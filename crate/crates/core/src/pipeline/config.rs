use serde::{Deserialize, Serialize};

use crate::enhance::{ModulationStrategy, MrpeAllocation, SccVariant, UpsampleMode, SCC_HEADS};
use crate::error::{PixieError, Result};
use crate::prompt::{DEFAULT_LAYERS, DEFAULT_TOKEN_DIM, TOKEN_PATCH};

/// Architecture hyperparameters. Every field has a default, so a JSON config
/// only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Feature width `C` of the finest level.
    pub base_channels: usize,
    /// Pixels per token along each axis.
    pub patch: usize,
    /// Prompted pixel blocks per level.
    pub dppb_per_scale: usize,
    /// Width of the compacted attention.
    pub d_attn: usize,
    /// Backbone layers the prompt grids come from.
    pub layers: Vec<u32>,
    /// Token dimension `D_d` of each grid.
    pub token_dim: usize,
    /// Pyramid levels.
    pub scales: usize,
    pub strategy: ModulationStrategy,
    pub upsample: UpsampleMode,
    pub scc_variant: SccVariant,
    pub mrpe_allocation: MrpeAllocation,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            patch: TOKEN_PATCH,
            dppb_per_scale: 4,
            d_attn: 16,
            layers: DEFAULT_LAYERS.to_vec(),
            token_dim: DEFAULT_TOKEN_DIM,
            scales: 3,
            strategy: ModulationStrategy::default(),
            upsample: UpsampleMode::default(),
            scc_variant: SccVariant::default(),
            mrpe_allocation: MrpeAllocation::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(PixieError::Config(msg));
        let c = self.base_channels;
        if c == 0 || !c.is_multiple_of(8) {
            return fail(format!("base_channels must be a positive multiple of 8, got {c}"));
        }
        if self.patch != TOKEN_PATCH {
            return fail(format!("patch must be {TOKEN_PATCH} to match the token grid, got {}", self.patch));
        }
        if self.dppb_per_scale == 0 {
            return fail("dppb_per_scale must be at least 1".into());
        }
        if !(1..=4).contains(&self.scales) {
            return fail(format!("scales must be between 1 and 4, got {}", self.scales));
        }
        if !c.is_multiple_of(1 << (self.scales - 1)) {
            return fail(format!("base_channels {c} cannot be split across {} scales", self.scales));
        }
        if self.d_attn == 0 || !self.d_attn.is_multiple_of(SCC_HEADS) {
            return fail(format!(
                "d_attn must be a positive multiple of {SCC_HEADS} (attention heads), got {}",
                self.d_attn
            ));
        }
        if self.layers.is_empty() || self.layers.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("layers must be non-empty and strictly ascending, got {:?}", self.layers));
        }
        if self.token_dim == 0 {
            return fail("token_dim must be positive".into());
        }
        for s in 0..self.scales {
            self.mrpe_allocation.widths(self.width(s))?;
        }
        Ok(())
    }

    /// Feature width of level `s` (0-based).
    pub fn width(&self, s: usize) -> usize {
        self.base_channels << s
    }

    /// Channels of the concatenated prompt grids.
    pub fn token_channels(&self) -> usize {
        self.layers.len() * self.token_dim
    }

    /// Image height and width must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        self.patch << (self.scales - 1)
    }

    /// Channels entering the fusion head: `C + C/2 + C/4 + ...`.
    pub fn fusion_width(&self) -> usize {
        (0..self.scales).map(|s| self.base_channels >> s).sum()
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        let m = self.size_multiple();
        if height == 0 || width == 0 || !height.is_multiple_of(m) || !width.is_multiple_of(m) {
            return Err(PixieError::Shape(format!(
                "image {height}x{width} must be a nonzero multiple of {m} on both axes; pad it first"
            )));
        }
        Ok(())
    }
}
