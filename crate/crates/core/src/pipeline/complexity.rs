//! Closed-form parameter and multiply-accumulate counts.
//!
//! Counts are derived from the architecture formulas, not by walking a
//! materialized network, so they stay cheap for configurations too large to
//! instantiate. Convolutions cost `C_out * H' * W' * (C_in / groups) * k^2`
//! MACs (bias adds are free); matrix products cost the product of their dims.
//! Elementwise work is tallied separately at a flat rate: 5 per element for
//! norms, softmax, GELU and resampling, 1 per element for adds, products and
//! pooling sums. Data movement (shuffles, concatenation) is free.

use std::fmt;

use super::config::PipelineConfig;
use crate::enhance::{ModulationStrategy, SccVariant, FFN_EXPANSION, MODULATION_SLICES, SCC_HEADS};
use crate::error::Result;
use crate::restormer::GDFN_EXPANSION;

/// Flat cost of one element of a norm, softmax, GELU or resize.
pub const HEAVY_ELEMENTWISE: u64 = 5;
const MLP_EXPANSION: u64 = 4;

/// Named counts in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Breakdown {
    entries: Vec<(&'static str, u64)>,
}

impl Breakdown {
    fn add(&mut self, name: &'static str, v: u64) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some((_, acc)) => *acc += v,
            None => self.entries.push((name, v)),
        }
    }

    /// The count for `name`, or 0 if the stage is absent.
    pub fn get(&self, name: &str) -> u64 {
        self.entries.iter().find(|(n, _)| *n == name).map_or(0, |(_, v)| *v)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, u64)> + '_ {
        self.entries.iter().copied()
    }
}

impl fmt::Display for Breakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in &self.entries {
            writeln!(f, "{n}\t{v}")?;
        }
        write!(f, "total\t{}", self.total())
    }
}

/// Parameters of a convolution with bias.
pub fn conv_params(c_out: usize, c_in_per_group: usize, k: usize) -> u64 {
    (c_out * c_in_per_group * k * k + c_out) as u64
}

/// MACs of a convolution producing `c_out` maps of `h_out x w_out`.
pub fn conv_macs(batch: usize, c_out: usize, c_in: usize, groups: usize, k: usize, h_out: usize, w_out: usize) -> u64 {
    (batch * c_out * h_out * w_out) as u64 * (c_in / groups * k * k) as u64
}

fn mdta_params(w: usize, heads: usize) -> u64 {
    w as u64 + 4 * conv_params(w, w, 1) + 3 * conv_params(w, 1, 3) + heads as u64
}

fn gdfn_params(w: usize) -> u64 {
    let h = w * GDFN_EXPANSION;
    w as u64 + 2 * conv_params(h, w, 1) + 2 * conv_params(h, 1, 3) + conv_params(w, h, 1)
}

fn scc_inner(cfg: &PipelineConfig, w: usize, n: u64) -> (u64, u64) {
    let p2 = (cfg.patch * cfg.patch) as u64;
    match cfg.scc_variant {
        SccVariant::Full => (cfg.d_attn as u64, n / p2),
        SccVariant::ChannelOnly => (cfg.d_attn as u64, n),
        SccVariant::SpatialOnly => (w as u64 * p2, n / p2),
        SccVariant::None => (w as u64, n),
    }
}

/// Parameter counts grouped by module.
pub fn count_params(cfg: &PipelineConfig) -> Result<Breakdown> {
    cfg.validate()?;
    let c = cfg.base_channels;
    let p2 = cfg.patch * cfg.patch;
    let t = cfg.token_channels();
    let mut b = Breakdown::default();
    b.add("stem", conv_params(c, 3, 3));
    for s in 0..cfg.scales {
        let w = cfg.width(s);
        let mut level = 2 * (mdta_params(w, 1 << s) + gdfn_params(w));
        if s > 0 {
            level += conv_params(w, 2 * w, 1) + 2 * conv_params(w, 3 * w, 1);
        }
        b.add("denoise", level);
    }
    for s in 0..cfg.scales {
        let w = cfg.width(s);
        let widths = cfg.mrpe_allocation.widths(w)?;
        let mrpe: u64 = [1, 3, 5]
            .into_iter()
            .zip(widths)
            .filter(|&(_, d)| d > 0)
            .map(|(k, d)| conv_params(d, w, k))
            .sum::<u64>()
            + conv_params(w, w, 1);
        b.add("mrpe", mrpe);

        let hidden = w * MLP_EXPANSION as usize;
        let m = w * MODULATION_SLICES;
        let mut modulation = conv_params(hidden, t, 1) + conv_params(m, hidden, 1);
        if cfg.strategy == ModulationStrategy::Continuous {
            modulation += conv_params(m, 1, 3);
        }
        let da = cfg.d_attn;
        let scc = match cfg.scc_variant {
            SccVariant::Full => conv_params(da, w * p2, 1) + mdta_params(da, SCC_HEADS) + conv_params(w * p2, da, 1),
            SccVariant::ChannelOnly => conv_params(da, w, 1) + mdta_params(da, SCC_HEADS) + conv_params(w, da, 1),
            SccVariant::SpatialOnly => mdta_params(w * p2, SCC_HEADS),
            SccVariant::None => mdta_params(w, SCC_HEADS),
        };
        let fh = w * FFN_EXPANSION;
        let ffn = w as u64 + conv_params(fh, w, 1) + conv_params(w, fh, 1);
        let n = cfg.dppb_per_scale as u64;
        b.add("modulation", n * modulation);
        b.add("dppb_attention", n * (w as u64 + scc));
        b.add("dppb_ffn", n * ffn);
    }
    b.add("fusion", conv_params(c, cfg.fusion_width(), 3) + conv_params(3, c, 3));
    Ok(b)
}

/// Costs of one MDTA at width `w` with `heads` heads over `n` pixels:
/// (projection MACs, attention-core MACs, elementwise ops).
fn mdta_costs(w: u64, heads: u64, n: u64) -> (u64, u64, u64) {
    let d = w / heads;
    let proj = 4 * w * w * n + 3 * 9 * w * n;
    let core = 2 * w * d * n;
    let logits = heads * d * d;
    let elem = HEAVY_ELEMENTWISE * (w * n + 2 * w * n + logits) + logits;
    (proj, core, elem)
}

/// MACs per stage for a single `height x width` image; elementwise work is
/// the `elementwise` stage. Attention-core stages hold only the `Q K^T` and
/// `A V` products.
pub fn count_flops(cfg: &PipelineConfig, height: usize, width: usize) -> Result<Breakdown> {
    cfg.validate()?;
    cfg.check_dims(height, width)?;
    let c = cfg.base_channels as u64;
    let p2 = (cfg.patch * cfg.patch) as u64;
    let t = cfg.token_channels() as u64;
    let n1 = (height * width) as u64;
    let mut b = Breakdown::default();
    for name in [
        "stem",
        "denoise",
        "denoise_attn_core",
        "mrpe",
        "modulation",
        "dppb_projections",
        "dppb_attn_core",
        "ffn",
        "fusion",
        "elementwise",
    ] {
        b.add(name, 0);
    }

    b.add("stem", c * 3 * 9 * n1);

    for s in 0..cfg.scales {
        let w = cfg.width(s) as u64;
        let n = n1 >> (2 * s);
        if s > 0 {
            b.add("denoise", w * 2 * w * n + 2 * w * 3 * w * n);
        }
        for _ in 0..2 {
            let (proj, core, elem) = mdta_costs(w, 1 << s, n);
            b.add("denoise", proj);
            b.add("denoise_attn_core", core);
            let h = w * GDFN_EXPANSION as u64;
            b.add("denoise", 2 * h * w * n + 2 * 9 * h * n + w * h * n);
            b.add("elementwise", elem + HEAVY_ELEMENTWISE * (w * n + h * n) + h * n + 2 * w * n);
        }
    }

    for s in 0..cfg.scales {
        let w = cfg.width(s) as u64;
        let n = n1 >> (2 * s);
        let np = n / p2;
        if s > 0 {
            b.add("elementwise", HEAVY_ELEMENTWISE * t * np);
        }
        let widths = cfg.mrpe_allocation.widths(w as usize)?;
        let mrpe: u64 = [1u64, 3, 5].into_iter().zip(widths).map(|(k, d)| d as u64 * w * k * k * n).sum();
        b.add("mrpe", mrpe + w * w * n);

        for _ in 0..cfg.dppb_per_scale {
            let hidden = MLP_EXPANSION * w;
            let m = MODULATION_SLICES as u64 * w;
            b.add("modulation", hidden * t * np + m * hidden * np);
            b.add("elementwise", HEAVY_ELEMENTWISE * hidden * np);
            match cfg.strategy {
                ModulationStrategy::Global => b.add("elementwise", m * np),
                ModulationStrategy::Patchwise => {}
                ModulationStrategy::Continuous => {
                    b.add("modulation", 9 * m * n);
                    b.add("elementwise", HEAVY_ELEMENTWISE * m * n);
                }
            }

            let (wi, ni) = scc_inner(cfg, w as usize, n);
            let outer = match cfg.scc_variant {
                SccVariant::Full => w * p2,
                _ => w,
            };
            if matches!(cfg.scc_variant, SccVariant::Full | SccVariant::ChannelOnly) {
                b.add("dppb_projections", 2 * wi * outer * ni);
            }
            let (proj, core, elem) = mdta_costs(wi, SCC_HEADS as u64, ni);
            b.add("dppb_projections", proj);
            b.add("dppb_attn_core", core);

            let fh = FFN_EXPANSION as u64 * w;
            b.add("ffn", 2 * fh * w * n);
            // two (norm, modulate, gate) updates plus the FFN activation
            let block_elem = 2 * (HEAVY_ELEMENTWISE * w * n + 2 * w * n + 2 * w * n) + HEAVY_ELEMENTWISE * fh * n;
            b.add("elementwise", elem + block_elem);
        }
    }

    let fw = cfg.fusion_width() as u64;
    b.add("fusion", c * fw * 9 * n1 + 3 * c * 9 * n1);
    b.add("elementwise", 3 * n1);
    Ok(b)
}
