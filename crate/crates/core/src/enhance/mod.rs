//! Pixel-space refinement: local embedding, compacted attention and
//! token-driven modulation.

mod dppb;
mod modulation;
mod mrpe;
mod scc;

pub use dppb::{dppb_forward, dppb_forward_prompted, modulate, DppbConfig, DppbParams, FfnParams, FFN_EXPANSION};
pub use modulation::{
    build_field_tensor, build_modulation_field, predict_modulation, FieldParams, ModulationField,
    ModulationParams, MODULATION_SLICES,
};
pub use mrpe::{mrpe_forward, MrpeAllocation, MrpeParams};
pub use scc::{scc_attention_forward, SccParams, SCC_HEADS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::PixieError;

/// How token-grid modulation parameters are spread over pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationStrategy {
    /// One vector (the spatial mean over tokens) shared by all pixels.
    Global,
    /// Each token's parameters replicated over its patch.
    Patchwise,
    /// Tokens interpolated to full resolution, then smoothed by a depthwise 3x3.
    #[default]
    Continuous,
}

/// Interpolation used by the continuous strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleMode {
    #[default]
    Bilinear,
    Bicubic,
}

/// Which compaction is applied around the attention of a pixel block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SccVariant {
    /// Fold patches into channels, then compress to the attention width.
    #[default]
    Full,
    /// Compress channels at full resolution.
    ChannelOnly,
    /// Fold patches into channels and attend at the inflated width.
    SpatialOnly,
    /// Attend directly at block width and full resolution.
    None,
}

macro_rules! str_enum {
    ($ty:ty, $what:literal, { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = PixieError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(PixieError::Config(format!(
                        concat!("unknown ", $what, " '{}', expected one of: {}"),
                        s,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

str_enum!(ModulationStrategy, "modulation strategy", {
    ModulationStrategy::Global => "global",
    ModulationStrategy::Patchwise => "patchwise",
    ModulationStrategy::Continuous => "continuous",
});

str_enum!(UpsampleMode, "upsample mode", {
    UpsampleMode::Bilinear => "bilinear",
    UpsampleMode::Bicubic => "bicubic",
});

str_enum!(SccVariant, "SCC variant", {
    SccVariant::Full => "full",
    SccVariant::ChannelOnly => "channel_only",
    SccVariant::SpatialOnly => "spatial_only",
    SccVariant::None => "none",
});

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for v in SccVariant::ALL {
            assert_eq!(v.as_str().parse::<SccVariant>().unwrap(), *v);
        }
        for v in ModulationStrategy::ALL {
            assert_eq!(v.to_string().parse::<ModulationStrategy>().unwrap(), *v);
        }
        assert!("nearest".parse::<UpsampleMode>().is_err());
    }
}
