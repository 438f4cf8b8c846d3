//! The assembled network, its weights and its cost model.

pub mod complexity;
mod config;
mod model;
mod weights;

pub use complexity::{count_flops, count_params, Breakdown};
pub use config::PipelineConfig;
pub use model::{
    init_weights, param_layout, pipeline_forward, FusionParams, LevelParams, Pixie, PipelineTrace, MAX_INIT_PARAMS,
};
pub use weights::{load_weights, save_weights, weights_from_bytes, weights_to_bytes, PIXW_MAGIC, PIXW_VERSION};
