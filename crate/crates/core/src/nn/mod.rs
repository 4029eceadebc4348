//! Gated 3D residual backbones.

mod config;
mod model;
mod params;

pub use config::{alternating_schedule, BackboneConfig, BlockStyle, NormKind, StageConfig, StemConfig};
pub use model::{
    apply_gate, build_backbone, feature_gate, output_shapes, update_running_stats, Bound, CellSpec, Forward,
    GatingParams, Mode, Network,
};
pub use params::{is_buffer, ModelParams};
