use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::PoolSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockStyle {
    /// `[t x 1^2, 1 x 3^2, 1 x 1^2]` bottleneck with a 4x channel reduction.
    Bottleneck,
    /// A `1 x 3^2` spatial conv followed by a `3 x 1^2` temporal conv; a
    /// lightweight stand-in for separable S3D-style blocks.
    Factorized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    /// Per-channel batch statistics with running averages for evaluation.
    Batch,
    /// Group normalization; the group count is reduced to divide each layer's width.
    Group(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemConfig {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub out_channels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub num_cells: usize,
    pub out_channels: usize,
    pub spatial_stride: usize,
    /// Temporal kernel of the first conv of each cell.
    pub temporal_kernels: Vec<usize>,
}

impl StageConfig {
    /// A stage whose cells all use temporal kernel 3.
    pub fn full_temporal(num_cells: usize, out_channels: usize, spatial_stride: usize) -> Self {
        Self { num_cells, out_channels, spatial_stride, temporal_kernels: vec![3; num_cells] }
    }

    /// A stage with temporal kernel 3 on odd (1-based) cells and 1 on even ones.
    pub fn alternating(num_cells: usize, out_channels: usize, spatial_stride: usize) -> Self {
        Self { num_cells, out_channels, spatial_stride, temporal_kernels: alternating_schedule(num_cells) }
    }
}

pub fn alternating_schedule(num_cells: usize) -> Vec<usize> {
    (1..=num_cells).map(|i| if i % 2 == 1 { 3 } else { 1 }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub stem: StemConfig,
    pub pool: Option<PoolSpec>,
    pub stages: Vec<StageConfig>,
    pub gating_enabled: bool,
    /// Gate after every cell instead of once per stage.
    pub gating_per_cell: bool,
    pub num_classes: usize,
    pub block_style: BlockStyle,
    pub norm: NormKind,
}

impl BackboneConfig {
    /// The full-size gated 3D ResNet-50: 64x224^2 input gives
    /// 64x7^2x2048 at the last stage.
    pub fn r3d50g(in_channels: usize, num_classes: usize) -> Self {
        Self {
            in_channels,
            stem: StemConfig { kernel: [5, 7, 7], stride: [1, 2, 2], out_channels: 64 },
            pool: Some(PoolSpec::spatial(3, 2)),
            stages: vec![
                StageConfig::full_temporal(3, 256, 1),
                StageConfig::alternating(4, 512, 2),
                StageConfig::alternating(6, 1024, 2),
                StageConfig::alternating(3, 2048, 2),
            ],
            gating_enabled: true,
            gating_per_cell: false,
            num_classes,
            block_style: BlockStyle::Bottleneck,
            norm: NormKind::Batch,
        }
    }

    /// One cell per stage, widths 8/16/32/64, same stride pyramid as the full model.
    pub fn tiny(in_channels: usize, num_classes: usize) -> Self {
        Self {
            in_channels,
            stem: StemConfig { kernel: [3, 5, 5], stride: [1, 2, 2], out_channels: 8 },
            pool: Some(PoolSpec::spatial(3, 2)),
            stages: vec![
                StageConfig::full_temporal(1, 8, 1),
                StageConfig::alternating(1, 16, 2),
                StageConfig::alternating(1, 32, 2),
                StageConfig::alternating(1, 64, 2),
            ],
            gating_enabled: true,
            gating_per_cell: false,
            num_classes,
            block_style: BlockStyle::Bottleneck,
            norm: NormKind::Batch,
        }
    }

    /// The model used for the synthetic benchmark: tiny widths with only two
    /// spatial downsamplings after the pool, so 32^2 crops keep a 4^2 map.
    pub fn desk(in_channels: usize, num_classes: usize) -> Self {
        let mut cfg = Self::tiny(in_channels, num_classes);
        cfg.stages = vec![
            StageConfig::full_temporal(1, 16, 1),
            StageConfig::alternating(1, 32, 2),
            StageConfig::alternating(1, 64, 1),
            StageConfig::alternating(1, 64, 1),
        ];
        cfg
    }

    pub fn stage_name(index: usize) -> String {
        format!("stage{}", index + 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.num_classes == 0 || self.stem.out_channels == 0 {
            return Err(Error::config("channel and class counts must be positive"));
        }
        if self.stem.stride[0] != 1 {
            return Err(Error::config("the stem must not stride in time"));
        }
        if self.stem.kernel.contains(&0) || self.stem.stride.contains(&0) {
            return Err(Error::config("stem kernel and stride must be >= 1"));
        }
        if let Some(pool) = &self.pool {
            pool.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        if self.stages.is_empty() {
            return Err(Error::config("at least one stage is required"));
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let name = Self::stage_name(i);
            if stage.num_cells == 0 || stage.out_channels == 0 || stage.spatial_stride == 0 {
                return Err(Error::config(format!("{name}: cells, width and stride must be positive")));
            }
            if stage.temporal_kernels.len() != stage.num_cells {
                return Err(Error::config(format!(
                    "{name}: {} temporal kernels for {} cells",
                    stage.temporal_kernels.len(),
                    stage.num_cells
                )));
            }
            if stage.temporal_kernels.iter().any(|&k| k % 2 == 0) {
                return Err(Error::config(format!("{name}: temporal kernels must be odd")));
            }
            if i > 0 && stage.temporal_kernels != alternating_schedule(stage.num_cells) {
                return Err(Error::config(format!(
                    "{name}: temporal kernels must alternate 3,1,3,... (got {:?})",
                    stage.temporal_kernels
                )));
            }
            if self.block_style == BlockStyle::Bottleneck && stage.out_channels < 4 {
                return Err(Error::config(format!("{name}: bottleneck width must be >= 4")));
            }
        }
        if let NormKind::Group(0) = self.norm {
            return Err(Error::config("group norm needs at least one group"));
        }
        Ok(())
    }
}
