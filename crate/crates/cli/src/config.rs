//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma separated.
//! Every key has a default, so an empty file is a valid config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use perfnet_core::data::{AugmentConfig, BackgroundMode, Modality, PadMode, SyntheticSpec};
use perfnet_core::flow::FlowParams;
use perfnet_core::nn::{BackboneConfig, BlockStyle, NormKind};
use perfnet_core::pose::{Background, Marker, PaletteKind, RenderSpec};
use perfnet_core::rng::derive_seed;
use perfnet_core::train::{DistillMode, InputSpec, OptimConfig};
use perfnet_core::{Error, Result};

/// File name of the resolved config written next to every run's outputs.
pub const RESOLVED_NAME: &str = "config.resolved";

pub trait Value: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u32, u64, f32, f64, bool);

impl Value for String {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl Value for PathBuf {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl<T: Value> Value for Vec<T> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(Value::render).collect::<Vec<_>>().join(",")
    }
}

macro_rules! enum_value {
    ($t:ty { $($name:literal => $v:expr),* $(,)? }) => {
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($v),)*
                    _ => Err(format!("expected one of {}", [$($name),*].join("|"))),
                }
            }
            fn render(&self) -> String {
                $(if *self == $v { return $name.to_string(); })*
                unreachable!()
            }
        }
    };
}

enum_value!(BackgroundMode { "plain" => BackgroundMode::Plain, "textured" => BackgroundMode::Textured, "cluttered" => BackgroundMode::Cluttered });
enum_value!(Background { "rgb_frame" => Background::RgbFrame, "black" => Background::Black });
enum_value!(Marker { "bar" => Marker::Bar, "dot" => Marker::Dot });
enum_value!(PaletteKind { "coarse6" => PaletteKind::Coarse6, "fine13" => PaletteKind::Fine13 });
enum_value!(Modality { "rgb" => Modality::Rgb, "flow" => Modality::Flow, "pose" => Modality::Pose });
enum_value!(PadMode { "last" => PadMode::Last, "first" => PadMode::First });
enum_value!(BlockStyle { "bottleneck" => BlockStyle::Bottleneck, "factorized" => BlockStyle::Factorized });
enum_value!(DistillMode { "sl" => DistillMode::Separate, "ul" => DistillMode::Unified });

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Tiny,
    R3d50g,
}

enum_value!(Preset { "desk" => Preset::Desk, "tiny" => Preset::Tiny, "r3d50g" => Preset::R3d50g });

impl Value for NormKind {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "batch" => Ok(NormKind::Batch),
            Some(("group", n)) => n.parse().map(NormKind::Group).map_err(|e| format!("{e}")),
            _ => Err("expected batch|group:N".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            NormKind::Batch => "batch".into(),
            NormKind::Group(n) => format!("group:{n}"),
        }
    }
}

/// One pose rendering variant: `background:marker:palette:ratio`, e.g.
/// `rgb_frame:bar:fine13:ratio` or `black:dot:coarse6:fixed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderVariant {
    pub background: Background,
    pub marker: Marker,
    pub palette: PaletteKind,
    pub ratio_aware: bool,
}

impl RenderVariant {
    pub fn apply(&self, base: &RenderSpec) -> RenderSpec {
        RenderSpec {
            background: self.background,
            marker: self.marker,
            palette: self.palette,
            ratio_aware: self.ratio_aware,
            ..*base
        }
    }
}

impl Value for RenderVariant {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [bg, marker, palette, ratio] = parts[..] else {
            return Err(format!("render variant {s:?} is not background:marker:palette:ratio|fixed"));
        };
        let ratio_aware = match ratio {
            "ratio" => true,
            "fixed" => false,
            _ => return Err(format!("expected ratio|fixed, got {ratio:?}")),
        };
        Ok(Self { background: Value::parse(bg)?, marker: Value::parse(marker)?, palette: Value::parse(palette)?, ratio_aware })
    }
    fn render(&self) -> String {
        let ratio = if self.ratio_aware { "ratio" } else { "fixed" };
        format!("{}:{}:{}:{ratio}", self.background.render(), self.marker.render(), self.palette.render())
    }
}

/// The seven pose rendering rows of the ablation sweep.
pub fn default_variants() -> Vec<RenderVariant> {
    [
        "rgb_frame:bar:coarse6:fixed",
        "rgb_frame:bar:coarse6:ratio",
        "rgb_frame:bar:fine13:fixed",
        "black:dot:fine13:ratio",
        "black:bar:fine13:ratio",
        "rgb_frame:dot:fine13:ratio",
        "rgb_frame:bar:fine13:ratio",
    ]
    .iter()
    .map(|s| RenderVariant::parse(s).expect("built-in variant"))
    .collect()
}

macro_rules! config {
    ($($key:literal => $field:ident : $ty:ty = $default:expr,)*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct ExperimentConfig {
            $(pub $field: $ty,)*
        }

        impl Default for ExperimentConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl ExperimentConfig {
            #[cfg(test)]
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = <$ty as Value>::parse(value)
                            .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            /// Every key with its current value, one `key = value` line each.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $(let _ = writeln!(s, "{} = {}", $key, Value::render(&self.$field));)*
                s
            }
        }
    };
}

config! {
    "seed" => seed: u64 = 0,
    "out_dir" => out_dir: PathBuf = PathBuf::from("runs/default"),
    "data_dir" => data_dir: PathBuf = PathBuf::from("runs/data"),

    "data.num_classes" => data_num_classes: usize = SyntheticSpec::default().num_classes,
    "data.train_clips_per_class" => data_train_clips_per_class: usize = SyntheticSpec::default().train_clips_per_class,
    "data.val_clips_per_class" => data_val_clips_per_class: usize = SyntheticSpec::default().val_clips_per_class,
    "data.frame_size" => data_frame_size: usize = SyntheticSpec::default().frame_size,
    "data.clip_length" => data_clip_length: usize = SyntheticSpec::default().clip_length,
    "data.background" => data_background: BackgroundMode = SyntheticSpec::default().background,
    "data.pose_dropout_rate" => data_pose_dropout_rate: f64 = SyntheticSpec::default().pose_dropout_rate,
    "data.distractor_rate" => data_distractor_rate: f64 = SyntheticSpec::default().distractor_rate,

    "render.background" => render_background: Background = RenderSpec::default().background,
    "render.marker" => render_marker: Marker = RenderSpec::default().marker,
    "render.palette" => render_palette: PaletteKind = RenderSpec::default().palette,
    "render.ratio_aware" => render_ratio_aware: bool = RenderSpec::default().ratio_aware,
    "render.base_thickness_frac" => render_base_thickness_frac: f64 = RenderSpec::default().base_thickness_frac,
    "render.fixed_thickness_px" => render_fixed_thickness_px: u32 = RenderSpec::default().fixed_thickness_px,
    "render.confidence_threshold" => render_confidence_threshold: f64 = RenderSpec::default().confidence_threshold,

    "flow.lambda_data" => flow_lambda_data: f64 = FlowParams::default().lambda_data,
    "flow.theta" => flow_theta: f64 = FlowParams::default().theta,
    "flow.tau" => flow_tau: f64 = FlowParams::default().tau,
    "flow.pyramid_levels" => flow_pyramid_levels: usize = FlowParams::default().pyramid_levels,
    "flow.pyramid_scale" => flow_pyramid_scale: f64 = FlowParams::default().pyramid_scale,
    "flow.warps_per_level" => flow_warps_per_level: usize = FlowParams::default().warps_per_level,
    "flow.iterations_per_warp" => flow_iterations_per_warp: usize = FlowParams::default().iterations_per_warp,
    "flow.flow_clip" => flow_flow_clip: f64 = FlowParams::default().flow_clip,

    "model.preset" => model_preset: Preset = Preset::Desk,
    "model.block_style" => model_block_style: BlockStyle = BlockStyle::Bottleneck,
    "model.norm" => model_norm: NormKind = NormKind::Batch,
    "model.gating" => model_gating: bool = true,
    "model.gating_per_cell" => model_gating_per_cell: bool = false,

    "input.modality" => input_modality: Modality = Modality::Rgb,
    "input.crop_frac" => input_crop_frac: f64 = AugmentConfig::default().crop_frac,
    "input.clip_length" => input_clip_length: usize = 8,
    "input.pad" => input_pad: PadMode = PadMode::Last,

    "augment.mirror" => augment_mirror: bool = AugmentConfig::default().mirror,
    "augment.brightness" => augment_brightness: f32 = AugmentConfig::default().brightness,
    "augment.contrast_min" => augment_contrast_min: f32 = AugmentConfig::default().contrast_min,
    "augment.contrast_max" => augment_contrast_max: f32 = AugmentConfig::default().contrast_max,

    "optim.base_lr" => optim_base_lr: f64 = OptimConfig::default().base_lr,
    "optim.warmup_steps" => optim_warmup_steps: usize = OptimConfig::default().warmup_steps,
    "optim.total_steps" => optim_total_steps: usize = OptimConfig::default().total_steps,
    "optim.momentum" => optim_momentum: f64 = OptimConfig::default().momentum,
    "optim.weight_decay" => optim_weight_decay: f64 = OptimConfig::default().weight_decay,
    "optim.batch_size" => optim_batch_size: usize = OptimConfig::default().batch_size,
    "train.bn_momentum" => train_bn_momentum: f64 = 0.1,

    "distill.mode" => distill_mode: DistillMode = DistillMode::Separate,
    "distill.weight" => distill_weight: f64 = 1.0,
    "distill.teachers" => distill_teachers: Vec<PathBuf> = Vec::new(),

    "gradcam.stage" => gradcam_stage: String = "stage5".to_string(),
    "ablate.variants" => ablate_variants: Vec<RenderVariant> = default_variants(),
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(RESOLVED_NAME), self.to_text())?;
        Ok(())
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: self.data_num_classes,
            train_clips_per_class: self.data_train_clips_per_class,
            val_clips_per_class: self.data_val_clips_per_class,
            frame_size: self.data_frame_size,
            clip_length: self.data_clip_length,
            background: self.data_background,
            pose_dropout_rate: self.data_pose_dropout_rate,
            distractor_rate: self.data_distractor_rate,
            seed: derive_seed(self.seed, "data"),
        }
    }

    pub fn render(&self) -> RenderSpec {
        RenderSpec {
            background: self.render_background,
            marker: self.render_marker,
            palette: self.render_palette,
            ratio_aware: self.render_ratio_aware,
            base_thickness_frac: self.render_base_thickness_frac,
            fixed_thickness_px: self.render_fixed_thickness_px,
            confidence_threshold: self.render_confidence_threshold,
        }
    }

    pub fn flow(&self) -> FlowParams {
        FlowParams {
            lambda_data: self.flow_lambda_data,
            theta: self.flow_theta,
            tau: self.flow_tau,
            pyramid_levels: self.flow_pyramid_levels,
            pyramid_scale: self.flow_pyramid_scale,
            warps_per_level: self.flow_warps_per_level,
            iterations_per_warp: self.flow_iterations_per_warp,
            flow_clip: self.flow_flow_clip,
        }
    }

    pub fn backbone(&self, num_classes: usize) -> BackboneConfig {
        let channels = self.input_modality.channels();
        let mut cfg = match self.model_preset {
            Preset::Desk => BackboneConfig::desk(channels, num_classes),
            Preset::Tiny => BackboneConfig::tiny(channels, num_classes),
            Preset::R3d50g => BackboneConfig::r3d50g(channels, num_classes),
        };
        cfg.block_style = self.model_block_style;
        cfg.norm = self.model_norm;
        cfg.gating_enabled = self.model_gating;
        cfg.gating_per_cell = self.model_gating_per_cell;
        cfg
    }

    pub fn input(&self) -> InputSpec {
        InputSpec {
            modality: self.input_modality,
            crop_frac: self.input_crop_frac,
            clip_length: self.input_clip_length,
            pad: self.input_pad,
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            mirror: self.augment_mirror,
            brightness: self.augment_brightness,
            contrast_min: self.augment_contrast_min,
            contrast_max: self.augment_contrast_max,
            crop_frac: self.input_crop_frac,
        }
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            base_lr: self.optim_base_lr,
            warmup_steps: self.optim_warmup_steps,
            total_steps: self.optim_total_steps,
            momentum: self.optim_momentum,
            weight_decay: self.optim_weight_decay,
            batch_size: self.optim_batch_size,
            seed: derive_seed(self.seed, "train"),
        }
    }
}
