use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::kp;

pub const CLASS_NAMES: [&str; 6] = ["jump", "squat", "wave_left", "wave_right", "run_in_place", "idle_with_moving_prop"];

pub const JUMP: usize = 0;
pub const SQUAT: usize = 1;
pub const WAVE_LEFT: usize = 2;
pub const WAVE_RIGHT: usize = 3;
pub const RUN_IN_PLACE: usize = 4;
pub const IDLE_WITH_PROP: usize = 5;

/// Smallest frame side that fits the figure with its motion range.
pub const MIN_FRAME_SIZE: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    Plain,
    Textured,
    Cluttered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub train_clips_per_class: usize,
    pub val_clips_per_class: usize,
    /// Square frame side in pixels.
    pub frame_size: usize,
    pub clip_length: usize,
    pub background: BackgroundMode,
    /// Fraction of frames whose pose detections are removed. Whole clips are
    /// emptied, so the missing poses concentrate in some samples.
    pub pose_dropout_rate: f64,
    /// Probability that a clip contains a static distractor object.
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 6,
            train_clips_per_class: 100,
            val_clips_per_class: 35,
            frame_size: 64,
            clip_length: 16,
            background: BackgroundMode::Textured,
            pose_dropout_rate: 0.0,
            distractor_rate: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=CLASS_NAMES.len()).contains(&self.num_classes) {
            return Err(Error::config(format!("num_classes must be in 2..=6, got {}", self.num_classes)));
        }
        if self.train_clips_per_class == 0 || self.val_clips_per_class == 0 || self.clip_length == 0 {
            return Err(Error::config("clip counts and clip length must be positive"));
        }
        if self.frame_size < MIN_FRAME_SIZE {
            return Err(Error::config(format!(
                "frame size {} too small for the figure (minimum {MIN_FRAME_SIZE})",
                self.frame_size
            )));
        }
        for (name, r) in [("pose_dropout_rate", self.pose_dropout_rate), ("distractor_rate", self.distractor_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} {r} outside [0,1]")));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> &'static [&'static str] {
        &CLASS_NAMES[..self.num_classes]
    }

    /// Label of the horizontally mirrored clip.
    pub fn mirror_labels(&self) -> Vec<usize> {
        (0..self.num_classes).map(|c| mirror_label(c).filter(|&m| m < self.num_classes).unwrap_or(c)).collect()
    }
}

/// Mirroring a video turns a left-hand wave into a right-hand wave.
pub fn mirror_label(class: usize) -> Option<usize> {
    match class {
        WAVE_LEFT => Some(WAVE_RIGHT),
        WAVE_RIGHT => Some(WAVE_LEFT),
        c if c < CLASS_NAMES.len() => Some(c),
        _ => None,
    }
}

/// Keypoints of the limb that performs a class's distinguishing motion.
pub fn acting_keypoints(class: usize) -> Option<&'static [usize]> {
    match class {
        WAVE_LEFT => Some(&[kp::LEFT_SHOULDER, kp::LEFT_ELBOW, kp::LEFT_WRIST]),
        WAVE_RIGHT => Some(&[kp::RIGHT_SHOULDER, kp::RIGHT_ELBOW, kp::RIGHT_WRIST]),
        _ => None,
    }
}
