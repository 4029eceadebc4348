//! Procedural stick-figure action clips, augmentation and stream building.

mod augment;
mod figure;
mod generate;
mod spec;
mod storage;
mod stream;

pub use augment::{augment, crop_side, eval_crop_and_pad, fit_indices, fit_length, AugmentConfig, Crop, PadMode, View};
pub use generate::generate_synthetic;
pub use spec::{
    acting_keypoints, mirror_label, BackgroundMode, SyntheticSpec, CLASS_NAMES, IDLE_WITH_PROP, JUMP, MIN_FRAME_SIZE,
    RUN_IN_PLACE, SQUAT, WAVE_LEFT, WAVE_RIGHT,
};
pub use storage::{load_frames, load_split, read_manifest, save_dataset, ManifestRecord};
pub use stream::{make_stream, Modality, StreamBuilder};

use crate::pose::PoseFrame;
use crate::tensor::Tensor;

/// One labelled clip: frames `[T, H, W, 3]` in `[0,1]` and one pose frame per step.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub id: String,
    pub label: usize,
    pub frames: Tensor,
    pub poses: Vec<PoseFrame>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    /// Label of each class after horizontal mirroring.
    pub mirror_labels: Vec<usize>,
    pub clips: Vec<ClipSample>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}
