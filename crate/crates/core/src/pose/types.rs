use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_KEYPOINTS: usize = 17;

/// COCO keypoint order.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub mod kp {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE: usize = 1;
    pub const RIGHT_EYE: usize = 2;
    pub const LEFT_EAR: usize = 3;
    pub const RIGHT_EAR: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_ELBOW: usize = 7;
    pub const RIGHT_ELBOW: usize = 8;
    pub const LEFT_WRIST: usize = 9;
    pub const RIGHT_WRIST: usize = 10;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;
    pub const LEFT_KNEE: usize = 13;
    pub const RIGHT_KNEE: usize = 14;
    pub const LEFT_ANKLE: usize = 15;
    pub const RIGHT_ANKLE: usize = 16;
}

/// Index of the mirror-image keypoint (left <-> right; the nose maps to itself).
pub const FLIP_INDEX: [usize; NUM_KEYPOINTS] = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f32; 3]", into = "[f32; 3]")]
pub struct Keypoint {
    /// Column coordinate; pixel centers sit at integer positions.
    pub x: f32,
    pub y: f32,
    pub confidence: f32,
}

impl From<[f32; 3]> for Keypoint {
    fn from([x, y, confidence]: [f32; 3]) -> Self {
        Self { x, y, confidence }
    }
}

impl From<Keypoint> for [f32; 3] {
    fn from(k: Keypoint) -> Self {
        [k.x, k.y, k.confidence]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub bbox: [f32; 4],
    pub keypoints: Vec<Keypoint>,
}

impl Person {
    pub fn validate(&self) -> Result<()> {
        if self.keypoints.len() != NUM_KEYPOINTS {
            return Err(Error::format(format!(
                "person has {} keypoints, expected {NUM_KEYPOINTS}",
                self.keypoints.len()
            )));
        }
        let [x0, y0, x1, y1] = self.bbox;
        if !(x0 <= x1 && y0 <= y1) {
            return Err(Error::format(format!("malformed bbox {:?}", self.bbox)));
        }
        if let Some(k) = self.keypoints.iter().find(|k| !(0.0..=1.0).contains(&k.confidence)) {
            return Err(Error::format(format!("keypoint confidence {} outside [0,1]", k.confidence)));
        }
        Ok(())
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let [x0, y0, x1, y1] = self.bbox.map(f64::from);
        ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
    }

    /// Tight box around the keypoints with confidence above zero.
    pub fn keypoint_bbox(keypoints: &[Keypoint]) -> [f32; 4] {
        let visible = keypoints.iter().filter(|k| k.confidence > 0.0);
        visible.fold([f32::MAX, f32::MAX, f32::MIN, f32::MIN], |b, k| {
            [b[0].min(k.x), b[1].min(k.y), b[2].max(k.x), b[3].max(k.y)]
        })
    }
}

/// All persons detected in one frame; an empty list means no detection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub persons: Vec<Person>,
}

impl PoseFrame {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.persons.iter().try_for_each(Person::validate)
    }
}
