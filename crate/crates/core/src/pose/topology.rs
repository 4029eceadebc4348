//! The 13-limb skeleton drawn over COCO keypoints.

use super::types::kp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoarseGroup {
    LeftArm,
    RightArm,
    Body,
    Head,
    LeftLeg,
    RightLeg,
}

impl CoarseGroup {
    pub const ALL: [CoarseGroup; 6] = [
        CoarseGroup::LeftArm,
        CoarseGroup::RightArm,
        CoarseGroup::Body,
        CoarseGroup::Head,
        CoarseGroup::LeftLeg,
        CoarseGroup::RightLeg,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&g| g == self).unwrap_or(0)
    }
}

/// A limb endpoint: a keypoint or the midpoint of two keypoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Keypoint(usize),
    Midpoint(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limb {
    pub name: &'static str,
    pub a: Endpoint,
    pub b: Endpoint,
    pub group: CoarseGroup,
    /// Index into the 13-color palette.
    pub fine_color: usize,
}

const fn limb(name: &'static str, a: usize, b: usize, group: CoarseGroup, fine_color: usize) -> Limb {
    Limb { name, a: Endpoint::Keypoint(a), b: Endpoint::Keypoint(b), group, fine_color }
}

pub const SKELETON: [Limb; 13] = [
    limb("left_upper_arm", kp::LEFT_SHOULDER, kp::LEFT_ELBOW, CoarseGroup::LeftArm, 0),
    limb("left_forearm", kp::LEFT_ELBOW, kp::LEFT_WRIST, CoarseGroup::LeftArm, 1),
    limb("right_upper_arm", kp::RIGHT_SHOULDER, kp::RIGHT_ELBOW, CoarseGroup::RightArm, 2),
    limb("right_forearm", kp::RIGHT_ELBOW, kp::RIGHT_WRIST, CoarseGroup::RightArm, 3),
    limb("left_thigh", kp::LEFT_HIP, kp::LEFT_KNEE, CoarseGroup::LeftLeg, 4),
    limb("left_shin", kp::LEFT_KNEE, kp::LEFT_ANKLE, CoarseGroup::LeftLeg, 5),
    limb("right_thigh", kp::RIGHT_HIP, kp::RIGHT_KNEE, CoarseGroup::RightLeg, 6),
    limb("right_shin", kp::RIGHT_KNEE, kp::RIGHT_ANKLE, CoarseGroup::RightLeg, 7),
    limb("shoulder_bar", kp::LEFT_SHOULDER, kp::RIGHT_SHOULDER, CoarseGroup::Body, 8),
    limb("hip_bar", kp::LEFT_HIP, kp::RIGHT_HIP, CoarseGroup::Body, 9),
    limb("left_torso", kp::LEFT_SHOULDER, kp::LEFT_HIP, CoarseGroup::Body, 10),
    limb("right_torso", kp::RIGHT_SHOULDER, kp::RIGHT_HIP, CoarseGroup::Body, 11),
    Limb {
        name: "head",
        a: Endpoint::Keypoint(kp::NOSE),
        b: Endpoint::Midpoint(kp::LEFT_SHOULDER, kp::RIGHT_SHOULDER),
        group: CoarseGroup::Head,
        fine_color: 12,
    },
];
