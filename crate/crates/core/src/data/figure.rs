//! Articulated stick-figure kinematics in figure units.
//!
//! Coordinates are relative to the hip center with `y` pointing down, and the
//! person's left side on `+x` (a figure facing the camera). Lengths are in
//! multiples of the figure height `h`.

use std::f64::consts::PI;

use super::spec::{IDLE_WITH_PROP, JUMP, RUN_IN_PLACE, SQUAT, WAVE_LEFT, WAVE_RIGHT};
use crate::pose::{kp, NUM_KEYPOINTS};

pub type Point = (f64, f64);

const SHOULDER_Y: f64 = -0.30;
const SHOULDER_HALF: f64 = 0.11;
const HIP_HALF: f64 = 0.07;
const UPPER_ARM: f64 = 0.15;
const FOREARM: f64 = 0.14;
const THIGH: f64 = 0.2;
const SHIN: f64 = 0.2;
pub const HEAD_CENTER_Y: f64 = -0.43;
pub const HEAD_RADIUS: f64 = 0.065;
pub const LIMB_RADIUS: f64 = 0.035;

/// Motion parameters shared by all frames of one clip.
#[derive(Clone, Copy, Debug)]
pub struct Motion {
    pub class: usize,
    /// Frames per motion cycle.
    pub period: f64,
    pub phase: f64,
    /// Amplitude multiplier around 1.
    pub amplitude: f64,
}

impl Motion {
    fn angle(&self, t: usize) -> f64 {
        2.0 * PI * t as f64 / self.period + self.phase
    }
}

#[derive(Clone, Copy)]
struct ArmPose {
    /// Upper-arm angle away from hanging straight down, positive outward.
    raise: f64,
    /// Extra forearm rotation relative to the upper arm, positive outward.
    bend: f64,
}

/// Direction at `angle` from straight down, rotated toward `side` (+1 left, -1 right).
fn dir(angle: f64, side: f64) -> Point {
    (side * angle.sin(), angle.cos())
}

fn add(a: Point, b: Point, scale: f64) -> Point {
    (a.0 + b.0 * scale, a.1 + b.1 * scale)
}

fn place_arm(k: &mut [Point; NUM_KEYPOINTS], side: f64, pose: ArmPose) {
    let (s, e, w) = if side > 0.0 {
        (kp::LEFT_SHOULDER, kp::LEFT_ELBOW, kp::LEFT_WRIST)
    } else {
        (kp::RIGHT_SHOULDER, kp::RIGHT_ELBOW, kp::RIGHT_WRIST)
    };
    k[e] = add(k[s], dir(pose.raise, side), UPPER_ARM);
    k[w] = add(k[e], dir(pose.raise + pose.bend, side), FOREARM);
}

/// Knee for a leg from `hip` to a planted `ankle`, bending outward.
fn knee_ik(hip: Point, ankle: Point, side: f64) -> Point {
    let (dx, dy) = (ankle.0 - hip.0, ankle.1 - hip.1);
    let d = dx.hypot(dy).min(THIGH + SHIN - 1e-9);
    let mid = (hip.0 + dx / 2.0, hip.1 + dy / 2.0);
    let out = (THIGH * THIGH - d * d / 4.0).max(0.0).sqrt();
    let (nx, ny) = (-dy / d, dx / d);
    let s = if nx * side >= 0.0 { 1.0 } else { -1.0 };
    (mid.0 + s * out * nx, mid.1 + s * out * ny)
}

/// Keypoints of frame `t` in figure units. The rest pose stands with ankles
/// at `y = THIGH + SHIN`.
pub fn keypoints_at(m: &Motion, t: usize) -> [Point; NUM_KEYPOINTS] {
    let phi = m.angle(t);
    let a = m.amplitude;
    let s = phi.sin();
    let mut body_dx = 0.0;
    let mut body_dy = 0.0;
    let mut arms = [ArmPose { raise: 0.12, bend: 0.05 }; 2];
    let mut lifts = [0.0f64; 2];
    let mut squat_depth = 0.0;
    match m.class {
        JUMP => {
            body_dy = -0.14 * a * s.max(0.0);
            let r = 0.3 + 1.2 * s.max(0.0);
            arms = [ArmPose { raise: r, bend: 0.2 }; 2];
        }
        SQUAT => {
            squat_depth = 0.14 * a * (1.0 - phi.cos()) / 2.0;
            arms = [ArmPose { raise: 0.2 + 3.5 * squat_depth, bend: 0.3 }; 2];
        }
        WAVE_LEFT | WAVE_RIGHT => {
            let wave = ArmPose { raise: 2.4, bend: 0.3 + 0.6 * a * s };
            let idx = usize::from(m.class == WAVE_RIGHT);
            arms[idx] = wave;
        }
        RUN_IN_PLACE => {
            lifts = [a * s.max(0.0), a * (-s).max(0.0)];
            body_dy = -0.02 * s.abs();
            arms = [
                ArmPose { raise: 0.2 + 0.35 * (-s).max(0.0), bend: 1.2 },
                ArmPose { raise: 0.2 + 0.35 * s.max(0.0), bend: 1.2 },
            ];
        }
        IDLE_WITH_PROP => {
            body_dx = 0.015 * s;
        }
        _ => {}
    }

    let mut k = [(0.0, 0.0); NUM_KEYPOINTS];
    let hip_y = squat_depth;
    k[kp::LEFT_HIP] = (HIP_HALF, hip_y);
    k[kp::RIGHT_HIP] = (-HIP_HALF, hip_y);
    let sy = hip_y + SHOULDER_Y;
    k[kp::LEFT_SHOULDER] = (SHOULDER_HALF, sy);
    k[kp::RIGHT_SHOULDER] = (-SHOULDER_HALF, sy);
    let head_y = hip_y + HEAD_CENTER_Y;
    k[kp::NOSE] = (0.0, head_y + 0.01);
    k[kp::LEFT_EYE] = (0.025, head_y - 0.015);
    k[kp::RIGHT_EYE] = (-0.025, head_y - 0.015);
    k[kp::LEFT_EAR] = (0.05, head_y);
    k[kp::RIGHT_EAR] = (-0.05, head_y);
    place_arm(&mut k, 1.0, arms[0]);
    place_arm(&mut k, -1.0, arms[1]);

    let legs = [(1.0, kp::LEFT_HIP, kp::LEFT_KNEE, kp::LEFT_ANKLE), (-1.0, kp::RIGHT_HIP, kp::RIGHT_KNEE, kp::RIGHT_ANKLE)];
    for (i, (side, hip, knee, ankle)) in legs.into_iter().enumerate() {
        let h = k[hip];
        if squat_depth > 0.0 {
            let planted = (side * (HIP_HALF + 0.01), THIGH + SHIN);
            k[knee] = knee_ik(h, planted, side);
            k[ankle] = planted;
        } else {
            k[knee] = (h.0 + side * 0.01, h.1 + THIGH * lifts[i].cos());
            k[ankle] = (k[knee].0, k[knee].1 + SHIN);
        }
    }
    for p in &mut k {
        p.0 += body_dx;
        p.1 += body_dy;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn motion(class: usize) -> Motion {
        Motion { class, period: 8.0, phase: 0.3, amplitude: 1.0 }
    }

    #[test]
    fn limb_lengths_are_preserved() {
        for class in 0..6 {
            for t in 0..8 {
                let k = keypoints_at(&motion(class), t);
                let len = |a: usize, b: usize| (k[a].0 - k[b].0).hypot(k[a].1 - k[b].1);
                assert!((len(kp::LEFT_SHOULDER, kp::LEFT_ELBOW) - UPPER_ARM).abs() < 1e-9);
                assert!((len(kp::RIGHT_ELBOW, kp::RIGHT_WRIST) - FOREARM).abs() < 1e-9);
                let thigh = len(kp::LEFT_HIP, kp::LEFT_KNEE);
                if class == RUN_IN_PLACE {
                    // Knee lifts towards the camera shorten the projected thigh.
                    assert!(thigh <= THIGH + 1e-2);
                } else {
                    assert!((thigh - THIGH).abs() < 1e-2, "class {class}");
                }
                assert!((len(kp::RIGHT_KNEE, kp::RIGHT_ANKLE) - SHIN).abs() < 1e-2, "class {class}");
            }
        }
    }

    #[test]
    fn waves_are_mirror_images() {
        let l = keypoints_at(&motion(WAVE_LEFT), 3);
        let r = keypoints_at(&motion(WAVE_RIGHT), 3);
        for (i, &j) in crate::pose::FLIP_INDEX.iter().enumerate() {
            assert!((l[i].0 + r[j].0).abs() < 1e-12 && (l[i].1 - r[j].1).abs() < 1e-12);
        }
        assert!(l[kp::LEFT_WRIST].1 < l[kp::LEFT_SHOULDER].1, "left wrist raised");
        assert!(l[kp::RIGHT_WRIST].1 > l[kp::RIGHT_SHOULDER].1, "right arm down");
    }

    #[test]
    fn only_the_prop_class_is_nearly_static() {
        let spread = |class: usize| {
            let m = motion(class);
            let k0 = keypoints_at(&m, 0);
            (1..8).map(|t| {
                let k = keypoints_at(&m, t);
                k.iter().zip(&k0).map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1)).fold(0.0, f64::max)
            }).fold(0.0, f64::max)
        };
        assert!(spread(IDLE_WITH_PROP) < 0.04);
        for class in [JUMP, SQUAT, WAVE_LEFT, RUN_IN_PLACE] {
            assert!(spread(class) > 0.08, "class {class}");
        }
    }
}
