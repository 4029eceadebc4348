use serde::{Deserialize, Serialize};

use super::raster::{fill_capsule, fill_disc, Rgb};
use super::topology::{Endpoint, Limb, SKELETON};
use super::types::{Keypoint, Person, PoseFrame};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    RgbFrame,
    Black,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Marker {
    /// Thick line segments along limbs.
    Bar,
    /// Filled discs at both limb endpoints.
    Dot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaletteKind {
    /// One color per body part group.
    Coarse6,
    /// One color per limb.
    Fine13,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub background: Background,
    pub marker: Marker,
    pub palette: PaletteKind,
    pub ratio_aware: bool,
    /// Line thickness as a fraction of the person's bbox diagonal (ratio-aware mode).
    pub base_thickness_frac: f64,
    pub fixed_thickness_px: u32,
    pub confidence_threshold: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            background: Background::RgbFrame,
            marker: Marker::Bar,
            palette: PaletteKind::Fine13,
            ratio_aware: true,
            base_thickness_frac: 0.02,
            fixed_thickness_px: 3,
            confidence_threshold: 0.3,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_thickness_frac > 0.0 && self.base_thickness_frac.is_finite()) || self.fixed_thickness_px == 0 {
            return Err(Error::config("render thickness parameters must be positive"));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::config("confidence threshold must lie in [0,1]"));
        }
        Ok(())
    }

    /// Line thickness in pixels for a person.
    pub fn thickness(&self, person: &Person) -> u32 {
        if self.ratio_aware {
            (self.base_thickness_frac * person.bbox_diagonal()).round().max(1.0) as u32
        } else {
            self.fixed_thickness_px
        }
    }
}

const COARSE6: [Rgb; 6] = [
    [1.0, 0.0, 0.0], // left arm
    [0.0, 1.0, 0.0], // right arm
    [1.0, 1.0, 0.0], // body
    [1.0, 0.0, 1.0], // head
    [0.0, 0.0, 1.0], // left leg
    [0.0, 1.0, 1.0], // right leg
];

const FINE13: [Rgb; 13] = [
    [1.0, 0.0, 0.0],
    [1.0, 0.5, 0.0],
    [0.0, 1.0, 0.0],
    [0.5, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.5, 1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, 0.5],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.5, 0.0, 1.0],
    [1.0, 0.0, 0.5],
    [1.0, 1.0, 1.0],
];

/// Colors of the chosen scheme: 6 indexed by [`super::CoarseGroup::index`],
/// or 13 indexed by limb color slot.
pub fn palette(kind: PaletteKind) -> Vec<Rgb> {
    match kind {
        PaletteKind::Coarse6 => COARSE6.to_vec(),
        PaletteKind::Fine13 => FINE13.to_vec(),
    }
}

pub fn limb_color(limb: &Limb, kind: PaletteKind) -> Rgb {
    match kind {
        PaletteKind::Coarse6 => COARSE6[limb.group.index()],
        PaletteKind::Fine13 => FINE13[limb.fine_color],
    }
}

/// Counters accumulated while rendering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    /// Limbs skipped because an endpoint was NaN.
    pub nan_limbs: usize,
}

fn resolve(keypoints: &[Keypoint], e: Endpoint) -> (f64, f64, f64) {
    match e {
        Endpoint::Keypoint(i) => {
            let k = keypoints[i];
            (f64::from(k.x), f64::from(k.y), f64::from(k.confidence))
        }
        Endpoint::Midpoint(i, j) => {
            let (a, b) = (keypoints[i], keypoints[j]);
            (
                f64::from(a.x + b.x) / 2.0,
                f64::from(a.y + b.y) / 2.0,
                f64::from(a.confidence.min(b.confidence)),
            )
        }
    }
}

/// Draws one person's skeleton into a `[H, W, 3]` buffer.
pub fn draw_person(
    canvas: &mut [f32],
    height: usize,
    width: usize,
    person: &Person,
    spec: &RenderSpec,
    stats: &mut RenderStats,
) {
    let thickness = f64::from(spec.thickness(person));
    for limb in &SKELETON {
        let (ax, ay, ac) = resolve(&person.keypoints, limb.a);
        let (bx, by, bc) = resolve(&person.keypoints, limb.b);
        if [ax, ay, bx, by].iter().any(|v| v.is_nan()) {
            stats.nan_limbs += 1;
            continue;
        }
        if ac < spec.confidence_threshold || bc < spec.confidence_threshold {
            continue;
        }
        let color = limb_color(limb, spec.palette);
        match spec.marker {
            Marker::Bar => {
                fill_capsule(canvas, height, width, (ax, ay), (bx, by), thickness / 2.0, color);
            }
            Marker::Dot => {
                fill_disc(canvas, height, width, (ax, ay), thickness, color);
                fill_disc(canvas, height, width, (bx, by), thickness, color);
            }
        }
    }
}

/// Rasterizes `poses` over `frame` (or over black). `size` is `(height, width)`
/// and must match the frame when one is given.
pub fn render_pose_frame(
    frame: Option<&Tensor>,
    size: (usize, usize),
    poses: &PoseFrame,
    spec: &RenderSpec,
    stats: &mut RenderStats,
) -> Result<Tensor> {
    let (height, width) = size;
    if let Some(f) = frame {
        if f.shape() != [height, width, 3] {
            return Err(Error::shape(format!("frame {:?} for canvas {height}x{width}", f.shape())));
        }
    }
    let mut canvas = match (spec.background, frame) {
        (Background::RgbFrame, Some(f)) => f.data().to_vec(),
        (Background::RgbFrame, None) => {
            return Err(Error::contract("rgb-frame background requires a frame"));
        }
        (Background::Black, _) => vec![0.0; height * width * 3],
    };
    for person in &poses.persons {
        draw_person(&mut canvas, height, width, person, spec, stats);
    }
    Tensor::new([height, width, 3], canvas)
}

/// Renders every frame of a `[T, H, W, 3]` clip with its pose frame.
pub fn render_clip(frames: &Tensor, poses: &[PoseFrame], spec: &RenderSpec) -> Result<(Tensor, RenderStats)> {
    let shape = frames.shape();
    if shape.len() != 4 || shape[3] != 3 {
        return Err(Error::shape(format!("clip must be [T,H,W,3], got {shape:?}")));
    }
    if shape[0] != poses.len() {
        return Err(Error::shape(format!("{} frames but {} pose frames", shape[0], poses.len())));
    }
    let (h, w) = (shape[1], shape[2]);
    let per_frame = h * w * 3;
    let mut stats = RenderStats::default();
    let mut data = match spec.background {
        Background::RgbFrame => frames.data().to_vec(),
        Background::Black => vec![0.0; frames.numel()],
    };
    for (t, pose) in poses.iter().enumerate() {
        let canvas = &mut data[t * per_frame..(t + 1) * per_frame];
        for person in &pose.persons {
            draw_person(canvas, h, w, person, spec, &mut stats);
        }
    }
    Ok((Tensor::new(shape.to_vec(), data)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::topology::CoarseGroup;
    use std::collections::HashSet;

    fn person_with_bbox(diag_scale: f32) -> Person {
        // 60 x 80 box has diagonal 100.
        Person {
            bbox: [0.0, 0.0, 60.0 * diag_scale, 80.0 * diag_scale],
            keypoints: vec![Keypoint { x: 5.0, y: 5.0, confidence: 1.0 }; 17],
        }
    }

    #[test]
    fn ratio_aware_thickness_scales_with_bbox() {
        let spec = RenderSpec { ratio_aware: true, base_thickness_frac: 0.02, ..Default::default() };
        assert_eq!(spec.thickness(&person_with_bbox(1.0)), 2);
        assert_eq!(spec.thickness(&person_with_bbox(2.0)), 4);
        assert_eq!(spec.thickness(&person_with_bbox(0.01)), 1);
        let fixed = RenderSpec { ratio_aware: false, fixed_thickness_px: 3, ..Default::default() };
        assert_eq!(fixed.thickness(&person_with_bbox(2.0)), 3);
    }

    #[test]
    fn palette_sizes_and_distinct_colors() {
        for (kind, n) in [(PaletteKind::Coarse6, 6), (PaletteKind::Fine13, 13)] {
            let p = palette(kind);
            assert_eq!(p.len(), n);
            let distinct: HashSet<_> = p.iter().map(|c| c.map(f32::to_bits)).collect();
            assert_eq!(distinct.len(), n);
        }
    }

    #[test]
    fn left_and_right_limbs_get_different_colors() {
        for kind in [PaletteKind::Coarse6, PaletteKind::Fine13] {
            for limb in SKELETON.iter() {
                let mirror = if limb.name.starts_with("left") {
                    limb.name.replacen("left", "right", 1)
                } else {
                    limb.name.replacen("right", "left", 1)
                };
                if mirror == limb.name {
                    continue;
                }
                let other = SKELETON.iter().find(|l| l.name == mirror).unwrap();
                if kind == PaletteKind::Coarse6 && limb.group == CoarseGroup::Body {
                    continue;
                }
                assert_ne!(limb_color(limb, kind), limb_color(other, kind), "{} / {}", limb.name, other.name);
            }
        }
    }

    #[test]
    fn missing_frame_with_rgb_background_is_contract_error() {
        let r = render_pose_frame(None, (4, 4), &PoseFrame::empty(), &RenderSpec::default(), &mut RenderStats::default());
        assert!(matches!(r, Err(Error::Contract(_))));
        let spec = RenderSpec { background: Background::Black, ..Default::default() };
        let r = render_pose_frame(None, (4, 4), &PoseFrame::empty(), &spec, &mut RenderStats::default()).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nan_keypoints_skip_limbs_and_count() {
        let mut person = person_with_bbox(0.1);
        person.keypoints[9].x = f32::NAN; // left wrist
        let poses = PoseFrame { persons: vec![person] };
        let spec = RenderSpec { background: Background::Black, ..Default::default() };
        let mut stats = RenderStats::default();
        render_pose_frame(None, (16, 16), &poses, &spec, &mut stats).unwrap();
        assert_eq!(stats.nan_limbs, 1);
    }

    #[test]
    fn low_confidence_limbs_are_not_drawn() {
        let mut person = person_with_bbox(0.1);
        person.keypoints.iter_mut().for_each(|k| k.confidence = 0.1);
        let poses = PoseFrame { persons: vec![person] };
        let spec = RenderSpec { background: Background::Black, ..Default::default() };
        let out = render_pose_frame(None, (16, 16), &poses, &spec, &mut RenderStats::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clip_count_mismatch_is_shape_error() {
        let frames = Tensor::zeros([2, 4, 4, 3]);
        assert!(matches!(render_clip(&frames, &[PoseFrame::empty()], &RenderSpec::default()), Err(Error::Shape(_))));
    }
}
