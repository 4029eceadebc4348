use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClipSample;
use crate::error::{Error, Result};
use crate::pose::{Keypoint, Person, PoseFrame, FLIP_INDEX};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub mirror: bool,
    /// Largest absolute brightness offset.
    pub brightness: f32,
    pub contrast_min: f32,
    pub contrast_max: f32,
    /// Crop side as a fraction of the shorter frame side.
    pub crop_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { mirror: true, brightness: 0.125, contrast_min: 0.8, contrast_max: 1.2, crop_frac: 0.875 }
    }
}

/// Frame padding used when a clip is shorter than the model input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    /// Repeat the last frame at the end.
    #[default]
    Last,
    /// Repeat the first frame at the start.
    First,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// One concrete spatio-temporal transform of a clip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct View {
    pub crop: Crop,
    /// Applied after cropping.
    pub mirror: bool,
    pub brightness: f32,
    pub contrast: f32,
    /// Target length and padding rule, or keep the clip length.
    pub length: Option<(usize, PadMode)>,
}

pub fn crop_side(height: usize, width: usize, frac: f64) -> usize {
    ((frac * height.min(width) as f64).round() as usize).clamp(1, height.min(width))
}

impl View {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            crop: Crop { x: 0, y: 0, width, height },
            mirror: false,
            brightness: 0.0,
            contrast: 1.0,
            length: None,
        }
    }

    /// Deterministic central square crop of side `side`.
    pub fn center(height: usize, width: usize, side: usize) -> Self {
        let crop = Crop { x: (width - side) / 2, y: (height - side) / 2, width: side, height: side };
        Self { crop, ..Self::identity(height, width) }
    }

    pub fn sample(cfg: &AugmentConfig, height: usize, width: usize, r: &mut impl Rng) -> Self {
        let side = crop_side(height, width, cfg.crop_frac);
        let crop = Crop {
            x: r.random_range(0..=width - side),
            y: r.random_range(0..=height - side),
            width: side,
            height: side,
        };
        let mirror = cfg.mirror && r.random_bool(0.5);
        let brightness = if cfg.brightness > 0.0 { r.random_range(-cfg.brightness..=cfg.brightness) } else { 0.0 };
        let contrast = if cfg.contrast_max > cfg.contrast_min {
            r.random_range(cfg.contrast_min..=cfg.contrast_max)
        } else {
            cfg.contrast_min
        };
        Self { crop, mirror, brightness, contrast, length: None }
    }

    pub fn with_length(mut self, target: usize, pad: PadMode) -> Self {
        self.length = Some((target, pad));
        self
    }

    /// Crops and mirrors a `[T, H, W, C]` tensor. With `negate_channel`, that
    /// channel flips sign under mirroring (horizontal flow).
    pub fn spatial(&self, t: &Tensor, negate_channel: Option<usize>) -> Result<Tensor> {
        let s = t.shape();
        if s.len() != 4 {
            return Err(Error::shape(format!("expected [T,H,W,C], got {s:?}")));
        }
        let (frames, h, w, c) = (s[0], s[1], s[2], s[3]);
        let Crop { x, y, width, height } = self.crop;
        if x + width > w || y + height > h {
            return Err(Error::shape(format!("crop {:?} outside {h}x{w}", self.crop)));
        }
        let d = t.data();
        let mut out = Vec::with_capacity(frames * height * width * c);
        for f in 0..frames {
            for i in 0..height {
                for j in 0..width {
                    let sj = if self.mirror { width - 1 - j } else { j };
                    let src = ((f * h + y + i) * w + x + sj) * c;
                    for k in 0..c {
                        let v = d[src + k];
                        out.push(if self.mirror && negate_channel == Some(k) { -v } else { v });
                    }
                }
            }
        }
        let out = Tensor::new([frames, height, width, c], out)?;
        Ok(match self.length {
            Some((target, pad)) => fit_length(&out, target, pad)?,
            None => out,
        })
    }

    /// Spatial transform plus brightness/contrast, clamped to `[0,1]`.
    pub fn frames(&self, frames: &Tensor) -> Result<Tensor> {
        let out = self.spatial(frames, None)?;
        if self.brightness == 0.0 && self.contrast == 1.0 {
            return Ok(out);
        }
        let mean = out.data().iter().map(|&v| f64::from(v)).sum::<f64>() / out.numel() as f64;
        let offset = mean as f32 * (1.0 - self.contrast) + self.brightness;
        Ok(out.map(|v| (v * self.contrast + offset).clamp(0.0, 1.0)))
    }

    pub fn poses(&self, poses: &[PoseFrame]) -> Vec<PoseFrame> {
        let Crop { x, y, width, height } = self.crop;
        let (x, y) = (x as f32, y as f32);
        let (wf, hf) = (width as f32, height as f32);
        let fx = |v: f32| if self.mirror { wf - 1.0 - (v - x) } else { v - x };
        let person = |p: &Person| {
            let keypoints: Vec<Keypoint> = (0..p.keypoints.len())
                .map(|i| {
                    let src = if self.mirror { FLIP_INDEX[i] } else { i };
                    let k = p.keypoints[src];
                    let (nx, ny) = (fx(k.x), k.y - y);
                    let inside = (0.0..=wf - 1.0).contains(&nx) && (0.0..=hf - 1.0).contains(&ny);
                    Keypoint { x: nx, y: ny, confidence: if inside { k.confidence } else { 0.0 } }
                })
                .collect();
            let (a, b) = (fx(p.bbox[0]), fx(p.bbox[2]));
            let bbox = [
                a.min(b).clamp(0.0, wf - 1.0),
                (p.bbox[1] - y).clamp(0.0, hf - 1.0),
                a.max(b).clamp(0.0, wf - 1.0),
                (p.bbox[3] - y).clamp(0.0, hf - 1.0),
            ];
            Person { bbox, keypoints }
        };
        let out: Vec<PoseFrame> =
            poses.iter().map(|f| PoseFrame { persons: f.persons.iter().map(person).collect() }).collect();
        match self.length {
            Some((target, pad)) => fit_indices(out.len(), target, pad).into_iter().map(|i| out[i].clone()).collect(),
            None => out,
        }
    }

    pub fn label(&self, label: usize, mirror_labels: &[usize]) -> usize {
        if self.mirror {
            mirror_labels.get(label).copied().unwrap_or(label)
        } else {
            label
        }
    }

    pub fn apply(&self, clip: &ClipSample, mirror_labels: &[usize]) -> Result<ClipSample> {
        Ok(ClipSample {
            id: clip.id.clone(),
            label: self.label(clip.label, mirror_labels),
            frames: self.frames(&clip.frames)?,
            poses: self.poses(&clip.poses),
        })
    }
}

/// Source frame index for each output step when fitting `len` frames to
/// `target`: padding repeats an edge frame, longer clips keep the central window.
pub fn fit_indices(len: usize, target: usize, pad: PadMode) -> Vec<usize> {
    if len >= target {
        let start = (len - target) / 2;
        return (start..start + target).collect();
    }
    let extra = target - len;
    match pad {
        PadMode::Last => (0..len).chain(std::iter::repeat_n(len - 1, extra)).collect(),
        PadMode::First => std::iter::repeat_n(0, extra).chain(0..len).collect(),
    }
}

pub fn fit_length(t: &Tensor, target: usize, pad: PadMode) -> Result<Tensor> {
    if t.shape()[0] == target {
        return Ok(t.clone());
    }
    let parts = fit_indices(t.shape()[0], target, pad)
        .into_iter()
        .map(|i| t.slice_outer(i))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&parts)
}

/// Random mirror, brightness, contrast and crop; the label follows the mirror.
pub fn augment(clip: &ClipSample, cfg: &AugmentConfig, mirror_labels: &[usize], r: &mut impl Rng) -> Result<ClipSample> {
    let s = clip.frames.shape();
    View::sample(cfg, s[1], s[2], r).apply(clip, mirror_labels)
}

/// Central square crop of side `side` and temporal fit to `target_t` frames.
pub fn eval_crop_and_pad(clip: &ClipSample, side: usize, target_t: usize, pad: PadMode) -> Result<ClipSample> {
    let s = clip.frames.shape();
    if side > s[1].min(s[2]) {
        return Err(Error::shape(format!("crop {side} larger than frame {}x{}", s[1], s[2])));
    }
    View::center(s[1], s[2], side).with_length(target_t, pad).apply(clip, &[])
}
