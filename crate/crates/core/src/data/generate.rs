use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::figure::{keypoints_at, Motion, Point, HEAD_RADIUS, LIMB_RADIUS};
use super::spec::{BackgroundMode, SyntheticSpec, IDLE_WITH_PROP};
use super::{ClipSample, Dataset};
use crate::error::{Error, Result};
use crate::imageio::quantize;
use crate::pose::{fill_capsule, Endpoint, fill_disc, kp, Keypoint, Person, PoseFrame, Rgb, SKELETON};
use crate::rng;
use crate::tensor::Tensor;

const NOISE_STD: f64 = 0.01;
const MARGIN: f64 = 1.0;

fn background(spec: &SyntheticSpec, r: &mut rng::Rng) -> Vec<f32> {
    let s = spec.frame_size;
    let base: [f64; 3] = std::array::from_fn(|_| r.random_range(0.25..0.75));
    let mut bg = vec![0.0f32; s * s * 3];
    let waves: Vec<[f64; 5]> = match spec.background {
        BackgroundMode::Plain => Vec::new(),
        _ => (0..3)
            .map(|_| {
                let c = r.random_range(0..3) as f64;
                [r.random_range(-0.4..0.4), r.random_range(-0.4..0.4), r.random_range(0.0..2.0 * PI), r.random_range(0.04..0.1), c]
            })
            .collect(),
    };
    for y in 0..s {
        for x in 0..s {
            for c in 0..3 {
                let tex: f64 = waves
                    .iter()
                    .filter(|w| w[4] as usize == c)
                    .map(|w| w[3] * (w[0] * x as f64 + w[1] * y as f64 + w[2]).sin())
                    .sum();
                bg[(y * s + x) * 3 + c] = (base[c] + tex) as f32;
            }
        }
    }
    if spec.background == BackgroundMode::Cluttered {
        for _ in 0..r.random_range(3..6) {
            let color = saturated(r);
            let (w, h) = (r.random_range(2..s / 5), r.random_range(2..s / 5));
            let (x0, y0) = (r.random_range(0..s - w), r.random_range(0..s - h));
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    bg[(y * s + x) * 3..(y * s + x) * 3 + 3].copy_from_slice(&color);
                }
            }
        }
    }
    bg
}

fn saturated(r: &mut rng::Rng) -> Rgb {
    let hi = r.random_range(0..3);
    std::array::from_fn(|c| if c == hi { r.random_range(0.8..1.0) } else { r.random_range(0.0..0.3) })
}

struct Prop {
    pos: Point,
    vel: Point,
    radius: f64,
    color: Rgb,
}

impl Prop {
    fn at(&self, t: usize, size: f64) -> Point {
        let bounce = |p: f64, v: f64| {
            let (lo, hi) = (self.radius, size - 1.0 - self.radius);
            let span = hi - lo;
            let mut q = (p - lo + v * t as f64).rem_euclid(2.0 * span);
            if q > span {
                q = 2.0 * span - q;
            }
            lo + q
        };
        (bounce(self.pos.0, self.vel.0), bounce(self.pos.1, self.vel.1))
    }
}

fn range_or_err(lo: f64, hi: f64, r: &mut rng::Rng) -> Result<f64> {
    if lo > hi {
        return Err(Error::config("frame too small for the figure"));
    }
    Ok(if lo == hi { lo } else { r.random_range(lo..hi) })
}

fn render_clip(spec: &SyntheticSpec, id: String, label: usize, r: &mut rng::Rng) -> Result<ClipSample> {
    let s = spec.frame_size;
    let sf = s as f64;
    let bg = background(spec, r);
    let bg_mean = bg.iter().map(|&v| f64::from(v)).sum::<f64>() / bg.len() as f64;
    let gray = if bg_mean > 0.5 { r.random_range(0.02..0.2) } else { r.random_range(0.8..0.98) };
    let tint: [f64; 3] = std::array::from_fn(|_| r.random_range(-0.04..0.04));
    let body: Rgb = std::array::from_fn(|c| (gray + tint[c]) as f32);
    let face_shift = if gray > 0.5 { -0.18 } else { 0.18 };
    let face: Rgb = body.map(|v| v + face_shift);

    let motion = Motion {
        class: label,
        period: r.random_range(5.0..9.0),
        phase: r.random_range(0.0..2.0 * PI),
        amplitude: r.random_range(0.8..1.2),
    };
    let facing_front = r.random_bool(0.5);
    let flip = if facing_front { 1.0 } else { -1.0 };
    let h = r.random_range(0.55..0.68) * sf;
    let canon: Vec<[Point; 17]> = (0..spec.clip_length).map(|t| keypoints_at(&motion, t)).collect();

    let mut xr = (f64::MAX, f64::MIN);
    let mut yr = (f64::MAX, f64::MIN);
    for k in &canon {
        for p in k {
            xr = (xr.0.min(flip * p.0 * h), xr.1.max(flip * p.0 * h));
            yr = (yr.0.min(p.1 * h), yr.1.max(p.1 * h));
        }
        let head_top = (k[kp::NOSE].1 - 0.01 - HEAD_RADIUS) * h;
        yr.0 = yr.0.min(head_top);
    }
    let pad = LIMB_RADIUS * h;
    let cx = range_or_err(MARGIN + pad - xr.0, sf - 1.0 - MARGIN - pad - xr.1, r)?;
    let cy = range_or_err(MARGIN - yr.0, sf - 1.0 - MARGIN - pad - yr.1, r)?;
    let to_img = |p: Point| (cx + flip * p.0 * h, cy + p.1 * h);

    let prop = (label == IDLE_WITH_PROP).then(|| {
        let radius = (0.07 * sf).max(1.5);
        let angle = r.random_range(0.0..2.0 * PI);
        let speed = r.random_range(1.5..2.5);
        Prop {
            pos: (r.random_range(radius..sf - 1.0 - radius), r.random_range(radius..sf - 1.0 - radius)),
            vel: (speed * angle.cos(), speed * angle.sin()),
            radius,
            color: saturated(r),
        }
    });
    let distractor = r.random_bool(spec.distractor_rate).then(|| {
        let size = r.random_range(0.12..0.2) * sf;
        let c = (r.random_range(size..sf - size), r.random_range(size..sf - size));
        (c, size / 2.0, saturated(r))
    });

    let noise = Normal::new(0.0, NOISE_STD).map_err(|e| Error::config(e.to_string()))?;
    let limb_r = (LIMB_RADIUS * h).max(0.75);
    let mut frames = Vec::with_capacity(spec.clip_length * s * s * 3);
    let mut poses = Vec::with_capacity(spec.clip_length);
    for (t, k) in canon.iter().enumerate() {
        let mut canvas = bg.clone();
        if let Some((c, rad, color)) = distractor {
            fill_disc(&mut canvas, s, s, c, rad, color);
        }
        if let Some(p) = &prop {
            fill_disc(&mut canvas, s, s, p.at(t, sf), p.radius, p.color);
        }
        let img: Vec<Point> = k.iter().map(|&p| to_img(p)).collect();
        for limb in SKELETON.iter().filter(|l| l.name != "head") {
            let (a, b) = match (limb.a, limb.b) {
                (Endpoint::Keypoint(a), Endpoint::Keypoint(b)) => (img[a], img[b]),
                _ => continue,
            };
            fill_capsule(&mut canvas, s, s, a, b, limb_r, body);
        }
        let neck = ((img[kp::LEFT_SHOULDER].0 + img[kp::RIGHT_SHOULDER].0) / 2.0, img[kp::LEFT_SHOULDER].1);
        let head = to_img((k[kp::NOSE].0, k[kp::NOSE].1 - 0.01));
        fill_capsule(&mut canvas, s, s, neck, head, limb_r, body);
        fill_disc(&mut canvas, s, s, head, HEAD_RADIUS * h, body);
        if facing_front {
            fill_disc(&mut canvas, s, s, (head.0, head.1 + 0.015 * h), (0.035 * h).max(0.6), face);
        }
        frames.extend(canvas.iter().map(|&v| quantize(v + noise.sample(r) as f32)));

        let keypoints: Vec<Keypoint> =
            img.iter().map(|&(x, y)| Keypoint { x: x as f32, y: y as f32, confidence: 1.0 }).collect();
        let kb = Person::keypoint_bbox(&keypoints);
        let bpad = (HEAD_RADIUS * h) as f32;
        let bbox = [
            (kb[0] - bpad).max(0.0),
            (kb[1] - bpad).max(0.0),
            (kb[2] + bpad).min(sf as f32 - 1.0),
            (kb[3] + bpad).min(sf as f32 - 1.0),
        ];
        poses.push(PoseFrame { persons: vec![Person { bbox, keypoints }] });
    }
    Ok(ClipSample { id, label, frames: Tensor::new([spec.clip_length, s, s, 3], frames)?, poses })
}

fn generate_split(spec: &SyntheticSpec, split: &str, per_class: usize) -> Result<Dataset> {
    let jobs: Vec<(usize, usize)> = (0..spec.num_classes).flat_map(|c| (0..per_class).map(move |i| (c, i))).collect();
    let mut clips = jobs
        .par_iter()
        .map(|&(label, i)| {
            let id = format!("{split}-c{label}-{i:04}");
            let mut r = rng::stream(spec.seed, &format!("data/{id}"));
            render_clip(spec, id, label, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;

    let dropped = (spec.pose_dropout_rate * per_class as f64).round() as usize;
    for label in 0..spec.num_classes {
        let mut order: Vec<usize> = (0..per_class).collect();
        order.shuffle(&mut rng::stream(spec.seed, &format!("data/dropout/{split}/{label}")));
        for &i in &order[..dropped] {
            clips[label * per_class + i].poses.iter_mut().for_each(|p| p.persons.clear());
        }
    }
    Ok(Dataset {
        class_names: spec.class_names().iter().map(|s| s.to_string()).collect(),
        mirror_labels: spec.mirror_labels(),
        clips,
    })
}

/// Renders the train and validation splits. Each clip draws from its own
/// random stream, so output does not depend on thread scheduling.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    Ok((generate_split(spec, "train", spec.train_clips_per_class)?, generate_split(spec, "val", spec.val_clips_per_class)?))
}
