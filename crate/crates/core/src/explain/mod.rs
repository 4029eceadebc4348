//! Grad-CAM response maps over stage activations.

use crate::error::{Error, Result};
use crate::nn::{BackboneConfig, Mode, ModelParams, Network};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMap {
    /// `[T, h, w]`, max-normalized to `[0, 1]`.
    pub map: Tensor,
    pub class: usize,
    pub stage: String,
}

/// Class-activation map from activations `A` and gradients `dA`, both
/// `[T, h, w, C]`: channel weights are `dA` averaged over `T, h, w`, and the
/// map is `relu(sum_c w_c A_c)` scaled so its maximum is 1.
pub fn cam_from_gradients(activation: &Tensor, grad: &Tensor) -> Result<Tensor> {
    let s = activation.shape();
    if s.len() != 4 || grad.shape() != s {
        return Err(Error::shape(format!("cam needs equal [T,h,w,C] tensors, got {s:?} and {:?}", grad.shape())));
    }
    let c = s[3];
    let positions = activation.numel() / c;
    let mut weights = vec![0.0f64; c];
    for row in grad.data().chunks(c) {
        weights.iter_mut().zip(row).for_each(|(w, &g)| *w += f64::from(g));
    }
    weights.iter_mut().for_each(|w| *w /= positions as f64);
    let raw: Vec<f64> = activation
        .data()
        .chunks(c)
        .map(|row| row.iter().zip(&weights).map(|(&a, w)| f64::from(a) * w).sum::<f64>().max(0.0))
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    Tensor::new([s[0], s[1], s[2]], raw.iter().map(|&v| (v * scale) as f32).collect())
}

/// Grad-CAM of one clip `[T, H, W, C]` at the output of `stage`. The class
/// defaults to the predicted one.
pub fn grad_cam(
    cfg: &BackboneConfig,
    params: &ModelParams,
    clip: &Tensor,
    class: Option<usize>,
    stage: &str,
) -> Result<ResponseMap> {
    let net = Network::new(cfg, params)?;
    let mut shape = vec![1];
    shape.extend_from_slice(clip.shape());
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape, false);
    // A differentiable input makes every activation track gradients.
    let x = tape.leaf(clip.clone().reshape(shape)?, true);
    let fwd = net.forward(&mut tape, &bound, x, Mode::Eval)?;
    let act = fwd.stage(stage)?;
    let logits = tape.value(fwd.logits).data().to_vec();
    let class = match class {
        Some(c) if c >= logits.len() => return Err(Error::Index(format!("class {c} of {}", logits.len()))),
        Some(c) => c,
        None => logits.iter().enumerate().fold(0, |b, (j, &v)| if v > logits[b] { j } else { b }),
    };
    let onehot = tape.constant(Tensor::from_fn([1, logits.len()], |j| if j == class { 1.0 } else { 0.0 }));
    let picked = tape.mul(fwd.logits, onehot)?;
    let score = tape.sum_all(picked);
    tape.backward(score)?;
    let a = tape.value(act).clone();
    let g = tape.grad(act).ok_or_else(|| Error::contract("stage activation has no gradient"))?;
    let inner = a.shape()[1..].to_vec();
    let map = cam_from_gradients(&a.reshape(inner.clone())?, &g.reshape(inner)?)?;
    Ok(ResponseMap { map, class, stage: stage.to_string() })
}

/// Bilinear resize of each `[h, w]` slice of a `[T, h, w]` map to `height x width`.
pub fn upsample(map: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let s = map.shape();
    if s.len() != 3 {
        return Err(Error::shape(format!("map must be [T,h,w], got {s:?}")));
    }
    let (t, h, w) = (s[0], s[1], s[2]);
    let d = map.data();
    let coord = |i: usize, out: usize, src: usize| {
        let c = ((i as f64 + 0.5) * src as f64 / out as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let lo = c.floor() as usize;
        (lo, (lo + 1).min(src - 1), c - lo as f64)
    };
    let mut out = Vec::with_capacity(t * height * width);
    for f in 0..t {
        for y in 0..height {
            let (y0, y1, fy) = coord(y, height, h);
            for x in 0..width {
                let (x0, x1, fx) = coord(x, width, w);
                let at = |yy: usize, xx: usize| f64::from(d[(f * h + yy) * w + xx]);
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    Tensor::new([t, height, width], out)
}

/// Jet-style heat colormap on `[0, 1]`.
pub fn heat_color(v: f32) -> [f32; 3] {
    let v = v.clamp(0.0, 1.0);
    let ramp = |center: f32| (1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0);
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

pub const OVERLAY_ALPHA: f32 = 0.5;

/// Upsamples `map` to the frames' size, colorizes it and blends it over
/// `frames` (`[T, H, W, 3]`) with weight [`OVERLAY_ALPHA`].
pub fn overlay(map: &Tensor, frames: &Tensor) -> Result<Tensor> {
    let fs = frames.shape();
    if fs.len() != 4 || fs[3] != 3 || map.rank() != 3 || map.shape()[0] != fs[0] {
        return Err(Error::shape(format!("overlay of map {:?} on frames {fs:?}", map.shape())));
    }
    let up = upsample(map, fs[1], fs[2])?;
    let d = frames.data();
    let mut out = Vec::with_capacity(frames.numel());
    for (i, &m) in up.data().iter().enumerate() {
        let c = heat_color(m);
        for k in 0..3 {
            out.push(OVERLAY_ALPHA * c[k] + (1.0 - OVERLAY_ALPHA) * d[3 * i + k]);
        }
    }
    Tensor::new(fs.to_vec(), out)
}

/// Fraction of the upsampled map's mass inside per-frame boxes
/// `[x0, y0, x1, y1]` (inclusive pixel bounds), and the fraction of pixels
/// those boxes cover. Frames without a box are left out of both.
pub fn mass_in_boxes(map: &Tensor, boxes: &[Option<[f32; 4]>], height: usize, width: usize) -> Result<(f64, f64)> {
    let up = upsample(map, height, width)?;
    if boxes.len() != up.shape()[0] {
        return Err(Error::shape(format!("{} boxes for {} frames", boxes.len(), up.shape()[0])));
    }
    let (mut inside, mut total, mut area, mut pixels) = (0.0, 0.0, 0usize, 0usize);
    for (f, b) in boxes.iter().enumerate() {
        let Some(b) = b else { continue };
        pixels += height * width;
        for y in 0..height {
            for x in 0..width {
                let v = f64::from(up.data()[(f * height + y) * width + x]);
                let hit = (b[0]..=b[2]).contains(&(x as f32)) && (b[1]..=b[3]).contains(&(y as f32));
                total += v;
                if hit {
                    inside += v;
                    area += 1;
                }
            }
        }
    }
    let mass = if total > 0.0 { inside / total } else { 0.0 };
    let coverage = if pixels > 0 { area as f64 / pixels as f64 } else { 0.0 };
    Ok((mass, coverage))
}
