use serde::{Deserialize, Serialize};

use super::plane::Plane;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Intensities are rescaled from `[0,1]` to this range before solving, the
/// range in which the usual data weights are calibrated.
const INTENSITY_SCALE: f64 = 255.0;
const MIN_LEVEL_DIM: f64 = 8.0;
const GRAD_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub lambda_data: f64,
    pub theta: f64,
    pub tau: f64,
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub warps_per_level: usize,
    pub iterations_per_warp: usize,
    /// Absolute clamp applied when flow is prepared for the network, in pixels.
    pub flow_clip: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            lambda_data: 0.15,
            theta: 0.3,
            tau: 0.25,
            pyramid_levels: 5,
            pyramid_scale: 0.5,
            warps_per_level: 5,
            iterations_per_warp: 30,
            flow_clip: 20.0,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lambda_data, self.theta, self.tau, self.flow_clip];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("flow parameters must be positive and finite"));
        }
        if self.tau > 0.25 {
            return Err(Error::config(format!("tau {} exceeds the stable bound 0.25", self.tau)));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::config(format!("pyramid scale {} outside (0,1)", self.pyramid_scale)));
        }
        if self.pyramid_levels == 0 || self.warps_per_level == 0 || self.iterations_per_warp == 0 {
            return Err(Error::config("pyramid levels, warps and iterations must be at least 1"));
        }
        Ok(())
    }

    /// Number of pyramid levels actually used for an image whose smaller side
    /// is `min_dim`: coarse levels shorter than 8 px are dropped.
    pub fn effective_levels(&self, min_dim: usize) -> usize {
        let mut levels = 1;
        while levels < self.pyramid_levels
            && min_dim as f64 * self.pyramid_scale.powi(levels as i32) >= MIN_LEVEL_DIM
        {
            levels += 1;
        }
        levels
    }
}

/// Dense displacement field; `u` is horizontal, `v` vertical, both `[H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: Tensor,
    pub v: Tensor,
}

impl FlowField {
    pub fn height(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn clamp(&self, limit: f32) -> FlowField {
        FlowField { u: self.u.map(|x| x.clamp(-limit, limit)), v: self.v.map(|x| x.clamp(-limit, limit)) }
    }
}

/// Objective value recorded after each warp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpTrace {
    pub level: usize,
    pub warp: usize,
    pub energy: f64,
}

fn to_plane(t: &Tensor) -> Plane {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    Plane { w, h, data: t.data().iter().map(|&v| f64::from(v) * INTENSITY_SCALE).collect() }
}

fn to_tensor(p: &Plane) -> Tensor {
    Tensor::from_fn([p.h, p.w], |i| p.data[i] as f32)
}

fn pyramid(base: Plane, levels: usize, scale: f64) -> Vec<Plane> {
    let sigma = 0.6 * (1.0 / (scale * scale) - 1.0).sqrt();
    let mut out = vec![base];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let w = ((prev.w as f64 * scale).round() as usize).max(1);
        let h = ((prev.h as f64 * scale).round() as usize).max(1);
        out.push(prev.gaussian_blur(sigma).resize(w, h));
    }
    out
}

fn energy(i0: &Plane, i1: &Plane, u1: &Plane, u2: &Plane, lambda: f64) -> f64 {
    let (u1x, u1y) = u1.forward_gradient();
    let (u2x, u2y) = u2.forward_gradient();
    let mut e = 0.0;
    for y in 0..i0.h {
        for x in 0..i0.w {
            let i = y * i0.w + x;
            let warped = i1.sample(x as f64 + u1.data[i], y as f64 + u2.data[i]);
            e += lambda * (warped - i0.data[i]).abs();
            e += u1x.data[i].hypot(u1y.data[i]) + u2x.data[i].hypot(u2y.data[i]);
        }
    }
    e
}

#[derive(Clone)]
struct Dual {
    p11: Plane,
    p12: Plane,
    p21: Plane,
    p22: Plane,
}

impl Dual {
    fn zeros(w: usize, h: usize) -> Self {
        Self { p11: Plane::zeros(w, h), p12: Plane::zeros(w, h), p21: Plane::zeros(w, h), p22: Plane::zeros(w, h) }
    }

    fn resize(&self, w: usize, h: usize) -> Self {
        Self { p11: self.p11.resize(w, h), p12: self.p12.resize(w, h), p21: self.p21.resize(w, h), p22: self.p22.resize(w, h) }
    }
}

fn ascend(px: &mut Plane, py: &mut Plane, u: &Plane, step: f64) {
    let (ux, uy) = u.forward_gradient();
    for i in 0..u.data.len() {
        let g = ux.data[i].hypot(uy.data[i]);
        let d = 1.0 + step * g;
        px.data[i] = (px.data[i] + step * ux.data[i]) / d;
        py.data[i] = (py.data[i] + step * uy.data[i]) / d;
    }
}

/// Solves one pyramid level in place, returning the energy after each
/// accepted warp.
fn solve_level(
    i0: &Plane,
    i1: &Plane,
    u1: &mut Plane,
    u2: &mut Plane,
    dual: &mut Dual,
    p: &FlowParams,
) -> Vec<f64> {
    let (w, h) = (i0.w, i0.h);
    let n = w * h;
    let (gx, gy) = i1.centered_gradient();
    let lt = p.lambda_data * p.theta;
    let step = p.tau / p.theta;
    let mut energies = Vec::with_capacity(p.warps_per_level);
    let mut v1 = Plane::zeros(w, h);
    let mut v2 = Plane::zeros(w, h);
    let mut best = energy(i0, i1, u1, u2, p.lambda_data);
    for _ in 0..p.warps_per_level {
        let (start1, start2, start_dual) = (u1.clone(), u2.clone(), dual.clone());
        let mut i1w = vec![0.0; n];
        let mut gxw = vec![0.0; n];
        let mut gyw = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (sx, sy) = (x as f64 + u1.data[i], y as f64 + u2.data[i]);
                i1w[i] = i1.sample(sx, sy);
                gxw[i] = gx.sample(sx, sy);
                gyw[i] = gy.sample(sx, sy);
            }
        }
        let grad2: Vec<f64> = (0..n).map(|i| gxw[i] * gxw[i] + gyw[i] * gyw[i]).collect();
        let rho_c: Vec<f64> =
            (0..n).map(|i| i1w[i] - gxw[i] * u1.data[i] - gyw[i] * u2.data[i] - i0.data[i]).collect();

        for _ in 0..p.iterations_per_warp {
            for i in 0..n {
                let rho = rho_c[i] + gxw[i] * u1.data[i] + gyw[i] * u2.data[i];
                let (d1, d2) = if rho < -lt * grad2[i] {
                    (lt * gxw[i], lt * gyw[i])
                } else if rho > lt * grad2[i] {
                    (-lt * gxw[i], -lt * gyw[i])
                } else if grad2[i] > GRAD_EPS {
                    (-rho * gxw[i] / grad2[i], -rho * gyw[i] / grad2[i])
                } else {
                    (0.0, 0.0)
                };
                v1.data[i] = u1.data[i] + d1;
                v2.data[i] = u2.data[i] + d2;
            }
            let div1 = Plane::divergence(&dual.p11, &dual.p12);
            let div2 = Plane::divergence(&dual.p21, &dual.p22);
            for i in 0..n {
                u1.data[i] = v1.data[i] + p.theta * div1.data[i];
                u2.data[i] = v2.data[i] + p.theta * div2.data[i];
            }
            ascend(&mut dual.p11, &mut dual.p12, u1, step);
            ascend(&mut dual.p21, &mut dual.p22, u2, step);
        }
        let m1 = u1.median3x3();
        let m2 = u2.median3x3();
        let e = energy(i0, i1, &m1, &m2, p.lambda_data);
        if e > best {
            // The splitting scheme minimizes a linearized surrogate; a warp
            // that raises the true objective is discarded and the level ends.
            *u1 = start1;
            *u2 = start2;
            *dual = start_dual;
            break;
        }
        best = e;
        *u1 = m1;
        *u2 = m2;
        energies.push(e);
    }
    energies
}

/// TV-L1 optical flow from `prev` to `next` (grayscale `[H, W]` in `[0,1]`):
/// `prev(x) ~ next(x + w(x))`.
pub fn tvl1_flow(prev: &Tensor, next: &Tensor, p: &FlowParams) -> Result<FlowField> {
    tvl1_flow_traced(prev, next, p).map(|(f, _)| f)
}

/// [`tvl1_flow`] that also reports the objective after every warp.
pub fn tvl1_flow_traced(prev: &Tensor, next: &Tensor, p: &FlowParams) -> Result<(FlowField, Vec<WarpTrace>)> {
    p.validate()?;
    if prev.rank() != 2 || prev.shape() != next.shape() {
        return Err(Error::shape(format!("flow needs equal [H,W] frames, got {:?} and {:?}", prev.shape(), next.shape())));
    }
    let (h, w) = (prev.shape()[0], prev.shape()[1]);
    let levels = p.effective_levels(h.min(w));
    let pyr0 = pyramid(to_plane(prev), levels, p.pyramid_scale);
    let pyr1 = pyramid(to_plane(next), levels, p.pyramid_scale);

    let coarsest = &pyr0[levels - 1];
    let mut u1 = Plane::zeros(coarsest.w, coarsest.h);
    let mut u2 = Plane::zeros(coarsest.w, coarsest.h);
    let mut dual = Dual::zeros(coarsest.w, coarsest.h);
    let mut trace = Vec::new();
    for level in (0..levels).rev() {
        let (i0, i1) = (&pyr0[level], &pyr1[level]);
        if u1.w != i0.w || u1.h != i0.h {
            let (rx, ry) = (i0.w as f64 / u1.w as f64, i0.h as f64 / u1.h as f64);
            u1 = u1.resize(i0.w, i0.h);
            u2 = u2.resize(i0.w, i0.h);
            u1.data.iter_mut().for_each(|v| *v *= rx);
            u2.data.iter_mut().for_each(|v| *v *= ry);
            dual = dual.resize(i0.w, i0.h);
        }
        let energies = solve_level(i0, i1, &mut u1, &mut u2, &mut dual, p);
        trace.extend(energies.into_iter().enumerate().map(|(warp, energy)| WarpTrace { level, warp, energy }));
    }
    Ok((FlowField { u: to_tensor(&u1), v: to_tensor(&u2) }, trace))
}
