#![allow(dead_code)]

pub mod grad_suite;

use perfnet_core::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step for per-op checks.
pub const EPS: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Error measure that is relative for large values and absolute near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn check_gradients(
    f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    inputs: &[Tensor<f64>],
    coords: Option<&[(usize, usize)]>,
) -> f64 {
    check_gradients_eps(f, inputs, coords, EPS)
}

fn eval(f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var, inputs: &[Tensor<f64>]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
    let out = f(&mut tape, &vars);
    tape.value(out).item().unwrap()
}

/// Compares analytic gradients of the scalar `f(inputs)` against central
/// differences at `coords` (`(input, flat index)`), or at every coordinate
/// when `coords` is `None`. Returns the worst error.
pub fn check_gradients_eps(
    f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    inputs: &[Tensor<f64>],
    coords: Option<&[(usize, usize)]>,
    eps: f64,
) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars);
    tape.backward(out).unwrap();
    let grads: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v).unwrap()).collect();
    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = inputs.iter().enumerate().flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j))).collect();
            &all
        }
    };
    let mut worst = 0.0f64;
    for &(i, j) in coords {
        let mut shifted = inputs.to_vec();
        shifted[i].data_mut()[j] += eps;
        let plus = eval(f, &shifted);
        shifted[i].data_mut()[j] -= 2.0 * eps;
        let minus = eval(f, &shifted);
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(rel_err(grads[i].data()[j], numeric));
    }
    worst
}

/// Random weighted sum so that every output element gets a distinct upstream gradient.
pub fn project(tape: &mut Tape<f64>, v: Var, seed: u64) -> Var {
    let shape = tape.shape(v).to_vec();
    let mut r = rng(seed);
    let w = tape.constant(random(&shape, &mut r));
    let p = tape.mul(v, w).unwrap();
    tape.sum_all(p)
}

pub fn sample_coords(inputs: &[Tensor<f64>], per_input: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng(seed);
    inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..per_input.min(t.numel())).map(move |_| i).collect::<Vec<_>>())
        .map(|i| (i, r.random_range(0..inputs[i].numel())))
        .collect()
}

/// Distance from a point to a segment: the nearer endpoint, or the
/// perpendicular foot when it falls inside the segment.
pub fn oracle_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let d = |u: (f64, f64), v: (f64, f64)| ((u.0 - v.0).powi(2) + (u.1 - v.1).powi(2)).sqrt();
    let mut best = d(p, a).min(d(p, b));
    let len = d(a, b);
    if len > 0.0 {
        let (ux, uy) = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let along = (p.0 - a.0) * ux + (p.1 - a.1) * uy;
        if (0.0..=len).contains(&along) {
            best = best.min(((p.0 - a.0) * uy - (p.1 - a.1) * ux).abs());
        }
    }
    best
}

/// Renders `cases` random single limbs on 64x64 black canvases and counts
/// pixels that disagree with capsule (bar) or disc (dot) membership.
pub fn raster_oracle_mismatches(cases: usize, seed: u64) -> usize {
    use perfnet_core::pose::*;
    const SIZE: usize = 64;
    let mut r = rng(seed);
    let black = RenderSpec { background: Background::Black, ratio_aware: false, ..Default::default() };
    let color = limb_color(&SKELETON[0], black.palette);
    let mut mismatches = 0;
    for case in 0..cases {
        let mut pt = || (r.random_range(-8.0f32..72.0), r.random_range(-8.0f32..72.0));
        let (a, b) = (pt(), pt());
        let thickness = r.random_range(1..=9u32);
        let marker = if case % 4 == 3 { Marker::Dot } else { Marker::Bar };
        let spec = RenderSpec { marker, fixed_thickness_px: thickness, ..black };
        let mut keypoints = vec![Keypoint { x: 0.0, y: 0.0, confidence: 0.0 }; NUM_KEYPOINTS];
        keypoints[kp::LEFT_SHOULDER] = Keypoint { x: a.0, y: a.1, confidence: 1.0 };
        keypoints[kp::LEFT_ELBOW] = Keypoint { x: b.0, y: b.1, confidence: 1.0 };
        let poses = PoseFrame { persons: vec![Person { bbox: [0.0, 0.0, 1.0, 1.0], keypoints }] };
        let img = render_pose_frame(None, (SIZE, SIZE), &poses, &spec, &mut RenderStats::default()).unwrap();
        let (a, b) = ((f64::from(a.0), f64::from(a.1)), (f64::from(b.0), f64::from(b.1)));
        let t = f64::from(thickness);
        for (i, px) in img.data().chunks(3).enumerate() {
            let p = ((i % SIZE) as f64, (i / SIZE) as f64);
            let inside = match marker {
                Marker::Bar => oracle_distance(p, a, b) <= t / 2.0,
                Marker::Dot => oracle_distance(p, a, a) <= t || oracle_distance(p, b, b) <= t,
            };
            let expected = if inside { color } else { [0.0; 3] };
            if px != expected {
                mismatches += 1;
            }
        }
    }
    mismatches
}

/// Smooth random texture built from a handful of random sinusoids, sampled
/// at `(x - dx, y - dy)` so that the true flow from `f(0,0)` to `f(dx,dy)` is `(dx, dy)`.
pub fn texture(seed: u64, h: usize, w: usize, dx: f64, dy: f64) -> Tensor {
    let mut r = perfnet_core::rng::stream(seed, "texture");
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| (r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(0.0..6.3), r.random_range(0.3..1.0)))
        .collect();
    let norm: f64 = waves.iter().map(|w| w.3).sum();
    Tensor::from_fn([h, w], |i| {
        let (y, x) = ((i / w) as f64 - dy, (i % w) as f64 - dx);
        let s: f64 = waves.iter().map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin()).sum();
        (0.5 + 0.5 * s / norm) as f32
    })
}

pub fn interior_epe(f: &perfnet_core::flow::FlowField, du: f64, dv: f64, margin: usize) -> f64 {
    let (h, w) = (f.height(), f.width());
    let mut sum = 0.0;
    let mut n = 0;
    for y in margin..h - margin {
        for x in margin..w - margin {
            let i = y * w + x;
            sum += (f64::from(f.u.data()[i]) - du).hypot(f64::from(f.v.data()[i]) - dv);
            n += 1;
        }
    }
    sum / n as f64
}

pub fn mean_magnitude(f: &perfnet_core::flow::FlowField) -> f64 {
    let n = f.u.numel() as f64;
    f.u.data().iter().zip(f.v.data()).map(|(u, v)| f64::from(u.hypot(*v))).sum::<f64>() / n
}
