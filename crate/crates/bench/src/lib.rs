//! Inputs shared by the benchmarks.

use perfnet_core::data::{generate_synthetic, ClipSample, SyntheticSpec};
use perfnet_core::Tensor;

/// Deterministic pseudo-random values in `[-1, 1]`.
pub fn noise(shape: &[usize], seed: u64) -> Tensor {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    Tensor::from_fn(shape.to_vec(), |_| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 40) as f32 / (1u64 << 23) as f32 - 1.0
    })
}

/// Smooth `[H, W]` texture shifted by `(dx, dy)` pixels.
pub fn texture(height: usize, width: usize, dx: f32, dy: f32) -> Tensor {
    Tensor::from_fn([height, width], |i| {
        let (x, y) = ((i % width) as f32 - dx, (i / width) as f32 - dy);
        0.5 + 0.25 * (0.31 * x).sin() * (0.23 * y).cos() + 0.2 * (0.17 * x + 0.11 * y).sin()
    })
}

/// One clip of the synthetic benchmark at the given frame size.
pub fn sample_clip(frame_size: usize, clip_length: usize) -> ClipSample {
    let spec = SyntheticSpec {
        num_classes: 2,
        train_clips_per_class: 1,
        val_clips_per_class: 1,
        frame_size,
        clip_length,
        ..Default::default()
    };
    let (train, _) = generate_synthetic(&spec).expect("valid spec");
    train.clips.into_iter().next().expect("one clip")
}
