//! TV-L1 optical flow and its network-input encoding.

mod io;
mod plane;
mod tvl1;

use rayon::prelude::*;

pub use io::{flow_to_color, read_flo, write_flo};
pub use tvl1::{tvl1_flow, tvl1_flow_traced, FlowField, FlowParams, WarpTrace};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Luma of an `[H, W, 3]` frame.
pub fn grayscale(frame: &Tensor) -> Result<Tensor> {
    let s = frame.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::shape(format!("grayscale needs [H,W,3], got {s:?}")));
    }
    let d = frame.data();
    Ok(Tensor::from_fn([s[0], s[1]], |i| LUMA[0] * d[3 * i] + LUMA[1] * d[3 * i + 1] + LUMA[2] * d[3 * i + 2]))
}

/// Flow between consecutive frames of a `[T, H, W, 3]` clip.
pub fn clip_flows(frames: &Tensor, p: &FlowParams) -> Result<Vec<FlowField>> {
    let s = frames.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!("clip must be [T,H,W,3], got {s:?}")));
    }
    if s[0] < 2 {
        return Err(Error::contract(format!("flow needs at least 2 frames, got {}", s[0])));
    }
    let gray = (0..s[0]).map(|t| grayscale(&frames.slice_outer(t)?)).collect::<Result<Vec<_>>>()?;
    gray.par_windows(2).map(|pair| tvl1_flow(&pair[0], &pair[1], p)).collect()
}

/// Network input `[T-1, H, W, 2]`: flow clamped to `±flow_clip` and scaled to
/// `[-1, 1]`. With `pad_to_clip_length` the last field is repeated so the
/// result has `T` steps.
pub fn clip_flow_stack(frames: &Tensor, p: &FlowParams, pad_to_clip_length: bool) -> Result<Tensor> {
    let flows = clip_flows(frames, p)?;
    let (h, w) = (frames.shape()[1], frames.shape()[2]);
    let clip = p.flow_clip as f32;
    let steps = flows.len() + usize::from(pad_to_clip_length);
    let mut data = Vec::with_capacity(steps * h * w * 2);
    for t in 0..steps {
        let f = &flows[t.min(flows.len() - 1)];
        for (&u, &v) in f.u.data().iter().zip(f.v.data()) {
            data.push(u.clamp(-clip, clip) / clip);
            data.push(v.clamp(-clip, clip) / clip);
        }
    }
    Tensor::new([steps, h, w, 2], data)
}
