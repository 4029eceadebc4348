use std::io::{Read, Write};

use super::tvl1::FlowField;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const FLO_MAGIC: f32 = 202021.25;

/// Writes the Middlebury `.flo` layout: magic, width, height, then
/// interleaved `(u, v)` little-endian `f32` pairs in row order.
pub fn write_flo<W: Write>(mut out: W, flow: &FlowField) -> Result<()> {
    let (h, w) = (flow.height(), flow.width());
    let mut buf = Vec::with_capacity(12 + 8 * w * h);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(w as i32).to_le_bytes());
    buf.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in flow.u.data().iter().zip(flow.v.data()) {
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_flo<R: Read>(mut input: R) -> Result<FlowField> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::format("truncated .flo header"));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    if f32::from_le_bytes(word(0)) != FLO_MAGIC {
        return Err(Error::format("bad .flo magic"));
    }
    let (w, h) = (i32::from_le_bytes(word(4)), i32::from_le_bytes(word(8)));
    if w <= 0 || h <= 0 {
        return Err(Error::format(format!("bad .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    if bytes.len() != 12 + 8 * w * h {
        return Err(Error::format(format!("{} bytes for a {w}x{h} .flo", bytes.len())));
    }
    let vals: Vec<f32> = (0..2 * w * h).map(|k| f32::from_le_bytes(word(12 + 4 * k))).collect();
    let u = vals.iter().step_by(2).copied().collect();
    let v = vals.iter().skip(1).step_by(2).copied().collect();
    Ok(FlowField { u: Tensor::new([h, w], u)?, v: Tensor::new([h, w], v)? })
}

fn color_wheel() -> Vec<[f64; 3]> {
    const SEGMENTS: [(usize, [f64; 3], [f64; 3]); 6] = [
        (15, [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
        (6, [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
        (4, [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]),
        (11, [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]),
        (13, [0.0, 0.0, 1.0], [1.0, 0.0, 1.0]),
        (6, [1.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
    ];
    let mut wheel = Vec::new();
    for (n, from, to) in SEGMENTS {
        for i in 0..n {
            let t = i as f64 / n as f64;
            wheel.push([0, 1, 2].map(|c| from[c] + (to[c] - from[c]) * t));
        }
    }
    wheel
}

/// Color-wheel visualization `[H, W, 3]` in `[0,1]`: hue encodes direction,
/// saturation encodes magnitude relative to the largest vector.
pub fn flow_to_color(flow: &FlowField) -> Tensor {
    let wheel = color_wheel();
    let ncols = wheel.len() as f64;
    let max_rad = flow
        .u
        .data()
        .iter()
        .zip(flow.v.data())
        .map(|(u, v)| f64::from(u.hypot(*v)))
        .fold(0.0, f64::max)
        .max(1e-9);
    let mut out = Vec::with_capacity(flow.u.numel() * 3);
    for (&u, &v) in flow.u.data().iter().zip(flow.v.data()) {
        let (u, v) = (f64::from(u) / max_rad, f64::from(v) / max_rad);
        let rad = u.hypot(v).min(1.0);
        let angle = (-v).atan2(-u) / std::f64::consts::PI;
        let fk = (angle + 1.0) / 2.0 * (ncols - 1.0);
        let k0 = fk.floor() as usize % wheel.len();
        let k1 = (k0 + 1) % wheel.len();
        let f = fk - fk.floor();
        for c in 0..3 {
            let col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
            out.push((1.0 - rad * (1.0 - col)) as f32);
        }
    }
    Tensor::from_fn([flow.height(), flow.width(), 3], |i| out[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flo_round_trip_is_bit_exact() {
        let u = Tensor::from_fn([3, 4], |i| i as f32 * 0.25 - 1.0);
        let v = Tensor::from_fn([3, 4], |i| -(i as f32) * 1e-3);
        let flow = FlowField { u, v };
        let mut buf = Vec::new();
        write_flo(&mut buf, &flow).unwrap();
        assert_eq!(&buf[..4], b"PIEH");
        assert_eq!(buf.len(), 12 + 8 * 12);
        assert_eq!(read_flo(buf.as_slice()).unwrap(), flow);
        buf.truncate(20);
        assert!(matches!(read_flo(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn zero_flow_renders_white() {
        let z = Tensor::zeros([2, 2]);
        let img = flow_to_color(&FlowField { u: z.clone(), v: z });
        assert!(img.data().iter().all(|&c| c == 1.0));
    }
}
