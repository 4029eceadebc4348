//! Spatial-only max pooling and global average pooling.

use serde::{Deserialize, Serialize};

use super::conv::{ConvGeometry, Padding};
use super::Element;
use crate::error::{Error, Result};

/// Max-pool window. Temporal extent and stride are pinned to 1: the
/// time axis is never downsampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
}

impl PoolSpec {
    pub fn spatial(size: usize, stride: usize) -> Self {
        Self { kernel: [1, size, size], stride: [1, stride, stride] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel[0] != 1 || self.stride[0] != 1 {
            return Err(Error::contract(format!(
                "temporal pooling is not allowed (kernel {:?}, stride {:?})",
                self.kernel, self.stride
            )));
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(Error::contract("pool kernel and stride must be >= 1"));
        }
        Ok(())
    }

    pub(crate) fn geometry(&self, input_shape: &[usize]) -> Result<ConvGeometry> {
        self.validate()?;
        let c = input_shape.get(4).copied().unwrap_or(0);
        ConvGeometry::new(input_shape, self.kernel, self.stride, Padding::Same, c)
    }
}

/// Returns pooled values and, per output, the flat input index of the max.
pub(crate) fn maxpool_forward<E: Element>(geom: &ConvGeometry, x: &[E]) -> (Vec<E>, Vec<usize>) {
    let [to, ho, wo] = geom.output;
    let [t_in, h_in, w_in] = geom.input;
    let c = geom.in_channels;
    let n = geom.batch * to * ho * wo * c;
    let mut out = vec![E::zero(); n];
    let mut arg = vec![0usize; n];
    let mut o = 0;
    for b in 0..geom.batch {
        for t in 0..to {
            for oh in 0..ho {
                for ow in 0..wo {
                    for ch in 0..c {
                        let mut best = E::neg_infinity();
                        let mut best_i = 0;
                        for dh in 0..geom.kernel[1] {
                            let h = (oh * geom.stride[1] + dh) as isize - geom.pad_before[1] as isize;
                            if h < 0 || h as usize >= h_in {
                                continue;
                            }
                            for dw in 0..geom.kernel[2] {
                                let w = (ow * geom.stride[2] + dw) as isize - geom.pad_before[2] as isize;
                                if w < 0 || w as usize >= w_in {
                                    continue;
                                }
                                let i = (((b * t_in + t) * h_in + h as usize) * w_in + w as usize) * c + ch;
                                if x[i] > best {
                                    best = x[i];
                                    best_i = i;
                                }
                            }
                        }
                        out[o] = best;
                        arg[o] = best_i;
                        o += 1;
                    }
                }
            }
        }
    }
    (out, arg)
}

/// Mean over T, H, W of a `[B,T,H,W,C]` buffer, giving `[B,C]`.
pub(crate) fn global_avg_forward<E: Element>(shape: &[usize], x: &[E]) -> Vec<E> {
    let (b, c) = (shape[0], shape[4]);
    let spatial = shape[1] * shape[2] * shape[3];
    let scale = E::one() / E::of(spatial as f64);
    let mut out = vec![E::zero(); b * c];
    for bi in 0..b {
        let acc = &mut out[bi * c..(bi + 1) * c];
        for s in 0..spatial {
            let row = &x[(bi * spatial + s) * c..(bi * spatial + s + 1) * c];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a *= scale;
        }
    }
    out
}

pub(crate) fn global_avg_backward<E: Element>(shape: &[usize], dy: &[E]) -> Vec<E> {
    let (b, c) = (shape[0], shape[4]);
    let spatial = shape[1] * shape[2] * shape[3];
    let scale = E::one() / E::of(spatial as f64);
    let mut dx = vec![E::zero(); b * spatial * c];
    for bi in 0..b {
        let g = &dy[bi * c..(bi + 1) * c];
        for s in 0..spatial {
            let row = &mut dx[(bi * spatial + s) * c..(bi * spatial + s + 1) * c];
            for (d, &v) in row.iter_mut().zip(g) {
                *d = v * scale;
            }
        }
    }
    dx
}
