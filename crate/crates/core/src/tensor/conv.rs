//! 3D cross-correlation via chunked im2col + GEMM.

use super::{Element, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output extent `ceil(in / stride)`, padding split with the extra cell after.
    Same,
    Valid,
}

/// Resolved shapes for one convolution (or pooling window) application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    /// Input `[T, H, W]`.
    pub input: [usize; 3],
    pub in_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad_before: [usize; 3],
    /// Output `[T, H, W]`.
    pub output: [usize; 3],
    pub out_channels: usize,
}

impl ConvGeometry {
    pub fn new(
        input_shape: &[usize],
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: Padding,
        out_channels: usize,
    ) -> Result<Self> {
        if input_shape.len() != 5 {
            return Err(Error::shape(format!("expected [B,T,H,W,C] input, got {input_shape:?}")));
        }
        if stride.contains(&0) || kernel.contains(&0) {
            return Err(Error::contract("kernel and stride extents must be >= 1"));
        }
        let input = [input_shape[1], input_shape[2], input_shape[3]];
        let mut output = [0; 3];
        let mut pad_before = [0; 3];
        for d in 0..3 {
            match padding {
                Padding::Same => {
                    let out = input[d].div_ceil(stride[d]);
                    let total = ((out - 1) * stride[d] + kernel[d]).saturating_sub(input[d]);
                    output[d] = out;
                    pad_before[d] = total / 2;
                }
                Padding::Valid => {
                    if input[d] < kernel[d] {
                        return Err(Error::shape(format!(
                            "kernel {kernel:?} does not fit input {input:?} without padding"
                        )));
                    }
                    output[d] = (input[d] - kernel[d]) / stride[d] + 1;
                }
            }
        }
        Ok(Self {
            batch: input_shape[0],
            input,
            in_channels: input_shape[4],
            kernel,
            stride,
            pad_before,
            output,
            out_channels,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.output[0], self.output[1], self.output[2], self.out_channels]
    }

    fn patch_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.in_channels
    }

    fn out_rows(&self) -> usize {
        self.batch * self.output.iter().product::<usize>()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1]
    }

    /// Input element offset of output row `row`, kernel tap `(dt, dh, dw)`,
    /// or `None` when the tap falls in padding.
    #[inline]
    fn tap_offset(&self, b: usize, out: [usize; 3], tap: [usize; 3]) -> Option<usize> {
        let mut pos = [0usize; 3];
        for d in 0..3 {
            let p = (out[d] * self.stride[d] + tap[d]) as isize - self.pad_before[d] as isize;
            if p < 0 || p as usize >= self.input[d] {
                return None;
            }
            pos[d] = p as usize;
        }
        let [t, h, w] = self.input;
        Some((((b * t + pos[0]) * h + pos[1]) * w + pos[2]) * self.in_channels)
    }

    fn row_coords(&self, row: usize) -> (usize, [usize; 3]) {
        let [to, ho, wo] = self.output;
        let wi = row % wo;
        let hi = (row / wo) % ho;
        let ti = (row / (wo * ho)) % to;
        let b = row / (wo * ho * to);
        (b, [ti, hi, wi])
    }

    /// Visits every (row, tap column, input offset) triple of the row chunk.
    #[inline]
    fn for_each_tap(&self, rows: std::ops::Range<usize>, mut f: impl FnMut(usize, usize, Option<usize>)) {
        let [kt, kh, kw] = self.kernel;
        let ci = self.in_channels;
        for (r, row) in rows.enumerate() {
            let (b, out) = self.row_coords(row);
            let mut col = 0;
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        f(r, col, self.tap_offset(b, out, [dt, dh, dw]));
                        col += ci;
                    }
                }
            }
        }
    }
}

const CHUNK_ELEMS: usize = 1 << 21;

fn chunk_rows(geom: &ConvGeometry) -> usize {
    (CHUNK_ELEMS / geom.patch_len().max(1)).clamp(1, 1 << 14)
}

fn im2col<E: Element>(geom: &ConvGeometry, x: &[E], rows: std::ops::Range<usize>, cols: &mut [E]) {
    let k = geom.patch_len();
    let ci = geom.in_channels;
    geom.for_each_tap(rows, |r, col, src| {
        let dst = &mut cols[r * k + col..r * k + col + ci];
        match src {
            Some(off) => dst.copy_from_slice(&x[off..off + ci]),
            None => dst.fill(E::zero()),
        }
    });
}

fn col2im<E: Element>(geom: &ConvGeometry, cols: &[E], rows: std::ops::Range<usize>, dx: &mut [E]) {
    let k = geom.patch_len();
    let ci = geom.in_channels;
    geom.for_each_tap(rows, |r, col, dst| {
        if let Some(off) = dst {
            let src = &cols[r * k + col..r * k + col + ci];
            for (d, &s) in dx[off..off + ci].iter_mut().zip(src) {
                *d += s;
            }
        }
    });
}

fn check_weight(geom: &ConvGeometry, w_shape: &[usize]) -> Result<()> {
    let [kt, kh, kw] = geom.kernel;
    let want = [kt, kh, kw, geom.in_channels, geom.out_channels];
    if w_shape != want {
        return Err(Error::shape(format!("conv weight {w_shape:?} does not match expected {want:?}")));
    }
    Ok(())
}

/// Forward cross-correlation. `w` is `[kT, kH, kW, C_in, C_out]`.
pub fn conv3d_forward<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    stride: [usize; 3],
    padding: Padding,
) -> Result<(Tensor<E>, ConvGeometry)> {
    let ws = w.shape();
    if ws.len() != 5 {
        return Err(Error::shape(format!("conv weight must be rank 5, got {ws:?}")));
    }
    if x.rank() == 5 && x.shape()[4] != ws[3] {
        return Err(Error::shape(format!(
            "channel mismatch: input has {} channels, kernel expects {}",
            x.shape()[4],
            ws[3]
        )));
    }
    let geom = ConvGeometry::new(x.shape(), [ws[0], ws[1], ws[2]], stride, padding, ws[4])?;
    check_weight(&geom, ws)?;
    let out = conv_forward_raw(&geom, x.data(), w.data());
    Ok((Tensor::from_parts(geom.output_shape(), out), geom))
}

pub(crate) fn conv_forward_raw<E: Element>(geom: &ConvGeometry, x: &[E], w: &[E]) -> Vec<E> {
    let k = geom.patch_len();
    let co = geom.out_channels;
    let rows = geom.out_rows();
    let mut out = vec![E::zero(); rows * co];
    if geom.is_pointwise() {
        E::gemm(rows, k, co, x, false, w, false, E::zero(), &mut out);
        return out;
    }
    let chunk = chunk_rows(geom);
    let mut cols = vec![E::zero(); chunk.min(rows) * k];
    let mut start = 0;
    while start < rows {
        let end = (start + chunk).min(rows);
        let n = end - start;
        im2col(geom, x, start..end, &mut cols[..n * k]);
        E::gemm(n, k, co, &cols[..n * k], false, w, false, E::zero(), &mut out[start * co..end * co]);
        start = end;
    }
    out
}

/// Returns `(dx, dw)` given upstream gradient `dy`. Either may be skipped.
pub(crate) fn conv_backward_raw<E: Element>(
    geom: &ConvGeometry,
    x: &[E],
    w: &[E],
    dy: &[E],
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<E>>, Option<Vec<E>>) {
    let k = geom.patch_len();
    let co = geom.out_channels;
    let rows = geom.out_rows();
    let mut dx = want_dx.then(|| vec![E::zero(); x.len()]);
    let mut dw = want_dw.then(|| vec![E::zero(); w.len()]);
    if geom.is_pointwise() {
        if let Some(dw) = dw.as_mut() {
            E::gemm(k, rows, co, x, true, dy, false, E::zero(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            E::gemm(rows, co, k, dy, false, w, true, E::zero(), dx);
        }
        return (dx, dw);
    }
    let chunk = chunk_rows(geom);
    let mut cols = vec![E::zero(); chunk.min(rows) * k];
    let mut start = 0;
    while start < rows {
        let end = (start + chunk).min(rows);
        let n = end - start;
        let dy_chunk = &dy[start * co..end * co];
        if let Some(dw) = dw.as_mut() {
            im2col(geom, x, start..end, &mut cols[..n * k]);
            E::gemm(k, n, co, &cols[..n * k], true, dy_chunk, false, E::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            E::gemm(n, co, k, dy_chunk, false, w, true, E::zero(), &mut cols[..n * k]);
            col2im(geom, &cols[..n * k], start..end, dx);
        }
        start = end;
    }
    (dx, dw)
}
