//! 8-bit PNG conversion for `[H, W, 3]` tensors in `[0,1]`.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rounds values onto the 8-bit grid so a PNG round trip is lossless.
pub fn quantize(v: f32) -> f32 {
    f32::from(to_u8(v)) / 255.0
}

pub fn to_image(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::shape(format!("image tensor must be [H,W,3], got {s:?}")));
    }
    let (h, w) = (s[0], s[1]);
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = (y as usize * w + x as usize) * 3;
        Rgb([to_u8(d[i]), to_u8(d[i + 1]), to_u8(d[i + 2])])
    }))
}

pub fn save_png(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    to_image(t)?.save(path)?;
    Ok(())
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Tensor> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| f32::from(b) / 255.0).collect();
    Tensor::new([h, w, 3], data)
}

/// Places `[H, W, 3]` images side by side.
pub fn montage(frames: &[Tensor]) -> Result<Tensor> {
    let first = frames.first().ok_or_else(|| Error::shape("montage of zero frames"))?;
    let (h, w) = (first.shape()[0], first.shape()[1]);
    let n = frames.len();
    let mut out = Tensor::zeros([h, w * n, 3]);
    for (k, f) in frames.iter().enumerate() {
        if f.shape() != first.shape() {
            return Err(Error::shape("montage frames differ in shape"));
        }
        for y in 0..h {
            let src = &f.data()[y * w * 3..(y + 1) * w * 3];
            let dst = (y * w * n + k * w) * 3;
            out.data_mut()[dst..dst + w * 3].copy_from_slice(src);
        }
    }
    Ok(out)
}
