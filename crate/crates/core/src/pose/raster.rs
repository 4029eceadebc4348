//! Hard-edged shape filling on `[H, W, 3]` canvases. A pixel at row `i`,
//! column `j` is sampled at its center `(x, y) = (j, i)`.

pub type Rgb = [f32; 3];

/// Squared distance from `(px, py)` to segment `a -> b`.
pub fn segment_dist2(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    (px - cx).powi(2) + (py - cy).powi(2)
}

fn clamp_range(lo: f64, hi: f64, extent: usize) -> Option<(usize, usize)> {
    let lo = lo.floor().max(0.0);
    let hi = hi.ceil().min(extent as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Fills every pixel within `radius` of the segment (a capsule). Returns the
/// number of pixels written.
pub fn fill_capsule(
    canvas: &mut [f32],
    height: usize,
    width: usize,
    a: (f64, f64),
    b: (f64, f64),
    radius: f64,
    color: Rgb,
) -> usize {
    let Some((x0, x1)) = clamp_range(a.0.min(b.0) - radius, a.0.max(b.0) + radius, width) else { return 0 };
    let Some((y0, y1)) = clamp_range(a.1.min(b.1) - radius, a.1.max(b.1) + radius, height) else { return 0 };
    let r2 = radius * radius;
    let mut written = 0;
    for i in y0..=y1 {
        for j in x0..=x1 {
            if segment_dist2(j as f64, i as f64, a, b) <= r2 {
                let p = (i * width + j) * 3;
                canvas[p..p + 3].copy_from_slice(&color);
                written += 1;
            }
        }
    }
    written
}

pub fn fill_disc(canvas: &mut [f32], height: usize, width: usize, c: (f64, f64), radius: f64, color: Rgb) -> usize {
    fill_capsule(canvas, height, width, c, c, radius, color)
}
