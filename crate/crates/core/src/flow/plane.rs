//! Single-channel `f64` images used inside the flow solver.

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(w: usize, h: usize) -> Self {
        Self { w, h, data: vec![0.0; w * h] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample with border replication.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let (x0, y0) = (x.floor() as isize, y.floor() as isize);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.clamped(x0, y0) * (1.0 - fx) + self.clamped(x0 + 1, y0) * fx;
        let bottom = self.clamped(x0, y0 + 1) * (1.0 - fx) + self.clamped(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Central differences, one-sided at the border.
    pub fn centered_gradient(&self) -> (Plane, Plane) {
        let (w, h) = (self.w, self.h);
        let mut gx = Plane::zeros(w, h);
        let mut gy = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                if xr > xl {
                    gx.data[y * w + x] = (self.at(xr, y) - self.at(xl, y)) / (xr - xl) as f64;
                }
                if yd > yu {
                    gy.data[y * w + x] = (self.at(x, yd) - self.at(x, yu)) / (yd - yu) as f64;
                }
            }
        }
        (gx, gy)
    }

    /// Forward differences with zero at the last row/column.
    pub fn forward_gradient(&self) -> (Plane, Plane) {
        let (w, h) = (self.w, self.h);
        let mut gx = Plane::zeros(w, h);
        let mut gy = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    gx.data[i] = self.data[i + 1] - self.data[i];
                }
                if y + 1 < h {
                    gy.data[i] = self.data[i + w] - self.data[i];
                }
            }
        }
        (gx, gy)
    }

    /// Negative adjoint of [`Plane::forward_gradient`].
    pub fn divergence(px: &Plane, py: &Plane) -> Plane {
        let (w, h) = (px.w, px.h);
        let mut div = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let dx = if x == 0 {
                    px.data[i]
                } else if x + 1 == w {
                    -px.data[i - 1]
                } else {
                    px.data[i] - px.data[i - 1]
                };
                let dy = if y == 0 {
                    py.data[i]
                } else if y + 1 == h {
                    -py.data[i - w]
                } else {
                    py.data[i] - py.data[i - w]
                };
                div.data[i] = dx + dy;
            }
        }
        div
    }

    pub fn gaussian_blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let mut tmp = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                tmp.data[y * self.w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * self.clamped(x as isize + k as isize - radius, y as isize))
                    .sum();
            }
        }
        let mut out = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                out.data[y * self.w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * tmp.clamped(x as isize, y as isize + k as isize - radius))
                    .sum();
            }
        }
        out
    }

    /// Bilinear resampling to `w x h` with aligned pixel centers.
    pub fn resize(&self, w: usize, h: usize) -> Plane {
        let sx = self.w as f64 / w as f64;
        let sy = self.h as f64 / h as f64;
        let mut out = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                out.data[y * w + x] = self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5);
            }
        }
        out
    }

    pub fn median3x3(&self) -> Plane {
        let mut out = Plane::zeros(self.w, self.h);
        let mut window = [0.0; 9];
        for y in 0..self.h {
            for x in 0..self.w {
                let mut k = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        window[k] = self.clamped(x as isize + dx, y as isize + dy);
                        k += 1;
                    }
                }
                window.sort_by(f64::total_cmp);
                out.data[y * self.w + x] = window[4];
            }
        }
        out
    }
}
