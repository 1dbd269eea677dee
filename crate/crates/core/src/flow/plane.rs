//! Minimal single-channel `f32` raster used by the flow estimator.

use crate::frame::Frame;

#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Box-average `factor`×`factor` blocks without rounding back to 8 bits,
    /// so that an even integer shift at full resolution stays exact.
    pub fn from_frame(frame: &Frame, factor: usize) -> Self {
        let (w, h) = (frame.width() / factor, frame.height() / factor);
        let src = frame.data();
        let norm = 1.0 / (factor * factor) as f32;
        let mut out = Self::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0u32;
                for dy in 0..factor {
                    let row = (y * factor + dy) * frame.width();
                    for dx in 0..factor {
                        acc += src[row + x * factor + dx] as u32;
                    }
                }
                out.data[y * w + x] = acc as f32 * norm;
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample with clamp-to-edge borders.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let p00 = self.clamped(xi, yi);
        let p10 = self.clamped(xi + 1, yi);
        let p01 = self.clamped(xi, yi + 1);
        let p11 = self.clamped(xi + 1, yi + 1);
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    /// 2×2 box decimation; odd trailing rows/columns are dropped.
    pub fn half(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut out = Self::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let s = self.at(2 * x, 2 * y)
                    + self.at(2 * x + 1, 2 * y)
                    + self.at(2 * x, 2 * y + 1)
                    + self.at(2 * x + 1, 2 * y + 1);
                out.data[y * w + x] = 0.25 * s;
            }
        }
        out
    }

    /// Separable 5-tap binomial blur, clamp-to-edge.
    pub fn smooth(&self) -> Self {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut tmp = Self::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (k, w) in K.iter().enumerate() {
                    acc += w * self.clamped(x as isize + k as isize - 2, y as isize);
                }
                tmp.data[y * self.width + x] = acc;
            }
        }
        let mut out = Self::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (k, w) in K.iter().enumerate() {
                    acc += w * tmp.clamped(x as isize, y as isize + k as isize - 2);
                }
                out.data[y * self.width + x] = acc;
            }
        }
        out
    }

    /// Central-difference gradients (one-sided at the border).
    pub fn gradients(&self) -> (Self, Self) {
        let mut gx = Self::zeros(self.width, self.height);
        let mut gy = Self::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let (xi, yi) = (x as isize, y as isize);
                let i = y * self.width + x;
                gx.data[i] = 0.5 * (self.clamped(xi + 1, yi) - self.clamped(xi - 1, yi));
                gy.data[i] = 0.5 * (self.clamped(xi, yi + 1) - self.clamped(xi, yi - 1));
            }
        }
        (gx, gy)
    }

    /// 3×3 median filter, clamp-to-edge.
    pub fn median3(&self) -> Self {
        let mut out = Self::zeros(self.width, self.height);
        let mut buf = [0.0f32; 9];
        for y in 0..self.height {
            for x in 0..self.width {
                let mut k = 0;
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        buf[k] = self.clamped(x as isize + dx, y as isize + dy);
                        k += 1;
                    }
                }
                buf.sort_unstable_by(f32::total_cmp);
                out.data[y * self.width + x] = buf[4];
            }
        }
        out
    }

    /// Sum over the (2r+1)² window centred on each pixel, truncated at the border.
    pub fn box_sum(&self, r: usize) -> Self {
        let (w, h) = (self.width, self.height);
        let mut horiz = Self::zeros(w, h);
        let mut prefix = vec![0.0f64; w.max(h) + 1];
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            for x in 0..w {
                prefix[x + 1] = prefix[x] + row[x] as f64;
            }
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r + 1).min(w);
                horiz.data[y * w + x] = (prefix[hi] - prefix[lo]) as f32;
            }
        }
        let mut out = Self::zeros(w, h);
        for x in 0..w {
            for y in 0..h {
                prefix[y + 1] = prefix[y] + horiz.data[y * w + x] as f64;
            }
            for y in 0..h {
                let lo = y.saturating_sub(r);
                let hi = (y + r + 1).min(h);
                out.data[y * w + x] = (prefix[hi] - prefix[lo]) as f32;
            }
        }
        out
    }

    /// Number of in-bounds pixels in the window around each position.
    pub fn window_count(width: usize, height: usize, r: usize, x: usize, y: usize) -> f32 {
        let nx = (x + r + 1).min(width) - x.saturating_sub(r);
        let ny = (y + r + 1).min(height) - y.saturating_sub(r);
        (nx * ny) as f32
    }
}
