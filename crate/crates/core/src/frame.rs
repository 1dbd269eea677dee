use crate::error::{Error, Result};

/// Smallest accepted frame side, in pixels.
pub const MIN_FRAME_SIDE: usize = 8;

/// Row-major 8-bit grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::input(format!(
                "frame {width}x{height} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::input(format!(
                "frame data has {} bytes, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Box-average `factor`×`factor` blocks, rounding to the nearest level.
    ///
    /// Dimensions must be divisible by `factor`. The result may be smaller
    /// than [`MIN_FRAME_SIDE`] only if the caller asks for it; this helper is
    /// used for overlays at processing resolution.
    pub fn downscale(&self, factor: usize) -> Result<Frame> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::input(format!(
                "cannot downscale {}x{} by {factor}",
                self.width, self.height
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let area = (factor * factor) as u32;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0u32;
                for dy in 0..factor {
                    let row = (y * factor + dy) * self.width;
                    for dx in 0..factor {
                        acc += self.data[row + x * factor + dx] as u32;
                    }
                }
                out.push(((acc + area / 2) / area) as u8);
            }
        }
        Ok(Frame {
            width: w,
            height: h,
            data: out,
        })
    }
}
