//! Dense optical flow between frame pairs, plus the flow field container.
//!
//! The built-in estimator is a coarse-to-fine, per-pixel iterative
//! Lucas–Kanade solver (see [`dense`]). Precomputed flow can be ingested
//! instead through [`crate::formats::read_flow_file`].

mod dense;
pub(crate) mod plane;

pub use dense::compute_dense_flow;

use crate::error::{Error, Result};

/// Per-pixel 2D velocity in pixels/frame at processing resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    /// Builds a field; invalid pixels have their vectors forced to zero.
    pub fn new(
        width: usize,
        height: usize,
        mut u: Vec<f32>,
        mut v: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::input(format!(
                "flow buffers must all hold {width}x{height} = {n} entries"
            )));
        }
        for i in 0..n {
            if !valid[i] {
                u[i] = 0.0;
                v[i] = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    /// Every pixel valid and carrying the same vector.
    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![true; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<(f32, f32)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }

    pub fn set(&mut self, x: usize, y: usize, vector: Option<(f32, f32)>) {
        let i = y * self.width + x;
        match vector {
            Some((u, v)) => {
                self.u[i] = u;
                self.v[i] = v;
                self.valid[i] = true;
            }
            None => {
                self.u[i] = 0.0;
                self.v[i] = 0.0;
                self.valid[i] = false;
            }
        }
    }
}

/// Parameters of the built-in estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    /// Half-width of the square aggregation window.
    pub window_radius: usize,
    /// Solver iterations per pyramid level.
    pub iterations: usize,
    /// Frames are box-averaged by this factor before estimation.
    pub downscale: usize,
    /// Smallest eigenvalue of the window-averaged structure tensor
    /// (gray levels²/px²) below which a pixel is marked invalid.
    pub min_eigenvalue: f32,
    /// Output vectors are rounded to multiples of this step (px); 0 keeps
    /// full precision.
    pub precision: f32,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window_radius: 3,
            iterations: 8,
            downscale: 2,
            min_eigenvalue: 1.0,
            precision: 1.0 / 64.0,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 {
            return Err(Error::input("pyramid_levels must be >= 1"));
        }
        if self.window_radius == 0 {
            return Err(Error::input("window_radius must be >= 1"));
        }
        if self.downscale == 0 {
            return Err(Error::input("downscale must be >= 1"));
        }
        if !(self.min_eigenvalue >= 0.0) || !(self.precision >= 0.0) {
            return Err(Error::input(
                "min_eigenvalue and precision must be non-negative",
            ));
        }
        Ok(())
    }
}
