//! Keypoint extraction from a single flow field: magnitude/orientation
//! maps, orientation binning under a magnitude threshold, histogram peak
//! selection and 8-connected grouping of same-bin keypoints.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::segmentation::{Group, ParticleState, SegmentationMap};

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointParams {
    pub magnitude_threshold: f64,
    pub bins: usize,
    pub peak_min_fraction: f64,
    pub min_group_size: usize,
}

impl Default for KeypointParams {
    fn default() -> Self {
        Self {
            magnitude_threshold: 0.4,
            bins: 8,
            peak_min_fraction: 0.05,
            min_group_size: 10,
        }
    }
}

impl KeypointParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 || self.bins > u16::MAX as usize {
            return Err(Error::input(format!("bins must be in 2..=65535, got {}", self.bins)));
        }
        if !(self.magnitude_threshold >= 0.0) {
            return Err(Error::input("magnitude threshold must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.peak_min_fraction) {
            return Err(Error::input("peak_min_fraction must be within [0, 1]"));
        }
        Ok(())
    }
}

/// Speed and full-quadrant direction per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MagOriMaps {
    pub width: usize,
    pub height: usize,
    pub mag: Vec<f64>,
    /// Radians in `[0, 2π)`; zero vectors map to 0.
    pub ori: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

/// Angle of `(u, v)` in `[0, 2π)`.
pub fn orientation(u: f64, v: f64) -> f64 {
    if u == 0.0 && v == 0.0 {
        return 0.0;
    }
    let mut a = v.atan2(u);
    if a < 0.0 {
        a += TAU;
    }
    if a >= TAU {
        // a tiny negative angle can round up to exactly 2π
        a = TAU.next_down();
    }
    a
}

pub fn magnitude_orientation(f: &FlowField) -> MagOriMaps {
    let n = f.width() * f.height();
    let mut maps = MagOriMaps {
        width: f.width(),
        height: f.height(),
        mag: Vec::with_capacity(n),
        ori: Vec::with_capacity(n),
        vx: Vec::with_capacity(n),
        vy: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (u, v) = if f.valid()[i] {
            (f.u()[i] as f64, f.v()[i] as f64)
        } else {
            (0.0, 0.0)
        };
        maps.mag.push(u.hypot(v));
        maps.ori.push(orientation(u, v));
        maps.vx.push(u);
        maps.vy.push(v);
    }
    maps
}

/// Orientation bins of the pixels moving at least `magnitude_threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMap {
    pub width: usize,
    pub height: usize,
    /// `None` below the threshold.
    pub bins: Vec<Option<u16>>,
    pub bin_count: usize,
    pub magnitude_threshold: f64,
    pub histogram: Vec<usize>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

pub fn orientation_bin(ori: f64, bins: usize) -> u16 {
    let b = (ori * bins as f64 / TAU).floor() as usize;
    b.min(bins - 1) as u16
}

pub fn quantize(m: &MagOriMaps, magnitude_threshold: f64, bins: usize) -> Result<QuantizedMap> {
    if bins < 2 || bins > u16::MAX as usize {
        return Err(Error::input(format!("bins must be in 2..=65535, got {bins}")));
    }
    if !(magnitude_threshold >= 0.0) {
        return Err(Error::input("magnitude threshold must be >= 0"));
    }
    let mut histogram = vec![0usize; bins];
    let labels = m
        .mag
        .iter()
        .zip(&m.ori)
        .map(|(&mag, &ori)| {
            // invalid pixels carry mag 0; with a zero threshold they still
            // have no direction and are excluded
            if mag < magnitude_threshold || mag == 0.0 {
                None
            } else {
                let b = orientation_bin(ori, bins);
                histogram[b as usize] += 1;
                Some(b)
            }
        })
        .collect();
    Ok(QuantizedMap {
        width: m.width,
        height: m.height,
        bins: labels,
        bin_count: bins,
        magnitude_threshold,
        histogram,
        vx: m.vx.clone(),
        vy: m.vy.clone(),
    })
}

/// Circular peak rule: strictly above the left neighbour, at least the
/// right neighbour, and holding at least `min_fraction` of all counts.
/// Falls back to the lowest-index argmax when nothing qualifies.
pub fn detect_peaks(hist: &[usize], min_fraction: f64) -> Vec<usize> {
    let b = hist.len();
    let total: usize = hist.iter().sum();
    if b == 0 || total == 0 {
        return Vec::new();
    }
    let floor = min_fraction * total as f64;
    let peaks: Vec<usize> = (0..b)
        .filter(|&i| {
            let left = hist[(i + b - 1) % b];
            let right = hist[(i + 1) % b];
            hist[i] > left && hist[i] >= right && hist[i] as f64 >= floor
        })
        .collect();
    if !peaks.is_empty() {
        return peaks;
    }
    let mut best = 0;
    for i in 1..b {
        if hist[i] > hist[best] {
            best = i;
        }
    }
    vec![best]
}

/// A retained pixel of the quantized map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub vx: f64,
    pub vy: f64,
    pub bin: u16,
}

pub fn extract_keypoints(q: &QuantizedMap, peaks: &[usize]) -> Vec<Keypoint> {
    let keep = peak_mask(q.bin_count, peaks);
    let mut out = Vec::new();
    for y in 0..q.height {
        for x in 0..q.width {
            let i = y * q.width + x;
            if let Some(b) = q.bins[i].filter(|&b| keep[b as usize]) {
                out.push(Keypoint {
                    x,
                    y,
                    vx: q.vx[i],
                    vy: q.vy[i],
                    bin: b,
                });
            }
        }
    }
    out
}

fn peak_mask(bins: usize, peaks: &[usize]) -> Vec<bool> {
    let mut keep = vec![false; bins];
    for &p in peaks {
        if p < bins {
            keep[p] = true;
        }
    }
    keep
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Groups keypoints of the peak bins into 8-connected same-bin components.
///
/// Components smaller than `min_group_size` are dropped; survivors get ids
/// `1..=N` in raster order of their first pixel.
pub fn group_keypoints(
    q: &QuantizedMap,
    peaks: &[usize],
    min_group_size: usize,
    frame_index: usize,
) -> SegmentationMap {
    let (w, h) = (q.width, q.height);
    let keep = peak_mask(q.bin_count, peaks);
    let label_of = |i: usize| q.bins[i].filter(|&b| keep[b as usize]);

    // two-pass labelling with union-find over already-visited neighbours
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some(b) = label_of(i) else { continue };
            let mut neighbours = [None; 4];
            if x > 0 {
                neighbours[0] = Some(i - 1);
            }
            if y > 0 {
                neighbours[1] = Some(i - w);
                if x > 0 {
                    neighbours[2] = Some(i - w - 1);
                }
                if x + 1 < w {
                    neighbours[3] = Some(i - w + 1);
                }
            }
            for j in neighbours.into_iter().flatten() {
                if label_of(j) == Some(b) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        let (lo, hi) = (ri.min(rj), ri.max(rj));
                        parent[hi] = lo;
                    }
                }
            }
        }
    }

    // roots are the smallest index of each component, i.e. its first pixel
    // in raster order
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; w * h];
    for i in 0..w * h {
        if label_of(i).is_none() {
            continue;
        }
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = members.len();
            members.push(Vec::new());
        }
        members[slot[r]].push(i);
    }

    let mut groups = Vec::new();
    for pixels in members.into_iter().filter(|m| m.len() >= min_group_size.max(1)) {
        let id = groups.len() as u32 + 1;
        let bin = label_of(pixels[0]).unwrap();
        let particles = pixels
            .iter()
            .map(|&i| ParticleState {
                x: (i % w) as f64,
                y: (i / w) as f64,
                vx: q.vx[i],
                vy: q.vy[i],
                group_id: id,
                bin,
                clamped: false,
            })
            .collect();
        groups.push(Group::new(id, bin, particles));
    }
    SegmentationMap {
        frame_index,
        width: w,
        height: h,
        groups,
    }
}

/// Flow field → initial segmentation map, the whole keypoint stage.
pub fn segment_flow(
    flow: &FlowField,
    params: &KeypointParams,
    frame_index: usize,
) -> Result<SegmentationMap> {
    params.validate()?;
    let maps = magnitude_orientation(flow);
    let q = quantize(&maps, params.magnitude_threshold, params.bins)?;
    let peaks = detect_peaks(&q.histogram, params.peak_min_fraction);
    Ok(group_keypoints(&q, &peaks, params.min_group_size, frame_index))
}
