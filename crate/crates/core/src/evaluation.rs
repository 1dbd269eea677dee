//! Label masks, the coverage accuracy metric and report/overlay output.
//!
//! Accuracy is `|S ∩ GT| / |GT|` over foreground pixels: the fraction of
//! ground truth covered by the segmentation. It ignores false positives,
//! so intersection-over-union is reported beside it as a diagnostic.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::formats::encode_ppm;
use crate::frame::Frame;
use crate::pipeline::RunResult;
use crate::segmentation::SegmentationMap;

/// Per-pixel group ids; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::input(format!(
                "mask has {} labels, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    /// Any nonzero gray level is foreground and keeps its value as label.
    pub fn from_gray(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&v| v as u32).collect())
    }

    /// Gray levels for a P5 file: labels saturate at 255.
    pub fn to_gray(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l.min(255) as u8).collect()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn foreground(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Pixels carrying `label`.
    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Only the pixels labelled `label`, relabelled to 1.
    pub fn select(&self, label: u32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|&l| (l == label) as u32).collect(),
        }
    }

    /// Nearest-neighbour resample to `width`×`height`.
    pub fn resample(&self, width: usize, height: usize) -> Self {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((2 * y + 1) * self.height / (2 * height)).min(self.height - 1);
            for x in 0..width {
                let sx = ((2 * x + 1) * self.width / (2 * width)).min(self.width - 1);
                labels.push(self.get(sx, sy));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }
}

/// Offsets of the disc `dx² + dy² ≤ r²`.
fn disc(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Paints a map's groups into a label mask.
///
/// Members are placed at their rounded positions and grown by a disc of
/// `dilation_radius`. Where discs of several groups meet, the pixel goes to
/// the group whose centroid is nearest, ties to the lower id. For radius ≥ 1
/// a 3×3 opening then removes thin spurs; pixels beyond the image border
/// count as foreground during erosion so groups touching the border keep
/// their edge.
pub fn rasterize(m: &SegmentationMap, dilation_radius: usize) -> LabelMask {
    let (w, h) = (m.width, m.height);
    let mut labels = vec![0u32; w * h];
    let mut best = vec![f64::INFINITY; w * h];
    let offsets = disc(dilation_radius);
    let mut groups: Vec<_> = m.groups.iter().collect();
    groups.sort_by_key(|g| g.id);
    let mut stamped = vec![false; w * h];
    for g in groups {
        stamped.iter_mut().for_each(|s| *s = false);
        for p in &g.members {
            let cx = p.x.round().clamp(0.0, (w - 1) as f64) as isize;
            let cy = p.y.round().clamp(0.0, (h - 1) as f64) as isize;
            for &(dx, dy) in &offsets {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                    continue;
                }
                let i = y as usize * w + x as usize;
                if stamped[i] {
                    continue;
                }
                stamped[i] = true;
                let d = (x as f64 - g.centroid.0).powi(2) + (y as f64 - g.centroid.1).powi(2);
                // strict comparison: an earlier (lower) id wins ties
                if d < best[i] {
                    best[i] = d;
                    labels[i] = g.id;
                }
            }
        }
    }
    let mask = LabelMask {
        width: w,
        height: h,
        labels,
    };
    if dilation_radius == 0 {
        mask
    } else {
        open3(&mask)
    }
}

/// Binary 3×3 opening of the foreground; survivors keep their label.
fn open3(m: &LabelMask) -> LabelMask {
    let (w, h) = (m.width as isize, m.height as isize);
    let fg = |x: isize, y: isize| {
        x < 0 || y < 0 || x >= w || y >= h || m.labels[(y * w + x) as usize] > 0
    };
    let mut eroded = vec![false; m.labels.len()];
    for y in 0..h {
        for x in 0..w {
            eroded[(y * w + x) as usize] =
                (-1..=1).all(|dy| (-1..=1).all(|dx| fg(x + dx, y + dy)));
        }
    }
    let mut labels = vec![0u32; m.labels.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if m.labels[i] == 0 {
                continue;
            }
            let hit = (-1..=1).any(|dy| {
                (-1..=1).any(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx >= 0 && ny >= 0 && nx < w && ny < h && eroded[(ny * w + nx) as usize]
                })
            });
            if hit {
                labels[i] = m.labels[i];
            }
        }
    }
    LabelMask {
        width: m.width,
        height: m.height,
        labels,
    }
}

fn check_dims(s: &LabelMask, gt: &LabelMask) -> Result<()> {
    if (s.width, s.height) != (gt.width, gt.height) {
        return Err(Error::input(format!(
            "segmentation is {}x{} but ground truth is {}x{}",
            s.width, s.height, gt.width, gt.height
        )));
    }
    Ok(())
}

/// Fraction of ground-truth foreground covered by `s`.
pub fn accuracy(s: &LabelMask, gt: &LabelMask) -> Result<f64> {
    check_dims(s, gt)?;
    let mut area = 0usize;
    let mut hit = 0usize;
    for (&a, &b) in s.labels.iter().zip(&gt.labels) {
        if b > 0 {
            area += 1;
            hit += (a > 0) as usize;
        }
    }
    if area == 0 {
        return Err(Error::metric("ground truth has no foreground pixels"));
    }
    Ok(hit as f64 / area as f64)
}

/// Foreground intersection over union.
pub fn iou(s: &LabelMask, gt: &LabelMask) -> Result<f64> {
    check_dims(s, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in s.labels.iter().zip(&gt.labels) {
        inter += (a > 0 && b > 0) as usize;
        union += (a > 0 || b > 0) as usize;
    }
    if union == 0 {
        return Err(Error::metric("both masks are empty"));
    }
    Ok(inter as f64 / union as f64)
}

/// Ground-truth masks by frame index.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    frames: BTreeMap<usize, LabelMask>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame_index: usize, mask: LabelMask) {
        self.frames.insert(frame_index, mask);
    }

    pub fn get(&self, frame_index: usize) -> Option<&LabelMask> {
        self.frames.get(&frame_index)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl FromIterator<(usize, LabelMask)> for GroundTruth {
    fn from_iter<I: IntoIterator<Item = (usize, LabelMask)>>(iter: I) -> Self {
        Self {
            frames: iter.into_iter().collect(),
        }
    }
}

/// A predicted mask with its place in the window schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedFrame {
    pub frame_index: usize,
    pub window_index: usize,
    pub is_window_start: bool,
    pub mask: LabelMask,
}

/// Rasterizes every map of a run.
pub fn predictions(run: &RunResult, dilation_radius: usize) -> Vec<PredictedFrame> {
    let mut out = Vec::new();
    for w in &run.windows {
        for (k, m) in w.maps.iter().enumerate() {
            out.push(PredictedFrame {
                frame_index: m.frame_index,
                window_index: w.index,
                is_window_start: k == 0,
                mask: rasterize(m, dilation_radius),
            });
        }
    }
    out
}

/// Window numbers for sorted frame indices when only masks are at hand:
/// every gap in the sequence starts a new window. Returns
/// `(window_index, is_window_start)` per frame.
pub fn windows_from_gaps(frame_indices: &[usize]) -> Vec<(usize, bool)> {
    let mut out = Vec::with_capacity(frame_indices.len());
    let mut window = 0;
    for (k, &f) in frame_indices.iter().enumerate() {
        let start = k == 0 || f != frame_indices[k - 1] + 1;
        window += start as usize;
        out.push((window, start));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub frame_index: usize,
    pub window_index: usize,
    pub accuracy: f64,
    pub iou: f64,
    pub is_window_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
    /// `(window_index, mean accuracy)` in window order.
    pub window_means: Vec<(usize, f64)>,
    pub mean: f64,
}

/// Scores every predicted frame. Ground truth at another resolution is
/// resampled to the prediction's grid by nearest neighbour.
pub fn report(preds: &[PredictedFrame], gt: &GroundTruth) -> Result<AccuracyReport> {
    if preds.is_empty() {
        return Err(Error::metric("no predicted frames to score"));
    }
    let missing: Vec<String> = preds
        .iter()
        .filter(|p| gt.get(p.frame_index).is_none())
        .map(|p| p.frame_index.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::metric(format!(
            "no ground truth for frame(s) {}",
            missing.join(", ")
        )));
    }
    let mut rows = Vec::with_capacity(preds.len());
    for p in preds {
        let g = gt.get(p.frame_index).expect("checked above");
        let g = g.resample(p.mask.width, p.mask.height);
        let acc = accuracy(&p.mask, &g)
            .map_err(|e| Error::metric(format!("frame {}: {e}", p.frame_index)))?;
        rows.push(AccuracyRow {
            frame_index: p.frame_index,
            window_index: p.window_index,
            accuracy: acc,
            iou: iou(&p.mask, &g)?,
            is_window_start: p.is_window_start,
        });
    }
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = sums.entry(r.window_index).or_default();
        e.0 += r.accuracy;
        e.1 += 1;
    }
    let window_means = sums.into_iter().map(|(w, (s, n))| (w, s / n as f64)).collect();
    let mean = rows.iter().map(|r| r.accuracy).sum::<f64>() / rows.len() as f64;
    Ok(AccuracyReport {
        rows,
        window_means,
        mean,
    })
}

impl AccuracyReport {
    /// Per-frame CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)
                .map_err(|e| Error::input(format!("writing accuracy row: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("accuracy.csv", e))?;
        Ok(())
    }
}

/// Colours assigned to group ids, cycling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
    /// Blend weight of the colour, out of 255.
    pub alpha: u8,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: vec![
                [230, 25, 75],
                [60, 180, 75],
                [0, 130, 200],
                [245, 130, 48],
                [145, 30, 180],
                [70, 240, 240],
                [240, 50, 230],
                [210, 245, 60],
                [250, 190, 212],
                [0, 128, 128],
                [170, 110, 40],
                [255, 225, 25],
            ],
            alpha: 128,
        }
    }
}

impl Palette {
    pub fn color(&self, id: u32) -> [u8; 3] {
        self.colors[(id as usize).wrapping_sub(1) % self.colors.len()]
    }
}

/// Blends labelled pixels of `mask` over `frame` and encodes a P6 image.
pub fn render_overlay(frame: &Frame, mask: &LabelMask, palette: &Palette) -> Result<Vec<u8>> {
    if (frame.width(), frame.height()) != (mask.width, mask.height) {
        return Err(Error::input(format!(
            "overlay frame is {}x{} but mask is {}x{}",
            frame.width(),
            frame.height(),
            mask.width,
            mask.height
        )));
    }
    if palette.colors.is_empty() {
        return Err(Error::input("palette has no colours"));
    }
    let a = palette.alpha as u32;
    let mut rgb = Vec::with_capacity(frame.data().len() * 3);
    for (&g, &l) in frame.data().iter().zip(&mask.labels) {
        if l == 0 {
            rgb.extend_from_slice(&[g, g, g]);
        } else {
            for c in palette.color(l) {
                rgb.push(((g as u32 * (255 - a) + c as u32 * a + 127) / 255) as u8);
            }
        }
    }
    Ok(encode_ppm(mask.width, mask.height, &rgb))
}
