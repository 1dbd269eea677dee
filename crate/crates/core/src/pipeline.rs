//! Windowed segmentation: one flow computation per window, Langevin
//! propagation for the rest.
//!
//! Frames are numbered from 1. Window `i` (also from 1) covers frames
//! `p+1 ..= p+|W|` with `p = (i−1)·|W|`. Flow between frames `p+1` and
//! `p+2` seeds the window's first map, emitted as frame `p+2`; the
//! particle model then produces frames `p+3 ..= p+|W|`, for `|W|−1` maps
//! per window. Frames past the last complete window are skipped.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::flow::{compute_dense_flow, FlowParams};
use crate::frame::Frame;
use crate::keypoint::{segment_flow, KeypointParams};
use crate::langevin::{
    estimate_group_forces, force_ablation_config, ForceToggles, LangevinParams, NoiseScaling,
    NoiseSource, Propagator,
};
use crate::segmentation::SegmentationMap;

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Frames per window; at least 3.
    pub window_size: usize,
    pub flow: FlowParams,
    pub keypoint: KeypointParams,
    pub langevin: LangevinParams,
    pub forces: ForceToggles,
    /// `None` defers to the caller's fallback (environment, then 0).
    pub seed: Option<u64>,
    /// Disc radius used when painting groups into masks, processing px.
    pub dilation_radius: usize,
    pub write_overlays: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "window_size",
    "downscale",
    "pyramid_levels",
    "window_radius",
    "iterations",
    "min_eigenvalue",
    "flow_precision",
    "magnitude_threshold",
    "bins",
    "peak_min_fraction",
    "min_group_size",
    "gamma_x",
    "gamma_y",
    "xi_d_x",
    "xi_d_y",
    "dt",
    "confinement_stiffness",
    "noise_scaling",
    "force_external",
    "force_drift_confine",
    "force_disturbance",
    "seed",
    "dilation_radius",
    "write_overlays",
];

impl PipelineConfig {
    pub fn new(window_size: usize) -> Self {
        Self {
            window_size,
            flow: FlowParams::default(),
            keypoint: KeypointParams::default(),
            langevin: LangevinParams::default(),
            forces: ForceToggles::default(),
            seed: None,
            dilation_radius: 3,
            write_overlays: true,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 {
            return Err(Error::input(format!(
                "window_size must be >= 3, got {}",
                self.window_size
            )));
        }
        self.flow.validate()?;
        self.keypoint.validate()?;
        self.langevin.validate()?;
        force_ablation_config(self.forces)?;
        Ok(())
    }

    /// Reads a config file body. Only `window_size` is mandatory.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.check_known(KNOWN_KEYS)?;
        let mut cfg = Self::new(kv.require("window_size")?);
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        set!(cfg.flow.downscale, "downscale");
        set!(cfg.flow.pyramid_levels, "pyramid_levels");
        set!(cfg.flow.window_radius, "window_radius");
        set!(cfg.flow.iterations, "iterations");
        set!(cfg.flow.min_eigenvalue, "min_eigenvalue");
        set!(cfg.flow.precision, "flow_precision");
        set!(cfg.keypoint.magnitude_threshold, "magnitude_threshold");
        set!(cfg.keypoint.bins, "bins");
        set!(cfg.keypoint.peak_min_fraction, "peak_min_fraction");
        set!(cfg.keypoint.min_group_size, "min_group_size");
        set!(cfg.langevin.gamma_x, "gamma_x");
        set!(cfg.langevin.gamma_y, "gamma_y");
        set!(cfg.langevin.xi_d_x, "xi_d_x");
        set!(cfg.langevin.xi_d_y, "xi_d_y");
        set!(cfg.langevin.dt, "dt");
        set!(cfg.langevin.confinement_stiffness, "confinement_stiffness");
        set!(cfg.forces.external, "force_external");
        set!(cfg.forces.drift_confine, "force_drift_confine");
        set!(cfg.forces.disturbance, "force_disturbance");
        set!(cfg.dilation_radius, "dilation_radius");
        set!(cfg.write_overlays, "write_overlays");
        cfg.seed = kv.get("seed")?;
        if let Some(s) = kv.get::<String>("noise_scaling")? {
            cfg.langevin.noise_scaling = match s.as_str() {
                "dt" => NoiseScaling::Dt,
                "sqrt_dt" => NoiseScaling::SqrtDt,
                other => {
                    return Err(Error::Config {
                        line: kv.line_of("noise_scaling").unwrap_or(0),
                        message: format!("noise_scaling must be `dt` or `sqrt_dt`, got `{other}`"),
                    })
                }
            };
        }
        // semantic checks point at the offending line where one exists
        cfg.validate().map_err(|e| match e {
            Error::Input(message) => Error::Config {
                line: KNOWN_KEYS
                    .iter()
                    .find(|k| message.contains(*k))
                    .and_then(|k| kv.line_of(k))
                    .unwrap_or(0),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    /// Fully resolved config in the same dialect; `parse` reads it back.
    pub fn to_config_text(&self) -> String {
        let f = &self.flow;
        let k = &self.keypoint;
        let l = &self.langevin;
        let scaling = match l.noise_scaling {
            NoiseScaling::Dt => "dt",
            NoiseScaling::SqrtDt => "sqrt_dt",
        };
        let mut lines = vec![
            format!("window_size = {}", self.window_size),
            format!("downscale = {}", f.downscale),
            format!("pyramid_levels = {}", f.pyramid_levels),
            format!("window_radius = {}", f.window_radius),
            format!("iterations = {}", f.iterations),
            format!("min_eigenvalue = {}", f.min_eigenvalue),
            format!("flow_precision = {}", f.precision),
            format!("magnitude_threshold = {}", k.magnitude_threshold),
            format!("bins = {}", k.bins),
            format!("peak_min_fraction = {}", k.peak_min_fraction),
            format!("min_group_size = {}", k.min_group_size),
            format!("gamma_x = {}", l.gamma_x),
            format!("gamma_y = {}", l.gamma_y),
            format!("xi_d_x = {}", l.xi_d_x),
            format!("xi_d_y = {}", l.xi_d_y),
            format!("dt = {}", l.dt),
            format!("confinement_stiffness = {}", l.confinement_stiffness),
            format!("noise_scaling = {scaling}"),
            format!("force_external = {}", self.forces.external),
            format!("force_drift_confine = {}", self.forces.drift_confine),
            format!("force_disturbance = {}", self.forces.disturbance),
            format!("dilation_radius = {}", self.dilation_radius),
            format!("write_overlays = {}", self.write_overlays),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed = {seed}"));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Flow,
    Keypoint,
    Langevin,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Flow => "flow",
            Phase::Keypoint => "keypoint",
            Phase::Langevin => "langevin",
        })
    }
}

/// Wall-clock time spent in one phase for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub frame_index: usize,
    pub phase: Phase,
    pub duration: Duration,
}

/// Maps and timings of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    /// 1-based window number.
    pub index: usize,
    /// First frame of the window (1-based).
    pub start_frame: usize,
    pub maps: Vec<SegmentationMap>,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub windows: Vec<WindowOutput>,
    /// Trailing frames that did not fill a window.
    pub skipped_frames: usize,
}

impl RunResult {
    /// All maps in frame order.
    pub fn maps(&self) -> impl Iterator<Item = &SegmentationMap> {
        self.windows.iter().flat_map(|w| w.maps.iter())
    }

    pub fn map_count(&self) -> usize {
        self.windows.iter().map(|w| w.maps.len()).sum()
    }

    pub fn timings(&self) -> impl Iterator<Item = &Timing> {
        self.windows.iter().flat_map(|w| w.timings.iter())
    }

    /// Total wall-clock time across all phases.
    pub fn total_time(&self) -> Duration {
        self.timings().map(|t| t.duration).sum()
    }
}

/// Runs the segmentation over a whole video on the calling thread.
pub fn segment_video(frames: &[Frame], cfg: &PipelineConfig) -> Result<RunResult> {
    segment_video_jobs(frames, cfg, 1)
}

/// As [`segment_video`], processing up to `jobs` windows concurrently.
///
/// Output is identical for every `jobs` value apart from timings.
pub fn segment_video_jobs(frames: &[Frame], cfg: &PipelineConfig, jobs: usize) -> Result<RunResult> {
    cfg.validate()?;
    let w = cfg.window_size;
    if frames.len() < w {
        return Err(Error::input(format!(
            "{} frames cannot fill a window of {w}",
            frames.len()
        )));
    }
    check_uniform(frames)?;
    let count = frames.len() / w;
    let skipped_frames = frames.len() % w;
    if skipped_frames > 0 {
        log::info!(
            "skipping {skipped_frames} trailing frame(s) after {count} window(s) of {w}"
        );
    }
    let run = |i: usize| process_window(&frames[i * w..(i + 1) * w], i + 1, cfg);
    let windows = if jobs <= 1 {
        (0..count).map(run).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::input(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| (0..count).into_par_iter().map(run).collect::<Result<Vec<_>>>())?
    };
    Ok(RunResult {
        windows,
        skipped_frames,
    })
}

fn check_uniform(frames: &[Frame]) -> Result<()> {
    let (w, h) = (frames[0].width(), frames[0].height());
    match frames
        .iter()
        .position(|f| (f.width(), f.height()) != (w, h))
    {
        Some(i) => Err(Error::input(format!(
            "frame {} is {}x{}, expected {w}x{h}",
            i + 1,
            frames[i].width(),
            frames[i].height()
        ))),
        None => Ok(()),
    }
}

/// Runs one window. `frames` holds exactly the window's `|W|` frames and
/// `index` is the 1-based window number, which also keys the noise.
pub fn process_window(frames: &[Frame], index: usize, cfg: &PipelineConfig) -> Result<WindowOutput> {
    let w = cfg.window_size;
    if frames.len() != w || index == 0 {
        return Err(Error::input(format!(
            "window {index} needs {w} frames, got {}",
            frames.len()
        )));
    }
    check_uniform(frames)?;
    let p = (index - 1) * w;
    let seed_frame = p + 2;
    let mut timings = Vec::with_capacity(w);

    let t = Instant::now();
    let flow = compute_dense_flow(&frames[0], &frames[1], &cfg.flow)?;
    timings.push(Timing {
        frame_index: seed_frame,
        phase: Phase::Flow,
        duration: t.elapsed(),
    });

    let t = Instant::now();
    let g2 = segment_flow(&flow, &cfg.keypoint, seed_frame)?;
    let ablation = force_ablation_config(cfg.forces)?;
    let params = ablation.params(&cfg.langevin);
    let forces = g2
        .groups
        .iter()
        .map(|g| estimate_group_forces(g, None, &params).map(|f| ablation.forces(&f)))
        .collect::<Result<Vec<_>>>()?;
    timings.push(Timing {
        frame_index: seed_frame,
        phase: Phase::Keypoint,
        duration: t.elapsed(),
    });

    let noise = NoiseSource::new(cfg.seed()).for_window(index);
    let mut maps = Vec::with_capacity(w - 1);
    maps.push(g2.clone());
    let mut prop = Propagator::new(g2, forces, params, &noise)?;
    for _ in 2..w {
        let t = Instant::now();
        let next = prop.step();
        timings.push(Timing {
            frame_index: next.frame_index,
            phase: Phase::Langevin,
            duration: t.elapsed(),
        });
        maps.push(next);
    }
    Ok(WindowOutput {
        index,
        start_frame: p + 1,
        maps,
        timings,
    })
}

/// Incremental form of [`segment_video`] over a fallible frame source.
///
/// At most one window of frames is held at a time. A source error ends the
/// stream with [`Error::Source`] carrying the last completed window.
pub fn stream_windows<I, E>(source: I, cfg: &PipelineConfig) -> Result<WindowStream<I::IntoIter>>
where
    I: IntoIterator<Item = std::result::Result<Frame, E>>,
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    cfg.validate()?;
    Ok(WindowStream {
        source: source.into_iter(),
        cfg: cfg.clone(),
        buffer: Vec::with_capacity(cfg.window_size),
        completed: 0,
        dims: None,
        done: false,
    })
}

pub struct WindowStream<S> {
    source: S,
    cfg: PipelineConfig,
    buffer: Vec<Frame>,
    completed: usize,
    dims: Option<(usize, usize)>,
    done: bool,
}

impl<S, E> Iterator for WindowStream<S>
where
    S: Iterator<Item = std::result::Result<Frame, E>>,
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    type Item = Result<WindowOutput>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        while self.buffer.len() < self.cfg.window_size {
            match self.source.next() {
                Some(Ok(frame)) => {
                    let dims = (frame.width(), frame.height());
                    if *self.dims.get_or_insert(dims) != dims {
                        self.done = true;
                        return Some(Err(Error::input(format!(
                            "frame {}x{} differs from the first frame's {}x{}",
                            dims.0,
                            dims.1,
                            self.dims.unwrap().0,
                            self.dims.unwrap().1
                        ))));
                    }
                    self.buffer.push(frame);
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(Error::Source {
                        window: self.completed,
                        source: e.into(),
                    }));
                }
                None => {
                    self.done = true;
                    if !self.buffer.is_empty() {
                        log::info!(
                            "skipping {} trailing frame(s) after {} window(s)",
                            self.buffer.len(),
                            self.completed
                        );
                    }
                    return None;
                }
            }
        }
        let index = self.completed + 1;
        let out = process_window(&self.buffer, index, &self.cfg);
        self.buffer.clear();
        match out {
            Ok(w) => {
                self.completed = index;
                Some(Ok(w))
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}
