//! Synthetic scenes with complete ground truth, the timing benchmark and
//! Monte-Carlo statistics of the velocity update.
//!
//! A scene is a static textured background with textured rectangular
//! blocks translating at constant velocity. Block texture lives in block
//! coordinates, so integer velocities give exact rigid translation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::evaluation::{predictions, report, GroundTruth, LabelMask};
use crate::flow::{compute_dense_flow, FlowField};
use crate::frame::{Frame, MIN_FRAME_SIDE};
use crate::keypoint::segment_flow;
use crate::langevin::{step_particle, GroupForces, LangevinParams, NoiseSource};
use crate::pipeline::{segment_video, PipelineConfig};
use crate::segmentation::ParticleState;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Top-left corner at frame 1.
    pub x: i64,
    pub y: i64,
    pub width: usize,
    pub height: usize,
    /// Pixels per frame.
    pub vx: f64,
    pub vy: f64,
    pub texture_seed: u64,
}

impl Block {
    /// Top-left corner at 1-based frame `t`.
    pub fn position(&self, t: usize) -> (i64, i64) {
        let k = (t - 1) as f64;
        (
            self.x + (self.vx * k).round() as i64,
            self.y + (self.vy * k).round() as i64,
        )
    }

    fn inside(&self, t: usize, w: usize, h: usize) -> bool {
        let (x, y) = self.position(t);
        x >= 0 && y >= 0 && x as usize + self.width <= w && y as usize + self.height <= h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Later blocks are drawn over earlier ones.
    pub blocks: Vec<Block>,
    pub background_seed: u64,
    /// Standard deviation of per-frame additive Gaussian noise, gray levels.
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// One 100×100 block moving right at 2 px/frame.
    OneWay,
    /// Two 100×80 blocks moving in opposite directions at 2 px/frame.
    TwoWay,
    /// Background only.
    Static,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "one-way" => Ok(Preset::OneWay),
            "two-way" => Ok(Preset::TwoWay),
            "static" => Ok(Preset::Static),
            other => Err(format!("unknown preset `{other}` (one-way, two-way, static)")),
        }
    }
}

impl SceneSpec {
    /// 320×240 presets.
    pub fn preset(p: Preset, frames: usize) -> Self {
        let block = |x, y, width, height, vx, seed| Block {
            x,
            y,
            width,
            height,
            vx,
            vy: 0.0,
            texture_seed: seed,
        };
        let blocks = match p {
            Preset::OneWay => vec![block(60, 70, 100, 100, 2.0, 11)],
            Preset::TwoWay => vec![
                block(30, 20, 100, 80, 2.0, 11),
                block(190, 140, 100, 80, -2.0, 12),
            ],
            Preset::Static => Vec::new(),
        };
        Self {
            width: 320,
            height: 240,
            frames,
            blocks,
            background_seed: 1,
            noise: 0.0,
        }
    }

    /// Scene description in the flat config dialect:
    ///
    /// ```text
    /// width = 320
    /// height = 240
    /// frames = 12
    /// background_seed = 1     # optional, default 1
    /// noise = 0               # optional
    /// block = 60 70 100 100 2 0 11   # x y w h vx vy texture_seed; repeatable
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.check_known(&["width", "height", "frames", "background_seed", "noise", "block"])?;
        let mut blocks = Vec::new();
        for (k, b) in kv.get_all::<String>("block")?.iter().enumerate() {
            let bad = |message: String| Error::Config {
                line: 0,
                message: format!("block {}: {message}", k + 1),
            };
            let parts: Vec<&str> = b.split_whitespace().collect();
            if parts.len() != 7 {
                return Err(bad(format!("expected `x y w h vx vy seed`, got `{b}`")));
            }
            let int = |s: &str| s.parse::<i64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            blocks.push(Block {
                x: int(parts[0])?,
                y: int(parts[1])?,
                width: int(parts[2])?.max(0) as usize,
                height: int(parts[3])?.max(0) as usize,
                vx: float(parts[4])?,
                vy: float(parts[5])?,
                texture_seed: parts[6].parse().map_err(|e| bad(format!("`{}`: {e}", parts[6])))?,
            });
        }
        let spec = Self {
            width: kv.require("width")?,
            height: kv.require("height")?,
            frames: kv.require("frames")?,
            blocks,
            background_seed: kv.get("background_seed")?.unwrap_or(1),
            noise: kv.get("noise")?.unwrap_or(0.0),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The scene in the dialect read by [`SceneSpec::parse`].
    pub fn to_config_text(&self) -> String {
        let mut out = format!(
            "width = {}\nheight = {}\nframes = {}\nbackground_seed = {}\nnoise = {}\n",
            self.width, self.height, self.frames, self.background_seed, self.noise
        );
        for b in &self.blocks {
            out.push_str(&format!(
                "block = {} {} {} {} {} {} {}\n",
                b.x, b.y, b.width, b.height, b.vx, b.vy, b.texture_seed
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_FRAME_SIDE || self.height < MIN_FRAME_SIDE {
            return Err(Error::input(format!(
                "scene {}x{} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}",
                self.width, self.height
            )));
        }
        if self.frames == 0 {
            return Err(Error::input("scene needs at least one frame"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::input("noise must be finite and >= 0"));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if !(b.vx.is_finite() && b.vy.is_finite()) {
                return Err(Error::input(format!("block {} velocity is not finite", k + 1)));
            }
            if b.width == 0 || b.height == 0 || !b.inside(1, self.width, self.height) {
                return Err(Error::input(format!(
                    "block {} does not lie inside the frame at frame 1",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// First frame at which a block is no longer fully visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockExit {
    /// 1-based block number, equal to its ground-truth label.
    pub block: usize,
    pub frame: usize,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<Frame>,
    /// Per frame; pixel label = 1-based index of the topmost block.
    pub masks: Vec<LabelMask>,
    /// Entry `k` is the motion from frame `k+1` to frame `k+2`.
    pub flows: Vec<FlowField>,
    pub exits: Vec<BlockExit>,
}

impl Scene {
    /// Ground truth keyed by 1-based frame index.
    pub fn ground_truth(&self) -> GroundTruth {
        self.masks.iter().cloned().enumerate().map(|(k, m)| (k + 1, m)).collect()
    }
}

fn texture(w: usize, h: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..w * h).map(|_| rng.random()).collect()
}

/// Renders frames, masks and per-pair flow for a scene.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let background = texture(w, h, spec.background_seed);
    let textures: Vec<Vec<u8>> = spec
        .blocks
        .iter()
        .map(|b| texture(b.width, b.height, b.texture_seed))
        .collect();

    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    let mut exits = Vec::new();
    for t in 1..=spec.frames {
        let mut data = background.clone();
        let mut labels = vec![0u32; w * h];
        for (k, b) in spec.blocks.iter().enumerate() {
            if !b.inside(t, w, h) && !exits.iter().any(|e: &BlockExit| e.block == k + 1) {
                exits.push(BlockExit { block: k + 1, frame: t });
            }
            let (bx, by) = b.position(t);
            for ly in 0..b.height {
                let gy = by + ly as i64;
                if gy < 0 || gy >= h as i64 {
                    continue;
                }
                for lx in 0..b.width {
                    let gx = bx + lx as i64;
                    if gx < 0 || gx >= w as i64 {
                        continue;
                    }
                    let i = gy as usize * w + gx as usize;
                    data[i] = textures[k][ly * b.width + lx];
                    labels[i] = k as u32 + 1;
                }
            }
        }
        if spec.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.background_seed);
            rng.set_stream(t as u64);
            for px in &mut data {
                let n: f64 = rng.sample(StandardNormal);
                *px = (*px as f64 + spec.noise * n).round().clamp(0.0, 255.0) as u8;
            }
        }
        frames.push(Frame::new(w, h, data)?);
        masks.push(LabelMask::new(w, h, labels)?);
    }

    let mut flows = Vec::with_capacity(spec.frames.saturating_sub(1));
    for t in 1..spec.frames {
        let mut f = FlowField::zeros(w, h);
        let labels = &masks[t - 1].labels;
        for (i, &l) in labels.iter().enumerate() {
            let motion = if l == 0 {
                (0.0, 0.0)
            } else {
                let b = &spec.blocks[l as usize - 1];
                let (x0, y0) = b.position(t);
                let (x1, y1) = b.position(t + 1);
                ((x1 - x0) as f32, (y1 - y0) as f32)
            };
            f.set(i % w, i / w, Some(motion));
        }
        flows.push(f);
    }
    Ok(Scene {
        frames,
        masks,
        flows,
        exits,
    })
}

/// One row of the window-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub window_size: usize,
    pub mean_accuracy: f64,
    pub ms_per_frame_proposed: f64,
    pub ms_per_frame_baseline: f64,
    /// Baseline over proposed time per frame.
    pub speedup: f64,
    #[serde(skip)]
    pub flow_ms_per_frame_proposed: f64,
    #[serde(skip)]
    pub flow_ms_per_frame_baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub reps: usize,
}

impl BenchReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)
                .map_err(|e| Error::input(format!("writing bench row: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("bench.csv", e))?;
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times the windowed pipeline against per-pair recomputation.
///
/// The proposed time per frame is a full serial run divided by the frames
/// it covers. The baseline computes flow and keypoint grouping for every
/// consecutive pair and is divided by the pair count. Each figure is the
/// median of `reps` runs; accuracy is the mean over emitted frames against
/// `gt` using `cfg.dilation_radius`.
pub fn bench_compare(
    frames: &[Frame],
    gt: &GroundTruth,
    cfg: &PipelineConfig,
    window_sizes: &[usize],
    reps: usize,
) -> Result<BenchReport> {
    let reps = reps.max(1);
    if let Some(&w) = window_sizes.iter().find(|&&w| frames.len() < 2 * w) {
        return Err(Error::input(format!(
            "{} frames are fewer than twice the window size {w}",
            frames.len()
        )));
    }

    let mut base_total = Vec::with_capacity(reps);
    let mut base_flow = Vec::with_capacity(reps);
    for _ in 0..reps {
        let (mut total, mut flow_only) = (0.0, 0.0);
        for pair in frames.windows(2) {
            let t = Instant::now();
            let f = compute_dense_flow(&pair[0], &pair[1], &cfg.flow)?;
            let flow_ms = t.elapsed().as_secs_f64() * 1e3;
            let m = segment_flow(&f, &cfg.keypoint, 0)?;
            std::hint::black_box(&m);
            total += t.elapsed().as_secs_f64() * 1e3;
            flow_only += flow_ms;
        }
        let pairs = (frames.len() - 1) as f64;
        base_total.push(total / pairs);
        base_flow.push(flow_only / pairs);
    }
    let baseline = median(base_total);
    let baseline_flow = median(base_flow);

    let mut rows = Vec::with_capacity(window_sizes.len());
    for &w in window_sizes {
        let wcfg = PipelineConfig {
            window_size: w,
            ..cfg.clone()
        };
        let mut times = Vec::with_capacity(reps);
        let mut flow_times = Vec::with_capacity(reps);
        let mut last = None;
        for _ in 0..reps {
            let t = Instant::now();
            let run = segment_video(frames, &wcfg)?;
            let elapsed = t.elapsed().as_secs_f64() * 1e3;
            let covered = (run.windows.len() * w) as f64;
            times.push(elapsed / covered);
            let flow_ms: f64 = run
                .timings()
                .filter(|t| t.phase == crate::pipeline::Phase::Flow)
                .map(|t| t.duration.as_secs_f64() * 1e3)
                .sum();
            flow_times.push(flow_ms / covered);
            last = Some(run);
        }
        let run = last.expect("reps >= 1");
        let acc = report(&predictions(&run, wcfg.dilation_radius), gt)?.mean;
        let proposed = median(times);
        rows.push(BenchRow {
            window_size: w,
            mean_accuracy: acc,
            ms_per_frame_proposed: proposed,
            ms_per_frame_baseline: baseline,
            speedup: baseline / proposed,
            flow_ms_per_frame_proposed: median(flow_times),
            flow_ms_per_frame_baseline: baseline_flow,
        });
    }
    Ok(BenchReport { rows, reps })
}

/// Monte-Carlo statistics of the x-velocity under the particle update
/// with no drift, started from rest.
#[derive(Debug, Clone, PartialEq)]
pub struct OuStats {
    /// Mean over all post burn-in samples.
    pub mean: f64,
    /// Variance over all post burn-in samples.
    pub variance: f64,
    /// Ensemble variance across particles at the final step.
    pub final_variance: f64,
    /// Lag-1 autocorrelation over post burn-in samples.
    pub autocorrelation: f64,
    /// Closed-form stationary variance `(ξD·s)² / (1 − (1 − γΔt)²)` with
    /// `s` the noise scale factor; `None` when `γΔt = 0` (no stationary law).
    pub expected_variance: Option<f64>,
    pub burn_in: usize,
}

/// Smallest accepted step count for [`ou_statistics`].
pub const MIN_OU_STEPS: usize = 10_000;

pub fn ou_statistics(
    params: &LangevinParams,
    steps: usize,
    particles: usize,
    seed: u64,
) -> Result<OuStats> {
    params.validate()?;
    if steps < MIN_OU_STEPS || particles == 0 {
        return Err(Error::input(format!(
            "need at least {MIN_OU_STEPS} steps and one particle, got {steps} and {particles}"
        )));
    }
    let burn_in = steps / 10;
    let forces = GroupForces {
        drift_x: 0.0,
        confine_y: 0.0,
        anchor_y: 0.0,
    };
    let noise = NoiseSource::new(seed);
    let (mut sum, mut sum_sq, mut n) = (0.0, 0.0, 0usize);
    let mut lagged = Vec::with_capacity(particles);
    let mut finals = Vec::with_capacity(particles);
    for i in 0..particles {
        let mut stream = noise.stream(i as u64);
        let mut s = ParticleState {
            x: 0.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            group_id: 1,
            bin: 0,
            clamped: false,
        };
        let mut trace = Vec::with_capacity(steps - burn_in);
        for k in 0..steps {
            s = step_particle(&s, &forces, params, stream.pair());
            if k >= burn_in {
                trace.push(s.vx);
                sum += s.vx;
                sum_sq += s.vx * s.vx;
                n += 1;
            }
        }
        finals.push(s.vx);
        lagged.push(trace);
    }
    let mean = sum / n as f64;
    let variance = (sum_sq / n as f64 - mean * mean).max(0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for trace in &lagged {
        for k in 0..trace.len() {
            let d = trace[k] - mean;
            den += d * d;
            if k + 1 < trace.len() {
                num += d * (trace[k + 1] - mean);
            }
        }
    }
    let autocorrelation = if den > 0.0 { num / den } else { 0.0 };
    let fmean = finals.iter().sum::<f64>() / particles as f64;
    let final_variance = finals.iter().map(|v| (v - fmean).powi(2)).sum::<f64>() / particles as f64;

    let scale = match params.noise_scaling {
        crate::langevin::NoiseScaling::Dt => params.dt,
        crate::langevin::NoiseScaling::SqrtDt => params.dt.sqrt(),
    };
    let rho = 1.0 - params.gamma_x * params.dt;
    let expected_variance =
        (params.gamma_x > 0.0).then(|| (params.xi_d_x * scale).powi(2) / (1.0 - rho * rho));
    Ok(OuStats {
        mean,
        variance,
        final_variance,
        autocorrelation,
        expected_variance,
        burn_in,
    })
}
