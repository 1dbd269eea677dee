use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, LevelFilter};

use langflow::evaluation::{
    render_overlay, report, windows_from_gaps, GroundTruth, LabelMask, Palette, PredictedFrame,
};
use langflow::formats::{read_frame, read_pgm, write_flow_file, write_frame, write_pgm};
use langflow::langevin::{LangevinParams, NoiseScaling};
use langflow::pipeline::{segment_video_jobs, PipelineConfig};
use langflow::synth::{bench_compare, generate_scene, ou_statistics, Preset, SceneSpec};
use langflow::{Error, Frame};

/// Linear crowd-flow segmentation with a Langevin particle model.
#[derive(Parser)]
#[command(name = "langflow", version)]
struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a directory of P5 frames.
    Segment(SegmentArgs),
    /// Score predicted masks against ground-truth masks.
    Eval(EvalArgs),
    /// Write a synthetic scene: frames, ground-truth masks and flow.
    Synth(SynthArgs),
    /// Time the windowed pipeline against per-pair recomputation.
    Bench(BenchArgs),
    /// Check the velocity update's stationary variance.
    OuCheck(OuArgs),
}

#[derive(Args)]
struct SegmentArgs {
    /// Directory of frames, processed in file-name order.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed and LANGFLOW_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Windows processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Per-frame accuracy CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<Preset>,
    /// Scene description file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Frame count for presets.
    #[arg(long, default_value_t = 12)]
    frames: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Inclusive window-size range, `A..B`.
    #[arg(long = "w", default_value = "3..10", value_parser = parse_range)]
    windows: (usize, usize),
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Frames of the one-way preset scene to time.
    #[arg(long, default_value_t = 40)]
    frames: usize,
    /// Pipeline config; its window_size is replaced by each swept value.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; the table is printed either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OuArgs {
    #[arg(long)]
    gamma: f64,
    /// Noise amplitude ξD.
    #[arg(long)]
    xid: f64,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    particles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use √Δt noise scaling instead of Δt.
    #[arg(long)]
    sqrt_dt: bool,
    /// Accepted relative deviation from the closed-form variance.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

/// Failures carrying their exit status.
enum Failure {
    Lib(Error),
    /// A tolerance or acceptance check did not hold.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult = Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::MissingKey(_) => 2,
        Error::Metric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    let result = match cli.command {
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
        Command::OuCheck(a) => ou_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprint!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprint!(": {s}");
                src = s.source();
            }
            eprintln!();
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `*.pgm` files of a directory in name order.
fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        if path.extension().is_some_and(|x| x == "pgm") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Trailing decimal digits of a file stem, e.g. `mask_000012.pgm` → 12.
fn frame_number(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    stem[stem.len() - digits..].parse().ok()
}

fn read_config(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn segment(a: SegmentArgs) -> CliResult {
    let mut cfg = PipelineConfig::parse(&read_config(&a.config)?)?;
    let env_seed = match std::env::var("LANGFLOW_SEED") {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|e| Error::Config {
            line: 0,
            message: format!("LANGFLOW_SEED=`{s}`: {e}"),
        })?),
        Err(_) => None,
    };
    cfg.seed = Some(a.seed.or(cfg.seed).or(env_seed).unwrap_or(0));

    let paths = pgm_files(&a.input)?;
    if paths.len() < cfg.window_size {
        return Err(Error::Input(format!(
            "{} holds {} frame(s), fewer than window_size {}",
            a.input.display(),
            paths.len(),
            cfg.window_size
        ))
        .into());
    }
    let frames = paths.iter().map(read_frame).collect::<Result<Vec<Frame>, _>>()?;
    info!("{} frames from {}", frames.len(), a.input.display());
    let run = segment_video_jobs(&frames, &cfg, a.jobs.max(1))?;

    let out = &a.out;
    for sub in ["masks", "groups"] {
        create_dir(&out.join(sub))?;
    }
    if cfg.write_overlays {
        create_dir(&out.join("overlays"))?;
    }
    let palette = Palette::default();
    for m in run.maps() {
        let n = m.frame_index;
        let mask = langflow::evaluation::rasterize(m, cfg.dilation_radius);
        write_pgm(
            out.join(format!("masks/mask_{n:06}.pgm")),
            mask.width,
            mask.height,
            &mask.to_gray(),
        )?;
        write_file(
            &out.join(format!("groups/groups_{n:06}.jsonl")),
            m.to_jsonl().as_bytes(),
        )?;
        if cfg.write_overlays {
            let small = frames[n - 1].downscale(cfg.flow.downscale)?;
            let ppm = render_overlay(&small, &mask, &palette)?;
            write_file(&out.join(format!("overlays/overlay_{n:06}.ppm")), &ppm)?;
        }
    }
    let mut timings = String::from("frame_index,phase,milliseconds\n");
    for t in run.timings() {
        timings.push_str(&format!(
            "{},{},{:.3}\n",
            t.frame_index,
            t.phase,
            t.duration.as_secs_f64() * 1e3
        ));
    }
    write_file(&out.join("timings.csv"), timings.as_bytes())?;
    write_file(&out.join("manifest.cfg"), cfg.to_config_text().as_bytes())?;
    println!(
        "{} window(s), {} map(s), {} trailing frame(s) skipped -> {}",
        run.windows.len(),
        run.map_count(),
        run.skipped_frames,
        out.display()
    );
    Ok(())
}

fn read_masks(dir: &Path) -> Result<Vec<(usize, LabelMask)>, Error> {
    let mut out = Vec::new();
    for path in pgm_files(dir)? {
        let n = frame_number(&path).ok_or_else(|| {
            Error::Input(format!("{} has no frame number", path.display()))
        })?;
        let (w, h, data) = read_pgm(&path)?;
        out.push((n, LabelMask::from_gray(w, h, &data)?));
    }
    out.sort_by_key(|(n, _)| *n);
    Ok(out)
}

fn eval(a: EvalArgs) -> CliResult {
    let pred = read_masks(&a.pred)?;
    if pred.is_empty() {
        return Err(Error::Input(format!("no masks in {}", a.pred.display())).into());
    }
    let gt: GroundTruth = read_masks(&a.gt)?.into_iter().collect();
    let missing: Vec<String> = pred
        .iter()
        .filter(|(n, _)| gt.get(*n).is_none())
        .map(|(n, _)| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Input(format!(
            "no ground truth for frame(s) {}",
            missing.join(", ")
        ))
        .into());
    }
    let indices: Vec<usize> = pred.iter().map(|(n, _)| *n).collect();
    let preds: Vec<PredictedFrame> = pred
        .into_iter()
        .zip(windows_from_gaps(&indices))
        .map(|((n, mask), (window, start))| PredictedFrame {
            frame_index: n,
            window_index: window,
            is_window_start: start,
            mask,
        })
        .collect();
    let r = report(&preds, &gt)?;
    let file = fs::File::create(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    r.write_csv(file)?;
    println!("mean accuracy {:.4} over {} frame(s)", r.mean, r.rows.len());
    for (w, m) in &r.window_means {
        println!("window {w}: {m:.4}");
    }
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult {
    let spec = match (&a.preset, &a.config) {
        (Some(p), _) => SceneSpec::preset(*p, a.frames),
        (None, Some(path)) => SceneSpec::parse(&read_config(path)?)?,
        (None, None) => unreachable!("clap requires one of --preset, --config"),
    };
    let scene = generate_scene(&spec)?;
    for sub in ["frames", "gt", "flow"] {
        create_dir(&a.out.join(sub))?;
    }
    for (k, f) in scene.frames.iter().enumerate() {
        write_frame(f, a.out.join(format!("frames/frame_{:06}.pgm", k + 1)))?;
    }
    for (k, m) in scene.masks.iter().enumerate() {
        let binary: Vec<u8> = m.labels.iter().map(|&l| if l > 0 { 255 } else { 0 }).collect();
        write_pgm(a.out.join(format!("gt/gt_{:06}.pgm", k + 1)), m.width, m.height, &binary)?;
    }
    for (k, f) in scene.flows.iter().enumerate() {
        write_flow_file(f, a.out.join(format!("flow/flow_{:06}.flo", k + 1)))?;
    }
    write_file(&a.out.join("scene.cfg"), spec.to_config_text().as_bytes())?;
    for e in &scene.exits {
        println!("block {} leaves the frame at frame {}", e.block, e.frame);
    }
    println!(
        "{} frame(s) of {}x{} -> {}",
        scene.frames.len(),
        spec.width,
        spec.height,
        a.out.display()
    );
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult {
    let (lo, hi) = a.windows;
    let mut cfg = match &a.config {
        Some(path) => PipelineConfig::parse(&read_config(path)?)?,
        None => PipelineConfig::new(lo.max(3)),
    };
    cfg.seed.get_or_insert(0);
    let scene = generate_scene(&SceneSpec::preset(Preset::OneWay, a.frames))?;
    let sizes: Vec<usize> = (lo..=hi).collect();
    let report = bench_compare(&scene.frames, &scene.ground_truth(), &cfg, &sizes, a.reps)?;
    println!(
        "{:>6} {:>10} {:>14} {:>14} {:>8}",
        "|W|", "accuracy", "proposed ms/f", "baseline ms/f", "speedup"
    );
    for r in &report.rows {
        println!(
            "{:>6} {:>10.4} {:>14.3} {:>14.3} {:>8.2}",
            r.window_size, r.mean_accuracy, r.ms_per_frame_proposed, r.ms_per_frame_baseline, r.speedup
        );
    }
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    match &a.out {
        Some(path) => write_file(path, &buf)?,
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })?,
    }
    Ok(())
}

fn ou_check(a: OuArgs) -> CliResult {
    let params = LangevinParams {
        gamma_x: a.gamma,
        xi_d_x: a.xid,
        dt: a.dt,
        noise_scaling: if a.sqrt_dt {
            NoiseScaling::SqrtDt
        } else {
            NoiseScaling::Dt
        },
        ..LangevinParams::default()
    };
    let s = ou_statistics(&params, a.steps, a.particles, a.seed)?;
    println!("mean {:.6}", s.mean);
    println!("variance {:.6}", s.variance);
    println!("lag-1 autocorrelation {:.4}", s.autocorrelation);
    let Some(expected) = s.expected_variance else {
        println!("no stationary variance for gamma = 0; final ensemble variance {:.6}", s.final_variance);
        return Ok(());
    };
    let rel = if expected > 0.0 {
        (s.variance - expected).abs() / expected
    } else {
        s.variance
    };
    println!("expected {expected:.6} (relative error {rel:.4})");
    if rel > a.tolerance {
        return Err(Failure::Check(format!(
            "variance {:.6} deviates from {expected:.6} by more than {}",
            s.variance, a.tolerance
        )));
    }
    Ok(())
}
