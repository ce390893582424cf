use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use tau_core::analytics::export::RECORDS_FILE;
use tau_core::analytics::RecordTable;
use tau_core::config::{load_structured, RunConfig};
use tau_core::detector_io::{
    read_detection_stream, run_external_detector, write_detection_stream, ExternalDetector, FrameBatch, ReaderConfig,
    StreamMeta,
};
use tau_core::eval::{evaluate, samples_from_streams};
use tau_core::pipeline::{track_stream, write_bundle, write_records};
use tau_core::sim::compare::{compare_bundles, Tolerances};
use tau_core::sim::{self, simulate, write_sim_bundle, Scenario};
use tau_core::tiler::{plan_grid, DedupConfig, DEFAULT_CROP};

const EVAL_FILE: &str = "eval.csv";
const DETECT_FILE: &str = "detections.jsonl";

#[derive(Parser, Debug)]
#[command(name = "tau", version, about = "Traffic analytics from aerial video detections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic detection stream with ground truth.
    Simulate(SimulateArgs),
    /// Track a detection stream into a vehicle record table.
    Track(TrackArgs),
    /// Build the analytics and insight bundle from a record table.
    Analyze(AnalyzeArgs),
    /// Score predicted detections against ground truth.
    Eval(EvalArgs),
    /// Run an external detector over tiled frame images.
    Detect(DetectArgs),
    /// Compare a pipeline bundle with a simulator truth bundle.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario file (TOML or JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the heatmap cell size of the truth bundle.
    #[arg(long, value_name = "PX")]
    cell_size: Option<f64>,
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Detection stream (JSON lines).
    detections: PathBuf,
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; defaults to `out_dir` of the run config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Record table CSV.
    records: PathBuf,
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "PX")]
    cell_size: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Ground-truth detection stream.
    ground_truth: PathBuf,
    /// Predicted detection stream.
    predictions: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Confidence operating point for precision, recall and F1.
    #[arg(long, default_value_t = 0.0)]
    conf: f64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Frame images in frame order; frame ids count from 0.
    #[arg(required = true)]
    frames: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Detector program, called once per tile with the tile path appended.
    #[arg(long, value_name = "PROGRAM")]
    detector: PathBuf,
    /// Extra argument passed to the detector before the tile path.
    #[arg(long = "detector-arg", value_name = "ARG", allow_hyphen_values = true)]
    detector_args: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_CROP)]
    crop: u32,
    /// Seconds before a detector call is killed.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Concurrent detector processes.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Merge duplicate boxes along tile seams.
    #[arg(long)]
    dedup: bool,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    pipeline: PathBuf,
    truth: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{}: no such file", path.display());
    }
    Ok(())
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.out_dir.clone())
        .context("no output directory: pass --out or set out_dir in the run config")
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut scenario: Scenario = load_structured(&args.config)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(cs) = args.cell_size {
        scenario.cell_size = cs;
    }
    sim::validate(&scenario)?;
    let out = simulate(&scenario)?;
    let written = write_sim_bundle(&args.out, &scenario, &out)?;
    println!(
        "simulated {} frames, {} vehicles, {} truth records; wrote {} files to {}",
        scenario.frames,
        scenario.vehicles.len(),
        out.truth.records.len(),
        written.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_track(args: TrackArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let out_dir = output_dir(args.out, &cfg)?;
    require_file(&args.detections)?;
    let reader = read_detection_stream(&args.detections, cfg.detector)?;
    let (table, stats) = track_stream(reader, cfg.tracker, &cfg.camera, &cfg.layout)
        .with_context(|| format!("tracking {}", args.detections.display()))?;
    write_records(&out_dir, &table)?;
    println!(
        "frames {}, tracks created {}, tracks confirmed {}, records {}",
        stats.frames,
        stats.tracks_created,
        stats.tracks_confirmed,
        table.len()
    );
    println!("wrote {}", out_dir.join(RECORDS_FILE).display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(cs) = args.cell_size {
        cfg.analytics.cell_size = cs;
        cfg.validate()?;
    }
    let out_dir = output_dir(args.out, &cfg)?;
    let file = File::open(&args.records).with_context(|| format!("{}: cannot open", args.records.display()))?;
    let table = RecordTable::read_csv(file).with_context(|| format!("reading {}", args.records.display()))?;
    let files = write_bundle(&out_dir, &table, &cfg)?;
    println!(
        "{} records analyzed; wrote {} files to {}",
        table.len(),
        files.len(),
        out_dir.display()
    );
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<FrameBatch>> {
    require_file(path)?;
    let cfg = ReaderConfig {
        keep_pedestrians: true,
        min_confidence: 0.0,
    };
    read_detection_stream(path, cfg)?
        .collect::<tau_core::Result<Vec<_>>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        bail!("--iou must lie in (0, 1], got {}", args.iou);
    }
    let gt = read_all(&args.ground_truth)?;
    let pred = read_all(&args.predictions)?;
    let report = evaluate(&samples_from_streams(&gt, &pred), args.iou, args.conf)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(EVAL_FILE);
    let mut w = create(&path)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "precision {:.4}, recall {:.4}, f1 {:.4}, mAP@0.5 {}, mAP@0.5:0.95 {}",
        report.metrics.precision,
        report.metrics.recall,
        report.metrics.f1,
        fmt(report.map_50),
        fmt(report.map_50_95)
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    if args.parallelism == 0 {
        bail!("--parallelism must be at least 1");
    }
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        bail!("--timeout must be positive, got {}", args.timeout);
    }
    for f in &args.frames {
        require_file(f)?;
    }
    let grid = plan_grid(cfg.camera.image_w, cfg.camera.image_h, args.crop)?;
    let detector = ExternalDetector {
        args: args.detector_args.clone(),
        timeout: Duration::from_secs_f64(args.timeout),
        parallelism: args.parallelism,
        reader: cfg.detector,
        dedup: DedupConfig {
            enabled: args.dedup,
            ..DedupConfig::default()
        },
        ..ExternalDetector::new(&args.detector)
    };
    let mut batches = Vec::with_capacity(args.frames.len());
    for (frame_id, image) in (0u64..).zip(&args.frames) {
        let batch = run_external_detector(image, frame_id, &grid, &detector)
            .with_context(|| format!("detecting on {}", image.display()))?;
        info!("frame {frame_id}: {} detections", batch.detections.len());
        batches.push(batch);
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(DETECT_FILE);
    let meta = StreamMeta {
        embed_dim: None,
        fps: Some(cfg.camera.fps),
    };
    let mut w = create(&path)?;
    write_detection_stream(&mut w, Some(&meta), &batches).with_context(|| format!("writing {}", path.display()))?;
    let total: usize = batches.iter().map(|b| b.detections.len()).sum();
    println!(
        "{} frames, {} tiles each, {total} detections; wrote {}",
        batches.len(),
        grid.tile_count(),
        path.display()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<bool> {
    let report = compare_bundles(&args.pipeline, &args.truth, &Tolerances::default())?;
    for line in report.lines() {
        println!("{line}");
    }
    Ok(report.is_clean())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("TAU_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Track(a) => cmd_track(a).map(|_| true),
        Command::Analyze(a) => cmd_analyze(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Detect(a) => cmd_detect(a).map(|_| true),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
