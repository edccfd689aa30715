//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numeric divergence. `--threads` (or `EVPIPE_THREADS`) sizes the
//! worker pool; the default of 1 keeps output and timings reproducible.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evpipe_core::event::{window_by_count, EventStream, SensorGeometry};
use evpipe_core::metrics::{aggregate_table, evaluate_sequence, latency_report, EvalConfig, Evaluation, SequenceMetrics};
use evpipe_core::nn::train::TrainConfig;
use evpipe_core::nn::NetConfig;
use evpipe_core::reconstruct::{BILATERAL_DIAMETER, BILATERAL_SIGMA, DEFAULT_CUTOFF, NOMINAL_THRESHOLD};
use evpipe_core::simulator::{SimConfig, THRESHOLD_MEAN, THRESHOLD_STD};
use evpipe_core::tensorizer::{voxelize, DEFAULT_BINS, DEFAULT_WINDOW_EVENTS};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bench::{synthetic_stream, throughput_bench, BenchMethod, BenchOptions, BenchReport};
use crate::config::{dump_key_values, read_config_args};
use crate::dataset::{generate_dataset, is_dataset, read_manifest, EVENTS};
use crate::error::{Error, Result};
use crate::events_io::read_events;
use crate::frames_io::{load_textures, read_frame_dir, write_frame_dir, write_tensor};
use crate::recon::{reconstruct_stream, Method};
use crate::training::{run_training, TrainJob, WEIGHTS_FILE};
use crate::weights_file::{check_compatible, load_weights};

/// Sensor size written `WIDTHxHEIGHT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size(pub SensorGeometry);

impl FromStr for Size {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
        let w: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
        let h: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
        SensorGeometry::new(w, h).map(Size).map_err(|e| e.to_string())
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0.width, self.0.height)
    }
}

impl Serialize for Size {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn display_str<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn display_opt<T: fmt::Display, S: Serializer>(v: &Option<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Parser)]
#[command(name = "evpipe", version, about = "Event-camera simulation, reconstruction, training and evaluation")]
pub struct Cli {
    /// Worker threads for per-sequence parallelism. Defaults to 1 so that
    /// runs are reproducible; falls back to EVPIPE_THREADS.
    #[arg(long, global = true, env = "EVPIPE_THREADS", default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated dataset of event streams and ground-truth frames.
    Simulate(SimulateArgs),
    /// Dump the voxel-grid tensor of each event window.
    Voxelize(VoxelizeArgs),
    /// Reconstruct frames from events.
    Reconstruct(ReconstructArgs),
    /// Train the recurrent reconstruction network on a simulated dataset.
    Train(TrainArgs),
    /// Score reconstructions against ground truth.
    Eval(EvalArgs),
    /// Measure single-threaded stream throughput.
    Bench(BenchArgs),
    /// Report the distribution of window durations.
    Latency(LatencyArgs),
}

pub const SUBCOMMANDS: [&str; 7] = ["simulate", "voxelize", "reconstruct", "train", "eval", "bench", "latency"];

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Read flags from a key=value file. Keys are flag names without the
    /// leading dashes; flags given on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as key=value lines and exit.
    #[arg(long)]
    #[serde(skip)]
    pub dump_config: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of sequences.
    #[arg(long, default_value_t = 40)]
    pub sequences: usize,
    /// Sequence length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// Sensor size.
    #[arg(long, default_value = "240x180")]
    pub size: Size,
    /// Dataset seed; each sequence draws its own seed from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Internal rendering rate in frames per second.
    #[arg(long, default_value_t = 1000.0)]
    pub render_rate: f64,
    /// Ground-truth frame rate in frames per second.
    #[arg(long, default_value_t = 200.0)]
    pub gt_rate: f64,
    /// Mean of the per-sequence contrast thresholds.
    #[arg(long, default_value_t = THRESHOLD_MEAN)]
    pub threshold_mean: f64,
    /// Standard deviation of the per-sequence contrast thresholds.
    #[arg(long, default_value_t = THRESHOLD_STD)]
    pub threshold_std: f64,
    /// Directory of grayscale images used as scene textures instead of
    /// procedural noise.
    #[arg(long, value_name = "DIR")]
    pub textures: Option<PathBuf>,
    /// Procedural texture side as a multiple of the sensor size.
    #[arg(long, default_value_t = 2.0)]
    pub texture_scale: f64,
    /// Base feature size of procedural textures in pixels.
    #[arg(long, default_value_t = 8.0)]
    pub feature_px: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

/// Where events come from: a file, a sequence directory holding
/// `events.bin`, or (where supported) a dataset root.
#[derive(Debug, Clone, Args, Serialize)]
pub struct EventSource {
    /// Event file (`.txt` for text, otherwise binary), sequence directory,
    /// or dataset directory.
    #[arg(long, value_name = "PATH")]
    pub events: PathBuf,
    /// Sensor size of a text event file.
    #[arg(long)]
    #[serde(serialize_with = "display_opt")]
    pub size: Option<Size>,
}

impl EventSource {
    fn load(&self, path: &Path) -> Result<EventStream> {
        let file = if path.is_dir() { path.join(EVENTS) } else { path.to_path_buf() };
        read_events(&file, self.size.map(|s| s.0))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VoxelizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: EventSource,
    /// Output directory for `tensor_NNNNNN.bin` files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Events per window (N).
    #[arg(long, default_value_t = DEFAULT_WINDOW_EVENTS)]
    pub window: usize,
    /// Temporal bins (B).
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Stop after this many windows.
    #[arg(long)]
    pub max_windows: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Integrate,
    Highpass,
    E2v,
}

impl fmt::Display for MethodArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodArg::Integrate => "integrate",
            MethodArg::Highpass => "highpass",
            MethodArg::E2v => "e2v",
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconstructArgs {
    /// Reconstruction method.
    #[arg(long, value_enum)]
    #[serde(serialize_with = "display_str")]
    pub method: MethodArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub source: EventSource,
    /// Output directory; a dataset input gets one subdirectory per sequence.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Events per window (N); one frame is written per window.
    #[arg(long, default_value_t = DEFAULT_WINDOW_EVENTS)]
    pub window: usize,
    /// Assumed contrast threshold of the integrate and highpass methods.
    #[arg(long, default_value_t = NOMINAL_THRESHOLD)]
    pub threshold: f64,
    /// High-pass cutoff in rad/s.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub cutoff: f64,
    /// Bilateral filter diameter applied to highpass output.
    #[arg(long, default_value_t = BILATERAL_DIAMETER)]
    pub bilateral_d: usize,
    /// Bilateral filter sigma on the 0-255 scale.
    #[arg(long, default_value_t = BILATERAL_SIGMA)]
    pub bilateral_sigma: f64,
    /// Disable the bilateral filter on highpass output.
    #[arg(long)]
    pub no_bilateral: bool,
    /// Network weights for the e2v method.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Expected temporal bins; must match the weights file.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Expected recurrent frames; must match the weights file.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NetSize {
    /// 64 base channels, four encoders, two residual blocks.
    Full,
    /// 8 base channels, two encoders, one residual block.
    Tiny,
}

impl fmt::Display for NetSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetSize::Full => "full",
            NetSize::Tiny => "tiny",
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory for weights, checkpoints and the loss log.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Network size preset.
    #[arg(long, value_enum, default_value_t = NetSize::Full)]
    #[serde(serialize_with = "display_str")]
    pub net: NetSize,
    /// Override the preset's base channel count.
    #[arg(long)]
    pub base_channels: Option<usize>,
    /// Override the preset's encoder count.
    #[arg(long)]
    pub encoders: Option<usize>,
    /// Override the preset's residual block count.
    #[arg(long)]
    pub residual_blocks: Option<usize>,
    /// Events per window (N).
    #[arg(long, default_value_t = DEFAULT_WINDOW_EVENTS)]
    pub window: usize,
    /// Temporal bins (B).
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Recurrent frames fed back (K).
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Unroll length (L).
    #[arg(long, default_value_t = 8)]
    pub seq_len: usize,
    /// Samples per optimizer step.
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Total epochs; a resumed run continues up to this count.
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    /// Base ADAM learning rate.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Learning-rate decay factor.
    #[arg(long, default_value_t = 0.9)]
    pub lr_decay: f64,
    /// Epochs between learning-rate decays.
    #[arg(long, default_value_t = 10)]
    pub decay_period: usize,
    /// Seed for initialization and sample order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs between checkpoints; 0 disables periodic checkpoints.
    #[arg(long, default_value_t = 1)]
    pub checkpoint_every: usize,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

impl TrainArgs {
    pub fn net_config(&self) -> NetConfig {
        let mut net = match self.net {
            NetSize::Full => NetConfig::full(self.bins, self.k),
            NetSize::Tiny => NetConfig::tiny(self.bins, self.k),
        };
        if let Some(c) = self.base_channels {
            net.base_channels = c;
        }
        if let Some(e) = self.encoders {
            net.num_encoders = e;
        }
        if let Some(r) = self.residual_blocks {
            net.num_residual = r;
        }
        net
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seq_len: self.seq_len,
            k_frames: self.k,
            learning_rate: self.lr,
            lr_decay: self.lr_decay,
            decay_period: self.decay_period,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

/// A reconstruction set given as `NAME=PATH`, or just `PATH` (named
/// after the directory).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedPath {
    pub name: String,
    pub path: PathBuf,
}

impl FromStr for NamedPath {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, path) = match s.split_once('=') {
            Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
            _ => {
                let p = PathBuf::from(s);
                let n = p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| s.to_string());
                (n, p)
            }
        };
        if path.as_os_str().is_empty() {
            return Err(format!("empty path in {s:?}"));
        }
        Ok(NamedPath { name, path })
    }
}

impl fmt::Display for NamedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.name, self.path.display())
    }
}

impl Serialize for NamedPath {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Reconstruction directory as NAME=DIR or DIR; repeat to compare
    /// methods. Mirrors the layout of --gt.
    #[arg(long, value_name = "[NAME=]DIR", required = true)]
    pub recon: Vec<NamedPath>,
    /// Ground truth: a sequence directory or a dataset directory.
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    /// Seconds after the first ground-truth frame that are not scored.
    #[arg(long, default_value_t = evpipe_core::metrics::DEFAULT_WARMUP_S)]
    pub warmup: f64,
    /// Seconds before the last ground-truth frame that are not scored.
    #[arg(long, default_value_t = 0.0)]
    pub tail: f64,
    /// Maximum timestamp gap in microseconds for a frame pair.
    #[arg(long, default_value_t = evpipe_core::metrics::MATCH_TOLERANCE_US)]
    pub tolerance_us: u64,
    /// Also write the table as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Event file or sequence directory; a synthetic stream is used if absent.
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    /// Sensor size of a text event file or of the synthetic stream.
    #[arg(long, default_value = "240x180")]
    pub size: Size,
    /// Events in the synthetic stream.
    #[arg(long, default_value_t = 2_000_000)]
    pub synthetic_events: usize,
    /// Event rate of the synthetic stream in events per second.
    #[arg(long, default_value_t = 1e6)]
    pub rate: f64,
    /// Seed of the synthetic stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Method to time; repeat for several. Defaults to all except e2v,
    /// which is added when --weights is given.
    #[arg(long, value_name = "METHOD")]
    #[serde(serialize_with = "serialize_methods")]
    pub method: Vec<BenchMethod>,
    /// Events per window (N).
    #[arg(long, default_value_t = DEFAULT_WINDOW_EVENTS)]
    pub window: usize,
    /// Temporal bins (B).
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Timed repetitions; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// Network weights for the e2v method.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Also write results as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn serialize_methods<S: Serializer>(v: &[BenchMethod], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|m| m.name()))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LatencyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: EventSource,
    /// Events per window (N).
    #[arg(long, default_value_t = DEFAULT_WINDOW_EVENTS)]
    pub window: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

/// Splices the contents of a `--config` file in right after the
/// subcommand, so explicit flags that follow take precedence.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let sub = args
        .iter()
        .skip(1)
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
        .map(|i| i + 1);
    let Some(sub) = sub else { return Ok(args) };
    let mut path = None;
    let mut i = sub + 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--" {
            break;
        }
        if a == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
        i += 1;
    }
    let Some(path) = path else { return Ok(args) };
    let extra = read_config_args(&path)?;
    let mut out = args[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn command() -> clap::Command {
    use clap::CommandFactory;
    let cmd = Cli::command();
    let subs: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    subs.into_iter().fold(cmd, |cmd, name| cmd.mut_subcommand(name, |s| s.args_override_self(true)))
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("evpipe: {e}");
            return e.exit_code();
        }
    };
    let cli = match command().try_get_matches_from(args).and_then(|m| {
        use clap::FromArgMatches;
        Cli::from_arg_matches(&m)
    }) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("evpipe: {e}");
            e.exit_code()
        }
    }
}

fn dump<T: Serialize>(args: &T) -> Result<()> {
    let v = serde_json::to_value(args).map_err(|e| Error::Config(e.to_string()))?;
    print!("{}", dump_key_values(&v));
    Ok(())
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    macro_rules! dumped {
        ($a:expr) => {
            if $a.common.dump_config {
                return dump(&$a);
            }
        };
    }
    let pool = pool(threads)?;
    match cli.command {
        Command::Simulate(a) => {
            dumped!(a);
            pool.install(|| cmd_simulate(&a))
        }
        Command::Voxelize(a) => {
            dumped!(a);
            cmd_voxelize(&a)
        }
        Command::Reconstruct(a) => {
            dumped!(a);
            pool.install(|| cmd_reconstruct(&a))
        }
        Command::Train(a) => {
            dumped!(a);
            pool.install(|| cmd_train(&a))
        }
        Command::Eval(a) => {
            dumped!(a);
            pool.install(|| cmd_eval(&a))
        }
        Command::Bench(a) => {
            dumped!(a);
            cmd_bench(&a)
        }
        Command::Latency(a) => {
            dumped!(a);
            cmd_latency(&a)
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = SimConfig::new(a.size.0, a.duration, a.seed);
    cfg.render_rate = a.render_rate;
    cfg.gt_rate = a.gt_rate;
    cfg.threshold_mean = a.threshold_mean;
    cfg.threshold_std = a.threshold_std;
    cfg.texture_scale = a.texture_scale;
    cfg.feature_px = a.feature_px;
    let textures = a.textures.as_deref().map(load_textures).transpose()?;
    let metas = generate_dataset(&cfg, a.sequences, textures.as_deref(), &a.out)?;
    let events: usize = metas.iter().map(|m| m.events).sum();
    println!("wrote {} sequences, {events} events, to {}", metas.len(), a.out.display());
    Ok(())
}

fn cmd_voxelize(a: &VoxelizeArgs) -> Result<()> {
    let stream = a.source.load(&a.source.events)?;
    let g = stream.geometry();
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let windows = window_by_count(&stream, a.window)?;
    let count = a.max_windows.unwrap_or(usize::MAX).min(windows.len());
    for (i, w) in windows.iter().take(count).enumerate() {
        let t = voxelize(w, a.bins, g)?;
        write_tensor(&a.out.join(format!("tensor_{i:06}.bin")), &t)?;
    }
    println!("wrote {count} tensors to {}", a.out.display());
    Ok(())
}

fn reconstruct_method(a: &ReconstructArgs) -> Result<Method> {
    Ok(match a.method {
        MethodArg::Integrate => Method::Integrate { c: a.threshold },
        MethodArg::Highpass => Method::Highpass {
            c: a.threshold,
            cutoff: a.cutoff,
            filter: (!a.no_bilateral).then_some((a.bilateral_d, a.bilateral_sigma)),
        },
        MethodArg::E2v => {
            let path = a
                .weights
                .as_ref()
                .ok_or_else(|| Error::Config("--method e2v needs --weights".into()))?;
            let w = load_weights(path)?;
            check_compatible(&w, a.bins, a.k)?;
            Method::E2v(Box::new(w))
        }
    })
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let method = reconstruct_method(a)?;
    let input = &a.source.events;
    if input.is_dir() && is_dataset(input) {
        let names = read_manifest(input)?;
        names.par_iter().try_for_each(|name| {
            let stream = a.source.load(&input.join(name))?;
            let frames = reconstruct_stream(&method, &stream, a.window)?;
            write_frame_dir(&a.out.join(name), &frames)
        })?;
        println!("reconstructed {} sequences into {}", names.len(), a.out.display());
    } else {
        let stream = a.source.load(input)?;
        let frames = reconstruct_stream(&method, &stream, a.window)?;
        write_frame_dir(&a.out, &frames)?;
        println!("wrote {} frames to {}", frames.len(), a.out.display());
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let job = TrainJob {
        dataset: a.data.clone(),
        out_dir: a.out.clone(),
        net: a.net_config(),
        train: a.train_config(),
        window_events: a.window,
        checkpoint_every: a.checkpoint_every,
        resume: a.resume,
    };
    let outcome = run_training(&job, |s| {
        println!("epoch {:>4}  loss {:.6}  rate {:.3e}", s.epoch, s.mean_loss, s.rate);
        let _ = std::io::stdout().flush();
    })?;
    println!(
        "trained on {} samples; weights in {}",
        outcome.samples,
        a.out.join(WEIGHTS_FILE).display()
    );
    Ok(())
}

/// Pairs of (sequence name, recon dir, gt dir) for one reconstruction set.
fn eval_pairs(recon: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if is_dataset(gt) {
        Ok(read_manifest(gt)?
            .into_iter()
            .map(|n| (n.clone(), recon.join(&n), gt.join(&n)))
            .collect())
    } else {
        let name = gt
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into());
        Ok(vec![(name, recon.to_path_buf(), gt.to_path_buf())])
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = EvalConfig {
        warmup_s: a.warmup,
        tail_s: a.tail,
        tolerance_us: a.tolerance_us,
    };
    let mut results: Vec<(String, Vec<SequenceMetrics>)> = Vec::new();
    for r in &a.recon {
        let pairs = eval_pairs(&r.path, &a.gt)?;
        let evals = pairs
            .par_iter()
            .map(|(name, rdir, gdir)| {
                let recon = read_frame_dir(rdir)?;
                let gt = read_frame_dir(gdir)?;
                Ok(evaluate_sequence(name, &recon, &gt, &cfg)?)
            })
            .collect::<Result<Vec<Evaluation>>>()?;
        let mut scored = Vec::new();
        for e in evals {
            match e {
                Evaluation::Scored(m) => scored.push(m),
                Evaluation::Empty { sequence, .. } => {
                    eprintln!("evpipe: {}: no matched frames in {sequence}, skipped", r.name)
                }
            }
        }
        results.push((r.name.clone(), scored));
    }
    let table = aggregate_table(&results)?;
    print!("{}", table.to_text());
    if let Some(p) = &a.csv {
        fs::write(p, table.to_csv()).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let stream = match &a.events {
        Some(p) => {
            let file = if p.is_dir() { p.join(EVENTS) } else { p.clone() };
            read_events(&file, Some(a.size.0))?
        }
        None => synthetic_stream(a.size.0, a.synthetic_events, a.rate, a.seed)?,
    };
    let weights = a.weights.as_deref().map(load_weights).transpose()?;
    if let Some(w) = &weights {
        check_compatible(w, Some(a.bins), None)?;
    }
    let methods: Vec<BenchMethod> = if a.method.is_empty() {
        BenchMethod::ALL
            .into_iter()
            .filter(|m| *m != BenchMethod::E2v || weights.is_some())
            .collect()
    } else {
        a.method.clone()
    };
    let opts = BenchOptions {
        window_events: a.window,
        bins: a.bins,
        repetitions: a.repetitions,
        weights: weights.as_ref(),
    };
    let reports = methods
        .into_iter()
        .map(|m| throughput_bench(m, &stream, &opts))
        .collect::<Result<Vec<BenchReport>>>()?;
    let mut csv = format!("{}\n", BenchReport::CSV_HEADER);
    println!("{:<16} {:>10} {:>12}", "method", "Mev/s", "ms/frame");
    for r in &reports {
        println!("{:<16} {:>10.3} {:>12.4}", r.method, r.mev_per_s, r.frame_ms);
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    if let Some(p) = &a.csv {
        fs::write(p, csv).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn cmd_latency(a: &LatencyArgs) -> Result<()> {
    let stream = a.source.load(&a.source.events)?;
    let r = latency_report(&stream, a.window)?;
    let [min, p25, med, p75, max] = r.ms();
    println!("windows {}", r.windows);
    println!("window duration ms: min {min:.3}  p25 {p25:.3}  median {med:.3}  p75 {p75:.3}  max {max:.3}");
    Ok(())
}
