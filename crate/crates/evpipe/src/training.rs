//! Training driver: dataset loading, epochs, loss log and checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use evpipe_core::nn::adam::AdamState;
use evpipe_core::nn::train::{EpochStats, TrainConfig, TrainSample, Trainer};
use evpipe_core::nn::{NetConfig, NetworkWeights};

use crate::dataset::{load_dataset, LoadedSequence};
use crate::error::{Error, Result};
use crate::weights_file::{decode_optimizer, encode_optimizer, load_weights, save_weights};

pub const WEIGHTS_FILE: &str = "weights.e2vw";
pub const CHECKPOINT_WEIGHTS: &str = "checkpoint.e2vw";
pub const CHECKPOINT_OPTIMIZER: &str = "checkpoint.e2va";
pub const LOSS_LOG: &str = "loss.csv";

/// Every sample of every sequence. A sequence shorter than one unroll is
/// an error rather than being skipped silently.
pub fn build_samples(seqs: &[LoadedSequence], window_events: usize, seq_len: usize) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for s in seqs {
        let samples = TrainSample::from_sequence(&s.events, &s.frames, window_events, seq_len)
            .map_err(|e| Error::Config(format!("sequence {}: {e}", s.name)))?;
        out.extend(samples);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainJob {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub window_events: usize,
    /// Epochs between checkpoints; 0 writes only the final weights.
    pub checkpoint_every: usize,
    /// Continue from the checkpoint in `out_dir` if there is one.
    pub resume: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub weights: NetworkWeights<f32>,
    pub log: Vec<EpochStats>,
    pub samples: usize,
}

pub fn write_checkpoint(dir: &Path, trainer: &Trainer<f32>) -> Result<()> {
    save_weights(trainer.weights(), &dir.join(CHECKPOINT_WEIGHTS))?;
    let p = dir.join(CHECKPOINT_OPTIMIZER);
    fs::write(&p, encode_optimizer(trainer.adam(), trainer.epoch())).map_err(|e| Error::io(&p, e))
}

pub fn read_checkpoint(dir: &Path) -> Result<Option<(NetworkWeights<f32>, AdamState<f32>, usize)>> {
    let wp = dir.join(CHECKPOINT_WEIGHTS);
    let op = dir.join(CHECKPOINT_OPTIMIZER);
    if !wp.is_file() || !op.is_file() {
        return Ok(None);
    }
    let weights = load_weights(&wp)?;
    let bytes = fs::read(&op).map_err(|e| Error::io(&op, e))?;
    let (adam, epoch) = decode_optimizer(&bytes, &op)?;
    Ok(Some((weights, adam, epoch)))
}

pub fn format_log_line(s: &EpochStats) -> String {
    format!("{},{},{}", s.epoch, s.mean_loss, s.rate)
}

/// Reads `epoch,loss,rate` rows written by an earlier run.
pub fn read_loss_log(path: &Path) -> Result<Vec<EpochStats>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::format(path, format!("line {}: malformed row {line:?}", i + 1));
        if f.len() != 3 {
            return Err(bad());
        }
        rows.push(EpochStats {
            epoch: f[0].parse().map_err(|_| bad())?,
            mean_loss: f[1].parse().map_err(|_| bad())?,
            rate: f[2].parse().map_err(|_| bad())?,
            batches: 0,
        });
    }
    Ok(rows)
}

fn write_loss_log(path: &Path, log: &[EpochStats]) -> Result<()> {
    let mut s = String::from("epoch,loss,rate\n");
    for row in log {
        s.push_str(&format_log_line(row));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Trains on an in-memory sample set. `on_epoch` sees each finished epoch.
pub fn train_samples(
    trainer: &mut Trainer<f32>,
    samples: &[TrainSample],
    out_dir: Option<&Path>,
    checkpoint_every: usize,
    log: &mut Vec<EpochStats>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<()> {
    while trainer.epoch() < trainer.config().epochs {
        let stats = match trainer.train_epoch(samples) {
            Ok(s) => s,
            Err(e) => {
                if let Some(dir) = out_dir {
                    write_checkpoint(dir, trainer)?;
                    write_loss_log(&dir.join(LOSS_LOG), log)?;
                }
                return Err(e.into());
            }
        };
        log.push(stats);
        on_epoch(&stats);
        if let Some(dir) = out_dir {
            write_loss_log(&dir.join(LOSS_LOG), log)?;
            if checkpoint_every > 0 && stats.epoch % checkpoint_every == 0 {
                write_checkpoint(dir, trainer)?;
            }
        }
    }
    Ok(())
}

pub fn run_training(job: &TrainJob, on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
    job.train.validate()?;
    job.net.validate()?;
    if job.net.k_frames != job.train.k_frames {
        return Err(Error::Config(format!(
            "network K = {} differs from training K = {}",
            job.net.k_frames, job.train.k_frames
        )));
    }
    let seqs = load_dataset(&job.dataset)?;
    let samples = build_samples(&seqs, job.window_events, job.train.seq_len)?;
    drop(seqs);
    fs::create_dir_all(&job.out_dir).map_err(|e| Error::io(&job.out_dir, e))?;

    let log_path = job.out_dir.join(LOSS_LOG);
    let resumed = if job.resume { read_checkpoint(&job.out_dir)? } else { None };
    let (mut trainer, mut log) = match resumed {
        Some((weights, adam, epoch)) => {
            if *weights.config() != job.net {
                return Err(Error::Config("checkpoint network config differs from the requested one".into()));
            }
            let mut log = if log_path.is_file() { read_loss_log(&log_path)? } else { Vec::new() };
            log.retain(|s| s.epoch <= epoch);
            (Trainer::resume(weights, Some(adam), job.train, epoch)?, log)
        }
        None => (Trainer::new(Trainer::<f32>::init_weights(job.net, &job.train)?, job.train)?, Vec::new()),
    };

    train_samples(&mut trainer, &samples, Some(&job.out_dir), job.checkpoint_every, &mut log, on_epoch)?;
    let weights = trainer.into_weights();
    save_weights(&weights, &job.out_dir.join(WEIGHTS_FILE))?;
    Ok(TrainOutcome {
        weights,
        log,
        samples: samples.len(),
    })
}
