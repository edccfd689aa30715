//! Unrolled training: each sample runs `L` recurrent steps from a reset
//! state, the per-step losses are summed, and gradients flow back through
//! the whole unroll including the fed-back predictions.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, scheduled_rate, AdamState};
use super::loss::loss_recon;
use super::norm::Mode;
use super::tensor::{Real, Shape4, Tensor4};
use super::unet::{apply_running_stats, unet_backward, unet_forward, UnetCache};
use super::weights::{Gradients, NetworkWeights};
use crate::error::{Error, Result};
use crate::event::{window_by_count, Event, EventStream, SensorGeometry};
use crate::frame::Frame;
use crate::tensorizer::voxelize_events;

/// Value of the reset recurrent state.
pub const INITIAL_STATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Unroll length L.
    pub seq_len: usize,
    pub k_frames: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Epochs between learning-rate decays.
    pub decay_period: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seq_len: 8,
            k_frames: 3,
            learning_rate: 1e-4,
            lr_decay: 0.9,
            decay_period: 10,
            batch_size: 16,
            epochs: 40,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(Error::Invalid("unroll length must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::Invalid("learning-rate decay must be positive".into()));
        }
        if self.batch_size == 0 || self.decay_period == 0 {
            return Err(Error::Invalid("batch size and decay period must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        scheduled_rate(self.learning_rate, self.lr_decay, self.decay_period, epoch)
    }
}

/// `L` consecutive event windows with the ground-truth frame for each.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub geometry: SensorGeometry,
    pub windows: Vec<Vec<Event>>,
    pub targets: Vec<Frame>,
}

impl TrainSample {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Splits a sequence into non-overlapping samples of `seq_len` windows
    /// of `window_events` events. Each window is paired with the frame
    /// closest to its last event (ties go to the earlier frame).
    pub fn from_sequence(stream: &EventStream, frames: &[Frame], window_events: usize, seq_len: usize) -> Result<Vec<TrainSample>> {
        if frames.is_empty() {
            return Err(Error::Insufficient("sequence has no ground-truth frames".into()));
        }
        if seq_len == 0 {
            return Err(Error::Invalid("unroll length must be at least 1".into()));
        }
        let windows = window_by_count(stream, window_events)?;
        if windows.len() < seq_len {
            return Err(Error::Insufficient(format!(
                "sequence yields {} windows of {window_events} events, need {seq_len}",
                windows.len()
            )));
        }
        let g = stream.geometry();
        windows
            .chunks_exact(seq_len)
            .map(|chunk| {
                let targets = chunk
                    .iter()
                    .map(|w| {
                        let f = &frames[nearest_frame(frames, w.t_last())];
                        if f.geometry() != g {
                            return Err(Error::Shape("frame size differs from the event stream".into()));
                        }
                        Ok(f.clone())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TrainSample {
                    geometry: g,
                    windows: chunk.iter().map(|w| w.events().to_vec()).collect(),
                    targets,
                })
            })
            .collect()
    }
}

/// Index of the frame with timestamp closest to `t`; `frames` sorted by time.
pub fn nearest_frame(frames: &[Frame], t: u64) -> usize {
    let i = frames.partition_point(|f| f.t < t);
    if i == 0 {
        return 0;
    }
    if i == frames.len() {
        return frames.len() - 1;
    }
    if t - frames[i - 1].t <= frames[i].t - t {
        i - 1
    } else {
        i
    }
}

/// Result of running a batch through the unroll.
#[derive(Debug, Clone)]
pub struct Unroll<T> {
    /// Sum over steps of the batch-mean distance.
    pub loss: f64,
    pub step_losses: Vec<f64>,
    pub predictions: Vec<Tensor4<T>>,
    pub caches: Vec<UnetCache<T>>,
    /// Present when gradients were requested.
    pub grads: Option<Gradients<T>>,
}

fn check_batch(batch: &[&TrainSample], bins: usize) -> Result<(SensorGeometry, usize)> {
    let first = batch.first().ok_or_else(|| Error::Insufficient("empty batch".into()))?;
    let (g, l) = (first.geometry, first.len());
    if l == 0 {
        return Err(Error::Insufficient("sample has no windows".into()));
    }
    for s in batch {
        if s.geometry != g || s.len() != l || s.targets.len() != l {
            return Err(Error::Shape("batch samples differ in size or unroll length".into()));
        }
    }
    if bins == 0 {
        return Err(Error::Invalid("network expects zero event bins".into()));
    }
    Ok((g, l))
}

/// Runs `batch` through the full unroll. With `want_grad` the mode must be
/// [`Mode::Train`] and gradients of the summed loss are returned.
pub fn unroll<T: Real>(weights: &NetworkWeights<T>, batch: &[&TrainSample], mode: Mode, want_grad: bool) -> Result<Unroll<T>> {
    let cfg = *weights.config();
    let (g, steps) = check_batch(batch, cfg.bins)?;
    let (h, w) = (g.height as usize, g.width as usize);
    let n = batch.len();
    let k = cfg.k_frames;
    let plane = h * w;
    let in_shape = Shape4::new(n, cfg.input_channels(), h, w);
    let out_shape = Shape4::new(n, 1, h, w);

    let mut predictions: Vec<Tensor4<T>> = Vec::with_capacity(steps);
    let mut caches = Vec::with_capacity(steps);
    let mut loss_grads = Vec::with_capacity(steps);
    let mut step_losses = Vec::with_capacity(steps);
    let init = T::of_f64(INITIAL_STATE);

    for l in 0..steps {
        let mut input = Tensor4::zeros(in_shape);
        for (i, s) in batch.iter().enumerate() {
            let vox = voxelize_events(&s.windows[l], cfg.bins, g)?;
            let item = input.item_mut(i);
            for (d, v) in item[..cfg.bins * plane].iter_mut().zip(vox.values()) {
                *d = T::of_f64(*v);
            }
            // channel B + j holds the prediction of step l - K + j
            for j in 0..k {
                let dst = &mut item[(cfg.bins + j) * plane..(cfg.bins + j + 1) * plane];
                match (l + j).checked_sub(k) {
                    Some(src) => dst.copy_from_slice(predictions[src].item(i)),
                    None => dst.fill(init),
                }
            }
        }
        let (pred, cache) = unet_forward(weights, &input, mode)?;
        let mut target = Tensor4::zeros(out_shape);
        for (i, s) in batch.iter().enumerate() {
            for (d, v) in target.item_mut(i).iter_mut().zip(s.targets[l].values()) {
                *d = T::of_f64(*v as f64);
            }
        }
        let (sl, sg) = loss_recon(&pred, &target)?;
        step_losses.push(sl);
        loss_grads.push(sg);
        predictions.push(pred);
        caches.push(cache);
    }
    let loss = step_losses.iter().sum();

    let grads = if want_grad {
        if mode != Mode::Train {
            return Err(Error::Invalid("gradients need a train-mode unroll".into()));
        }
        let mut total = weights.zero_gradients();
        // gradient arriving at each prediction through later inputs
        let mut fed_back: Vec<Tensor4<T>> = (0..steps).map(|_| Tensor4::zeros(out_shape)).collect();
        for l in (0..steps).rev() {
            let mut gy = loss_grads[l].clone();
            gy.add_assign(&fed_back[l]);
            let (gx, gw) = unet_backward(weights, &caches[l], &gy)?;
            total.add_assign(&gw);
            for j in 0..k {
                if let Some(src) = (l + j).checked_sub(k) {
                    for i in 0..n {
                        let from = &gx.item(i)[(cfg.bins + j) * plane..(cfg.bins + j + 1) * plane];
                        for (d, v) in fed_back[src].item_mut(i).iter_mut().zip(from) {
                            *d += *v;
                        }
                    }
                }
            }
        }
        Some(total)
    } else {
        None
    };
    Ok(Unroll {
        loss,
        step_losses,
        predictions,
        caches,
        grads,
    })
}

/// Summary of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over samples of the summed unroll loss.
    pub mean_loss: f64,
    pub rate: f64,
    pub batches: usize,
}

/// Optimizer loop state. The sample order of epoch `e` depends only on
/// the seed and `e`, so a run can resume from any epoch boundary.
#[derive(Debug, Clone)]
pub struct Trainer<T = f32> {
    weights: NetworkWeights<T>,
    adam: AdamState<T>,
    config: TrainConfig,
    epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(weights: NetworkWeights<T>, config: TrainConfig) -> Result<Self> {
        Self::resume(weights, None, config, 0)
    }

    pub fn resume(weights: NetworkWeights<T>, adam: Option<AdamState<T>>, config: TrainConfig, epoch: usize) -> Result<Self> {
        config.validate()?;
        if weights.config().k_frames != config.k_frames {
            return Err(Error::Invalid(format!(
                "network expects K = {}, training config has K = {}",
                weights.config().k_frames,
                config.k_frames
            )));
        }
        let adam = adam.unwrap_or_else(|| AdamState::new(&weights));
        if adam.m.len() != weights.blocks().len() {
            return Err(Error::Shape("optimizer state does not match the weights".into()));
        }
        Ok(Trainer {
            weights,
            adam,
            config,
            epoch,
        })
    }

    /// Fresh Kaiming-initialized weights drawn from the training seed.
    pub fn init_weights(net: super::weights::NetConfig, config: &TrainConfig) -> Result<NetworkWeights<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        NetworkWeights::init(net, &mut rng)
    }

    pub fn weights(&self) -> &NetworkWeights<T> {
        &self.weights
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn into_weights(self) -> NetworkWeights<T> {
        self.weights
    }

    /// Sample visiting order for `epoch`.
    pub fn epoch_order(&self, samples: usize, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..samples).collect();
        order.shuffle(&mut rng);
        order
    }

    /// One pass over `samples`. On a non-finite loss or gradient the
    /// weights are left as they were before the offending batch.
    pub fn train_epoch(&mut self, samples: &[TrainSample]) -> Result<EpochStats> {
        if samples.is_empty() {
            return Err(Error::Insufficient("no training samples".into()));
        }
        for s in samples {
            if s.len() != self.config.seq_len {
                return Err(Error::Shape(format!(
                    "sample has {} windows, unroll length is {}",
                    s.len(),
                    self.config.seq_len
                )));
            }
        }
        let rate = self.config.rate_at(self.epoch);
        let order = self.epoch_order(samples.len(), self.epoch);
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(self.config.batch_size) {
            let batch: Vec<&TrainSample> = idx.iter().map(|&i| &samples[i]).collect();
            let u = unroll(&self.weights, &batch, Mode::Train, true)?;
            let grads = u.grads.expect("requested gradients");
            if !u.loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss diverged in epoch {} batch {batches}",
                    self.epoch + 1
                )));
            }
            adam_step(&mut self.weights, &grads, &mut self.adam, rate)?;
            for c in &u.caches {
                apply_running_stats(&mut self.weights, c);
            }
            if !self.weights.is_finite() {
                return Err(Error::NonFinite(format!("weights diverged in epoch {}", self.epoch + 1)));
            }
            total += u.loss * batch.len() as f64;
            batches += 1;
        }
        self.epoch += 1;
        Ok(EpochStats {
            epoch: self.epoch,
            mean_loss: total / samples.len() as f64,
            rate,
            batches,
        })
    }
}

/// Mean eval-mode unroll loss over `samples`.
pub fn evaluate_loss<T: Real>(weights: &NetworkWeights<T>, samples: &[TrainSample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Insufficient("no samples".into()));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch: Vec<&TrainSample> = chunk.iter().collect();
        total += unroll(weights, &batch, Mode::Eval, false)?.loss * batch.len() as f64;
    }
    Ok(total / samples.len() as f64)
}
