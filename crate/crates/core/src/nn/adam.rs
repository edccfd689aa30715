use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Real;
use super::weights::{Gradients, NetworkWeights};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(weights: &NetworkWeights<T>) -> Self {
        let zeros = || {
            weights
                .blocks()
                .iter()
                .map(|b| vec![T::zero(); b.value.shape().len()])
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// Step-decay learning rate: `base * decay^floor(epoch / period)`.
pub fn scheduled_rate(base: f64, decay: f64, period: usize, epoch: usize) -> f64 {
    base * libm::pow(decay, (epoch / period.max(1)) as f64)
}

/// One bias-corrected ADAM update of every trainable block.
pub fn adam_step<T: Real>(weights: &mut NetworkWeights<T>, grads: &Gradients<T>, state: &mut AdamState<T>, rate: f64) -> Result<()> {
    if grads.blocks.len() != weights.blocks().len() || state.m.len() != weights.blocks().len() {
        return Err(Error::Shape("optimizer state does not match the weights".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let b1 = T::of_f64(BETA1);
    let b2 = T::of_f64(BETA2);
    let c1 = 1.0 - libm::pow(BETA1, t);
    let c2 = 1.0 - libm::pow(BETA2, t);
    let lr = T::of_f64(rate);
    let eps = T::of_f64(EPSILON);
    let inv_c1 = T::of_f64(1.0 / c1);
    let inv_c2 = T::of_f64(1.0 / c2);
    for (i, block) in weights.blocks_mut().iter_mut().enumerate() {
        if !block.kind.trainable() {
            continue;
        }
        let g = &grads.blocks[i];
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((p, g), m), v) in block.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let mhat = *m * inv_c1;
            let vhat = *v * inv_c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
