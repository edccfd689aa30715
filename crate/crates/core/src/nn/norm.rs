//! Per-channel batch normalization.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize by batch statistics.
    Train,
    /// Normalize by running statistics.
    Eval,
}

/// Saved state for the train-mode backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor4<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Unbiased batch variance, used for the running estimate.
    pub batch_var: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor4<T>,
    pub scale: Vec<T>,
    pub shift: Vec<T>,
}

fn check<T: Real>(x: &Tensor4<T>, params: &[&[T]]) -> Result<()> {
    let c = x.shape().c;
    if params.iter().any(|p| p.len() != c) {
        return Err(Error::Shape(alloc::format!(
            "batch norm parameters do not match {} channels",
            c
        )));
    }
    Ok(())
}

pub fn batch_norm_train<T: Real>(x: &Tensor4<T>, scale: &[T], shift: &[T]) -> Result<(Tensor4<T>, BatchNormCache<T>)> {
    check(x, &[scale, shift])?;
    let s = x.shape();
    let count = (s.n * s.plane()) as f64;
    let eps = T::of_f64(BN_EPS);
    let mut y = Tensor4::zeros(s);
    let mut xhat = Tensor4::zeros(s);
    let mut inv_std = vec![T::zero(); s.c];
    let mut batch_mean = vec![T::zero(); s.c];
    let mut batch_var = vec![T::zero(); s.c];
    for c in 0..s.c {
        let mut sum = 0.0f64;
        for n in 0..s.n {
            sum += x.plane(n, c).iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / count;
        let mut sq = 0.0f64;
        for n in 0..s.n {
            sq += x.plane(n, c).iter().map(|v| {
                let d = v.as_f64() - mean;
                d * d
            }).sum::<f64>();
        }
        let var = sq / count;
        let istd = T::of_f64(1.0 / libm::sqrt(var + eps.as_f64()));
        let m = T::of_f64(mean);
        inv_std[c] = istd;
        batch_mean[c] = m;
        batch_var[c] = T::of_f64(if count > 1.0 { sq / (count - 1.0) } else { var });
        for n in 0..s.n {
            let src = x.plane(n, c);
            let xh = xhat.plane_mut(n, c);
            for (h, v) in xh.iter_mut().zip(src) {
                *h = (*v - m) * istd;
            }
            let xh = xhat.plane(n, c).to_vec();
            for (o, h) in y.plane_mut(n, c).iter_mut().zip(&xh) {
                *o = scale[c] * *h + shift[c];
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            xhat,
            inv_std,
            batch_mean,
            batch_var,
        },
    ))
}

pub fn batch_norm_eval<T: Real>(x: &Tensor4<T>, scale: &[T], shift: &[T], running_mean: &[T], running_var: &[T]) -> Result<Tensor4<T>> {
    check(x, &[scale, shift, running_mean, running_var])?;
    let s = x.shape();
    let eps = T::of_f64(BN_EPS);
    let mut y = Tensor4::zeros(s);
    for c in 0..s.c {
        let a = scale[c] / (running_var[c] + eps).sqrt();
        let b = shift[c] - a * running_mean[c];
        for n in 0..s.n {
            for (o, v) in y.plane_mut(n, c).iter_mut().zip(x.plane(n, c)) {
                *o = a * *v + b;
            }
        }
    }
    Ok(y)
}

/// Train-mode gradients.
pub fn batch_norm_grad<T: Real>(cache: &BatchNormCache<T>, scale: &[T], grad_out: &Tensor4<T>) -> BatchNormGrads<T> {
    let s = grad_out.shape();
    let count = T::of_f64((s.n * s.plane()) as f64);
    let mut gx = Tensor4::zeros(s);
    let mut gscale = vec![T::zero(); s.c];
    let mut gshift = vec![T::zero(); s.c];
    for c in 0..s.c {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for n in 0..s.n {
            for (g, h) in grad_out.plane(n, c).iter().zip(cache.xhat.plane(n, c)) {
                sum_g += *g;
                sum_gx += *g * *h;
            }
        }
        gscale[c] = sum_gx;
        gshift[c] = sum_g;
        let k = scale[c] * cache.inv_std[c] / count;
        for n in 0..s.n {
            let g = grad_out.plane(n, c);
            let h = cache.xhat.plane(n, c);
            for ((o, gv), hv) in gx.plane_mut(n, c).iter_mut().zip(g).zip(h) {
                *o = k * (count * *gv - sum_g - *hv * sum_gx);
            }
        }
    }
    BatchNormGrads {
        input: gx,
        scale: gscale,
        shift: gshift,
    }
}

/// `running <- (1 - momentum) running + momentum batch`
pub fn update_running<T: Real>(running_mean: &mut [T], running_var: &mut [T], cache: &BatchNormCache<T>) {
    let m = T::of_f64(BN_MOMENTUM);
    let keep = T::one() - m;
    for (r, b) in running_mean.iter_mut().zip(&cache.batch_mean) {
        *r = keep * *r + m * *b;
    }
    for (r, b) in running_var.iter_mut().zip(&cache.batch_var) {
        *r = keep * *r + m * *b;
    }
}
