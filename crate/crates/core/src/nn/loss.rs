//! Reconstruction loss `mean|x - y| + lambda (1 - SSIM(x, y))`, averaged
//! over the batch.

use alloc::vec::Vec;

use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};
use crate::ssim::ssim_with_grad;

pub const SSIM_WEIGHT: f64 = 0.5;

/// Per-image distance and its gradient with respect to `x`.
pub fn image_distance(x: &[f64], y: &[f64], w: usize, h: usize) -> Result<(f64, Vec<f64>)> {
    let n = (w * h) as f64;
    let l1 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let (s, gs) = ssim_with_grad(x, y, w, h, true)?;
    let gs = gs.unwrap_or_default();
    let grad = x
        .iter()
        .zip(y)
        .zip(&gs)
        .map(|((a, b), g)| {
            let sign = if a > b {
                1.0
            } else if a < b {
                -1.0
            } else {
                0.0
            };
            sign / n - SSIM_WEIGHT * g
        })
        .collect();
    Ok((l1 + SSIM_WEIGHT * (1.0 - s), grad))
}

/// Loss for one unrolled step over a `(batch, 1, H, W)` prediction; returns
/// the batch-mean distance and its gradient.
pub fn loss_recon<T: Real>(prediction: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    let ps = prediction.shape();
    if ps != target.shape() || ps.c != 1 {
        return Err(Error::Shape(alloc::format!(
            "loss needs matching single-channel tensors, got {ps} and {}",
            target.shape()
        )));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(ps.len());
    let scale = 1.0 / ps.n as f64;
    for n in 0..ps.n {
        let x: Vec<f64> = prediction.item(n).iter().map(|v| v.as_f64()).collect();
        let y: Vec<f64> = target.item(n).iter().map(|v| v.as_f64()).collect();
        let (d, g) = image_distance(&x, &y, ps.w, ps.h)?;
        total += d;
        grad.extend(g.into_iter().map(|v| T::of_f64(v * scale)));
    }
    Ok((total * scale, Tensor4::from_vec(ps, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Shape4;

    #[test]
    fn identical_inputs_give_zero() {
        let s = Shape4::new(2, 1, 16, 16);
        let x = Tensor4::from_vec(s, (0..s.len()).map(|i| (i % 13) as f64 / 13.0).collect()).unwrap();
        let (l, _) = loss_recon(&x, &x).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn distance_is_positive_for_distinct_inputs() {
        let s = Shape4::new(1, 1, 16, 16);
        let x = Tensor4::from_vec(s, (0..256).map(|i| (i % 13) as f64 / 13.0).collect()).unwrap();
        let mut y = x.clone();
        y.data_mut()[40] += 0.01;
        assert!(loss_recon(&x, &y).unwrap().0 > 0.0);
        assert!(loss_recon(&y, &x).unwrap().0 > 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor4::<f32>::zeros(Shape4::new(1, 1, 16, 16));
        let b = Tensor4::<f32>::zeros(Shape4::new(1, 1, 16, 15));
        assert!(loss_recon(&a, &b).is_err());
    }
}
