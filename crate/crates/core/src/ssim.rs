//! Gaussian-windowed SSIM over valid window positions, with its gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
/// Dynamic range of intensities in `[0, 1]`.
pub const RANGE: f64 = 1.0;

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            libm::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable valid-mode correlation.
fn filter_valid(img: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &img[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (i, t) in taps.iter().enumerate() {
            let src = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += t * v;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`].
fn filter_valid_adjoint(map: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; ow * h];
    for y in 0..oh {
        for (i, t) in taps.iter().enumerate() {
            let dst = &mut rows[(y + i) * ow..(y + i + 1) * ow];
            for (d, v) in dst.iter_mut().zip(&map[y * ow..(y + 1) * ow]) {
                *d += t * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for x in 0..ow {
            let v = rows[y * ow + x];
            for (d, t) in dst[x..x + k].iter_mut().zip(taps) {
                *d += t * v;
            }
        }
    }
    out
}

/// Mean SSIM of `x` against `y` (both `w x h`, row-major) and, if
/// requested, its gradient with respect to `x`.
pub fn ssim_with_grad(x: &[f64], y: &[f64], w: usize, h: usize, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    if x.len() != w * h || y.len() != w * h {
        return Err(Error::Shape(alloc::format!("SSIM inputs must both be {w}x{h}")));
    }
    if w < WINDOW || h < WINDOW {
        return Err(Error::Shape(alloc::format!(
            "SSIM needs frames of at least {WINDOW}x{WINDOW}, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps(WINDOW, SIGMA);
    let c1 = (K1 * RANGE) * (K1 * RANGE);
    let c2 = (K2 * RANGE) * (K2 * RANGE);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, w, h, &taps);
    let my = filter_valid(y, w, h, &taps);
    let pxx = filter_valid(&xx, w, h, &taps);
    let pyy = filter_valid(&yy, w, h, &taps);
    let pxy = filter_valid(&xy, w, h, &taps);
    let count = mx.len() as f64;

    let mut total = 0.0;
    let (mut d_mx, mut d_pxx, mut d_pxy) = if want_grad {
        (vec![0.0; mx.len()], vec![0.0; mx.len()], vec![0.0; mx.len()])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let sxx = pxx[i] - ux * ux;
        let syy = pyy[i] - uy * uy;
        let sxy = pxy[i] - ux * uy;
        let a1 = 2.0 * ux * uy + c1;
        let a2 = 2.0 * sxy + c2;
        let b1 = ux * ux + uy * uy + c1;
        let b2 = sxx + syy + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            let inv = 1.0 / (b1 * b2);
            d_pxy[i] = 2.0 * a1 * inv / count;
            d_pxx[i] = -s / b2 / count;
            d_mx[i] = (2.0 * uy * a2 * inv - 2.0 * uy * a1 * inv - s * 2.0 * ux / b1 + s * 2.0 * ux / b2) / count;
        }
    }
    let grad = if want_grad {
        let gm = filter_valid_adjoint(&d_mx, w, h, &taps);
        let gxx = filter_valid_adjoint(&d_pxx, w, h, &taps);
        let gxy = filter_valid_adjoint(&d_pxy, w, h, &taps);
        Some(
            (0..w * h)
                .map(|i| gm[i] + 2.0 * x[i] * gxx[i] + y[i] * gxy[i])
                .collect(),
        )
    } else {
        None
    };
    Ok((total / count, grad))
}
