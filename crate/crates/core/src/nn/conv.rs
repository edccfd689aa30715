//! 2-D convolution and its adjoint (transposed convolution), both lowered
//! to im2col plus dense products.
//!
//! Kernel layouts: `conv2d` takes `(C_out, C_in, k, k)`; `transposed_conv2d`
//! takes `(C_in, C_out, k, k)`, so a transposed convolution with kernel `K`
//! is exactly the adjoint of a convolution with the same `K`.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{axpy, dot, Real, Shape4, Tensor4};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry {
            kernel,
            stride,
            padding,
        }
    }

    /// `floor((n + 2p - k) / s) + 1`
    pub fn conv_out(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        if self.stride == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// `(n - 1) s - 2p + k + output_padding`
    pub fn transposed_out(&self, n: usize, output_padding: usize) -> Option<usize> {
        let full = (n.checked_sub(1)?) * self.stride + self.kernel + output_padding;
        full.checked_sub(2 * self.padding).filter(|&v| v > 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

fn check_kernel<T: Real>(weight: &Tensor4<T>, in_channels: usize, geo: &ConvGeometry, transposed: bool) -> Result<()> {
    let ws = weight.shape();
    let c_in = if transposed { ws.n } else { ws.c };
    if ws.h != geo.kernel || ws.w != geo.kernel || c_in != in_channels || geo.stride == 0 {
        return Err(Error::Shape(alloc::format!(
            "kernel {ws} incompatible with {in_channels} input channels, k={}, stride={}",
            geo.kernel,
            geo.stride
        )));
    }
    Ok(())
}

/// Gathers input patches into a `(C k k) x (H_out W_out)` matrix.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, geo: &ConvGeometry, ho: usize, wo: usize, cols: &mut [T]) {
    let k = geo.kernel;
    let (s, p) = (geo.stride as isize, geo.padding as isize);
    let plane = ho * wo;
    for ci in 0..c {
        let src = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..ho {
                    let iy = oy as isize * s + ky as isize - p;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = ox as isize * s + kx as isize - p;
                        *d = if ix >= 0 && ix < w as isize { srow[ix as usize] } else { T::zero() };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix back onto the image (adjoint of [`im2col`]).
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, geo: &ConvGeometry, ho: usize, wo: usize, x: &mut [T]) {
    let k = geo.kernel;
    let (s, p) = (geo.stride as isize, geo.padding as isize);
    let plane = ho * wo;
    for ci in 0..c {
        let dst = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..ho {
                    let iy = oy as isize * s + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in row[oy * wo..(oy + 1) * wo].iter().enumerate() {
                        let ix = ox as isize * s + kx as isize - p;
                        if ix >= 0 && ix < w as isize {
                            drow[ix as usize] += *v;
                        }
                    }
                }
            }
        }
    }
}

/// `out (M x J) += a (M x R) * b (R x J)`
fn gemm_nn<T: Real>(out: &mut [T], a: &[T], b: &[T], m: usize, r: usize, j: usize) {
    for mi in 0..m {
        let orow = &mut out[mi * j..(mi + 1) * j];
        for ri in 0..r {
            let av = a[mi * r + ri];
            if av != T::zero() {
                axpy(orow, av, &b[ri * j..(ri + 1) * j]);
            }
        }
    }
}

/// `out (R x J) += a^T * g` with `a (M x R)`, `g (M x J)`
fn gemm_tn<T: Real>(out: &mut [T], a: &[T], g: &[T], m: usize, r: usize, j: usize) {
    for mi in 0..m {
        let grow = &g[mi * j..(mi + 1) * j];
        for ri in 0..r {
            let av = a[mi * r + ri];
            if av != T::zero() {
                axpy(&mut out[ri * j..(ri + 1) * j], av, grow);
            }
        }
    }
}

/// `out (M x R) += g (M x J) * b^T` with `b (R x J)`
fn gemm_nt<T: Real>(out: &mut [T], g: &[T], b: &[T], m: usize, r: usize, j: usize) {
    for mi in 0..m {
        let grow = &g[mi * j..(mi + 1) * j];
        for ri in 0..r {
            out[mi * r + ri] += dot(grow, &b[ri * j..(ri + 1) * j]);
        }
    }
}

/// Cross-correlation with zero padding.
pub fn conv2d<T: Real>(x: &Tensor4<T>, weight: &Tensor4<T>, bias: Option<&[T]>, geo: ConvGeometry) -> Result<Tensor4<T>> {
    let xs = x.shape();
    check_kernel(weight, xs.c, &geo, false)?;
    let c_out = weight.shape().n;
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::Shape(alloc::format!("bias has {} entries for {c_out} channels", b.len())));
        }
    }
    let (ho, wo) = match (geo.conv_out(xs.h), geo.conv_out(xs.w)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Shape(alloc::format!("input {xs} smaller than kernel {}", geo.kernel))),
    };
    let r = xs.c * geo.kernel * geo.kernel;
    let plane = ho * wo;
    let mut out = Tensor4::zeros(Shape4::new(xs.n, c_out, ho, wo));
    let mut cols = vec![T::zero(); r * plane];
    for n in 0..xs.n {
        im2col(x.item(n), xs.c, xs.h, xs.w, &geo, ho, wo, &mut cols);
        let o = out.item_mut(n);
        if let Some(b) = bias {
            for (co, bv) in b.iter().enumerate() {
                o[co * plane..(co + 1) * plane].fill(*bv);
            }
        }
        gemm_nn(o, weight.data(), &cols, c_out, r, plane);
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_grad<T: Real>(x: &Tensor4<T>, weight: &Tensor4<T>, grad_out: &Tensor4<T>, geo: ConvGeometry) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    check_kernel(weight, xs.c, &geo, false)?;
    let gs = grad_out.shape();
    let c_out = weight.shape().n;
    if gs.n != xs.n || gs.c != c_out || Some(gs.h) != geo.conv_out(xs.h) || Some(gs.w) != geo.conv_out(xs.w) {
        return Err(Error::Shape(alloc::format!("output gradient {gs} does not match conv of {xs}")));
    }
    let r = xs.c * geo.kernel * geo.kernel;
    let plane = gs.h * gs.w;
    let mut gx = Tensor4::zeros(xs);
    let mut gw = Tensor4::zeros(weight.shape());
    let mut gb = vec![T::zero(); c_out];
    let mut cols = vec![T::zero(); r * plane];
    let mut dcols = vec![T::zero(); r * plane];
    for n in 0..xs.n {
        let g = grad_out.item(n);
        im2col(x.item(n), xs.c, xs.h, xs.w, &geo, gs.h, gs.w, &mut cols);
        gemm_nt(gw.data_mut(), g, &cols, c_out, r, plane);
        for (co, b) in gb.iter_mut().enumerate() {
            *b += g[co * plane..(co + 1) * plane].iter().copied().sum::<T>();
        }
        dcols.fill(T::zero());
        gemm_tn(&mut dcols, weight.data(), g, c_out, r, plane);
        col2im(&dcols, xs.c, xs.h, xs.w, &geo, gs.h, gs.w, gx.item_mut(n));
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Transposed convolution: the adjoint of [`conv2d`]'s linear map plus bias.
pub fn transposed_conv2d<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: Option<&[T]>,
    geo: ConvGeometry,
    output_padding: usize,
) -> Result<Tensor4<T>> {
    let xs = x.shape();
    check_kernel(weight, xs.c, &geo, true)?;
    if output_padding >= geo.stride.max(1) && output_padding > 0 {
        return Err(Error::Invalid(alloc::format!(
            "output padding {output_padding} must be smaller than stride {}",
            geo.stride
        )));
    }
    let c_out = weight.shape().c;
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::Shape(alloc::format!("bias has {} entries for {c_out} channels", b.len())));
        }
    }
    let (ho, wo) = match (geo.transposed_out(xs.h, output_padding), geo.transposed_out(xs.w, output_padding)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Shape(alloc::format!("transposed conv output of {xs} is empty"))),
    };
    let r = c_out * geo.kernel * geo.kernel;
    let plane = xs.h * xs.w;
    let mut out = Tensor4::zeros(Shape4::new(xs.n, c_out, ho, wo));
    let mut dcols = vec![T::zero(); r * plane];
    let oplane = ho * wo;
    for n in 0..xs.n {
        dcols.fill(T::zero());
        gemm_tn(&mut dcols, weight.data(), x.item(n), xs.c, r, plane);
        let o = out.item_mut(n);
        col2im(&dcols, c_out, ho, wo, &geo, xs.h, xs.w, o);
        if let Some(b) = bias {
            for (co, bv) in b.iter().enumerate() {
                for v in &mut o[co * oplane..(co + 1) * oplane] {
                    *v += *bv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`transposed_conv2d`]; output padding is implied by the
/// gradient's spatial size.
pub fn transposed_conv2d_grad<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    geo: ConvGeometry,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    check_kernel(weight, xs.c, &geo, true)?;
    let gs = grad_out.shape();
    let c_out = weight.shape().c;
    if gs.n != xs.n || gs.c != c_out || geo.conv_out(gs.h) != Some(xs.h) || geo.conv_out(gs.w) != Some(xs.w) {
        return Err(Error::Shape(alloc::format!("output gradient {gs} does not match transposed conv of {xs}")));
    }
    let r = c_out * geo.kernel * geo.kernel;
    let plane = xs.h * xs.w;
    let oplane = gs.h * gs.w;
    let mut gx = Tensor4::zeros(xs);
    let mut gw = Tensor4::zeros(weight.shape());
    let mut gb = vec![T::zero(); c_out];
    let mut cols = vec![T::zero(); r * plane];
    for n in 0..xs.n {
        let g = grad_out.item(n);
        for (co, b) in gb.iter_mut().enumerate() {
            *b += g[co * oplane..(co + 1) * oplane].iter().copied().sum::<T>();
        }
        im2col(g, c_out, gs.h, gs.w, &geo, xs.h, xs.w, &mut cols);
        gemm_nn(gx.item_mut(n), weight.data(), &cols, xs.c, r, plane);
        gemm_nt(gw.data_mut(), x.item(n), &cols, xs.c, r, plane);
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}
