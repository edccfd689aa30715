use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;

use num_traits::{Float, NumAssign};

use crate::error::{Error, Result};

/// Floating-point element type of network tensors.
pub trait Real: Float + NumAssign + Sum + Debug + Default + Send + Sync + 'static {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape4 { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn item(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl core::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(shape: Shape4) -> Self {
        Tensor4 {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape4, v: T) -> Self {
        Tensor4 {
            shape,
            data: vec![v; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(alloc::format!(
                "tensor {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn item(&self, n: usize) -> &[T] {
        let s = self.shape.item();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let s = self.shape.item();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let o = (n * self.shape.c + c) * p;
        &self.data[o..o + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let o = (n * self.shape.c + c) * p;
        &mut self.data[o..o + p]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let s = &self.shape;
        self.data[((n * s.c + c) * s.h + y) * s.w + x]
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn dot(&self, other: &Tensor4<T>) -> T {
        dot(&self.data, &other.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor4<T> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of_f64(v.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dot product with eight independent partial sums (fixed summation order).
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * *b;
    }
}

/// Concatenates two tensors along the channel axis.
pub fn concat_channels<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::Shape(alloc::format!("cannot concatenate {sa} with {sb}")));
    }
    let shape = Shape4::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..sa.n {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    Tensor4::from_vec(shape, data)
}

/// Splits a channel-concatenated gradient back into its two parts.
pub fn split_channels<T: Real>(g: &Tensor4<T>, first: usize) -> (Tensor4<T>, Tensor4<T>) {
    let s = g.shape();
    let sa = Shape4::new(s.n, first, s.h, s.w);
    let sb = Shape4::new(s.n, s.c - first, s.h, s.w);
    let mut a = Vec::with_capacity(sa.len());
    let mut b = Vec::with_capacity(sb.len());
    let cut = first * s.plane();
    for n in 0..s.n {
        let item = g.item(n);
        a.extend_from_slice(&item[..cut]);
        b.extend_from_slice(&item[cut..]);
    }
    (Tensor4 { shape: sa, data: a }, Tensor4 { shape: sb, data: b })
}

pub fn relu<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its output.
pub fn relu_grad<T: Real>(out: &Tensor4<T>, grad: &Tensor4<T>) -> Tensor4<T> {
    let data = out
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4 {
        shape: grad.shape(),
        data,
    }
}

#[inline]
pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Reflect-pads the bottom and right edges up to `(h, w)`.
pub fn reflect_pad<T: Real>(x: &Tensor4<T>, h: usize, w: usize) -> Result<Tensor4<T>> {
    let s = x.shape();
    if h < s.h || w < s.w || h - s.h >= s.h || w - s.w >= s.w {
        return Err(Error::Shape(alloc::format!(
            "cannot reflect-pad {}x{} to {h}x{w}",
            s.h,
            s.w
        )));
    }
    if h == s.h && w == s.w {
        return Ok(x.clone());
    }
    let out_shape = Shape4::new(s.n, s.c, h, w);
    let mut out = Tensor4::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                let sy = reflect_index(y, s.h);
                for xx in 0..w {
                    dst[y * w + xx] = src[sy * s.w + reflect_index(xx, s.w)];
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`reflect_pad`]: folds the padded gradient back onto `(h, w)`.
pub fn reflect_pad_grad<T: Real>(g: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let s = g.shape();
    if s.h == h && s.w == w {
        return g.clone();
    }
    let mut out = Tensor4::zeros(Shape4::new(s.n, s.c, h, w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = g.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                let dy = reflect_index(y, h);
                for x in 0..s.w {
                    dst[dy * w + reflect_index(x, w)] += src[y * s.w + x];
                }
            }
        }
    }
    out
}

#[inline]
fn reflect_index(i: usize, len: usize) -> usize {
    if i < len {
        i
    } else {
        2 * (len - 1) - i
    }
}

/// Crops the top-left `(h, w)` region.
pub fn crop<T: Real>(x: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let s = x.shape();
    if s.h == h && s.w == w {
        return x.clone();
    }
    let mut out = Tensor4::zeros(Shape4::new(s.n, s.c, h, w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                dst[y * w..(y + 1) * w].copy_from_slice(&src[y * s.w..y * s.w + w]);
            }
        }
    }
    out
}

/// Adjoint of [`crop`]: zero-extends back to `(h, w)`.
pub fn crop_grad<T: Real>(g: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let s = g.shape();
    if s.h == h && s.w == w {
        return g.clone();
    }
    let mut out = Tensor4::zeros(Shape4::new(s.n, s.c, h, w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = g.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                dst[y * w..y * w + s.w].copy_from_slice(&src[y * s.w..(y + 1) * s.w]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn pad_and_crop_are_adjoint() {
        let x = Tensor4::from_vec(Shape4::new(1, 2, 5, 6), (0..60).map(|i| (i as f64).sin()).collect()).unwrap();
        let y = Tensor4::from_vec(Shape4::new(1, 2, 8, 8), (0..128).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let px = reflect_pad(&x, 8, 8).unwrap();
        let lhs = px.dot(&y);
        let rhs = x.dot(&reflect_pad_grad(&y, 5, 6));
        assert!((lhs - rhs).abs() < 1e-12);
        let cy = crop(&y, 5, 6);
        assert!((cy.dot(&x) - y.dot(&crop_grad(&x, 8, 8))).abs() < 1e-12);
        assert_eq!(px.at(0, 0, 5, 0), x.at(0, 0, 3, 0));
        assert_eq!(px.at(0, 1, 0, 7), x.at(0, 1, 0, 3));
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor4::from_vec(Shape4::new(2, 1, 2, 2), (0..8).map(|i| i as f32).collect()).unwrap();
        let b = Tensor4::from_vec(Shape4::new(2, 2, 2, 2), (0..16).map(|i| -(i as f32)).collect()).unwrap();
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), Shape4::new(2, 3, 2, 2));
        let (a2, b2) = split_channels(&c, 1);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }
}
