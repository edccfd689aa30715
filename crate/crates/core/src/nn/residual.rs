//! `relu(x + bn(conv(relu(bn(conv(x))))))`

use super::conv::{conv2d, conv2d_grad, ConvGeometry};
use super::norm::{batch_norm_eval, batch_norm_grad, batch_norm_train, BatchNormCache, Mode};
use super::tensor::{relu, relu_grad, Real, Tensor4};
use crate::error::{Error, Result};

/// Borrowed parameters of one residual block.
#[derive(Debug, Clone, Copy)]
pub struct ResidualParams<'a, T> {
    pub conv1: &'a Tensor4<T>,
    pub bn1: BnParams<'a, T>,
    pub conv2: &'a Tensor4<T>,
    pub bn2: BnParams<'a, T>,
}

#[derive(Debug, Clone, Copy)]
pub struct BnParams<'a, T> {
    pub scale: &'a [T],
    pub shift: &'a [T],
    pub running_mean: &'a [T],
    pub running_var: &'a [T],
}

#[derive(Debug, Clone)]
pub struct ResidualCache<T> {
    pub input: Tensor4<T>,
    pub bn1: Option<BatchNormCache<T>>,
    pub hidden: Tensor4<T>,
    pub bn2: Option<BatchNormCache<T>>,
    pub output: Tensor4<T>,
}

#[derive(Debug, Clone)]
pub struct ResidualGrads<T> {
    pub input: Tensor4<T>,
    pub conv1: Tensor4<T>,
    pub bn1_scale: alloc::vec::Vec<T>,
    pub bn1_shift: alloc::vec::Vec<T>,
    pub conv2: Tensor4<T>,
    pub bn2_scale: alloc::vec::Vec<T>,
    pub bn2_shift: alloc::vec::Vec<T>,
}

fn geometry<T: Real>(kernel: &Tensor4<T>) -> ConvGeometry {
    let k = kernel.shape().h;
    ConvGeometry::new(k, 1, k / 2)
}

fn bn_forward<T: Real>(x: &Tensor4<T>, p: &BnParams<'_, T>, mode: Mode) -> Result<(Tensor4<T>, Option<BatchNormCache<T>>)> {
    match mode {
        Mode::Train => {
            let (y, c) = batch_norm_train(x, p.scale, p.shift)?;
            Ok((y, Some(c)))
        }
        Mode::Eval => Ok((batch_norm_eval(x, p.scale, p.shift, p.running_mean, p.running_var)?, None)),
    }
}

pub fn residual_block<T: Real>(x: &Tensor4<T>, p: &ResidualParams<'_, T>, mode: Mode) -> Result<(Tensor4<T>, ResidualCache<T>)> {
    let c = x.shape().c;
    for k in [p.conv1, p.conv2] {
        let s = k.shape();
        if s.n != c || s.c != c || s.h != s.w || s.h % 2 == 0 {
            return Err(Error::Shape(alloc::format!(
                "residual kernel {s} does not fit {c}-channel input"
            )));
        }
    }
    let a = conv2d(x, p.conv1, None, geometry(p.conv1))?;
    let (b, bn1) = bn_forward(&a, &p.bn1, mode)?;
    let hidden = relu(&b);
    let d = conv2d(&hidden, p.conv2, None, geometry(p.conv2))?;
    let (mut e, bn2) = bn_forward(&d, &p.bn2, mode)?;
    e.add_assign(x);
    let output = relu(&e);
    Ok((
        output.clone(),
        ResidualCache {
            input: x.clone(),
            bn1,
            hidden,
            bn2,
            output,
        },
    ))
}

pub fn residual_block_grad<T: Real>(cache: &ResidualCache<T>, p: &ResidualParams<'_, T>, grad_out: &Tensor4<T>) -> Result<ResidualGrads<T>> {
    let (Some(bn1), Some(bn2)) = (&cache.bn1, &cache.bn2) else {
        return Err(Error::Invalid("residual backward needs a train-mode forward cache".into()));
    };
    let ds = relu_grad(&cache.output, grad_out);
    let g_bn2 = batch_norm_grad(bn2, p.bn2.scale, &ds);
    let g_conv2 = conv2d_grad(&cache.hidden, p.conv2, &g_bn2.input, geometry(p.conv2))?;
    let dh = relu_grad(&cache.hidden, &g_conv2.input);
    let g_bn1 = batch_norm_grad(bn1, p.bn1.scale, &dh);
    let g_conv1 = conv2d_grad(&cache.input, p.conv1, &g_bn1.input, geometry(p.conv1))?;
    let mut input = g_conv1.input;
    input.add_assign(&ds);
    Ok(ResidualGrads {
        input,
        conv1: g_conv1.weight,
        bn1_scale: g_bn1.scale,
        bn1_shift: g_bn1.shift,
        conv2: g_conv2.weight,
        bn2_scale: g_bn2.scale,
        bn2_shift: g_bn2.shift,
    })
}
