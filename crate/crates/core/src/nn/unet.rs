//! Recurrent UNet: strided encoders, residual bottleneck, transposed-conv
//! decoders with concatenated skips, and a 1x1 sigmoid prediction layer.
//! Inputs are reflect-padded (bottom/right) to a multiple of
//! `2^num_encoders` and the prediction is cropped back.

use alloc::vec::Vec;

use super::conv::{conv2d, conv2d_grad, transposed_conv2d, transposed_conv2d_grad, ConvGeometry};
use super::norm::{update_running, Mode};
use super::residual::{residual_block, residual_block_grad, BnParams, ResidualCache, ResidualParams};
use super::tensor::{
    concat_channels, crop, crop_grad, reflect_pad, reflect_pad_grad, relu, relu_grad, sigmoid, split_channels, Real,
    Shape4, Tensor4,
};
use super::weights::{Gradients, Layout, NetworkWeights, ResidualIdx};
use crate::error::{Error, Result};

/// Activations saved by [`unet_forward`] for [`unet_backward`].
#[derive(Debug, Clone)]
pub struct UnetCache<T> {
    mode: Mode,
    input_hw: (usize, usize),
    padded: Tensor4<T>,
    encoders: Vec<Tensor4<T>>,
    residual: Vec<ResidualCache<T>>,
    decoder_inputs: Vec<Tensor4<T>>,
    decoders: Vec<Tensor4<T>>,
    /// Sigmoid output at padded size.
    prediction: Tensor4<T>,
}

fn encoder_geometry(k: usize) -> ConvGeometry {
    ConvGeometry::new(k, 2, k / 2)
}

fn residual_params<'a, T: Real>(w: &'a NetworkWeights<T>, idx: &ResidualIdx) -> ResidualParams<'a, T> {
    let bn = |i: usize| BnParams {
        scale: w.block(i).data(),
        shift: w.block(i + 1).data(),
        running_mean: w.block(i + 2).data(),
        running_var: w.block(i + 3).data(),
    };
    ResidualParams {
        conv1: &w.block(idx.conv1).value,
        bn1: bn(idx.bn1),
        conv2: &w.block(idx.conv2).value,
        bn2: bn(idx.bn2),
    }
}

fn padded_size(n: usize, multiple: usize) -> usize {
    n.div_ceil(multiple) * multiple
}

/// Runs the network on a `(batch, B + K, H, W)` input. Returns the
/// `(batch, 1, H, W)` prediction in `(0, 1)` and the backward cache.
pub fn unet_forward<T: Real>(weights: &NetworkWeights<T>, input: &Tensor4<T>, mode: Mode) -> Result<(Tensor4<T>, UnetCache<T>)> {
    let cfg = weights.config();
    let layout = Layout::of(cfg);
    let s = input.shape();
    if s.c != cfg.input_channels() {
        return Err(Error::Shape(alloc::format!(
            "network expects {} input channels (B={} + K={}), got {}",
            cfg.input_channels(),
            cfg.bins,
            cfg.k_frames,
            s.c
        )));
    }
    let m = cfg.pad_multiple();
    let (ph, pw) = (padded_size(s.h, m), padded_size(s.w, m));
    let padded = reflect_pad(input, ph, pw).map_err(|_| {
        Error::Shape(alloc::format!(
            "input {}x{} cannot be reflect-padded to a multiple of {m}",
            s.h,
            s.w
        ))
    })?;

    let geo = encoder_geometry(cfg.encoder_kernel);
    let mut encoders = Vec::with_capacity(cfg.num_encoders);
    let mut h = padded.clone();
    for &(wi, bi) in &layout.encoders {
        h = relu(&conv2d(&h, &weights.block(wi).value, Some(weights.block(bi).data()), geo)?);
        encoders.push(h.clone());
    }

    let mut residual = Vec::with_capacity(cfg.num_residual);
    for idx in &layout.residual {
        let (out, cache) = residual_block(&h, &residual_params(weights, idx), mode)?;
        residual.push(cache);
        h = out;
    }

    let mut decoder_inputs = Vec::with_capacity(cfg.num_encoders);
    let mut decoders = Vec::with_capacity(cfg.num_encoders);
    for (d, &(wi, bi)) in layout.decoders.iter().enumerate() {
        let skip = &encoders[cfg.num_encoders - 1 - d];
        let cat = concat_channels(&h, skip)?;
        h = relu(&transposed_conv2d(&cat, &weights.block(wi).value, Some(weights.block(bi).data()), geo, 1)?);
        decoder_inputs.push(cat);
        decoders.push(h.clone());
    }

    let (pwi, pbi) = layout.pred;
    let logits = conv2d(&h, &weights.block(pwi).value, Some(weights.block(pbi).data()), ConvGeometry::new(1, 1, 0))?;
    let prediction = logits.map(sigmoid);
    let out = crop(&prediction, s.h, s.w);
    Ok((
        out,
        UnetCache {
            mode,
            input_hw: (s.h, s.w),
            padded,
            encoders,
            residual,
            decoder_inputs,
            decoders,
            prediction,
        },
    ))
}

/// Eval-mode forward without keeping a cache.
pub fn unet_infer<T: Real>(weights: &NetworkWeights<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    unet_forward(weights, input, Mode::Eval).map(|(y, _)| y)
}

/// Folds the batch statistics of a train-mode forward into the running
/// estimates.
pub fn apply_running_stats<T: Real>(weights: &mut NetworkWeights<T>, cache: &UnetCache<T>) {
    if cache.mode != Mode::Train {
        return;
    }
    let layout = Layout::of(weights.config());
    for (idx, rc) in layout.residual.iter().zip(&cache.residual) {
        for (bn, c) in [(idx.bn1, &rc.bn1), (idx.bn2, &rc.bn2)] {
            if let Some(c) = c {
                let blocks = weights.blocks_mut();
                let (head, tail) = blocks.split_at_mut(bn + 3);
                update_running(head[bn + 2].value.data_mut(), tail[0].value.data_mut(), c);
            }
        }
    }
}

/// Backpropagates `grad_output` (same shape as the forward output) to the
/// input and all trainable parameters. Requires a train-mode cache.
pub fn unet_backward<T: Real>(
    weights: &NetworkWeights<T>,
    cache: &UnetCache<T>,
    grad_output: &Tensor4<T>,
) -> Result<(Tensor4<T>, Gradients<T>)> {
    if cache.mode != Mode::Train {
        return Err(Error::Invalid("backward pass needs a train-mode forward cache".into()));
    }
    let cfg = weights.config();
    let layout = Layout::of(cfg);
    let ps = cache.prediction.shape();
    let gs = grad_output.shape();
    if gs != Shape4::new(ps.n, 1, cache.input_hw.0, cache.input_hw.1) {
        return Err(Error::Shape(alloc::format!("output gradient {gs} does not match forward output")));
    }
    let mut grads = weights.zero_gradients();

    // sigmoid and crop
    let gp = crop_grad(grad_output, ps.h, ps.w);
    let dlogits = Tensor4::from_vec(
        ps,
        gp.data()
            .iter()
            .zip(cache.prediction.data())
            .map(|(&g, &y)| g * y * (T::one() - y))
            .collect(),
    )?;

    let (pwi, pbi) = layout.pred;
    let last = cache.decoders.last().expect("at least one decoder");
    let g = conv2d_grad(last, &weights.block(pwi).value, &dlogits, ConvGeometry::new(1, 1, 0))?;
    grads.add_to(pwi, g.weight.data());
    grads.add_to(pbi, &g.bias);
    let mut dh = g.input;

    let geo = encoder_geometry(cfg.encoder_kernel);
    let mut skip_grads: Vec<Option<Tensor4<T>>> = (0..cfg.num_encoders).map(|_| None).collect();
    for d in (0..cfg.num_encoders).rev() {
        let (wi, bi) = layout.decoders[d];
        let dz = relu_grad(&cache.decoders[d], &dh);
        let g = transposed_conv2d_grad(&cache.decoder_inputs[d], &weights.block(wi).value, &dz, geo)?;
        grads.add_to(wi, g.weight.data());
        grads.add_to(bi, &g.bias);
        let upper = if d == 0 {
            cfg.bottleneck_channels()
        } else {
            cfg.decoder_out(d - 1)
        };
        let (dprev, dskip) = split_channels(&g.input, upper);
        skip_grads[cfg.num_encoders - 1 - d] = Some(dskip);
        dh = dprev;
    }

    for (idx, rc) in layout.residual.iter().zip(&cache.residual).rev() {
        let g = residual_block_grad(rc, &residual_params(weights, idx), &dh)?;
        grads.add_to(idx.conv1, g.conv1.data());
        grads.add_to(idx.bn1, &g.bn1_scale);
        grads.add_to(idx.bn1 + 1, &g.bn1_shift);
        grads.add_to(idx.conv2, g.conv2.data());
        grads.add_to(idx.bn2, &g.bn2_scale);
        grads.add_to(idx.bn2 + 1, &g.bn2_shift);
        dh = g.input;
    }

    for i in (0..cfg.num_encoders).rev() {
        if let Some(s) = skip_grads[i].take() {
            dh.add_assign(&s);
        }
        let (wi, bi) = layout.encoders[i];
        let dz = relu_grad(&cache.encoders[i], &dh);
        let x = if i == 0 { &cache.padded } else { &cache.encoders[i - 1] };
        let g = conv2d_grad(x, &weights.block(wi).value, &dz, geo)?;
        grads.add_to(wi, g.weight.data());
        grads.add_to(bi, &g.bias);
        dh = g.input;
    }

    let grad_input = reflect_pad_grad(&dh, cache.input_hw.0, cache.input_hw.1);
    Ok((grad_input, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::weights::NetConfig;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_output_half() {
        let cfg = NetConfig::tiny(3, 2);
        let w = NetworkWeights::<f64>::zeros(cfg).unwrap();
        let s = Shape4::new(2, 5, 20, 28);
        let x = Tensor4::from_vec(s, (0..s.len()).map(|i| libm::sin(i as f64)).collect()).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            let (y, _) = unet_forward(&w, &x, mode).unwrap();
            assert_eq!(y.shape(), Shape4::new(2, 1, 20, 28));
            assert!(y.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn output_in_open_unit_interval_and_shape_stable() {
        let cfg = NetConfig::tiny(2, 1);
        let w = NetworkWeights::<f32>::init(cfg, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3)).unwrap();
        let s = Shape4::new(1, 3, 13, 22);
        let x = Tensor4::from_vec(s, (0..s.len()).map(|i| (i % 7) as f32 - 3.0).collect()).unwrap();
        let y = unet_infer(&w, &x).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 13, 22));
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let w = NetworkWeights::<f32>::zeros(NetConfig::tiny(2, 1)).unwrap();
        let x = Tensor4::zeros(Shape4::new(1, 4, 16, 16));
        assert!(unet_forward(&w, &x, Mode::Eval).is_err());
    }

    #[test]
    fn too_small_to_pad_rejected() {
        let w = NetworkWeights::<f32>::zeros(NetConfig::tiny(2, 1)).unwrap();
        let x = Tensor4::zeros(Shape4::new(1, 3, 2, 16));
        assert!(unet_forward(&w, &x, Mode::Eval).is_err());
    }

    #[test]
    fn eval_cache_cannot_backprop() {
        let w = NetworkWeights::<f64>::zeros(NetConfig::tiny(2, 1)).unwrap();
        let x = Tensor4::zeros(Shape4::new(1, 3, 8, 8));
        let (y, cache) = unet_forward(&w, &x, Mode::Eval).unwrap();
        assert!(unet_backward(&w, &cache, &y).is_err());
    }
}
