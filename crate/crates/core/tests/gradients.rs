//! Analytic gradients against central finite differences in f64.

use evpipe_core::event::{Event, Polarity, SensorGeometry};
use evpipe_core::frame::Frame;
use evpipe_core::nn::conv::{conv2d, conv2d_grad, transposed_conv2d, transposed_conv2d_grad, ConvGeometry};
use evpipe_core::nn::loss::loss_recon;
use evpipe_core::nn::norm::{batch_norm_grad, batch_norm_train, Mode};
use evpipe_core::nn::residual::{residual_block, residual_block_grad, BnParams, ResidualParams};
use evpipe_core::nn::train::{unroll, TrainSample};
use evpipe_core::nn::{NetConfig, NetworkWeights, Shape4, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
/// A step of 1e-4 on a whole unroll crosses ReLU kinks among its ~10^4
/// activations for a noticeable share of parameters; 1e-6 rarely does.
const NET_EPS: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random(rng: &mut ChaCha8Rng, s: Shape4, scale: f64) -> Tensor4<f64> {
    Tensor4::from_vec(s, (0..s.len()).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Max relative error between `analytic` and central differences of `f`
/// with respect to every entry of `x`.
fn check(x: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let v = x[i];
        x[i] = v + EPS;
        let up = f(x);
        x[i] = v - EPS;
        let down = f(x);
        x[i] = v;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * EPS)));
    }
    worst
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let geo = ConvGeometry::new(3, 2, 1);
    let x = random(&mut rng, Shape4::new(2, 3, 7, 6), 1.0);
    let w = random(&mut rng, Shape4::new(4, 3, 3, 3), 0.5);
    let b: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
    let y = conv2d(&x, &w, Some(&b), geo).unwrap();
    let r = random(&mut rng, y.shape(), 1.0);
    let g = conv2d_grad(&x, &w, &r, geo).unwrap();
    let obj = |x: &Tensor4<f64>, w: &Tensor4<f64>, b: &[f64]| conv2d(x, w, Some(b), geo).unwrap().dot(&r);

    let mut xd = x.data().to_vec();
    let e = check(&mut xd, g.input.data(), |v| obj(&Tensor4::from_vec(x.shape(), v.to_vec()).unwrap(), &w, &b));
    assert!(e < 1e-4, "input {e}");
    let mut wd = w.data().to_vec();
    let e = check(&mut wd, g.weight.data(), |v| obj(&x, &Tensor4::from_vec(w.shape(), v.to_vec()).unwrap(), &b));
    assert!(e < 1e-4, "weight {e}");
    let mut bd = b.clone();
    let e = check(&mut bd, &g.bias, |v| obj(&x, &w, v));
    assert!(e < 1e-4, "bias {e}");
}

#[test]
fn transposed_conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let geo = ConvGeometry::new(5, 2, 2);
    let x = random(&mut rng, Shape4::new(2, 4, 4, 5), 1.0);
    let w = random(&mut rng, Shape4::new(4, 3, 5, 5), 0.5);
    let b: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
    let y = transposed_conv2d(&x, &w, Some(&b), geo, 1).unwrap();
    assert_eq!(y.shape(), Shape4::new(2, 3, 8, 10));
    let r = random(&mut rng, y.shape(), 1.0);
    let g = transposed_conv2d_grad(&x, &w, &r, geo).unwrap();
    let obj = |x: &Tensor4<f64>, w: &Tensor4<f64>, b: &[f64]| transposed_conv2d(x, w, Some(b), geo, 1).unwrap().dot(&r);

    let mut xd = x.data().to_vec();
    let e = check(&mut xd, g.input.data(), |v| obj(&Tensor4::from_vec(x.shape(), v.to_vec()).unwrap(), &w, &b));
    assert!(e < 1e-4, "input {e}");
    let mut wd = w.data().to_vec();
    let e = check(&mut wd, g.weight.data(), |v| obj(&x, &Tensor4::from_vec(w.shape(), v.to_vec()).unwrap(), &b));
    assert!(e < 1e-4, "weight {e}");
    let mut bd = b.clone();
    let e = check(&mut bd, &g.bias, |v| obj(&x, &w, v));
    assert!(e < 1e-4, "bias {e}");
}

#[test]
fn batch_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, Shape4::new(3, 2, 4, 3), 2.0);
    let scale: Vec<f64> = (0..2).map(|_| rng.random_range(0.5..1.5)).collect();
    let shift: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
    let (y, cache) = batch_norm_train(&x, &scale, &shift).unwrap();
    let r = random(&mut rng, y.shape(), 1.0);
    let g = batch_norm_grad(&cache, &scale, &r);
    let obj = |x: &Tensor4<f64>, s: &[f64], t: &[f64]| batch_norm_train(x, s, t).unwrap().0.dot(&r);

    let mut xd = x.data().to_vec();
    let e = check(&mut xd, g.input.data(), |v| obj(&Tensor4::from_vec(x.shape(), v.to_vec()).unwrap(), &scale, &shift));
    assert!(e < 1e-4, "input {e}");
    let mut sd = scale.clone();
    let e = check(&mut sd, &g.scale, |v| obj(&x, v, &shift));
    assert!(e < 1e-4, "scale {e}");
    let mut td = shift.clone();
    let e = check(&mut td, &g.shift, |v| obj(&x, &scale, v));
    assert!(e < 1e-4, "shift {e}");
}

#[test]
fn residual_block_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = Shape4::new(2, 3, 5, 4);
    let x = random(&mut rng, s, 1.0);
    let c1 = random(&mut rng, Shape4::new(3, 3, 3, 3), 0.4);
    let c2 = random(&mut rng, Shape4::new(3, 3, 3, 3), 0.4);
    let mut vecs: Vec<Vec<f64>> = (0..4).map(|i| (0..3).map(|_| rng.random_range(0.5..1.5) - if i % 2 == 1 { 1.0 } else { 0.0 }).collect()).collect();
    let rm = vec![0.0; 3];
    let rv = vec![1.0; 3];
    let forward = |x: &Tensor4<f64>, c1: &Tensor4<f64>, c2: &Tensor4<f64>, v: &[Vec<f64>]| {
        let p = ResidualParams {
            conv1: c1,
            bn1: BnParams { scale: &v[0], shift: &v[1], running_mean: &rm, running_var: &rv },
            conv2: c2,
            bn2: BnParams { scale: &v[2], shift: &v[3], running_mean: &rm, running_var: &rv },
        };
        residual_block(x, &p, Mode::Train).unwrap()
    };
    let (y, cache) = forward(&x, &c1, &c2, &vecs);
    let r = random(&mut rng, y.shape(), 1.0);
    let p = ResidualParams {
        conv1: &c1,
        bn1: BnParams { scale: &vecs[0], shift: &vecs[1], running_mean: &rm, running_var: &rv },
        conv2: &c2,
        bn2: BnParams { scale: &vecs[2], shift: &vecs[3], running_mean: &rm, running_var: &rv },
    };
    let g = residual_block_grad(&cache, &p, &r).unwrap();

    let mut xd = x.data().to_vec();
    let e = check(&mut xd, g.input.data(), |v| forward(&Tensor4::from_vec(s, v.to_vec()).unwrap(), &c1, &c2, &vecs).0.dot(&r));
    assert!(e < 1e-4, "input {e}");
    let mut d = c1.data().to_vec();
    let e = check(&mut d, g.conv1.data(), |v| forward(&x, &Tensor4::from_vec(c1.shape(), v.to_vec()).unwrap(), &c2, &vecs).0.dot(&r));
    assert!(e < 1e-4, "conv1 {e}");
    let mut d = c2.data().to_vec();
    let e = check(&mut d, g.conv2.data(), |v| forward(&x, &c1, &Tensor4::from_vec(c2.shape(), v.to_vec()).unwrap(), &vecs).0.dot(&r));
    assert!(e < 1e-4, "conv2 {e}");
    let analytic = [g.bn1_scale.clone(), g.bn1_shift.clone(), g.bn2_scale.clone(), g.bn2_shift.clone()];
    for (k, a) in analytic.iter().enumerate() {
        let mut d = vecs[k].clone();
        let e = check(&mut d, a, |v| {
            let mut vv = vecs.clone();
            vv[k] = v.to_vec();
            forward(&x, &c1, &c2, &vv).0.dot(&r)
        });
        assert!(e < 1e-4, "bn vector {k}: {e}");
    }
    vecs.clear();
}

#[test]
fn loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = Shape4::new(2, 1, 16, 16);
    let gen = |rng: &mut ChaCha8Rng| Tensor4::from_vec(s, (0..s.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let x: Tensor4<f64> = gen(&mut rng);
    let y = gen(&mut rng);
    let (_, g) = loss_recon(&x, &y).unwrap();
    let mut xd = x.data().to_vec();
    let e = check(&mut xd, g.data(), |v| loss_recon(&Tensor4::from_vec(s, v.to_vec()).unwrap(), &y).unwrap().0);
    assert!(e < 1e-4, "loss {e}");
}

fn random_sample(rng: &mut ChaCha8Rng, g: SensorGeometry, steps: usize, per_window: usize) -> TrainSample {
    let mut t = 0u64;
    let windows = (0..steps)
        .map(|_| {
            (0..per_window)
                .map(|_| {
                    t += rng.random_range(0..40);
                    let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
                    Event::new(rng.random_range(0..g.width) as u16, rng.random_range(0..g.height) as u16, t, p)
                })
                .collect()
        })
        .collect();
    // binary targets keep |prediction - target| away from its kink
    let targets = (0..steps)
        .map(|_| Frame::new(g.width, g.height, 0, (0..g.pixels()).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect()).unwrap())
        .collect();
    TrainSample { geometry: g, windows, targets }
}

#[test]
fn full_network_unroll_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = SensorGeometry::new(32, 32).unwrap();
    let cfg = NetConfig::tiny(3, 2);
    let mut w = NetworkWeights::<f64>::init(cfg, &mut rng).unwrap();
    // nonzero biases exercise more of the graph
    for b in w.blocks_mut() {
        if b.name.ends_with("bias") || b.name.ends_with("shift") {
            for v in b.value.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let samples: Vec<TrainSample> = (0..1).map(|_| random_sample(&mut rng, g, 2, 400)).collect();
    let batch: Vec<&TrainSample> = samples.iter().collect();
    let u = unroll(&w, &batch, Mode::Train, true).unwrap();
    let grads = u.grads.unwrap();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for bi in 0..w.blocks().len() {
        if !w.block(bi).kind.trainable() {
            continue;
        }
        for i in 0..w.block(bi).value.data().len() {
            let v = w.block(bi).value.data()[i];
            w.blocks_mut()[bi].value.data_mut()[i] = v + NET_EPS;
            let up = unroll(&w, &batch, Mode::Train, false).unwrap().loss;
            w.blocks_mut()[bi].value.data_mut()[i] = v - NET_EPS;
            let down = unroll(&w, &batch, Mode::Train, false).unwrap().loss;
            w.blocks_mut()[bi].value.data_mut()[i] = v;
            let e = rel_err(grads.blocks[bi][i], (up - down) / (2.0 * NET_EPS));
            worst = worst.max(e);
            count += 1;
        }
    }
    eprintln!("{count} parameters checked, worst {worst}");
    assert!(worst < 1e-3, "worst relative error {worst}");
}
