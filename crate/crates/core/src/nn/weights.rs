//! Network configuration and parameter storage.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tensor::{Real, Shape4, Tensor4};
use crate::error::{Error, Result};

/// How decoder inputs merge with the symmetric encoder output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipMode {
    Concat,
}

/// Architecture of the recurrent UNet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Output channels of the first encoder; doubled by each further encoder.
    pub base_channels: usize,
    pub num_encoders: usize,
    pub num_residual: usize,
    pub encoder_kernel: usize,
    pub residual_kernel: usize,
    /// Temporal bins of the event tensor (B).
    pub bins: usize,
    /// Previous reconstructions fed back as input (K).
    pub k_frames: usize,
    pub skip: SkipMode,
}

impl NetConfig {
    /// Full-size network: encoders (64, 128, 256, 512), two residual blocks.
    pub const fn full(bins: usize, k_frames: usize) -> Self {
        NetConfig {
            base_channels: 64,
            num_encoders: 4,
            num_residual: 2,
            encoder_kernel: 5,
            residual_kernel: 3,
            bins,
            k_frames,
            skip: SkipMode::Concat,
        }
    }

    /// Small network for tests and desk-scale runs.
    pub const fn tiny(bins: usize, k_frames: usize) -> Self {
        NetConfig {
            base_channels: 8,
            num_encoders: 2,
            num_residual: 1,
            encoder_kernel: 5,
            residual_kernel: 3,
            bins,
            k_frames,
            skip: SkipMode::Concat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("network config: {m}")));
        if self.num_encoders == 0 {
            return bad("at least one encoder is required");
        }
        if self.base_channels < 2 || self.base_channels % 2 != 0 {
            return bad("base channel count must be even and >= 2");
        }
        if self.encoder_kernel % 2 == 0 || self.residual_kernel % 2 == 0 {
            return bad("kernel sizes must be odd");
        }
        if self.bins + self.k_frames == 0 {
            return bad("input has no channels");
        }
        if self.num_encoders > 12 {
            return bad("too many encoders");
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.bins + self.k_frames
    }

    pub fn encoder_channels(&self, i: usize) -> usize {
        self.base_channels << i
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.encoder_channels(self.num_encoders - 1)
    }

    /// Input channels of decoder `d` (after concatenation with the skip).
    pub fn decoder_in(&self, d: usize) -> usize {
        (self.base_channels << self.num_encoders) >> d
    }

    pub fn decoder_out(&self, d: usize) -> usize {
        self.decoder_in(d) / 4
    }

    /// Spatial sizes are padded to a multiple of this.
    pub fn pad_multiple(&self) -> usize {
        1 << self.num_encoders
    }

    /// The weight layout this config produces, as (name, kind, shape).
    pub fn block_specs(&self) -> Vec<(String, ParamKind, Vec<usize>)> {
        let mut out = Vec::new();
        let k = self.encoder_kernel;
        let rk = self.residual_kernel;
        let mut c_in = self.input_channels();
        for i in 0..self.num_encoders {
            let c = self.encoder_channels(i);
            out.push((format!("enc{i}.weight"), ParamKind::Weight, vec![c, c_in, k, k]));
            out.push((format!("enc{i}.bias"), ParamKind::Bias, vec![c]));
            c_in = c;
        }
        let c = self.bottleneck_channels();
        for r in 0..self.num_residual {
            for j in 1..=2 {
                out.push((format!("res{r}.conv{j}.weight"), ParamKind::Weight, vec![c, c, rk, rk]));
                out.push((format!("res{r}.bn{j}.scale"), ParamKind::Scale, vec![c]));
                out.push((format!("res{r}.bn{j}.shift"), ParamKind::Shift, vec![c]));
                out.push((format!("res{r}.bn{j}.running_mean"), ParamKind::RunningMean, vec![c]));
                out.push((format!("res{r}.bn{j}.running_var"), ParamKind::RunningVar, vec![c]));
            }
        }
        for d in 0..self.num_encoders {
            let (ci, co) = (self.decoder_in(d), self.decoder_out(d));
            out.push((format!("dec{d}.weight"), ParamKind::TransposedWeight, vec![ci, co, k, k]));
            out.push((format!("dec{d}.bias"), ParamKind::Bias, vec![co]));
        }
        let last = self.decoder_out(self.num_encoders - 1);
        out.push(("pred.weight".into(), ParamKind::Weight, vec![1, last, 1, 1]));
        out.push(("pred.bias".into(), ParamKind::Bias, vec![1]));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    TransposedWeight,
    Bias,
    Scale,
    Shift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        use ParamKind::*;
        [Weight, TransposedWeight, Bias, Scale, Shift, RunningMean, RunningVar]
            .get(c as usize)
            .copied()
    }
}

/// One named parameter tensor. Vectors are stored as `(len, 1, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub kind: ParamKind,
    pub dims: Vec<usize>,
    pub value: Tensor4<T>,
}

impl<T: Real> ParamBlock<T> {
    pub fn new(name: String, kind: ParamKind, dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let shape = dims_to_shape(&dims)?;
        let value = Tensor4::from_vec(shape, data)?;
        Ok(ParamBlock {
            name,
            kind,
            dims,
            value,
        })
    }

    pub fn data(&self) -> &[T] {
        self.value.data()
    }
}

fn dims_to_shape(dims: &[usize]) -> Result<Shape4> {
    match *dims {
        [a] => Ok(Shape4::new(a, 1, 1, 1)),
        [a, b, c, d] => Ok(Shape4::new(a, b, c, d)),
        _ => Err(Error::Shape(format!("unsupported parameter rank {}", dims.len()))),
    }
}

/// All parameters of the network, in the order given by
/// [`NetConfig::block_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights<T = f32> {
    config: NetConfig,
    blocks: Vec<ParamBlock<T>>,
}

impl<T: Real> NetworkWeights<T> {
    /// Every parameter zero (running variance included).
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let blocks = config
            .block_specs()
            .into_iter()
            .map(|(name, kind, dims)| {
                let len = dims.iter().product();
                ParamBlock::new(name, kind, dims, vec![T::zero(); len])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkWeights { config, blocks })
    }

    /// Kaiming-uniform (fan-in, ReLU gain) kernels, zero biases, unit
    /// batch-norm scale, zero shift, running statistics (0, 1).
    pub fn init<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        let mut w = Self::zeros(config)?;
        let stride2 = 4;
        for b in w.blocks.iter_mut() {
            let d = &b.dims;
            let fan_in = match b.kind {
                ParamKind::Weight => Some(d[1] * d[2] * d[3]),
                ParamKind::TransposedWeight => Some((d[0] * d[2] * d[3] / stride2).max(1)),
                _ => None,
            };
            if let Some(fan_in) = fan_in {
                let bound = libm::sqrt(6.0 / fan_in as f64);
                for v in b.value.data_mut() {
                    *v = T::of_f64(rng.random_range(-bound..bound));
                }
            }
            if matches!(b.kind, ParamKind::Scale | ParamKind::RunningVar) {
                b.value.data_mut().fill(T::one());
            }
        }
        Ok(w)
    }

    /// Reassembles weights, checking every block against the config layout.
    pub fn from_blocks(config: NetConfig, blocks: Vec<ParamBlock<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.block_specs();
        if specs.len() != blocks.len() {
            return Err(Error::Shape(format!(
                "config expects {} parameter blocks, got {}",
                specs.len(),
                blocks.len()
            )));
        }
        for ((name, kind, dims), b) in specs.iter().zip(&blocks) {
            if *name != b.name || *kind != b.kind || *dims != b.dims {
                return Err(Error::Shape(format!(
                    "parameter block {} {:?} does not match expected {name} {dims:?}",
                    b.name, b.dims
                )));
            }
        }
        Ok(NetworkWeights { config, blocks })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[ParamBlock<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock<T>] {
        &mut self.blocks
    }

    pub fn block(&self, i: usize) -> &ParamBlock<T> {
        &self.blocks[i]
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.kind.trainable())
            .map(|b| b.value.shape().len())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> NetworkWeights<U> {
        NetworkWeights {
            config: self.config,
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    kind: b.kind,
                    dims: b.dims.clone(),
                    value: b.value.cast(),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.value.is_finite())
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            blocks: self
                .blocks
                .iter()
                .map(|b| vec![T::zero(); b.value.shape().len()])
                .collect(),
        }
    }
}

/// Block indices of each layer.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub encoders: Vec<(usize, usize)>,
    pub residual: Vec<ResidualIdx>,
    pub decoders: Vec<(usize, usize)>,
    pub pred: (usize, usize),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ResidualIdx {
    pub conv1: usize,
    pub bn1: usize,
    pub conv2: usize,
    pub bn2: usize,
}

impl Layout {
    pub fn of(config: &NetConfig) -> Self {
        let mut i = 0;
        let mut next = |n: usize| {
            let at = i;
            i += n;
            at
        };
        let encoders = (0..config.num_encoders).map(|_| (next(1), next(1))).collect();
        let residual = (0..config.num_residual)
            .map(|_| ResidualIdx {
                conv1: next(1),
                bn1: next(4),
                conv2: next(1),
                bn2: next(4),
            })
            .collect();
        let decoders = (0..config.num_encoders).map(|_| (next(1), next(1))).collect();
        let pred = (next(1), next(1));
        Layout {
            encoders,
            residual,
            decoders,
            pred,
        }
    }
}

/// Gradient buffers parallel to [`NetworkWeights::blocks`]. Entries for
/// running statistics stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub blocks: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub(crate) fn add_to(&mut self, block: usize, g: &[T]) {
        for (x, y) in self.blocks[block].iter_mut().zip(g) {
            *x += *y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn full_channel_sequence() {
        let c = NetConfig::full(10, 3);
        let enc: Vec<usize> = (0..4).map(|i| c.encoder_channels(i)).collect();
        assert_eq!(enc, vec![64, 128, 256, 512]);
        let dec: Vec<usize> = (0..4).map(|d| c.decoder_out(d)).collect();
        assert_eq!(dec, vec![256, 128, 64, 32]);
        assert_eq!(c.decoder_in(0), 1024);
        assert_eq!(c.decoder_in(1), 512);
        assert_eq!(c.input_channels(), 13);
        assert_eq!(c.pad_multiple(), 16);
    }

    #[test]
    fn layout_matches_specs() {
        let c = NetConfig::tiny(5, 2);
        let specs = c.block_specs();
        let l = Layout::of(&c);
        assert_eq!(specs[l.encoders[1].0].0, "enc1.weight");
        assert_eq!(specs[l.residual[0].bn2].0, "res0.bn2.scale");
        assert_eq!(specs[l.decoders[0].0].0, "dec0.weight");
        assert_eq!(specs[l.pred.1].0, "pred.bias");
        assert_eq!(l.pred.1 + 1, specs.len());
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let c = NetConfig::tiny(2, 1);
        let a = NetworkWeights::<f32>::init(c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = NetworkWeights::<f32>::init(c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(NetworkWeights::from_blocks(c, a.blocks().to_vec()).is_ok());
        let other = NetConfig::tiny(3, 1);
        assert!(NetworkWeights::from_blocks(other, a.blocks().to_vec()).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = NetConfig::tiny(2, 1);
        c.num_encoders = 0;
        assert!(c.validate().is_err());
        let mut c = NetConfig::tiny(2, 1);
        c.base_channels = 7;
        assert!(c.validate().is_err());
    }
}
