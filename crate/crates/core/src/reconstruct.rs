//! Intensity reconstruction: direct integration, per-pixel high-pass
//! filtering, and the learned recurrent reconstructor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::event::{Event, EventWindow, SensorGeometry};
use crate::frame::Frame;
use crate::nn::tensor::{Shape4, Tensor4};
use crate::nn::unet::unet_infer;
use crate::nn::weights::NetworkWeights;
use crate::tensorizer::{stack_input, voxelize, EventTensor};

/// Brightness that a zero log state is displayed as.
pub const BASE_INTENSITY: f64 = 0.5;
/// Nominal contrast threshold assumed by the baselines.
pub const NOMINAL_THRESHOLD: f64 = 0.18;
/// Default high-pass cutoff in rad/s.
pub const DEFAULT_CUTOFF: f64 = 2.0 * core::f64::consts::PI * 5.0;
pub const BILATERAL_DIAMETER: usize = 5;
pub const BILATERAL_SIGMA: f64 = 25.0;

fn check_event(g: SensorGeometry, i: usize, e: &Event) -> Result<()> {
    if g.contains(e.x as u32, e.y as u32) {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            index: i,
            x: e.x as u32,
            y: e.y as u32,
            width: g.width,
            height: g.height,
        })
    }
}

/// Running sum of `p * c` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationState {
    geometry: SensorGeometry,
    pub loglum: Vec<f64>,
    pub c: f64,
}

impl IntegrationState {
    pub fn new(geometry: SensorGeometry, c: f64) -> Self {
        IntegrationState {
            geometry,
            loglum: vec![0.0; geometry.pixels()],
            c,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    /// Adds `p * c` at each event's pixel. Nothing is applied if any event
    /// lies outside the sensor.
    pub fn integrate(&mut self, events: &[Event]) -> Result<()> {
        for (i, e) in events.iter().enumerate() {
            check_event(self.geometry, i, e)?;
        }
        for e in events {
            self.loglum[self.geometry.index(e.x, e.y)] += e.p.as_f64() * self.c;
        }
        Ok(())
    }

    pub fn frame(&self, t: u64) -> Frame {
        state_to_frame(&self.loglum, self.geometry, t)
    }
}

/// Per-pixel leaky integrator: the state decays with rate `alpha` between
/// the events of its pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct HighpassState {
    geometry: SensorGeometry,
    pub loglum: Vec<f64>,
    pub last_t: Vec<u64>,
    pub alpha: f64,
    pub c: f64,
}

impl HighpassState {
    pub fn new(geometry: SensorGeometry, c: f64, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid(format!("cutoff must be finite and >= 0, got {alpha}")));
        }
        Ok(HighpassState {
            geometry,
            loglum: vec![0.0; geometry.pixels()],
            last_t: vec![0; geometry.pixels()],
            alpha,
            c,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    fn decay(&self, dt_us: u64) -> f64 {
        if self.alpha == 0.0 {
            1.0
        } else {
            libm::exp(-self.alpha * dt_us as f64 * 1e-6)
        }
    }

    pub fn step(&mut self, e: &Event) -> Result<()> {
        check_event(self.geometry, 0, e)?;
        let i = self.geometry.index(e.x, e.y);
        let last = self.last_t[i];
        if e.t < last {
            return Err(Error::TimeRegression {
                index: i,
                prev: last,
                t: e.t,
            });
        }
        self.loglum[i] = self.loglum[i] * self.decay(e.t - last) + e.p.as_f64() * self.c;
        self.last_t[i] = e.t;
        Ok(())
    }

    pub fn process(&mut self, events: &[Event]) -> Result<()> {
        events.iter().try_for_each(|e| self.step(e))
    }

    /// State of every pixel decayed to time `t` (pixels updated after `t`
    /// are left as they are).
    pub fn loglum_at(&self, t: u64) -> Vec<f64> {
        self.loglum
            .iter()
            .zip(&self.last_t)
            .map(|(&l, &lt)| if t > lt { l * self.decay(t - lt) } else { l })
            .collect()
    }

    pub fn frame(&self, t: u64) -> Frame {
        state_to_frame(&self.loglum_at(t), self.geometry, t)
    }
}

/// Applies one event; see [`HighpassState::step`].
pub fn highpass_step(state: &mut HighpassState, event: &Event) -> Result<()> {
    state.step(event)
}

/// Displays a log state: `clamp(exp(loglum) * BASE_INTENSITY, 0, 1)`.
pub fn state_to_frame(loglum: &[f64], geometry: SensorGeometry, t: u64) -> Frame {
    let base = libm::log(BASE_INTENSITY);
    let values = loglum
        .iter()
        .map(|&l| {
            let v = libm::exp(l + base);
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0) as f32
            }
        })
        .collect();
    Frame::from_clamped(geometry.width, geometry.height, t, values).expect("length matches geometry")
}

/// Bilateral filter with spatial scale `sigma` pixels and range scale
/// `sigma / 255` in intensity units. Borders replicate the edge pixel.
pub fn bilateral_filter(frame: &Frame, d: usize, sigma: f64) -> Result<Frame> {
    if d % 2 == 0 {
        return Err(Error::Invalid(format!("filter diameter must be odd, got {d}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Invalid(format!("filter sigma must be positive, got {sigma}")));
    }
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let r = (d / 2) as isize;
    let sr = sigma / 255.0;
    let mut spatial = Vec::with_capacity(d * d);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push(libm::exp(-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)));
        }
    }
    let src = frame.values();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = src[y as usize * w + x as usize] as f64;
            let (mut num, mut den) = (0.0, 0.0);
            let mut k = 0;
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let v = src[yy * w + xx] as f64;
                    let diff = v - c;
                    let wgt = spatial[k] * libm::exp(-diff * diff / (2.0 * sr * sr));
                    num += wgt * v;
                    den += wgt;
                    k += 1;
                }
            }
            out.push((num / den) as f32);
        }
    }
    Frame::from_clamped(frame.width(), frame.height(), frame.t, out)
}

/// The `K` most recent reconstructions, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    geometry: SensorGeometry,
    frames: Vec<Frame>,
}

impl RecurrentState {
    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn k(&self) -> usize {
        self.frames.len()
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    fn push(&mut self, f: Frame) {
        if !self.frames.is_empty() {
            self.frames.remove(0);
            self.frames.push(f);
        }
    }
}

/// `k` constant frames at [`BASE_INTENSITY`].
pub fn reset_state(geometry: SensorGeometry, k: usize) -> RecurrentState {
    RecurrentState {
        geometry,
        frames: vec![Frame::constant(geometry, 0, BASE_INTENSITY as f32); k],
    }
}

/// One learned reconstruction step. The new frame is stamped `t` and
/// replaces the oldest frame of `state`.
pub fn e2v_step(state: &mut RecurrentState, tensor: &EventTensor, weights: &NetworkWeights<f32>, t: u64) -> Result<Frame> {
    let cfg = weights.config();
    if cfg.k_frames != state.k() {
        return Err(Error::Invalid(format!(
            "network expects K = {}, recurrent state holds {} frames",
            cfg.k_frames,
            state.k()
        )));
    }
    if cfg.bins != tensor.bins() {
        return Err(Error::Invalid(format!(
            "network expects B = {}, event tensor has {} bins",
            cfg.bins,
            tensor.bins()
        )));
    }
    if tensor.geometry() != state.geometry {
        return Err(Error::Shape("event tensor and recurrent state differ in size".into()));
    }
    let input = stack_input(tensor, &state.frames, state.k())?;
    let g = input.geometry();
    let x = Tensor4::from_vec(
        Shape4::new(1, input.channels(), g.height as usize, g.width as usize),
        input.values().iter().map(|&v| v as f32).collect(),
    )?;
    let y = unet_infer(weights, &x)?;
    if !y.is_finite() {
        return Err(Error::NonFinite("network produced non-finite output".into()));
    }
    let frame = Frame::from_clamped(g.width, g.height, t, y.into_data())?;
    state.push(frame.clone());
    Ok(frame)
}

/// Learned reconstructor over fixed-count windows.
#[derive(Debug, Clone)]
pub struct E2vReconstructor {
    weights: NetworkWeights<f32>,
    state: RecurrentState,
}

impl E2vReconstructor {
    pub fn new(weights: NetworkWeights<f32>, geometry: SensorGeometry) -> Self {
        let k = weights.config().k_frames;
        E2vReconstructor {
            weights,
            state: reset_state(geometry, k),
        }
    }

    pub fn reset(&mut self) {
        self.state = reset_state(self.state.geometry, self.weights.config().k_frames);
    }

    pub fn state(&self) -> &RecurrentState {
        &self.state
    }

    /// Reconstructs the frame at the window's last event.
    pub fn process(&mut self, window: &EventWindow<'_>) -> Result<Frame> {
        let tensor = voxelize(window, self.weights.config().bins, self.state.geometry)?;
        e2v_step(&mut self.state, &tensor, &self.weights, window.t_last())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;
    use crate::nn::weights::NetConfig;

    fn g() -> SensorGeometry {
        SensorGeometry::new(4, 3).unwrap()
    }

    #[test]
    fn single_event_adds_threshold() {
        let mut s = IntegrationState::new(g(), 0.2);
        s.integrate(&[]).unwrap();
        assert!(s.loglum.iter().all(|&v| v == 0.0));
        s.integrate(&[Event::new(1, 2, 5, Polarity::Positive)]).unwrap();
        assert_eq!(s.loglum[g().index(1, 2)], 0.2);
        assert!(s.integrate(&[Event::new(4, 0, 6, Polarity::Positive)]).is_err());
    }

    #[test]
    fn highpass_decays_to_one_over_e() {
        let alpha = 10.0;
        let mut s = HighpassState::new(g(), 0.3, alpha).unwrap();
        s.step(&Event::new(0, 0, 1000, Polarity::Positive)).unwrap();
        let v = s.loglum_at(1000 + 100_000)[0];
        assert!((v - 0.3 * libm::exp(-1.0)).abs() < 1e-12);
        assert!(s.step(&Event::new(0, 0, 999, Polarity::Negative)).is_err());
        assert!(HighpassState::new(g(), 0.3, -1.0).is_err());
    }

    #[test]
    fn display_policy() {
        let f = state_to_frame(&[0.0, libm::log(2.0), -1.0], SensorGeometry::new(3, 1).unwrap(), 7);
        assert_eq!(f.values()[0], 0.5);
        assert_eq!(f.values()[1], 1.0);
        assert!((f.values()[2] as f64 - 0.5 * libm::exp(-1.0)).abs() < 1e-7);
        assert_eq!(f.t, 7);
    }

    #[test]
    fn bilateral_constant_and_bad_diameter() {
        let f = Frame::constant(g(), 0, 0.3);
        assert_eq!(bilateral_filter(&f, 5, 25.0).unwrap(), f);
        assert!(bilateral_filter(&f, 4, 25.0).is_err());
        assert_eq!(bilateral_filter(&f, 1, 25.0).unwrap(), f);
    }

    #[test]
    fn reset_and_zero_weights() {
        assert_eq!(reset_state(g(), 0).k(), 0);
        let s = reset_state(g(), 3);
        assert!(s.frames().iter().all(|f| f.values().iter().all(|&v| v == 0.5)));

        let geo = SensorGeometry::new(8, 8).unwrap();
        let w = NetworkWeights::<f32>::zeros(NetConfig::tiny(2, 2)).unwrap();
        let mut st = reset_state(geo, 2);
        let t = EventTensor::zeros(2, geo);
        let f = e2v_step(&mut st, &t, &w, 42).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.5));
        assert_eq!(st.frames()[1].t, 42);
        let mut st3 = reset_state(geo, 3);
        assert!(e2v_step(&mut st3, &t, &w, 0).is_err());
    }
}
