//! Voxel-grid encoding of event windows and network input assembly.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::event::{Event, EventWindow, SensorGeometry};
use crate::frame::Frame;

/// Default events per window.
pub const DEFAULT_WINDOW_EVENTS: usize = 25_000;
/// Default temporal bin count.
pub const DEFAULT_BINS: usize = 10;

/// `bins x height x width` grid of signed event mass.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTensor {
    bins: usize,
    geometry: SensorGeometry,
    values: Vec<f64>,
}

impl EventTensor {
    pub fn zeros(bins: usize, geometry: SensorGeometry) -> Self {
        EventTensor {
            bins,
            geometry,
            values: vec![0.0; bins * geometry.pixels()],
        }
    }

    pub fn from_values(bins: usize, geometry: SensorGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != bins * geometry.pixels() {
            return Err(Error::Shape(alloc::format!(
                "event tensor {bins}x{}x{} needs {} values, got {}",
                geometry.height,
                geometry.width,
                bins * geometry.pixels(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("event tensor".into()));
        }
        Ok(EventTensor {
            bins,
            geometry,
            values,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bin(&self, b: usize) -> &[f64] {
        let n = self.geometry.pixels();
        &self.values[b * n..(b + 1) * n]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Distributes each event's polarity over the two temporally closest bins
/// at its own pixel, with normalized time `t* = (B-1)(t - t0) / dT`.
/// A zero-duration window places every event in bin 0.
///
/// The bilinear weights are rational numbers with denominator `dT`, so the
/// numerators are accumulated as exact integers and divided once at the end.
/// The result is therefore independent of event order.
pub fn voxelize(window: &EventWindow<'_>, bins: usize, geometry: SensorGeometry) -> Result<EventTensor> {
    voxelize_events(window.events(), bins, geometry)
}

/// [`voxelize`] over an arbitrary (possibly unordered) event slice. `t0` and
/// `dT` are taken from the earliest and latest timestamps, which coincide
/// with the first and last event of a sorted window.
pub fn voxelize_events(events: &[Event], bins: usize, geometry: SensorGeometry) -> Result<EventTensor> {
    if bins == 0 {
        return Err(Error::Invalid("bin count B must be at least 1".into()));
    }
    if events.is_empty() {
        return Err(Error::Invalid("cannot voxelize an empty window".into()));
    }
    let t0 = events.iter().map(|e| e.t).min().unwrap_or(0);
    let span = events.iter().map(|e| e.t).max().unwrap_or(0) - t0;
    let pixels = geometry.pixels();
    let mut acc = vec![0i64; bins * pixels];
    // (B-1) * (t - t0) may overflow u64 for absurd spans; do it in u128.
    let scale = (bins - 1) as u128;
    let denom: i64 = if span == 0 { 1 } else { span as i64 };
    for (index, e) in events.iter().enumerate() {
        if !geometry.contains(e.x as u32, e.y as u32) {
            return Err(Error::OutOfBounds {
                index,
                x: e.x as u32,
                y: e.y as u32,
                width: geometry.width,
                height: geometry.height,
            });
        }
        let pix = geometry.index(e.x, e.y);
        let p = e.p.sign() as i64;
        if span == 0 {
            acc[pix] += p;
            continue;
        }
        let num = scale * (e.t - t0) as u128;
        let lower = (num / span as u128) as usize;
        let rem = (num % span as u128) as i64;
        acc[lower * pixels + pix] += p * (denom - rem);
        if rem != 0 {
            acc[(lower + 1) * pixels + pix] += p * rem;
        }
    }
    let inv = denom as f64;
    let values = acc.into_iter().map(|a| a as f64 / inv).collect();
    Ok(EventTensor {
        bins,
        geometry,
        values,
    })
}

/// `(B + K) x H x W` network input: event bins followed by the `K` previous
/// reconstructions, most recent last.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    bins: usize,
    frames: usize,
    geometry: SensorGeometry,
    values: Vec<f64>,
}

impl NetworkInput {
    pub fn channels(&self) -> usize {
        self.bins + self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.geometry.pixels();
        &self.values[c * n..(c + 1) * n]
    }
}

/// Concatenates the event tensor with exactly `k` previous frames.
pub fn stack_input(tensor: &EventTensor, prev_frames: &[Frame], k: usize) -> Result<NetworkInput> {
    if prev_frames.len() != k {
        return Err(Error::Shape(alloc::format!(
            "expected {k} previous frames, got {}",
            prev_frames.len()
        )));
    }
    let g = tensor.geometry();
    let mut values = Vec::with_capacity((tensor.bins() + k) * g.pixels());
    values.extend_from_slice(tensor.values());
    for f in prev_frames {
        if f.geometry() != g {
            return Err(Error::Shape(alloc::format!(
                "frame {}x{} does not match tensor {}x{}",
                f.width(),
                f.height(),
                g.width,
                g.height
            )));
        }
        values.extend(f.values().iter().map(|&v| v as f64));
    }
    Ok(NetworkInput {
        bins: tensor.bins(),
        frames: k,
        geometry: g,
        values,
    })
}
