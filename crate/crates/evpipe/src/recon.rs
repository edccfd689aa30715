//! Runs a reconstruction method over a whole stream, one frame per window.

use evpipe_core::event::{window_by_count, EventStream};
use evpipe_core::frame::Frame;
use evpipe_core::nn::NetworkWeights;
use evpipe_core::reconstruct::{bilateral_filter, E2vReconstructor, HighpassState, IntegrationState};

use crate::error::Result;

#[derive(Debug, Clone)]
pub enum Method {
    /// Direct integration with a fixed contrast threshold.
    Integrate { c: f64 },
    /// Per-pixel high-pass filter; `filter` is an optional bilateral
    /// `(diameter, sigma)` applied to each output frame.
    Highpass {
        c: f64,
        cutoff: f64,
        filter: Option<(usize, f64)>,
    },
    E2v(Box<NetworkWeights<f32>>),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Integrate { .. } => "integrate",
            Method::Highpass { .. } => "highpass",
            Method::E2v(_) => "e2v",
        }
    }
}

/// Frames stamped at the last event of each full window of
/// `window_events` events. A trailing partial window is ignored.
pub fn reconstruct_stream(method: &Method, stream: &EventStream, window_events: usize) -> Result<Vec<Frame>> {
    let g = stream.geometry();
    let windows = window_by_count(stream, window_events)?;
    let mut frames = Vec::with_capacity(windows.len());
    match method {
        Method::Integrate { c } => {
            let mut s = IntegrationState::new(g, *c);
            for w in &windows {
                s.integrate(w.events())?;
                frames.push(s.frame(w.t_last()));
            }
        }
        Method::Highpass { c, cutoff, filter } => {
            let mut s = HighpassState::new(g, *c, *cutoff)?;
            for w in &windows {
                s.process(w.events())?;
                let f = s.frame(w.t_last());
                frames.push(match filter {
                    Some((d, sigma)) => bilateral_filter(&f, *d, *sigma)?,
                    None => f,
                });
            }
        }
        Method::E2v(weights) => {
            let mut r = E2vReconstructor::new((**weights).clone(), g);
            for w in &windows {
                frames.push(r.process(w)?);
            }
        }
    }
    Ok(frames)
}
