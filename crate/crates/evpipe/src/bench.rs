//! Stream throughput benchmarks and synthetic streams.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use evpipe_core::event::{window_by_count, Event, EventStream, Polarity, SensorGeometry};
use evpipe_core::metrics::quantile_sorted;
use evpipe_core::nn::NetworkWeights;
use evpipe_core::reconstruct::{E2vReconstructor, HighpassState, IntegrationState, DEFAULT_CUTOFF, NOMINAL_THRESHOLD};
use evpipe_core::tensorizer::voxelize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events_io::{decode_binary, encode_binary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    /// Binary decode followed by voxelization of every window.
    ParseVoxelize,
    Voxelize,
    Integrate,
    Highpass,
    E2v,
    /// Walks the windows and touches every event; a floor for the others.
    Noop,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 6] = [
        BenchMethod::ParseVoxelize,
        BenchMethod::Voxelize,
        BenchMethod::Integrate,
        BenchMethod::Highpass,
        BenchMethod::E2v,
        BenchMethod::Noop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::ParseVoxelize => "parse-voxelize",
            BenchMethod::Voxelize => "voxelize",
            BenchMethod::Integrate => "integrate",
            BenchMethod::Highpass => "highpass",
            BenchMethod::E2v => "e2v",
            BenchMethod::Noop => "noop",
        }
    }
}

impl FromStr for BenchMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        BenchMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown bench method {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions<'a> {
    pub window_events: usize,
    pub bins: usize,
    pub repetitions: usize,
    pub weights: Option<&'a NetworkWeights<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub method: String,
    pub events: usize,
    pub windows: usize,
    /// Millions of events per second at the median repetition time.
    pub mev_per_s: f64,
    /// Median wall time per window in milliseconds.
    pub frame_ms: f64,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "method,mev_per_s,frame_ms";

    pub fn csv_row(&self) -> String {
        format!("{},{:.4},{:.6}", self.method, self.mev_per_s, self.frame_ms)
    }
}

fn run_once(method: BenchMethod, stream: &EventStream, encoded: &[u8], opts: &BenchOptions<'_>) -> Result<f64> {
    let g = stream.geometry();
    let n = opts.window_events;
    let start = Instant::now();
    match method {
        BenchMethod::ParseVoxelize => {
            let decoded = decode_binary(encoded, Path::new("<bench>"))?;
            for w in window_by_count(&decoded, n)? {
                std::hint::black_box(voxelize(&w, opts.bins, g)?);
            }
        }
        BenchMethod::Voxelize => {
            for w in window_by_count(stream, n)? {
                std::hint::black_box(voxelize(&w, opts.bins, g)?);
            }
        }
        BenchMethod::Integrate => {
            let mut s = IntegrationState::new(g, NOMINAL_THRESHOLD);
            for w in window_by_count(stream, n)? {
                s.integrate(w.events())?;
                std::hint::black_box(s.frame(w.t_last()));
            }
        }
        BenchMethod::Highpass => {
            let mut s = HighpassState::new(g, NOMINAL_THRESHOLD, DEFAULT_CUTOFF)?;
            for w in window_by_count(stream, n)? {
                s.process(w.events())?;
                std::hint::black_box(s.frame(w.t_last()));
            }
        }
        BenchMethod::E2v => {
            let weights = opts
                .weights
                .ok_or_else(|| Error::Config("the e2v benchmark needs --weights".into()))?;
            let mut r = E2vReconstructor::new(weights.clone(), g);
            for w in window_by_count(stream, n)? {
                std::hint::black_box(r.process(&w)?);
            }
        }
        BenchMethod::Noop => {
            let mut acc = 0u64;
            for w in window_by_count(stream, n)? {
                for e in w.events() {
                    acc = acc.wrapping_add(e.t ^ e.x as u64);
                }
            }
            std::hint::black_box(acc);
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Times `method` over the full windows of `stream` and reports the
/// median of `repetitions` runs.
pub fn throughput_bench(method: BenchMethod, stream: &EventStream, opts: &BenchOptions<'_>) -> Result<BenchReport> {
    if opts.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let windows = window_by_count(stream, opts.window_events)?.len();
    if windows == 0 {
        return Err(Error::Config(format!(
            "stream of {} events holds no window of {}",
            stream.len(),
            opts.window_events
        )));
    }
    let events = windows * opts.window_events;
    let encoded = if method == BenchMethod::ParseVoxelize {
        encode_binary(stream)
    } else {
        Vec::new()
    };
    let mut times = (0..opts.repetitions)
        .map(|_| run_once(method, stream, &encoded, opts))
        .collect::<Result<Vec<_>>>()?;
    times.sort_by(f64::total_cmp);
    let median = quantile_sorted(&times, 0.5).max(1e-12);
    Ok(BenchReport {
        method: method.name().to_string(),
        events,
        windows,
        mev_per_s: events as f64 / median * 1e-6,
        frame_ms: median / windows as f64 * 1e3,
    })
}

/// Uniformly random pixels and polarities at a constant event rate.
pub fn synthetic_stream(geometry: SensorGeometry, count: usize, rate_hz: f64, seed: u64) -> Result<EventStream> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::Config(format!("event rate must be positive, got {rate_hz}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..count)
        .map(|i| {
            let x = rng.random_range(0..geometry.width) as u16;
            let y = rng.random_range(0..geometry.height) as u16;
            let p = if rng.random::<bool>() { Polarity::Positive } else { Polarity::Negative };
            Event::new(x, y, (i as f64 / rate_hz * 1e6).round() as u64, p)
        })
        .collect();
    Ok(EventStream::new(geometry, events)?)
}
