//! Event data model and fixed-count windowing.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Sign of a brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    #[inline]
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.sign() as f64
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    /// Accepts `1`/`-1` as well as the dataset convention `0` for negative.
    pub fn from_int(v: i64) -> Option<Self> {
        match v {
            1 => Some(Polarity::Positive),
            0 | -1 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// One brightness-change measurement. `t` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Self {
        Event { x, y, t, p }
    }
}

/// Sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    /// DAVIS240C resolution.
    pub const DAVIS240: SensorGeometry = SensorGeometry {
        width: 240,
        height: 180,
    };

    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 || width > u16::MAX as u32 || height > u16::MAX as u32 {
            return Err(Error::Invalid(alloc::format!(
                "sensor geometry {width}x{height} must be between 1 and 65535 on both axes"
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

/// A time-ordered stream of events from one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, rejecting out-of-bounds events and timestamp regressions.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self> {
        let mut prev = 0u64;
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
            if index > 0 && e.t < prev {
                return Err(Error::TimeRegression {
                    index,
                    prev,
                    t: e.t,
                });
            }
            prev = e.t;
        }
        Ok(EventStream { geometry, events })
    }

    /// Builds a stream without checking invariants. Use [`validate_stream`]
    /// to inspect such a stream and [`sort_events`] to repair ordering.
    pub fn new_unchecked(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        EventStream { geometry, events }
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// A run of exactly `N` consecutive events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventWindow<'a> {
    events: &'a [Event],
}

impl<'a> EventWindow<'a> {
    /// Wraps a non-empty, time-sorted slice.
    pub fn new(events: &'a [Event]) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Invalid("event window must not be empty".into()));
        }
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::TimeRegression {
                index: i + 1,
                prev: events[i].t,
                t: events[i + 1].t,
            });
        }
        Ok(EventWindow { events })
    }

    pub fn events(&self) -> &'a [Event] {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t0(&self) -> u64 {
        self.events[0].t
    }

    pub fn t_last(&self) -> u64 {
        self.events[self.events.len() - 1].t
    }

    /// Window span in microseconds.
    pub fn duration_us(&self) -> u64 {
        self.t_last() - self.t0()
    }
}

/// Splits a stream into consecutive non-overlapping windows of `n` events.
/// A trailing remainder shorter than `n` is dropped.
pub fn window_by_count(stream: &EventStream, n: usize) -> Result<Vec<EventWindow<'_>>> {
    if n == 0 {
        return Err(Error::Invalid("window size N must be at least 1".into()));
    }
    Ok(stream
        .events()
        .chunks_exact(n)
        .map(|events| EventWindow { events })
        .collect())
}

/// Window spans in seconds.
pub fn window_durations(windows: &[EventWindow<'_>]) -> Vec<f64> {
    windows
        .iter()
        .map(|w| w.duration_us() as f64 * 1e-6)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub events: usize,
    pub bound_violations: usize,
    pub timestamp_inversions: usize,
    /// Always zero for streams built from [`Event`], whose polarity type
    /// admits only the two legal values; kept for reports on raw input.
    pub polarity_violations: usize,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.bound_violations == 0 && self.timestamp_inversions == 0 && self.polarity_violations == 0
    }
}

/// Counts invariant violations without modifying the stream.
pub fn validate_stream(stream: &EventStream) -> ValidationReport {
    let g = stream.geometry();
    let events = stream.events();
    let bound_violations = events
        .iter()
        .filter(|e| !g.contains(e.x as u32, e.y as u32))
        .count();
    let timestamp_inversions = events.windows(2).filter(|w| w[1].t < w[0].t).count();
    ValidationReport {
        events: events.len(),
        bound_violations,
        timestamp_inversions,
        polarity_violations: 0,
    }
}

/// Stable sort by timestamp; repair utility for unsorted input.
pub fn sort_events(events: &mut [Event]) {
    events.sort_by_key(|e| e.t);
}
