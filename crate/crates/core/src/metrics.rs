//! Reconstruction quality metrics and the evaluation protocol.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::event::{window_by_count, EventStream};
use crate::frame::Frame;

pub const HIST_BINS: usize = 256;
/// Maximum gap between a ground-truth frame and its reconstruction.
pub const MATCH_TOLERANCE_US: u64 = 1000;
pub const DEFAULT_WARMUP_S: f64 = 2.0;

/// Maps each pixel to the cumulative share of pixels at or below its
/// 256-level bin. A constant frame maps to 1.0.
pub fn hist_equalize(frame: &Frame) -> Frame {
    let level = |v: f32| (libm::round(v as f64 * (HIST_BINS - 1) as f64) as usize).min(HIST_BINS - 1);
    let mut counts = [0usize; HIST_BINS];
    for &v in frame.values() {
        counts[level(v)] += 1;
    }
    let n = frame.values().len().max(1) as f64;
    let mut cdf = [0f32; HIST_BINS];
    let mut acc = 0usize;
    for (c, &k) in cdf.iter_mut().zip(&counts) {
        acc += k;
        *c = (acc as f64 / n) as f32;
    }
    let values = frame.values().iter().map(|&v| cdf[level(v)]).collect();
    Frame::from_clamped(frame.width(), frame.height(), frame.t, values).expect("same size")
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_same_shape(b)?;
    let n = a.values().len() as f64;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// Mean SSIM over all valid 11x11 windows.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_same_shape(b)?;
    let x: Vec<f64> = a.values().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.values().iter().map(|&v| v as f64).collect();
    crate::ssim::ssim_with_grad(&x, &y, a.width() as usize, a.height() as usize, false).map(|(s, _)| s)
}

/// A ground-truth frame index paired with a reconstruction index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePair {
    pub gt: usize,
    pub recon: usize,
    /// `recon_t - gt_t` in microseconds.
    pub gap: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pub pairs: Vec<FramePair>,
    pub unmatched_gt: Vec<usize>,
    /// Reconstructions not used by any pair.
    pub unused_recon: Vec<usize>,
}

/// Pairs every ground-truth timestamp with the nearest reconstruction
/// within `tolerance` (ties go to the earlier one). Both lists sorted.
pub fn match_frames(recon: &[u64], gt: &[u64], tolerance: u64) -> Matching {
    let mut m = Matching::default();
    let mut used = vec![false; recon.len()];
    for (gi, &t) in gt.iter().enumerate() {
        let i = recon.partition_point(|&r| r < t);
        let mut best: Option<usize> = None;
        if i > 0 {
            best = Some(i - 1);
        }
        if i < recon.len() && best.is_none_or(|b| recon[i] - t < t - recon[b]) {
            best = Some(i);
        }
        match best {
            Some(r) if recon[r].abs_diff(t) <= tolerance => {
                used[r] = true;
                m.pairs.push(FramePair {
                    gt: gi,
                    recon: r,
                    gap: recon[r] as i64 - t as i64,
                });
            }
            _ => m.unmatched_gt.push(gi),
        }
    }
    m.unused_recon = used.iter().enumerate().filter(|(_, &u)| !u).map(|(i, _)| i).collect();
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Ground-truth frames this many seconds after the first are skipped.
    pub warmup_s: f64,
    /// Ground-truth frames within this many seconds of the last are skipped.
    pub tail_s: f64,
    pub tolerance_us: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            warmup_s: DEFAULT_WARMUP_S,
            tail_s: 0.0,
            tolerance_us: MATCH_TOLERANCE_US,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMetrics {
    pub sequence: String,
    pub mse: f64,
    pub ssim: f64,
    pub matched: usize,
    /// Ground-truth frames dropped by the warm-up and tail spans.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    Scored(SequenceMetrics),
    /// No ground-truth frame found a reconstruction.
    Empty { sequence: String, excluded: usize },
}

impl Evaluation {
    pub fn metrics(&self) -> Option<&SequenceMetrics> {
        match self {
            Evaluation::Scored(m) => Some(m),
            Evaluation::Empty { .. } => None,
        }
    }
}

/// Indices of ground-truth frames kept after the warm-up and tail spans.
pub fn candidate_frames(gt: &[Frame], config: &EvalConfig) -> Vec<usize> {
    let (Some(first), Some(last)) = (gt.first(), gt.last()) else {
        return Vec::new();
    };
    let warm = libm::round(config.warmup_s.max(0.0) * 1e6) as u64;
    let tail = libm::round(config.tail_s.max(0.0) * 1e6) as u64;
    (0..gt.len())
        .filter(|&i| gt[i].t - first.t >= warm && (tail == 0 || last.t - gt[i].t >= tail))
        .collect()
}

/// Histogram-equalized MSE and SSIM averaged over matched frame pairs.
pub fn evaluate_sequence(sequence: &str, recon: &[Frame], gt: &[Frame], config: &EvalConfig) -> Result<Evaluation> {
    let keep = candidate_frames(gt, config);
    let excluded = gt.len() - keep.len();
    let gt_t: Vec<u64> = keep.iter().map(|&i| gt[i].t).collect();
    let recon_t: Vec<u64> = recon.iter().map(|f| f.t).collect();
    let m = match_frames(&recon_t, &gt_t, config.tolerance_us);
    if m.pairs.is_empty() {
        return Ok(Evaluation::Empty {
            sequence: sequence.into(),
            excluded,
        });
    }
    let (mut se, mut ss) = (0.0, 0.0);
    for p in &m.pairs {
        let a = hist_equalize(&recon[p.recon]);
        let b = hist_equalize(&gt[keep[p.gt]]);
        se += mse(&a, &b)?;
        ss += ssim(&a, &b)?;
    }
    let n = m.pairs.len() as f64;
    Ok(Evaluation::Scored(SequenceMetrics {
        sequence: sequence.into(),
        mse: se / n,
        ssim: ss / n,
        matched: m.pairs.len(),
        excluded,
    }))
}

/// Per-sequence rows for several methods plus an unweighted Mean row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub methods: Vec<String>,
    pub sequences: Vec<String>,
    /// `rows[s][m]` for sequence `s` and method `m`.
    pub rows: Vec<Vec<SequenceMetrics>>,
    /// Per-method mean (mse, ssim, frames).
    pub mean: Vec<(f64, f64, usize)>,
}

/// Digits after the decimal point in rendered tables.
pub const TABLE_PRECISION: usize = 6;

pub fn aggregate_table(results: &[(String, Vec<SequenceMetrics>)]) -> Result<MetricsTable> {
    let Some((_, first)) = results.first() else {
        return Err(Error::Insufficient("no methods to tabulate".into()));
    };
    let sequences: Vec<String> = first.iter().map(|m| m.sequence.clone()).collect();
    if sequences.is_empty() {
        return Err(Error::Insufficient("no sequences to tabulate".into()));
    }
    let mut rows: Vec<Vec<SequenceMetrics>> = vec![Vec::new(); sequences.len()];
    for (method, list) in results {
        if list.len() != sequences.len() {
            return Err(Error::Invalid(format!("method {method} covers a different sequence set")));
        }
        for (s, name) in sequences.iter().enumerate() {
            let m = list
                .iter()
                .find(|m| &m.sequence == name)
                .ok_or_else(|| Error::Invalid(format!("method {method} has no result for {name}")))?;
            rows[s].push(m.clone());
        }
    }
    let n = sequences.len() as f64;
    let mean = (0..results.len())
        .map(|k| {
            let mse = rows.iter().map(|r| r[k].mse).sum::<f64>() / n;
            let ssim = rows.iter().map(|r| r[k].ssim).sum::<f64>() / n;
            let frames = rows.iter().map(|r| r[k].matched).sum();
            (mse, ssim, frames)
        })
        .collect();
    Ok(MetricsTable {
        methods: results.iter().map(|(m, _)| m.clone()).collect(),
        sequences,
        rows,
        mean,
    })
}

impl MetricsTable {
    /// `sequence,method,mse,ssim,frames`, one line per cell plus Mean lines.
    pub fn to_csv(&self) -> String {
        let p = TABLE_PRECISION;
        let mut out = String::from("sequence,method,mse,ssim,frames\n");
        for (s, row) in self.sequences.iter().zip(&self.rows) {
            for (m, r) in self.methods.iter().zip(row) {
                let _ = writeln!(out, "{s},{m},{:.p$},{:.p$},{}", r.mse, r.ssim, r.matched);
            }
        }
        for (m, (mse, ssim, frames)) in self.methods.iter().zip(&self.mean) {
            let _ = writeln!(out, "Mean,{m},{mse:.p$},{ssim:.p$},{frames}");
        }
        out
    }

    /// Aligned text with one MSE and one SSIM column per method. The best
    /// value in each row is marked with `*`.
    pub fn to_text(&self) -> String {
        let p = TABLE_PRECISION;
        let cell = self.methods.iter().map(|m| m.len() + 5).max().unwrap_or(0).max(p + 4);
        let name_w = self.sequences.iter().map(|s| s.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "sequence");
        for m in &self.methods {
            let _ = write!(out, " {:>cell$} {:>cell$}", format!("{m}:mse"), format!("{m}:ssim"));
        }
        out.push('\n');
        let line = |out: &mut String, name: &str, vals: &[(f64, f64)]| {
            let best_mse = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
            let best_ssim = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
            let _ = write!(out, "{name:<name_w$}");
            for &(a, b) in vals {
                let ma = if vals.len() > 1 && a == best_mse { "*" } else { " " };
                let mb = if vals.len() > 1 && b == best_ssim { "*" } else { " " };
                let _ = write!(out, " {:>w$}{ma} {:>w$}{mb}", format!("{a:.p$}"), format!("{b:.p$}"), w = cell - 1);
            }
            out.push('\n');
        };
        for (s, row) in self.sequences.iter().zip(&self.rows) {
            let vals: Vec<(f64, f64)> = row.iter().map(|r| (r.mse, r.ssim)).collect();
            line(&mut out, s, &vals);
        }
        let vals: Vec<(f64, f64)> = self.mean.iter().map(|m| (m.0, m.1)).collect();
        line(&mut out, "Mean", &vals);
        out
    }
}

/// Quartile summary of window durations, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    pub windows: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

impl LatencyReport {
    /// The five quantiles converted to milliseconds.
    pub fn ms(&self) -> [f64; 5] {
        [self.min, self.p25, self.median, self.p75, self.max].map(|v| v / 1000.0)
    }
}

/// Quantile `q` of sorted data, interpolating linearly between order
/// statistics at position `q * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn latency_report(stream: &EventStream, n: usize) -> Result<LatencyReport> {
    if n < 2 {
        return Err(Error::Invalid(format!("window size must be at least 2, got {n}")));
    }
    let windows = window_by_count(stream, n)?;
    if windows.is_empty() {
        return Err(Error::Insufficient(format!(
            "stream has {} events, fewer than one window of {n}",
            stream.len()
        )));
    }
    let mut d: Vec<f64> = windows.iter().map(|w| w.duration_us() as f64).collect();
    d.sort_by(f64::total_cmp);
    Ok(LatencyReport {
        windows: d.len(),
        min: d[0],
        p25: quantile_sorted(&d, 0.25),
        median: quantile_sorted(&d, 0.5),
        p75: quantile_sorted(&d, 0.75),
        max: d[d.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::SensorGeometry;

    fn frame(values: Vec<f32>, w: u32, h: u32) -> Frame {
        Frame::new(w, h, 0, values).unwrap()
    }

    #[test]
    fn equalize_constant_and_ramp() {
        let c = Frame::constant(SensorGeometry::new(5, 5).unwrap(), 0, 0.3);
        assert!(hist_equalize(&c).values().iter().all(|&v| v == 1.0));
        let ramp = frame((0..256).map(|i| i as f32 / 255.0).collect(), 16, 16);
        let eq = hist_equalize(&ramp);
        for (a, b) in ramp.values().iter().zip(eq.values()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn mse_extremes() {
        let g = SensorGeometry::new(4, 4).unwrap();
        let z = Frame::constant(g, 0, 0.0);
        let o = Frame::constant(g, 0, 1.0);
        assert_eq!(mse(&z, &o).unwrap(), 1.0);
        assert_eq!(mse(&z, &z).unwrap(), 0.0);
        let other = Frame::constant(SensorGeometry::new(4, 5).unwrap(), 0, 0.0);
        assert!(mse(&z, &other).is_err());
    }

    #[test]
    fn matching_rules() {
        let m = match_frames(&[4000, 6000], &[5000], 1000);
        assert_eq!(m.pairs, vec![FramePair { gt: 0, recon: 0, gap: -1000 }]);
        assert_eq!(m.unused_recon, vec![1]);
        let gt = [0, 5000, 10_000];
        let off: Vec<u64> = gt.iter().map(|t| t + 1500).collect();
        let m = match_frames(&off, &gt, 1000);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt.len(), 3);
        let m = match_frames(&gt, &gt, 1000);
        assert!(m.pairs.iter().all(|p| p.gap == 0 && p.gt == p.recon));
    }

    #[test]
    fn warmup_arithmetic() {
        let g = SensorGeometry::new(2, 2).unwrap();
        let gt: Vec<Frame> = (0..200).map(|i| Frame::constant(g, i * 50_000, 0.5)).collect();
        let cfg = EvalConfig {
            warmup_s: 2.0,
            ..EvalConfig::default()
        };
        assert_eq!(candidate_frames(&gt, &cfg).len(), 160);
    }

    #[test]
    fn table_mean() {
        let m = |s: &str, mse| SequenceMetrics {
            sequence: s.into(),
            mse,
            ssim: 0.5,
            matched: 3,
            excluded: 0,
        };
        let t = aggregate_table(&[("a".into(), vec![m("s1", 0.2), m("s2", 0.4)])]).unwrap();
        assert!((t.mean[0].0 - 0.3).abs() < 1e-15);
        assert!(t.to_csv().contains("Mean,a,0.300000,0.500000,6"));
        assert!(t.to_text().lines().last().unwrap().starts_with("Mean"));
        assert!(aggregate_table(&[("a".into(), vec![m("s1", 0.2)]), ("b".into(), vec![m("s2", 0.2)])]).is_err());
    }
}
