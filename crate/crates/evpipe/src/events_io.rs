//! Text and binary event files.
//!
//! Text: one `t_seconds x y p` line per event, `p` in {0, 1} or {-1, 1}.
//! Binary: a 16-byte header (`EVST`, u16 width, u16 height, u64 count)
//! followed by 13-byte little-endian records (u32 t low, u32 t high,
//! u16 x, u16 y, i8 p).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use evpipe_core::event::{Event, EventStream, Polarity, SensorGeometry};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EVST";
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 13;

fn line_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Line { line, msg: msg.into() }
}

/// Parses text events, checking bounds and timestamp order.
pub fn parse_event_text<R: BufRead>(source: R, geometry: SensorGeometry) -> Result<EventStream> {
    let mut events = Vec::new();
    let mut prev = 0u64;
    for (i, line) in source.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| line_err(n, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.len() != 4 {
            return Err(line_err(n, format!("expected 4 fields, found {}", fields.len())));
        }
        let t: f64 = fields[0].parse().map_err(|_| line_err(n, format!("bad timestamp {:?}", fields[0])))?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(line_err(n, format!("timestamp {t} must be finite and non-negative")));
        }
        let x: u32 = fields[1].parse().map_err(|_| line_err(n, format!("bad x {:?}", fields[1])))?;
        let y: u32 = fields[2].parse().map_err(|_| line_err(n, format!("bad y {:?}", fields[2])))?;
        let p: i64 = fields[3].parse().map_err(|_| line_err(n, format!("bad polarity {:?}", fields[3])))?;
        let p = Polarity::from_int(p).ok_or_else(|| line_err(n, format!("polarity {p} not in {{-1, 0, 1}}")))?;
        if !geometry.contains(x, y) {
            return Err(line_err(
                n,
                format!("({x}, {y}) outside the {}x{} sensor", geometry.width, geometry.height),
            ));
        }
        let t = (t * 1e6).round() as u64;
        if t < prev {
            return Err(line_err(n, format!("timestamp {t} us precedes {prev} us")));
        }
        prev = t;
        events.push(Event::new(x as u16, y as u16, t, p));
    }
    Ok(EventStream::new_unchecked(geometry, events))
}

pub fn write_event_text<W: Write>(mut out: W, stream: &EventStream) -> std::io::Result<()> {
    for e in stream.events() {
        let p = match e.p {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        };
        writeln!(out, "{}.{:06} {} {} {}", e.t / 1_000_000, e.t % 1_000_000, e.x, e.y, p)?;
    }
    Ok(())
}

pub fn encode_binary(stream: &EventStream) -> Vec<u8> {
    let g = stream.geometry();
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(g.width as u16).to_le_bytes());
    buf.extend_from_slice(&(g.height as u16).to_le_bytes());
    buf.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        buf.extend_from_slice(&(e.t as u32).to_le_bytes());
        buf.extend_from_slice(&((e.t >> 32) as u32).to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(e.p.sign() as u8);
    }
    buf
}

/// Decodes a binary event file held in memory. `origin` names it in errors.
pub fn decode_binary(bytes: &[u8], origin: &Path) -> Result<EventStream> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(origin, "not a binary event file (missing EVST header)"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let width = u16_at(4) as u32;
    let height = u16_at(6) as u32;
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let geometry = SensorGeometry::new(width, height).map_err(|e| Error::format(origin, e.to_string()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != count.saturating_mul(RECORD_LEN as u64) {
        return Err(Error::format(
            origin,
            format!("header announces {count} events but the body holds {} bytes", body.len()),
        ));
    }
    let mut events = Vec::with_capacity(count as usize);
    for (i, r) in body.chunks_exact(RECORD_LEN).enumerate() {
        let lo = u32::from_le_bytes([r[0], r[1], r[2], r[3]]) as u64;
        let hi = u32::from_le_bytes([r[4], r[5], r[6], r[7]]) as u64;
        let x = u16::from_le_bytes([r[8], r[9]]);
        let y = u16::from_le_bytes([r[10], r[11]]);
        let p = match r[12] as i8 {
            1 => Polarity::Positive,
            -1 => Polarity::Negative,
            v => return Err(Error::format(origin, format!("event {i}: polarity {v} is not +1 or -1"))),
        };
        events.push(Event::new(x, y, lo | (hi << 32), p));
    }
    EventStream::new(geometry, events).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_event_binary(path: &Path, stream: &EventStream) -> Result<()> {
    std::fs::write(path, encode_binary(stream)).map_err(|e| Error::io(path, e))
}

pub fn read_event_binary(path: &Path) -> Result<EventStream> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes, path)
}

pub fn read_event_text(path: &Path, geometry: SensorGeometry) -> Result<EventStream> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_event_text(BufReader::new(f), geometry).map_err(|e| match e {
        Error::Line { line, msg } => Error::format(path, format!("line {line}: {msg}")),
        other => other,
    })
}

pub fn write_event_text_file(path: &Path, stream: &EventStream) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_event_text(&mut w, stream)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads events by extension: `.txt` is text (needs `geometry`), anything
/// else is binary.
pub fn read_events(path: &Path, geometry: Option<SensorGeometry>) -> Result<EventStream> {
    if path.extension().is_some_and(|e| e == "txt") {
        let g = geometry.ok_or_else(|| Error::Config(format!("{}: text event files need a sensor size", path.display())))?;
        read_event_text(path, g)
    } else {
        read_event_binary(path)
    }
}
