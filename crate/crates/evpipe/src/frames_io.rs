//! 8-bit PGM frames, frame directories with `timestamps.txt`, texture
//! images and the voxel tensor dump.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use evpipe_core::frame::Frame;
use evpipe_core::simulator::PlanarScene;
use evpipe_core::tensorizer::EventTensor;
use image::{GrayImage, ImageFormat};

use crate::error::{Error, Result};

pub const TIMESTAMPS: &str = "timestamps.txt";
pub const FRAMES_DIR: &str = "frames";

/// Intensity `v` is stored as `round(255 v)`.
pub fn frame_to_gray(frame: &Frame) -> GrayImage {
    let raw = frame.values().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    GrayImage::from_raw(frame.width(), frame.height(), raw).expect("buffer matches size")
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    frame_to_gray(frame)
        .write_to(&mut buf, ImageFormat::Pnm)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, buf.into_inner()).map_err(|e| Error::io(path, e))
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    Ok(img.to_luma8())
}

/// Reads an image as a frame with intensity `v / 255`.
pub fn read_pgm(path: &Path, t: u64) -> Result<Frame> {
    let img = read_gray(path)?;
    let values = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Frame::new(img.width(), img.height(), t, values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("frame_{i:06}.pgm"))
}

/// Writes `frames/frame_%06d.pgm` and `timestamps.txt` under `dir`.
pub fn write_frame_dir(dir: &Path, frames: &[Frame]) -> Result<()> {
    let fdir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
    let mut ts = String::with_capacity(frames.len() * 10);
    for (i, f) in frames.iter().enumerate() {
        write_pgm(&frame_path(dir, i), f)?;
        ts.push_str(&f.t.to_string());
        ts.push('\n');
    }
    let p = dir.join(TIMESTAMPS);
    fs::write(&p, ts).map_err(|e| Error::io(&p, e))
}

pub fn read_timestamps(path: &Path) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad timestamp {l:?}", i + 1)))
        })
        .collect()
}

/// Reads a directory written by [`write_frame_dir`].
pub fn read_frame_dir(dir: &Path) -> Result<Vec<Frame>> {
    let ts = read_timestamps(&dir.join(TIMESTAMPS))?;
    let frames = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| read_pgm(&frame_path(dir, i), t))
        .collect::<Result<Vec<_>>>()?;
    if frames.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::format(dir.join(TIMESTAMPS), "timestamps must be non-decreasing"));
    }
    Ok(frames)
}

/// Loads every readable image in `dir` (sorted by name) as a texture.
pub fn load_textures(dir: &Path) -> Result<Vec<PlanarScene>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && ImageFormat::from_path(p).is_ok())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(dir, "no texture images found"));
    }
    paths
        .iter()
        .map(|p| {
            let img = read_gray(p)?;
            let v: Vec<f64> = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
            PlanarScene::from_intensity(img.width() as usize, img.height() as usize, &v).map_err(|e| Error::format(p, e.to_string()))
        })
        .collect()
}

/// `u16 B, u16 H, u16 W` then row-major little-endian f32 values.
pub fn encode_tensor(t: &EventTensor) -> Vec<u8> {
    let g = t.geometry();
    let mut buf = Vec::with_capacity(6 + 4 * t.values().len());
    buf.extend_from_slice(&(t.bins() as u16).to_le_bytes());
    buf.extend_from_slice(&(g.height as u16).to_le_bytes());
    buf.extend_from_slice(&(g.width as u16).to_le_bytes());
    for &v in t.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

/// Returns `(B, H, W, values)`.
pub fn decode_tensor(bytes: &[u8]) -> Option<(usize, usize, usize, Vec<f32>)> {
    if bytes.len() < 6 {
        return None;
    }
    let r = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]) as usize;
    let (b, h, w) = (r(0), r(2), r(4));
    let body = &bytes[6..];
    if body.len() != 4 * b * h * w {
        return None;
    }
    Some((b, h, w, body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()))
}

pub fn write_tensor(path: &Path, t: &EventTensor) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_tensor(t)).map_err(|e| Error::io(path, e))
}
