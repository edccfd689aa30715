//! Weight files (`E2VW`) and optimizer checkpoints (`E2VA`).
//!
//! Weight layout, all little-endian: magic, u32 version, eight u32 config
//! fields, u32 block count, then per block a u16 name length, the UTF-8
//! name, u8 kind, u8 rank, u32 dims and f32 values; a trailing CRC32 of
//! everything before it.

use std::path::Path;

use evpipe_core::nn::adam::AdamState;
use evpipe_core::nn::weights::{NetConfig, NetworkWeights, ParamBlock, ParamKind, SkipMode};

use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"E2VW";
pub const OPTIMIZER_MAGIC: &[u8; 4] = b"E2VA";
pub const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, String> {
        let raw = self.take(n.checked_mul(4).ok_or("size overflow")?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

/// Checks magic, version and trailing checksum; returns the payload after
/// the version field.
fn open_envelope<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> std::result::Result<&'a [u8], String> {
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(format!("missing {} magic", String::from_utf8_lossy(magic)));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err("checksum mismatch (file is corrupt)".into());
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format!("format version {version} is not supported (expected {FORMAT_VERSION})"));
    }
    Ok(&body[8..])
}

fn seal(mut buf: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn config_fields(c: &NetConfig) -> [u32; 8] {
    let skip = match c.skip {
        SkipMode::Concat => 0,
    };
    [
        c.base_channels as u32,
        c.num_encoders as u32,
        c.num_residual as u32,
        c.encoder_kernel as u32,
        c.residual_kernel as u32,
        c.bins as u32,
        c.k_frames as u32,
        skip,
    ]
}

pub fn encode_weights(w: &NetworkWeights<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 4 * w.parameter_count());
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for f in config_fields(w.config()) {
        buf.extend_from_slice(&f.to_le_bytes());
    }
    buf.extend_from_slice(&(w.blocks().len() as u32).to_le_bytes());
    for b in w.blocks() {
        buf.extend_from_slice(&(b.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(b.name.as_bytes());
        buf.push(b.kind.code());
        buf.push(b.dims.len() as u8);
        for &d in &b.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in b.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    seal(buf)
}

fn parse_weights(bytes: &[u8]) -> std::result::Result<NetworkWeights<f32>, String> {
    let mut r = Reader {
        bytes: open_envelope(bytes, WEIGHTS_MAGIC)?,
        pos: 0,
    };
    let mut f = [0usize; 8];
    for v in &mut f {
        *v = r.u32()? as usize;
    }
    if f[7] != 0 {
        return Err(format!("unknown skip mode {}", f[7]));
    }
    let config = NetConfig {
        base_channels: f[0],
        num_encoders: f[1],
        num_residual: f[2],
        encoder_kernel: f[3],
        residual_kernel: f[4],
        bins: f[5],
        k_frames: f[6],
        skip: SkipMode::Concat,
    };
    let count = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "block name is not UTF-8")?;
        let kind = ParamKind::from_code(r.u8()?).ok_or_else(|| format!("block {name}: unknown kind"))?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("block size overflow")?;
        let data = r.f32s(n)?;
        blocks.push(ParamBlock::new(name, kind, dims, data).map_err(|e| e.to_string())?);
    }
    if r.pos != r.bytes.len() {
        return Err("trailing bytes after the last block".into());
    }
    NetworkWeights::from_blocks(config, blocks).map_err(|e| e.to_string())
}

pub fn decode_weights(bytes: &[u8], origin: &Path) -> Result<NetworkWeights<f32>> {
    parse_weights(bytes).map_err(|m| Error::format(origin, m))
}

pub fn save_weights(w: &NetworkWeights<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_weights(w)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<NetworkWeights<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, path)
}

/// Fails with a configuration error unless the weights expect `bins` and
/// `k` (either may be left unspecified).
pub fn check_compatible(w: &NetworkWeights<f32>, bins: Option<usize>, k: Option<usize>) -> Result<()> {
    let c = w.config();
    if let Some(b) = bins.filter(|&b| b != c.bins) {
        return Err(Error::Config(format!("weights were trained with B = {}, requested B = {b}", c.bins)));
    }
    if let Some(k) = k.filter(|&k| k != c.k_frames) {
        return Err(Error::Config(format!("weights were trained with K = {}, requested K = {k}", c.k_frames)));
    }
    Ok(())
}

/// Optimizer moments plus the number of completed epochs.
pub fn encode_optimizer(state: &AdamState<f32>, epoch: usize) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(OPTIMIZER_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&state.step.to_le_bytes());
    buf.extend_from_slice(&(epoch as u64).to_le_bytes());
    buf.extend_from_slice(&(state.m.len() as u32).to_le_bytes());
    for (m, v) in state.m.iter().zip(&state.v) {
        buf.extend_from_slice(&(m.len() as u32).to_le_bytes());
        for x in m.iter().chain(v) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    seal(buf)
}

pub fn decode_optimizer(bytes: &[u8], origin: &Path) -> Result<(AdamState<f32>, usize)> {
    let parse = || -> std::result::Result<(AdamState<f32>, usize), String> {
        let mut r = Reader {
            bytes: open_envelope(bytes, OPTIMIZER_MAGIC)?,
            pos: 0,
        };
        let step = r.u64()?;
        let epoch = r.u64()? as usize;
        let blocks = r.u32()? as usize;
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for _ in 0..blocks {
            let n = r.u32()? as usize;
            m.push(r.f32s(n)?);
            v.push(r.f32s(n)?);
        }
        Ok((AdamState { m, v, step }, epoch))
    };
    parse().map_err(|m| Error::format(origin, m))
}
