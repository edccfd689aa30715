//! Simulated dataset generation and loading.
//!
//! Layout: `manifest.txt` at the root and one `seq_%05d/` directory per
//! sequence holding `events.bin`, `frames/frame_%06d.pgm`,
//! `timestamps.txt` and `meta.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use evpipe_core::event::{EventStream, SensorGeometry};
use evpipe_core::frame::Frame;
use evpipe_core::simulator::{sample_thresholds, MotionTrajectory, PlanarScene, SequenceSetup, SimConfig, SimulatedSequence};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events_io::{read_event_binary, write_event_binary};
use crate::frames_io::{read_frame_dir, write_frame_dir};

pub const MANIFEST: &str = "manifest.txt";
pub const META: &str = "meta.txt";
pub const EVENTS: &str = "events.bin";

pub fn sequence_name(i: usize) -> String {
    format!("seq_{i:05}")
}

/// Per-sequence seeds drawn in order from the dataset seed, so sequence
/// `i` is the same regardless of thread count.
pub fn sequence_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub name: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub duration: f64,
    pub c_pos: f64,
    pub c_neg: f64,
    pub events: usize,
    pub frames: usize,
}

impl SequenceMeta {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "duration={}", self.duration);
        let _ = writeln!(s, "c_pos={}", self.c_pos);
        let _ = writeln!(s, "c_neg={}", self.c_neg);
        let _ = writeln!(s, "events={}", self.events);
        let _ = writeln!(s, "frames={}", self.frames);
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let kv = crate::config::parse_key_values(text).map_err(|m| Error::format(origin, m))?;
        let get = |k: &str| {
            kv.iter()
                .rev()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::format(origin, format!("missing key {k}")))
        };
        fn num<T: std::str::FromStr>(v: &str, k: &str, origin: &Path) -> Result<T> {
            v.parse().map_err(|_| Error::format(origin, format!("bad value for {k}: {v:?}")))
        }
        Ok(SequenceMeta {
            name: get("name")?.to_string(),
            seed: num(get("seed")?, "seed", origin)?,
            width: num(get("width")?, "width", origin)?,
            height: num(get("height")?, "height", origin)?,
            duration: num(get("duration")?, "duration", origin)?,
            c_pos: num(get("c_pos")?, "c_pos", origin)?,
            c_neg: num(get("c_neg")?, "c_neg", origin)?,
            events: num(get("events")?, "events", origin)?,
            frames: num(get("frames")?, "frames", origin)?,
        })
    }
}

/// Draws the setup of one sequence. With `textures`, the scene is one of
/// them chosen by the sequence seed; otherwise it is procedural.
pub fn sequence_setup(config: &SimConfig, textures: Option<&[PlanarScene]>) -> Result<SequenceSetup> {
    match textures {
        None => Ok(SequenceSetup::sample(config)?),
        Some([]) => Err(Error::Config("texture list is empty".into())),
        Some(list) => {
            config.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let scene = list[rng.random_range(0..list.len())].clone();
            let trajectory = MotionTrajectory::random(&mut rng, &config.bounds, config.geometry, &scene, config.duration)?;
            let thresholds = sample_thresholds(&mut rng, config.threshold_mean, config.threshold_std)?;
            Ok(SequenceSetup {
                scene,
                trajectory,
                thresholds,
            })
        }
    }
}

pub fn write_sequence(dir: &Path, meta: &SequenceMeta, seq: &SimulatedSequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_event_binary(&dir.join(EVENTS), &seq.events)?;
    write_frame_dir(dir, &seq.frames)?;
    let p = dir.join(META);
    fs::write(&p, meta.to_text()).map_err(|e| Error::io(&p, e))
}

/// Generates `count` sequences under `out` and writes the manifest. Work
/// is spread over the current rayon pool; output does not depend on it.
pub fn generate_dataset(base: &SimConfig, count: usize, textures: Option<&[PlanarScene]>, out: &Path) -> Result<Vec<SequenceMeta>> {
    base.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let seeds = sequence_seeds(base.seed, count);
    let metas = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let cfg = SimConfig { seed, ..base.clone() };
            let setup = sequence_setup(&cfg, textures)?;
            let seq = setup.generate(&cfg)?;
            let meta = SequenceMeta {
                name: sequence_name(i),
                seed,
                width: cfg.geometry.width,
                height: cfg.geometry.height,
                duration: cfg.duration,
                c_pos: setup.thresholds.c_pos,
                c_neg: setup.thresholds.c_neg,
                events: seq.events.len(),
                frames: seq.frames.len(),
            };
            write_sequence(&out.join(&meta.name), &meta, &seq)?;
            Ok(meta)
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(out, base, &metas)?;
    Ok(metas)
}

pub fn write_manifest(root: &Path, base: &SimConfig, metas: &[SequenceMeta]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# evpipe dataset");
    let _ = writeln!(
        s,
        "# seed={} size={}x{} duration={} render_rate={} gt_rate={} threshold_mean={} threshold_std={}",
        base.seed,
        base.geometry.width,
        base.geometry.height,
        base.duration,
        base.render_rate,
        base.gt_rate,
        base.threshold_mean,
        base.threshold_std
    );
    for m in metas {
        let _ = writeln!(s, "{} events={} frames={} c_pos={} c_neg={}", m.name, m.events, m.frames, m.c_pos, m.c_neg);
    }
    let p = root.join(MANIFEST);
    fs::write(&p, s).map_err(|e| Error::io(&p, e))
}

/// Sequence directory names listed in `root/manifest.txt`.
pub fn read_manifest(root: &Path) -> Result<Vec<String>> {
    let p = root.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_whitespace().next().map(String::from))
        .collect();
    if names.is_empty() {
        return Err(Error::format(&p, "manifest lists no sequences"));
    }
    Ok(names)
}

pub fn is_dataset(path: &Path) -> bool {
    path.join(MANIFEST).is_file()
}

#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub name: String,
    pub dir: PathBuf,
    pub meta: SequenceMeta,
    pub events: EventStream,
    pub frames: Vec<Frame>,
}

impl LoadedSequence {
    pub fn geometry(&self) -> SensorGeometry {
        self.events.geometry()
    }
}

pub fn load_sequence(dir: &Path) -> Result<LoadedSequence> {
    let meta_path = dir.join(META);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = SequenceMeta::parse(&text, &meta_path)?;
    let events = read_event_binary(&dir.join(EVENTS))?;
    let frames = read_frame_dir(dir)?;
    if let Some(f) = frames.iter().find(|f| f.geometry() != events.geometry()) {
        return Err(Error::format(
            dir,
            format!("frame {}x{} does not match the event stream size", f.width(), f.height()),
        ));
    }
    Ok(LoadedSequence {
        name: meta.name.clone(),
        dir: dir.to_path_buf(),
        meta,
        events,
        frames,
    })
}

/// Loads every sequence of a dataset in manifest order.
pub fn load_dataset(root: &Path) -> Result<Vec<LoadedSequence>> {
    let names = read_manifest(root)?;
    names.par_iter().map(|n| load_sequence(&root.join(n))).collect()
}
