//! Synthetic event generation over a textured plane seen through a moving
//! homography. Log brightness is rendered at a high rate, linearly
//! interpolated per pixel, and an event is emitted each time the
//! interpolated signal crosses the pixel's reference level by a contrast
//! threshold.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity, SensorGeometry};
use crate::frame::Frame;

/// Lower clamp applied to sampled contrast thresholds.
pub const THRESHOLD_FLOOR: f64 = 0.01;
/// Mean of the per-sequence threshold distribution.
pub const THRESHOLD_MEAN: f64 = 0.18;
/// Standard deviation of the per-sequence threshold distribution.
pub const THRESHOLD_STD: f64 = 0.03;

/// Slack on level comparisons so that a sample landing exactly on a
/// threshold level still fires despite rounding in the renderer.
const LEVEL_EPS: f64 = 1e-12;

/// Positive and negative log-intensity steps that trigger an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastThresholds {
    pub c_pos: f64,
    pub c_neg: f64,
}

impl ContrastThresholds {
    pub fn new(c_pos: f64, c_neg: f64) -> Result<Self> {
        let ok = |c: f64| c.is_finite() && c >= THRESHOLD_FLOOR;
        if !ok(c_pos) || !ok(c_neg) {
            return Err(Error::Invalid(alloc::format!(
                "contrast thresholds ({c_pos}, {c_neg}) must be finite and >= {THRESHOLD_FLOOR}"
            )));
        }
        Ok(ContrastThresholds { c_pos, c_neg })
    }

    pub fn symmetric(c: f64) -> Result<Self> {
        Self::new(c, c)
    }
}

#[inline]
pub fn clamp_threshold(raw: f64) -> f64 {
    if raw.is_nan() || raw < THRESHOLD_FLOOR {
        THRESHOLD_FLOOR
    } else {
        raw
    }
}

/// Draws independent positive and negative thresholds from
/// `Normal(mean, std)`, clamped below at [`THRESHOLD_FLOOR`].
pub fn sample_thresholds<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> Result<ContrastThresholds> {
    let normal = Normal::new(mean, std)
        .map_err(|e| Error::Invalid(alloc::format!("threshold distribution: {e}")))?;
    let c_pos = clamp_threshold(normal.sample(rng));
    let c_neg = clamp_threshold(normal.sample(rng));
    Ok(ContrastThresholds { c_pos, c_neg })
}

/// Natural-log brightness map sampled on an integer grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarScene {
    width: usize,
    height: usize,
    log: Vec<f64>,
}

impl PlanarScene {
    pub fn from_log(width: usize, height: usize, log: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || log.len() != width * height {
            return Err(Error::Shape(alloc::format!(
                "texture {width}x{height} with {} samples",
                log.len()
            )));
        }
        if log.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("texture log brightness".into()));
        }
        Ok(PlanarScene { width, height, log })
    }

    /// Builds a scene from linear intensities in `[0, 1]`. Values are mapped
    /// to `(v * 254 + 1) / 255` so that black pixels keep a finite log.
    pub fn from_intensity(width: usize, height: usize, intensity: &[f64]) -> Result<Self> {
        let log = intensity
            .iter()
            .map(|&v| libm::log((v.clamp(0.0, 1.0) * 254.0 + 1.0) / 255.0))
            .collect();
        Self::from_log(width, height, log)
    }

    /// Band-limited value noise: three octaves of smoothly interpolated
    /// random lattices with base spacing `feature_px`, normalized and mapped
    /// to intensities in `[0.05, 1]`.
    pub fn procedural<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize, feature_px: f64) -> Result<Self> {
        if width == 0 || height == 0 || !(feature_px >= 1.0) {
            return Err(Error::Invalid("procedural texture needs positive size and feature scale >= 1".into()));
        }
        let mut acc = vec![0.0f64; width * height];
        let mut spacing = feature_px;
        let mut amplitude = 1.0;
        for _ in 0..3 {
            let gw = libm::ceil(width as f64 / spacing) as usize + 2;
            let gh = libm::ceil(height as f64 / spacing) as usize + 2;
            let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
            for y in 0..height {
                let gy = y as f64 / spacing;
                let iy = gy as usize;
                let fy = smoothstep(gy - iy as f64);
                for x in 0..width {
                    let gx = x as f64 / spacing;
                    let ix = gx as usize;
                    let fx = smoothstep(gx - ix as f64);
                    let at = |cx: usize, cy: usize| lattice[cy * gw + cx];
                    let top = at(ix, iy) * (1.0 - fx) + at(ix + 1, iy) * fx;
                    let bottom = at(ix, iy + 1) * (1.0 - fx) + at(ix + 1, iy + 1) * fx;
                    acc[y * width + x] += amplitude * (top * (1.0 - fy) + bottom * fy);
                }
            }
            spacing = (spacing * 0.5).max(1.0);
            amplitude *= 0.5;
        }
        let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let log = acc
            .iter()
            .map(|&v| libm::log(0.05 + 0.95 * (v - lo) / span))
            .collect();
        Self::from_log(width, height, log)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn log(&self) -> &[f64] {
        &self.log
    }

    /// Bilinear sample of log brightness at continuous texture coordinates,
    /// clamping to the texture edge.
    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let x0 = u as usize;
        let y0 = v as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let at = |x: usize, y: usize| self.log[y * self.width + x];
        let top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
        let bottom = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
        top + fy * (bottom - top)
    }
}

#[inline]
fn smoothstep(f: f64) -> f64 {
    f * f * (3.0 - 2.0 * f)
}

/// 3x3 projective map, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub [f64; 9]);

impl Homography {
    pub const IDENTITY: Homography = Homography([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography([1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0])
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w)
    }

    pub fn compose(&self, rhs: &Homography) -> Homography {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * b[k * 3 + c]).sum();
            }
        }
        Homography(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }
}

/// Uniform velocity bounds for random trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryBounds {
    /// Translation velocity bound, texture pixels per second.
    pub translation: f64,
    /// Bound on the rate of change of the linear (rotation/scale/shear) part, 1/s.
    pub linear: f64,
    /// Bound on the rate of change of the perspective row, 1/(pixel s).
    pub perspective: f64,
    /// Acceleration bound as a fraction of each velocity bound, 1/s.
    pub acceleration: f64,
}

impl TrajectoryBounds {
    /// Bounds scaled to the sensor size.
    pub fn for_geometry(g: SensorGeometry) -> Self {
        let size = g.width.max(g.height) as f64;
        TrajectoryBounds {
            translation: 0.3 * size,
            linear: 0.15,
            perspective: 0.1 / size,
            acceleration: 0.5,
        }
    }
}

/// Time-indexed homography from sensor pixels to texture coordinates.
/// The motion part has a degree-2 polynomial per coefficient and is
/// wrapped between fixed sensor-centering and texture-centering maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrajectory {
    /// Coefficients `[c0, c1, c2]` of `c0 + c1 t + c2 t^2` for the first
    /// eight entries of the motion matrix; the ninth is fixed at one.
    coeffs: [[f64; 3]; 8],
    pre: Homography,
    post: Homography,
    duration: f64,
}

impl MotionTrajectory {
    /// A trajectory that holds `h` for the whole duration.
    pub fn constant(h: Homography, duration: f64) -> Result<Self> {
        check_duration(duration)?;
        let mut coeffs = [[0.0; 3]; 8];
        let scale = h.0[8];
        if scale == 0.0 || h.determinant() == 0.0 {
            return Err(Error::Invalid("homography must be invertible with h33 != 0".into()));
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            c[0] = h.0[i] / scale;
        }
        Ok(MotionTrajectory {
            coeffs,
            pre: Homography::IDENTITY,
            post: Homography::IDENTITY,
            duration,
        })
    }

    /// Builds a trajectory directly from polynomial coefficients.
    pub fn from_coefficients(coeffs: [[f64; 3]; 8], pre: Homography, post: Homography, duration: f64) -> Result<Self> {
        check_duration(duration)?;
        let traj = MotionTrajectory {
            coeffs,
            pre,
            post,
            duration,
        };
        traj.check_invertible(65)?;
        Ok(traj)
    }

    /// Random smooth motion centred on the texture. Resamples until the
    /// map stays invertible over the whole duration, falling back to a pure
    /// translation after repeated failures.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        bounds: &TrajectoryBounds,
        geometry: SensorGeometry,
        scene: &PlanarScene,
        duration: f64,
    ) -> Result<Self> {
        check_duration(duration)?;
        let pre = Homography::translation(
            -(geometry.width as f64 - 1.0) * 0.5,
            -(geometry.height as f64 - 1.0) * 0.5,
        );
        let post = Homography::translation(
            (scene.width() as f64 - 1.0) * 0.5,
            (scene.height() as f64 - 1.0) * 0.5,
        );
        let base = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let vel_bound = [
            bounds.linear,
            bounds.linear,
            bounds.translation,
            bounds.linear,
            bounds.linear,
            bounds.translation,
            bounds.perspective,
            bounds.perspective,
        ];
        let draw = |b: f64, rng: &mut R| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
        for _ in 0..64 {
            let mut coeffs = [[0.0; 3]; 8];
            for i in 0..8 {
                coeffs[i][0] = base[i];
                coeffs[i][1] = draw(vel_bound[i], rng);
                coeffs[i][2] = draw(vel_bound[i] * bounds.acceleration, rng);
            }
            let traj = MotionTrajectory {
                coeffs,
                pre,
                post,
                duration,
            };
            if traj.check_invertible(65).is_ok() && traj.check_positive_depth(geometry, 65) {
                return Ok(traj);
            }
        }
        let mut coeffs = [[0.0; 3]; 8];
        for i in 0..8 {
            coeffs[i][0] = base[i];
        }
        coeffs[2][1] = draw(bounds.translation, rng);
        coeffs[5][1] = draw(bounds.translation, rng);
        Ok(MotionTrajectory {
            coeffs,
            pre,
            post,
            duration,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Homography at time `t` seconds.
    pub fn at(&self, t: f64) -> Result<Homography> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Invalid(alloc::format!(
                "time {t} s outside trajectory domain [0, {}]",
                self.duration
            )));
        }
        Ok(self.at_unchecked(t))
    }

    fn motion(&self, t: f64) -> Homography {
        let mut m = [0.0; 9];
        for (i, c) in self.coeffs.iter().enumerate() {
            m[i] = c[0] + t * (c[1] + t * c[2]);
        }
        m[8] = 1.0;
        Homography(m)
    }

    fn at_unchecked(&self, t: f64) -> Homography {
        self.post.compose(&self.motion(t)).compose(&self.pre)
    }

    fn check_invertible(&self, samples: usize) -> Result<()> {
        for i in 0..samples {
            let t = self.duration * i as f64 / (samples - 1) as f64;
            let det = self.motion(t).determinant();
            if !(det > 0.2) {
                return Err(Error::Invalid(alloc::format!(
                    "trajectory is not safely invertible at t={t} (det {det})"
                )));
            }
        }
        Ok(())
    }

    fn check_positive_depth(&self, g: SensorGeometry, samples: usize) -> bool {
        let corners = [
            (0.0, 0.0),
            (g.width as f64 - 1.0, 0.0),
            (0.0, g.height as f64 - 1.0),
            (g.width as f64 - 1.0, g.height as f64 - 1.0),
        ];
        (0..samples).all(|i| {
            let t = self.duration * i as f64 / (samples - 1) as f64;
            let h = self.motion(t).compose(&self.pre);
            corners
                .iter()
                .all(|&(x, y)| h.0[6] * x + h.0[7] * y + h.0[8] > 0.5)
        })
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(alloc::format!("duration {duration} must be positive")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub geometry: SensorGeometry,
    /// Sequence length in seconds.
    pub duration: f64,
    /// Internal dense rendering rate, frames per second.
    pub render_rate: f64,
    /// Ground-truth export rate, frames per second.
    pub gt_rate: f64,
    pub threshold_mean: f64,
    pub threshold_std: f64,
    pub seed: u64,
    pub bounds: TrajectoryBounds,
    /// Texture side length as a multiple of the sensor size.
    pub texture_scale: f64,
    /// Base feature size of procedural textures, in texture pixels.
    pub feature_px: f64,
}

impl SimConfig {
    pub fn new(geometry: SensorGeometry, duration: f64, seed: u64) -> Self {
        SimConfig {
            geometry,
            duration,
            render_rate: 1000.0,
            gt_rate: 200.0,
            threshold_mean: THRESHOLD_MEAN,
            threshold_std: THRESHOLD_STD,
            seed,
            bounds: TrajectoryBounds::for_geometry(geometry),
            texture_scale: 2.0,
            feature_px: 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_duration(self.duration)?;
        if !(self.gt_rate >= 1.0) || !(self.render_rate >= self.gt_rate) {
            return Err(Error::Invalid(alloc::format!(
                "rates must satisfy render_rate ({}) >= gt_rate ({}) >= 1",
                self.render_rate,
                self.gt_rate
            )));
        }
        if !(self.threshold_std >= 0.0) || !self.threshold_mean.is_finite() {
            return Err(Error::Invalid("threshold distribution parameters".into()));
        }
        Ok(())
    }

    /// Number of render intervals; render instants are `j * duration / count`.
    pub fn render_intervals(&self) -> usize {
        libm::ceil(self.duration * self.render_rate - 1e-9).max(1.0) as usize
    }

    /// Ground-truth export instants in microseconds, `0, 1/gt_rate, ...` up to the duration.
    pub fn gt_times_us(&self) -> Vec<u64> {
        let count = libm::floor(self.duration * self.gt_rate + 1e-9) as usize;
        (0..=count)
            .map(|i| libm::round(i as f64 / self.gt_rate * 1e6) as u64)
            .collect()
    }
}

#[inline]
pub fn seconds_to_us(t: f64) -> u64 {
    libm::round(t * 1e6).max(0.0) as u64
}

/// Renders per-pixel log brightness at homography `h` into `out`.
pub fn render_log_into(scene: &PlanarScene, geometry: SensorGeometry, h: &Homography, out: &mut [f64]) {
    let w = geometry.width as usize;
    for (y, row) in out.chunks_exact_mut(w).enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let (u, vv) = h.apply(x as f64, y as f64);
            *v = scene.sample(u, vv);
        }
    }
}

/// Renders an intensity frame at time `t` seconds.
pub fn render_frame(scene: &PlanarScene, trajectory: &MotionTrajectory, geometry: SensorGeometry, t: f64) -> Result<Frame> {
    let h = trajectory.at(t)?;
    let mut log = vec![0.0; geometry.pixels()];
    render_log_into(scene, geometry, &h, &mut log);
    let values = log
        .iter()
        .map(|&l| libm::exp(l).clamp(0.0, 1.0) as f32)
        .collect();
    Frame::new(geometry.width, geometry.height, seconds_to_us(t), values)
}

/// Emits the threshold crossings of one linear segment of a pixel's log
/// brightness, going from `a` at `t_a` to `b` at `t_b` (seconds). The
/// reference level is advanced to each crossed level. A crossing exactly at
/// `t_b` belongs to this segment.
#[inline]
pub fn segment_crossings<F: FnMut(f64, Polarity)>(
    a: f64,
    b: f64,
    t_a: f64,
    t_b: f64,
    reference: &mut f64,
    thresholds: &ContrastThresholds,
    mut emit: F,
) {
    let delta = b - a;
    if delta > 0.0 {
        while b - (*reference + thresholds.c_pos) >= -LEVEL_EPS {
            let level = *reference + thresholds.c_pos;
            let frac = ((level - a) / delta).clamp(0.0, 1.0);
            emit(t_a + frac * (t_b - t_a), Polarity::Positive);
            *reference = level;
        }
    } else if delta < 0.0 {
        while (*reference - thresholds.c_neg) - b >= -LEVEL_EPS {
            let level = *reference - thresholds.c_neg;
            let frac = ((level - a) / delta).clamp(0.0, 1.0);
            emit(t_a + frac * (t_b - t_a), Polarity::Negative);
            *reference = level;
        }
    }
}

/// Output of one simulated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSequence {
    pub events: EventStream,
    pub frames: Vec<Frame>,
}

/// Simulates events and ground-truth frames for one scene and trajectory.
pub fn generate_events(
    scene: &PlanarScene,
    trajectory: &MotionTrajectory,
    thresholds: &ContrastThresholds,
    config: &SimConfig,
) -> Result<SimulatedSequence> {
    config.validate()?;
    let g = config.geometry;
    let duration = config.duration.min(trajectory.duration());
    let intervals = config.render_intervals();
    let render_time = |j: usize| duration * j as f64 / intervals as f64;

    let mut prev = vec![0.0; g.pixels()];
    let mut cur = vec![0.0; g.pixels()];
    render_log_into(scene, g, &trajectory.at(0.0)?, &mut prev);
    check_finite(&prev)?;
    let mut reference = prev.clone();
    let mut raw: Vec<(u64, u16, u16, Polarity)> = Vec::new();
    let w = g.width as usize;

    for j in 1..=intervals {
        let (t_a, t_b) = (render_time(j - 1), render_time(j));
        render_log_into(scene, g, &trajectory.at(t_b)?, &mut cur);
        check_finite(&cur)?;
        for (i, ((&a, &b), r)) in prev.iter().zip(cur.iter()).zip(reference.iter_mut()).enumerate() {
            let (x, y) = ((i % w) as u16, (i / w) as u16);
            segment_crossings(a, b, t_a, t_b, r, thresholds, |t, p| {
                raw.push((seconds_to_us(t), y, x, p));
            });
        }
        core::mem::swap(&mut prev, &mut cur);
    }

    raw.sort_unstable();
    let events = raw
        .into_iter()
        .map(|(t, y, x, p)| Event::new(x, y, t, p))
        .collect();
    let events = EventStream::new(g, events)?;

    let mut frames = Vec::new();
    for t_us in config.gt_times_us() {
        let t = (t_us as f64 * 1e-6).min(duration);
        let mut f = render_frame(scene, trajectory, g, t)?;
        f.t = t_us;
        frames.push(f);
    }
    Ok(SimulatedSequence { events, frames })
}

/// Scene, motion and thresholds of one sequence, all drawn from the
/// config's seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSetup {
    pub scene: PlanarScene,
    pub trajectory: MotionTrajectory,
    pub thresholds: ContrastThresholds,
}

impl SequenceSetup {
    pub fn sample(config: &SimConfig) -> Result<Self> {
        use rand::SeedableRng;
        config.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let g = config.geometry;
        let side = libm::ceil(g.width.max(g.height) as f64 * config.texture_scale.max(1.0)) as usize;
        let scene = PlanarScene::procedural(&mut rng, side, side, config.feature_px)?;
        let trajectory = MotionTrajectory::random(&mut rng, &config.bounds, g, &scene, config.duration)?;
        let thresholds = sample_thresholds(&mut rng, config.threshold_mean, config.threshold_std)?;
        Ok(SequenceSetup {
            scene,
            trajectory,
            thresholds,
        })
    }

    pub fn generate(&self, config: &SimConfig) -> Result<SimulatedSequence> {
        generate_events(&self.scene, &self.trajectory, &self.thresholds, config)
    }
}

/// Samples a setup from `config` and simulates it.
pub fn simulate(config: &SimConfig) -> Result<(SequenceSetup, SimulatedSequence)> {
    let setup = SequenceSetup::sample(config)?;
    let seq = setup.generate(config)?;
    Ok((setup, seq))
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("rendered log brightness".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_geom() -> SensorGeometry {
        SensorGeometry::new(16, 12).unwrap()
    }

    #[test]
    fn threshold_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_thresholds(&mut rng, THRESHOLD_MEAN, THRESHOLD_STD).unwrap().c_pos;
        }
        let mean = sum / n as f64;
        assert!((0.178..=0.182).contains(&mean), "mean {mean}");
    }

    #[test]
    fn threshold_clamp() {
        assert_eq!(clamp_threshold(-0.02), 0.01);
        assert_eq!(clamp_threshold(0.2), 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = sample_thresholds(&mut rng, -1.0, 0.001).unwrap();
        assert_eq!(c, ContrastThresholds { c_pos: 0.01, c_neg: 0.01 });
    }

    #[test]
    fn threshold_determinism() {
        let a = sample_thresholds(&mut ChaCha8Rng::seed_from_u64(9), 0.18, 0.03).unwrap();
        let b = sample_thresholds(&mut ChaCha8Rng::seed_from_u64(9), 0.18, 0.03).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_render_matches_texture() {
        let g = small_geom();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = PlanarScene::procedural(&mut rng, 16, 12, 4.0).unwrap();
        let traj = MotionTrajectory::constant(Homography::IDENTITY, 1.0).unwrap();
        let f = render_frame(&scene, &traj, g, 0.5).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                let want = libm::exp(scene.log()[y * 16 + x]) as f32;
                assert_eq!(f.get(x, y), want);
            }
        }
        assert_eq!(f.t, 500_000);
    }

    #[test]
    fn integer_translation_shifts_content() {
        let g = small_geom();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let scene = PlanarScene::procedural(&mut rng, 32, 12, 4.0).unwrap();
        let traj = MotionTrajectory::constant(Homography::translation(5.0, 0.0), 1.0).unwrap();
        let f = render_frame(&scene, &traj, g, 0.0).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                let want = libm::exp(scene.log()[y * 32 + x + 5]) as f32;
                assert_eq!(f.get(x, y), want);
            }
        }
    }

    #[test]
    fn render_outside_domain_fails() {
        let scene = PlanarScene::from_log(2, 2, vec![0.0; 4]).unwrap();
        let traj = MotionTrajectory::constant(Homography::IDENTITY, 1.0).unwrap();
        assert!(render_frame(&scene, &traj, small_geom(), 1.5).is_err());
    }

    #[test]
    fn static_scene_produces_no_events() {
        let g = small_geom();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scene = PlanarScene::procedural(&mut rng, 20, 20, 4.0).unwrap();
        let traj = MotionTrajectory::constant(Homography::IDENTITY, 1.0).unwrap();
        let mut cfg = SimConfig::new(g, 1.0, 0);
        cfg.render_rate = 100.0;
        cfg.gt_rate = 10.0;
        let th = ContrastThresholds::symmetric(0.1).unwrap();
        let out = generate_events(&scene, &traj, &th, &cfg).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.frames.len(), 11);
    }

    #[test]
    fn exact_step_gives_one_event() {
        let th = ContrastThresholds::new(0.2, 0.3).unwrap();
        let a = -1.3;
        let mut r = a;
        let mut got = Vec::new();
        segment_crossings(a, a + 0.2, 0.0, 0.001, &mut r, &th, |t, p| got.push((t, p)));
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].1, Polarity::Positive);
        assert!((got[0].0 - 0.001).abs() < 1e-15);
        // the endpoint crossing is not repeated on the next, flat segment
        segment_crossings(a + 0.2, a + 0.2, 0.001, 0.002, &mut r, &th, |t, p| got.push((t, p)));
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn negative_crossings_use_negative_threshold() {
        let th = ContrastThresholds::new(0.2, 0.3).unwrap();
        let mut r = 0.0;
        let mut got = Vec::new();
        segment_crossings(0.0, -0.65, 0.0, 1.0, &mut r, &th, |t, p| got.push((t, p)));
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|(_, p)| *p == Polarity::Negative));
        assert!((got[0].0 - 0.3 / 0.65).abs() < 1e-12);
        assert!((got[1].0 - 0.6 / 0.65).abs() < 1e-12);
        assert!((r + 0.6).abs() < 1e-12);
    }

    #[test]
    fn random_trajectory_is_invertible_and_deterministic() {
        let g = SensorGeometry::new(64, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scene = PlanarScene::procedural(&mut rng, 128, 128, 8.0).unwrap();
        let b = TrajectoryBounds::for_geometry(g);
        let t1 = MotionTrajectory::random(&mut ChaCha8Rng::seed_from_u64(4), &b, g, &scene, 2.0).unwrap();
        let t2 = MotionTrajectory::random(&mut ChaCha8Rng::seed_from_u64(4), &b, g, &scene, 2.0).unwrap();
        assert_eq!(t1, t2);
        for i in 0..=20 {
            let h = t1.at(i as f64 * 0.1).unwrap();
            assert!(h.determinant().abs() > 0.0);
        }
    }

    #[test]
    fn gt_times_cover_duration() {
        let mut cfg = SimConfig::new(small_geom(), 2.0, 0);
        cfg.gt_rate = 20.0;
        let t = cfg.gt_times_us();
        assert_eq!(t.len(), 41);
        assert_eq!(*t.last().unwrap(), 2_000_000);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(small_geom(), 1.0, 0);
        cfg.gt_rate = 2000.0;
        assert!(cfg.validate().is_err());
        cfg.gt_rate = 10.0;
        cfg.duration = 0.0;
        assert!(cfg.validate().is_err());
    }
}
