//! Synthetic event scenes: homogeneous Poisson background plus moving point
//! sources, with per-window ground truth.
//!
//! Every pixel and every source draws from its own ChaCha stream keyed by
//! `(rng_seed, index)`, so generation is deterministic and independent of how
//! the per-pixel work is scheduled.

mod calibrate;
mod snr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, Polarity, SensorHeader, SimilFrame};

pub use calibrate::{
    expected_peak_fraction, random_track_source, source_rate_for_snr, stacked_snr,
};
pub use snr::{measure_snr, measure_snr_in};

const US_PER_S: f64 = 1e6;

fn default_frame_dt() -> u64 {
    80_000
}

/// Scene parameters. Rates are per second; times are microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub duration_us: u64,
    /// Background events per pixel per second.
    pub background_rate: f64,
    pub rng_seed: u64,
    /// Window length used for the ground-truth track.
    #[serde(default = "default_frame_dt")]
    pub frame_dt_us: u64,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Sub-pixel position at `t_enter_us`.
    pub start: [f64; 2],
    /// Pixels per second.
    pub velocity: [f64; 2],
    /// Source events per second.
    pub event_rate: f64,
    pub t_enter_us: u64,
    pub t_exit_us: u64,
    #[serde(default)]
    pub psf_sigma: f64,
}

impl SourceSpec {
    pub fn position_at(&self, t_us: f64) -> [f64; 2] {
        let s = (t_us - self.t_enter_us as f64) / US_PER_S;
        [
            self.start[0] + self.velocity[0] * s,
            self.start[1] + self.velocity[1] * s,
        ]
    }

    pub fn velocity_px_per_frame(&self, dt_us: u64) -> [f64; 2] {
        let s = dt_us as f64 / US_PER_S;
        [self.velocity[0] * s, self.velocity[1] * s]
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig =
            toml::from_str(text).map_err(|e| Error::config("scene", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width > u32::from(u16::MAX) + 1 {
            return Err(Error::config("width", "must be in 1..=65536"));
        }
        if self.height == 0 || self.height > u32::from(u16::MAX) + 1 {
            return Err(Error::config("height", "must be in 1..=65536"));
        }
        if self.duration_us == 0 {
            return Err(Error::config("duration_us", "must be positive"));
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(Error::config(
                "background_rate",
                format!("must be finite and >= 0, got {}", self.background_rate),
            ));
        }
        if self.frame_dt_us == 0 {
            return Err(Error::config("frame_dt_us", "must be positive"));
        }
        for s in &self.sources {
            if !(s.event_rate > 0.0 && s.event_rate.is_finite()) {
                return Err(Error::config(
                    "sources.event_rate",
                    format!("must be finite and > 0, got {}", s.event_rate),
                ));
            }
            if s.t_enter_us >= s.t_exit_us {
                return Err(Error::config("sources.t_exit_us", "must exceed t_enter_us"));
            }
            if !(s.psf_sigma >= 0.0 && s.psf_sigma.is_finite()) {
                return Err(Error::config(
                    "sources.psf_sigma",
                    "must be finite and >= 0",
                ));
            }
            if !(s.start.iter().chain(&s.velocity).all(|v| v.is_finite())) {
                return Err(Error::config(
                    "sources",
                    "start and velocity must be finite",
                ));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> SensorHeader {
        SensorHeader {
            width: self.width,
            height: self.height,
            duration: self.duration_us,
        }
    }
}

/// True source position at the midpoint of one simil-frame window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub window: u64,
    pub t_mid_us: f64,
    pub x: f64,
    pub y: f64,
    pub inside: bool,
}

impl TruthPoint {
    /// Nearest pixel, using the same half-up rounding as event placement.
    pub fn pixel(&self) -> (i64, i64) {
        (round_half_up(self.x), round_half_up(self.y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTruth {
    pub velocity_px_per_frame: [f64; 2],
    pub windows: Vec<TruthPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Scene that produced this truth, seed included.
    pub scene: SceneConfig,
    pub frame_dt_us: u64,
    pub sources: Vec<SourceTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("ground truth", e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub header: SensorHeader,
    pub events: Vec<Event>,
    pub truth: GroundTruth,
}

#[inline]
pub(crate) fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Calls `sink` for every event of the scene, pixel by pixel and then
/// source by source (not in time order).
fn for_each_event(config: &SceneConfig, mut sink: impl FnMut(Event)) -> Result<()> {
    config.validate()?;
    let (w, h) = (config.width as u64, config.height as u64);
    let duration = config.duration_us;
    let mean_bg = config.background_rate * duration as f64 / US_PER_S;

    if mean_bg > 0.0 {
        let poisson =
            Poisson::new(mean_bg).map_err(|e| Error::config("background_rate", e.to_string()))?;
        for pixel in 0..w * h {
            let mut rng = stream_rng(config.rng_seed, pixel);
            let k = poisson.sample(&mut rng) as u64;
            let (x, y) = ((pixel % w) as u16, (pixel / w) as u16);
            for _ in 0..k {
                sink(Event::on(rng.random_range(0..duration), x, y));
            }
        }
    }

    for (j, src) in config.sources.iter().enumerate() {
        let mut rng = stream_rng(config.rng_seed, w * h + j as u64);
        let t0 = src.t_enter_us.min(duration);
        let t1 = src.t_exit_us.min(duration);
        if t1 <= t0 {
            continue;
        }
        let mean = src.event_rate * (t1 - t0) as f64 / US_PER_S;
        let k = Poisson::new(mean)
            .map_err(|e| Error::config("sources.event_rate", e.to_string()))?
            .sample(&mut rng) as u64;
        let psf = (src.psf_sigma > 0.0).then(|| Normal::new(0.0, src.psf_sigma).unwrap());
        for _ in 0..k {
            let t = rng.random_range(t0..t1);
            let [mut px, mut py] = src.position_at(t as f64);
            if let Some(n) = &psf {
                px += n.sample(&mut rng);
                py += n.sample(&mut rng);
            }
            let (ix, iy) = (round_half_up(px), round_half_up(py));
            if ix >= 0 && iy >= 0 && (ix as u64) < w && (iy as u64) < h {
                sink(Event::new(t, ix as u16, iy as u16, Polarity::On));
            }
        }
    }
    Ok(())
}

fn ground_truth(config: &SceneConfig) -> GroundTruth {
    let (w, h) = (config.width as i64, config.height as i64);
    let dt = config.frame_dt_us;
    GroundTruth {
        scene: config.clone(),
        frame_dt_us: dt,
        sources: config
            .sources
            .iter()
            .map(|src| SourceTruth {
                velocity_px_per_frame: src.velocity_px_per_frame(dt),
                windows: (0..config.duration_us.div_ceil(dt))
                    .filter_map(|k| {
                        let mid = (k as f64 + 0.5) * dt as f64;
                        if mid < src.t_enter_us as f64 || mid >= src.t_exit_us as f64 {
                            return None;
                        }
                        let [x, y] = src.position_at(mid);
                        let (ix, iy) = (round_half_up(x), round_half_up(y));
                        Some(TruthPoint {
                            window: k,
                            t_mid_us: mid,
                            x,
                            y,
                            inside: ix >= 0 && iy >= 0 && ix < w && iy < h,
                        })
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Generates the full, time-sorted event stream of a scene.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    let mut events = Vec::new();
    for_each_event(config, |e| events.push(e))?;
    events.sort_unstable();
    Ok(Scene {
        header: config.header(),
        events,
        truth: ground_truth(config),
    })
}

/// Simil-frames of a scene, identical to
/// `build_simil_frames(generate_scene(config))` with the `both` policy, but
/// binned directly without materializing or sorting the event stream.
pub fn generate_frames(config: &SceneConfig, dt: u64) -> Result<(Vec<SimilFrame>, GroundTruth)> {
    if dt == 0 {
        return Err(Error::config("dt", "exposure window must be positive"));
    }
    config.validate()?;
    let (w, h) = (config.width as usize, config.height as usize);
    let count = config.duration_us.div_ceil(dt);
    let mut frames: Vec<SimilFrame> = (0..count)
        .map(|k| SimilFrame::empty(w, h, k * dt, dt))
        .collect();
    for_each_event(config, |e| {
        *frames[(e.t / dt) as usize]
            .counts
            .get_mut(e.x as usize, e.y as usize) += 1;
    })?;
    Ok((frames, ground_truth(config)))
}
