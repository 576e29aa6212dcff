use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Classifier, PipelineConfig, WindowEvaluator};
use crate::error::{Error, Result};
use crate::events::SimilFrame;
use crate::synth::{generate_frames, SceneConfig};

/// Nanosecond time source.
pub trait Clock {
    fn now_ns(&mut self) -> u64;
}

/// Wall clock backed by [`Instant`].
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&mut self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

/// Distribution of per-window latencies, in milliseconds. Percentiles use
/// the nearest-rank definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_ns(samples_ns: &[u64]) -> Option<Self> {
        if samples_ns.is_empty() {
            return None;
        }
        let mut sorted = samples_ns.to_vec();
        sorted.sort_unstable();
        let ms = |ns: u64| ns as f64 / 1e6;
        let rank = |p: f64| {
            let k = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
            ms(sorted[k.clamp(1, sorted.len()) - 1])
        };
        Some(Self {
            samples: sorted.len(),
            mean_ms: sorted.iter().map(|&v| ms(v)).sum::<f64>() / sorted.len() as f64,
            p50_ms: rank(50.0),
            p90_ms: rank(90.0),
            p99_ms: rank(99.0),
            max_ms: ms(*sorted.last().expect("non-empty")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLatencyReport {
    pub width: usize,
    pub height: usize,
    pub n: usize,
    pub vectors: usize,
    pub classifier: String,
    pub dt_ms: f64,
    pub latency: LatencyStats,
    /// `p99 < dt`.
    pub realtime: bool,
}

impl WindowLatencyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("report", e.to_string()))
    }
}

/// Times `windows` consecutive window evaluations (stack every pool vector,
/// classify every stack, merge) over a seeded pure-noise stream of
/// `width x height` frames at the classifier's resolution.
#[allow(clippy::too_many_arguments)]
pub fn benchmark_window(
    config: &PipelineConfig,
    classifier: Classifier,
    width: usize,
    height: usize,
    background_rate: f64,
    windows: usize,
    seed: u64,
    clock: &mut dyn Clock,
) -> Result<WindowLatencyReport> {
    if windows == 0 {
        return Err(Error::config("windows", "must be at least 1"));
    }
    let kind = classifier.kind();
    let eval = WindowEvaluator::new(config.clone(), classifier, (width, height))?;
    let count = config.n + windows - 1;
    let scene = SceneConfig {
        width: width as u32,
        height: height as u32,
        duration_us: count as u64 * config.dt_us,
        background_rate,
        rng_seed: seed,
        frame_dt_us: config.dt_us,
        sources: Vec::new(),
    };
    let (frames, _) = generate_frames(&scene, config.dt_us)?;
    let mut samples = Vec::with_capacity(windows);
    for k in 0..windows {
        let window: Vec<&SimilFrame> = frames[k..k + config.n].iter().collect();
        let t0 = clock.now_ns();
        let detections = eval.evaluate(&window)?;
        let t1 = clock.now_ns();
        std::hint::black_box(detections);
        samples.push(t1.saturating_sub(t0));
    }
    let latency = LatencyStats::from_ns(&samples).expect("at least one window");
    let dt_ms = config.dt_us as f64 / 1e3;
    Ok(WindowLatencyReport {
        width,
        height,
        n: config.n,
        vectors: eval.pool().len(),
        classifier: kind.to_string(),
        dt_ms,
        realtime: latency.p99_ms < dt_ms,
        latency,
    })
}
