//! Sliding-window detection over a frame stream.
//!
//! Each new frame enters a ring of the `n` most recent frames. Once the ring
//! is full, every `stride`-th frame triggers an evaluation: the window is
//! stacked along every pool vector, each stack is classified, and the
//! positive stacks are merged into one detection per spatially distinct
//! peak. Detections are handed to a [`DetectionSink`] as soon as the frame
//! that completes their window closes.

mod bench;
mod calibrate;
mod report;
mod ring;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{normalize, ClassifierKind, CnnModel, MatchedFilter, Score};
use crate::classifier::{DEFAULT_CNN_THRESHOLD, DEFAULT_SIGMA_THRESHOLD};
use crate::error::{Error, Result};
use crate::events::{downsample, Event, FrameAccumulator, PolarityPolicy, SimilFrame};
use crate::stacking::{make_hex_pool, stack_all, StackedImage, TrialVector, VectorPool};

pub use bench::{benchmark_window, Clock, LatencyStats, MonotonicClock, WindowLatencyReport};
pub use calibrate::{
    calibrate_threshold, false_alarm_rate, noise_window, noise_window_max_logits,
    threshold_for_rate, ThresholdCalibration,
};
pub use report::{write_report_csv, RunSummary, REPORT_HEADER};
pub use ring::FrameRing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dt_us: u64,
    pub n: usize,
    pub stride: usize,
    /// Largest pool vector magnitude, pixels/frame at the classifier's
    /// (downsampled) resolution.
    pub max_displacement: f64,
    pub classifier: ClassifierKind,
    /// CNN probability threshold. When unset, the model's calibrated
    /// operating threshold is used, or 0.5 if it has none.
    pub cnn_threshold: Option<f64>,
    pub sigma_threshold: f64,
    pub exclusion_radius: f64,
    pub downsample: usize,
    pub polarity: PolarityPolicy,
    /// Positive stacks whose peaks lie within this distance (pixels) of a
    /// stronger one are merged into it.
    pub merge_radius: f64,
    /// Evaluate pool vectors on the rayon pool. Output is unaffected.
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dt_us: 80_000,
            n: 16,
            stride: 1,
            max_displacement: 1.0,
            classifier: ClassifierKind::Cnn,
            cnn_threshold: None,
            sigma_threshold: DEFAULT_SIGMA_THRESHOLD,
            exclusion_radius: 2.0,
            downsample: 1,
            polarity: PolarityPolicy::Both,
            merge_radius: 4.0,
            parallel: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt_us == 0 {
            return Err(Error::config("dt_us", "must be positive"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "must be at least 2"));
        }
        if self.stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        if !(self.max_displacement > 0.0 && self.max_displacement.is_finite()) {
            return Err(Error::config(
                "max_displacement",
                "must be finite and positive",
            ));
        }
        if self.downsample == 0 {
            return Err(Error::config("downsample", "must be at least 1"));
        }
        if !(self.merge_radius >= 0.0) {
            return Err(Error::config("merge_radius", "must be non-negative"));
        }
        if !(self.exclusion_radius >= 0.0) {
            return Err(Error::config("exclusion_radius", "must be non-negative"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::config("pipeline", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn matched_filter(&self) -> MatchedFilter {
        MatchedFilter {
            threshold: self.sigma_threshold,
            exclusion_radius: self.exclusion_radius,
        }
    }

    pub fn pool(&self) -> VectorPool {
        make_hex_pool(self.max_displacement)
    }

    /// Frame size after downsampling.
    pub fn frame_dims(&self, width: usize, height: usize) -> (usize, usize) {
        (
            width.div_ceil(self.downsample),
            height.div_ceil(self.downsample),
        )
    }
}

/// Classifier used to decide each stack.
#[derive(Debug, Clone)]
pub enum Classifier {
    Cnn(CnnModel),
    MatchedFilter,
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Cnn(_) => ClassifierKind::Cnn,
            Classifier::MatchedFilter => ClassifierKind::MatchedFilter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub t_end_us: u64,
    pub vector: TrialVector,
    pub score: f64,
    /// Peak position in newest-frame (downsampled) coordinates.
    pub peak: (usize, usize),
    pub classifier_kind: ClassifierKind,
    /// Matched-filter sigma of the winning stack, reported alongside CNN
    /// decisions as a cross-check; `None` if the stack was degenerate.
    pub matched_sigma: Option<f64>,
}

/// One positive stack within a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trigger {
    pub vector: TrialVector,
    pub score: Score,
    /// Ordering key: the CNN logit or the matched-filter sigma. Unlike the
    /// sigmoid output it does not saturate.
    pub rank: f64,
    pub peak: (usize, usize),
    pub matched_sigma: Option<f64>,
    /// Position of the vector in the pool.
    pub index: usize,
}

fn precedes(a: &Trigger, b: &Trigger) -> std::cmp::Ordering {
    b.rank
        .total_cmp(&a.rank)
        .then(a.vector.norm().total_cmp(&b.vector.norm()))
        .then(a.vector.vx.total_cmp(&b.vector.vx))
        .then(a.vector.vy.total_cmp(&b.vector.vy))
}

/// Reduces the positive stacks of one window to one trigger per spatially
/// distinct peak, strongest first. Within a cluster the winner is the
/// highest rank, then the smaller `|v|`, then the lexicographically smaller
/// `(vx, vy)`.
pub fn merge_triggers(raw: &[Trigger], merge_radius: f64) -> Vec<Trigger> {
    let mut sorted: Vec<Trigger> = raw.to_vec();
    sorted.sort_by(precedes);
    let mut kept: Vec<Trigger> = Vec::new();
    for t in sorted {
        let near = kept.iter().any(|k| {
            let dx = k.peak.0 as f64 - t.peak.0 as f64;
            let dy = k.peak.1 as f64 - t.peak.1 as f64;
            dx.hypot(dy) <= merge_radius
        });
        if !near {
            kept.push(t);
        }
    }
    kept
}

/// Receives detections as they are produced.
pub trait DetectionSink {
    fn on_detection(&mut self, detection: &Detection);

    /// Whether [`Self::on_stack`] should be called.
    fn wants_stacks(&self) -> bool {
        false
    }

    /// The stacked image behind `detection`, delivered just before it.
    fn on_stack(&mut self, _detection: &Detection, _stack: &StackedImage) {}
}

impl DetectionSink for Vec<Detection> {
    fn on_detection(&mut self, detection: &Detection) {
        self.push(detection.clone());
    }
}

/// Adapts a closure into a [`DetectionSink`].
pub struct CallbackSink<F: FnMut(&Detection)>(pub F);

impl<F: FnMut(&Detection)> DetectionSink for CallbackSink<F> {
    fn on_detection(&mut self, detection: &Detection) {
        (self.0)(detection)
    }
}

/// Stateless per-window evaluation shared by the detector and the
/// benchmark.
#[derive(Debug, Clone)]
pub struct WindowEvaluator {
    config: PipelineConfig,
    classifier: Classifier,
    pool: VectorPool,
    matched: MatchedFilter,
    cnn_threshold: f64,
}

impl WindowEvaluator {
    pub fn new(
        config: PipelineConfig,
        classifier: Classifier,
        frame_dims: (usize, usize),
    ) -> Result<Self> {
        config.validate()?;
        if let Classifier::Cnn(model) = &classifier {
            if model.input_dims() != frame_dims {
                let (mw, mh) = model.input_dims();
                return Err(Error::dims(
                    format!("{mw}x{mh} model input"),
                    format!("{}x{} frames", frame_dims.0, frame_dims.1),
                ));
            }
        }
        let pool = config.pool();
        let matched = config.matched_filter();
        let cnn_threshold = match &classifier {
            Classifier::Cnn(model) => config
                .cnn_threshold
                .or(model.metadata.operating_threshold)
                .unwrap_or(DEFAULT_CNN_THRESHOLD),
            Classifier::MatchedFilter => config.cnn_threshold.unwrap_or(DEFAULT_CNN_THRESHOLD),
        };
        Ok(Self {
            config,
            classifier,
            pool,
            matched,
            cnn_threshold,
        })
    }

    /// Threshold applied to the active classifier's score.
    pub fn threshold(&self) -> f64 {
        match self.classifier {
            Classifier::Cnn(_) => self.cnn_threshold,
            Classifier::MatchedFilter => self.matched.threshold,
        }
    }

    pub fn pool(&self) -> &VectorPool {
        &self.pool
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn classify(&self, index: usize, img: &StackedImage) -> Result<Option<Trigger>> {
        let Some((peak, _)) = img.peak() else {
            return Ok(None);
        };
        let mf = self.matched.score(img);
        let matched_sigma = mf.map(|m| m.score.value);
        let (score, rank) = match &self.classifier {
            Classifier::Cnn(model) => {
                let logit = model.logit(&normalize(img))?;
                let score = Score {
                    value: crate::classifier::sigmoid(logit),
                    threshold: self.cnn_threshold,
                };
                (score, logit)
            }
            Classifier::MatchedFilter => match mf {
                Some(m) => (m.score, m.score.value),
                None => return Ok(None),
            },
        };
        Ok(score.decision().then_some(Trigger {
            vector: img.vector,
            score,
            rank,
            peak,
            matched_sigma,
            index,
        }))
    }

    /// Stacks `frames` (oldest first) along every pool vector, classifies
    /// each stack and returns the raw positive triggers in pool order.
    pub fn triggers(&self, frames: &[&SimilFrame]) -> Result<Vec<Trigger>> {
        Ok(self.triggers_and_stacks(frames)?.0)
    }

    fn triggers_and_stacks(
        &self,
        frames: &[&SimilFrame],
    ) -> Result<(Vec<Trigger>, Vec<StackedImage>)> {
        let stacks = stack_all(frames, &self.pool, self.config.parallel)?;
        let results: Vec<Result<Option<Trigger>>> = if self.config.parallel {
            stacks
                .par_iter()
                .enumerate()
                .map(|(i, s)| self.classify(i, s))
                .collect()
        } else {
            stacks
                .iter()
                .enumerate()
                .map(|(i, s)| self.classify(i, s))
                .collect()
        };
        let mut out = Vec::new();
        for r in results {
            out.extend(r?);
        }
        Ok((out, stacks))
    }

    fn detections(&self, t_end_us: u64, merged: &[Trigger]) -> Vec<Detection> {
        let kind = self.classifier.kind();
        merged
            .iter()
            .map(|t| Detection {
                t_end_us,
                vector: t.vector,
                score: t.score.value,
                peak: t.peak,
                classifier_kind: kind,
                matched_sigma: t.matched_sigma,
            })
            .collect()
    }

    /// Merged detections for one window.
    pub fn evaluate(&self, frames: &[&SimilFrame]) -> Result<Vec<Detection>> {
        let raw = self.triggers(frames)?;
        let t_end_us = frames.last().map_or(0, |f| f.t_end());
        Ok(self.detections(t_end_us, &merge_triggers(&raw, self.config.merge_radius)))
    }

    fn evaluate_into(&self, frames: &[&SimilFrame], sink: &mut dyn DetectionSink) -> Result<u64> {
        let (raw, stacks) = self.triggers_and_stacks(frames)?;
        let t_end_us = frames.last().map_or(0, |f| f.t_end());
        let merged = merge_triggers(&raw, self.config.merge_radius);
        let found = self.detections(t_end_us, &merged);
        let stacks_wanted = sink.wants_stacks();
        for (d, t) in found.iter().zip(&merged) {
            if stacks_wanted {
                sink.on_stack(d, &stacks[t.index]);
            }
            sink.on_detection(d);
        }
        Ok(found.len() as u64)
    }
}

/// Online detector fed one event or one frame at a time.
#[derive(Debug)]
pub struct Detector {
    evaluator: WindowEvaluator,
    accumulator: FrameAccumulator,
    ring: FrameRing,
    frames_seen: u64,
    windows_evaluated: u64,
    detections: u64,
    latencies_ns: Vec<u64>,
}

impl Detector {
    /// `width` and `height` are the sensor dimensions before downsampling.
    pub fn new(
        config: PipelineConfig,
        classifier: Classifier,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        config.validate()?;
        let dims = config.frame_dims(width, height);
        let accumulator = FrameAccumulator::new(width, height, config.dt_us, config.polarity)?;
        let ring = FrameRing::new(config.n);
        Ok(Self {
            evaluator: WindowEvaluator::new(config, classifier, dims)?,
            accumulator,
            ring,
            frames_seen: 0,
            windows_evaluated: 0,
            detections: 0,
            latencies_ns: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        self.evaluator.config()
    }

    pub fn evaluator(&self) -> &WindowEvaluator {
        &self.evaluator
    }

    /// Wall time of each window evaluation so far, in nanoseconds.
    pub fn window_latencies_ns(&self) -> &[u64] {
        &self.latencies_ns
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn windows_evaluated(&self) -> u64 {
        self.windows_evaluated
    }

    pub fn detections_emitted(&self) -> u64 {
        self.detections
    }

    pub fn push_event(&mut self, e: &Event, sink: &mut dyn DetectionSink) -> Result<()> {
        for frame in self.accumulator.push(e)? {
            self.push_frame(frame, sink)?;
        }
        Ok(())
    }

    /// Feeds a full-resolution frame directly, bypassing event
    /// accumulation. Frames must arrive in time order.
    pub fn push_frame(&mut self, frame: SimilFrame, sink: &mut dyn DetectionSink) -> Result<()> {
        let factor = self.evaluator.config.downsample;
        let frame = if factor > 1 {
            downsample(&frame, factor)?
        } else {
            frame
        };
        self.ring.push(frame);
        self.frames_seen += 1;
        let n = self.evaluator.config.n as u64;
        let stride = self.evaluator.config.stride as u64;
        if self.ring.is_full() && (self.frames_seen - n) % stride == 0 {
            let window: Vec<&SimilFrame> = self.ring.iter().collect();
            let started = std::time::Instant::now();
            self.detections += self.evaluator.evaluate_into(&window, sink)?;
            self.latencies_ns.push(started.elapsed().as_nanos() as u64);
            self.windows_evaluated += 1;
        }
        Ok(())
    }

    /// Closes the remaining frames so the stream covers `[0, duration)`
    /// and evaluates any windows they complete.
    pub fn finish(&mut self, duration: u64, sink: &mut dyn DetectionSink) -> Result<()> {
        let acc = std::mem::replace(
            &mut self.accumulator,
            FrameAccumulator::new(1, 1, self.evaluator.config.dt_us, PolarityPolicy::Both)?,
        );
        for frame in acc.finish(duration) {
            self.push_frame(frame, sink)?;
        }
        Ok(())
    }
}

/// Runs the detector over an event stream. `duration` defaults to one past
/// the last event's timestamp.
pub fn run_detection<I>(
    events: I,
    width: usize,
    height: usize,
    duration: Option<u64>,
    config: &PipelineConfig,
    classifier: Classifier,
    sink: &mut dyn DetectionSink,
) -> Result<Detector>
where
    I: IntoIterator<Item = Result<Event>>,
{
    let mut det = Detector::new(config.clone(), classifier, width, height)?;
    let mut end = 0;
    for e in events {
        let e = e?;
        end = e.t + 1;
        det.push_event(&e, sink)?;
    }
    det.finish(duration.unwrap_or(end), sink)?;
    Ok(det)
}

/// Runs the detector over pre-built full-resolution frames.
pub fn run_detection_on_frames(
    frames: impl IntoIterator<Item = SimilFrame>,
    width: usize,
    height: usize,
    config: &PipelineConfig,
    classifier: Classifier,
    sink: &mut dyn DetectionSink,
) -> Result<Detector> {
    let mut det = Detector::new(config.clone(), classifier, width, height)?;
    for f in frames {
        det.push_frame(f, sink)?;
    }
    Ok(det)
}

#[cfg(test)]
mod tests;
