//! Choosing the CNN operating threshold from the false-alarm rate it
//! produces on pure-noise windows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PipelineConfig, WindowEvaluator};
use crate::classifier::{normalize, sigmoid, CnnModel};
use crate::error::{Error, Result};
use crate::events::SimilFrame;
use crate::stacking::stack_all;
use crate::synth::{generate_frames, SceneConfig};

/// How an operating threshold was obtained; stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub windows: usize,
    pub target_false_alarm: f64,
    pub background_rate: f64,
    pub width: usize,
    pub height: usize,
    pub n: usize,
    pub dt_us: u64,
    pub max_displacement: f64,
    pub seed: u64,
    /// Probability threshold.
    pub threshold: f64,
    /// Fraction of the calibration windows at or above `threshold`.
    pub observed_false_alarm: f64,
}

/// Seeded, independent `n`-frame pure-noise windows. Window `k` depends
/// only on `(seed, k)`.
pub fn noise_window(
    width: usize,
    height: usize,
    n: usize,
    dt_us: u64,
    background_rate: f64,
    seed: u64,
    k: u64,
) -> Result<Vec<SimilFrame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let scene = SceneConfig {
        width: width as u32,
        height: height as u32,
        duration_us: n as u64 * dt_us,
        background_rate,
        rng_seed: rng.random(),
        frame_dt_us: dt_us,
        sources: Vec::new(),
    };
    Ok(generate_frames(&scene, dt_us)?.0)
}

/// Largest CNN logit over all pool vectors of each noise window.
pub fn noise_window_max_logits(
    model: &CnnModel,
    config: &PipelineConfig,
    background_rate: f64,
    windows: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    config.validate()?;
    let (width, height) = model.input_dims();
    let pool = config.pool();
    (0..windows as u64)
        .into_par_iter()
        .map(|k| {
            let frames = noise_window(
                width,
                height,
                config.n,
                config.dt_us,
                background_rate,
                seed,
                k,
            )?;
            let mut best = f64::NEG_INFINITY;
            for s in stack_all(&frames, &pool, false)? {
                if s.peak().is_some() {
                    best = best.max(model.logit(&normalize(&s))?);
                }
            }
            Ok(best)
        })
        .collect()
}

/// Threshold (on the logit) exceeded by at most `floor(target * len)` of
/// `maxima`: the midpoint between the last allowed and the first
/// disallowed value.
pub fn threshold_for_rate(maxima: &[f64], target: f64) -> f64 {
    let mut m = maxima.to_vec();
    m.sort_by(|a, b| b.total_cmp(a));
    let k = (target * m.len() as f64).floor() as usize;
    if m.is_empty() || k >= m.len() {
        return f64::NEG_INFINITY;
    }
    if k == 0 {
        let top = m[0];
        return top + (top.abs() + 1.0) * 1e-9;
    }
    0.5 * (m[k - 1] + m[k])
}

/// Calibrates the probability threshold at which `model`, run through the
/// pipeline configured by `config`, fires on at most `target` of
/// `windows` independent pure-noise windows.
pub fn calibrate_threshold(
    model: &CnnModel,
    config: &PipelineConfig,
    background_rate: f64,
    windows: usize,
    target: f64,
    seed: u64,
) -> Result<ThresholdCalibration> {
    if windows == 0 {
        return Err(Error::config("windows", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&target) {
        return Err(Error::config("target_false_alarm", "must be within [0, 1)"));
    }
    let maxima = noise_window_max_logits(model, config, background_rate, windows, seed)?;
    let logit = threshold_for_rate(&maxima, target);
    let threshold = sigmoid(logit);
    let fired = maxima.iter().filter(|&&l| sigmoid(l) >= threshold).count();
    let (width, height) = model.input_dims();
    Ok(ThresholdCalibration {
        windows,
        target_false_alarm: target,
        background_rate,
        width,
        height,
        n: config.n,
        dt_us: config.dt_us,
        max_displacement: config.max_displacement,
        seed,
        threshold,
        observed_false_alarm: fired as f64 / windows as f64,
    })
}

/// Fraction of `windows` fresh noise windows on which the pipeline emits
/// at least one detection.
pub fn false_alarm_rate(
    evaluator: &WindowEvaluator,
    width: usize,
    height: usize,
    background_rate: f64,
    windows: usize,
    seed: u64,
) -> Result<f64> {
    let cfg = evaluator.config();
    let fired: Vec<bool> = (0..windows as u64)
        .into_par_iter()
        .map(|k| {
            let frames = noise_window(width, height, cfg.n, cfg.dt_us, background_rate, seed, k)?;
            let refs: Vec<&SimilFrame> = frames.iter().collect();
            Ok(!evaluator.evaluate(&refs)?.is_empty())
        })
        .collect::<Result<_>>()?;
    Ok(fired.iter().filter(|&&f| f).count() as f64 / windows.max(1) as f64)
}
