//! Labeled synthetic stacks for training and validating the CNN.
//!
//! Samples alternate between classes. Positives are stacks at the source's
//! true pool vector. Negatives are one of
//!
//! * a stack of a source scene at a vector more than one lattice spacing
//!   from the truth,
//! * a pure-noise window stacked at a random pool vector,
//! * the most source-like stack (highest matched-filter score over the
//!   whole pool) of a pure-noise window, i.e. the stack a detector is most
//!   likely to fire on in an empty window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{normalize, ClassifierInput, MatchedFilter};
use crate::error::{Error, Result};
use crate::stacking::{make_hex_pool, stack, stack_all, VectorPool};
use crate::synth::{generate_frames, random_track_source, SceneConfig, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Coherent,
    WrongVector,
    NoiseOnly,
    HardNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: ClassifierInput,
    pub label: bool,
    pub kind: SampleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub width: u32,
    pub height: u32,
    pub n: usize,
    pub dt_us: u64,
    pub background_rate: f64,
    /// Expected peak SNR of positives in the correctly stacked image,
    /// drawn uniformly from this range.
    pub snr_range: [f64; 2],
    pub max_displacement: f64,
    /// Share of negatives that are wrong-vector stacks; the rest are noise.
    pub wrong_vector_fraction: f64,
    /// Share of noise negatives taken as the window's hardest stack.
    pub hard_noise_fraction: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            width: 80,
            height: 60,
            n: 16,
            dt_us: 80_000,
            background_rate: crate::DEFAULT_BACKGROUND_RATE,
            snr_range: [5.0, 10.0],
            max_displacement: 1.0,
            wrong_vector_fraction: 0.5,
            hard_noise_fraction: 0.0,
            samples: 2000,
            seed: 1,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("n", "must be at least 2"));
        }
        if !(self.background_rate > 0.0) {
            return Err(Error::config("background_rate", "must be positive"));
        }
        if !(self.snr_range[0] > 0.0 && self.snr_range[0] <= self.snr_range[1]) {
            return Err(Error::config("snr_range", "need 0 < min <= max"));
        }
        if self.dt_us == 0 {
            return Err(Error::config("dt_us", "must be positive"));
        }
        for (field, v) in [
            ("wrong_vector_fraction", self.wrong_vector_fraction),
            ("hard_noise_fraction", self.hard_noise_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, "must be within [0, 1]"));
            }
        }
        if !(self.max_displacement > 0.0) {
            return Err(Error::config("max_displacement", "must be positive"));
        }
        let reach = (self.max_displacement * self.n as f64).ceil() as u32 + 4;
        if self.width <= reach || self.height <= reach {
            return Err(Error::config(
                "width/height",
                format!("must exceed {reach} px to fit an n-frame track"),
            ));
        }
        Ok(())
    }

    fn scene(&self, seed: u64, sources: Vec<SourceSpec>) -> SceneConfig {
        SceneConfig {
            width: self.width,
            height: self.height,
            duration_us: self.n as u64 * self.dt_us,
            background_rate: self.background_rate,
            rng_seed: seed,
            frame_dt_us: self.dt_us,
            sources,
        }
    }
}

fn one_sample(cfg: &CorpusConfig, pool: &VectorPool, index: usize) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let scene_seed: u64 = rng.random();
    let positive = index % 2 == 0;
    let kind = if positive {
        SampleKind::Coherent
    } else if rng.random_bool(cfg.wrong_vector_fraction) {
        SampleKind::WrongVector
    } else if rng.random_bool(cfg.hard_noise_fraction) {
        SampleKind::HardNoise
    } else {
        SampleKind::NoiseOnly
    };

    let stacked = match kind {
        SampleKind::NoiseOnly => {
            let (frames, _) = generate_frames(&cfg.scene(scene_seed, vec![]), cfg.dt_us)?;
            stack(&frames, pool.vectors()[rng.random_range(0..pool.len())])?
        }
        SampleKind::HardNoise => {
            let (frames, _) = generate_frames(&cfg.scene(scene_seed, vec![]), cfg.dt_us)?;
            let mf = MatchedFilter::default();
            let stacks = stack_all(&frames, pool, false)?;
            stacks
                .into_iter()
                .max_by(|a, b| {
                    let sa = mf.score(a).map_or(f64::NEG_INFINITY, |m| m.score.value);
                    let sb = mf.score(b).map_or(f64::NEG_INFINITY, |m| m.score.value);
                    sa.total_cmp(&sb)
                })
                .expect("pool is not empty")
        }
        SampleKind::Coherent | SampleKind::WrongVector => {
            let v = pool.vectors()[rng.random_range(0..pool.len())];
            let snr = rng.random_range(cfg.snr_range[0]..=cfg.snr_range[1]);
            let src = random_track_source(
                &mut rng,
                (cfg.width, cfg.height),
                cfg.n,
                cfg.dt_us,
                cfg.background_rate,
                [v.vx, v.vy],
                snr,
            );
            let (frames, _) = generate_frames(&cfg.scene(scene_seed, vec![src]), cfg.dt_us)?;
            let trial = if kind == SampleKind::Coherent {
                v
            } else {
                let far: Vec<_> = pool
                    .vectors()
                    .iter()
                    .filter(|u| !pool.within_spacing(u, &v))
                    .collect();
                *far[rng.random_range(0..far.len())]
            };
            stack(&frames, trial)?
        }
    };
    Ok(Sample {
        input: normalize(&stacked),
        label: positive,
        kind,
    })
}

/// Generates `cfg.samples` labeled samples (even indices positive).
/// Deterministic in `cfg.seed`, independent of thread count.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let pool = make_hex_pool(cfg.max_displacement);
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| one_sample(cfg, &pool, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            width: 40,
            height: 30,
            n: 8,
            samples: 24,
            seed: 3,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let a = generate_corpus(&small()).unwrap();
        assert_eq!(a.len(), 24);
        assert_eq!(a.iter().filter(|s| s.label).count(), 12);
        assert!(a
            .iter()
            .all(|s| s.label == (s.kind == SampleKind::Coherent)));
        assert!(a.iter().any(|s| s.kind == SampleKind::WrongVector));
        assert!(a.iter().any(|s| s.kind == SampleKind::NoiseOnly));
        assert!(!a.iter().any(|s| s.kind == SampleKind::HardNoise));
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.input.dims() == (40, 30)));
    }

    #[test]
    fn hard_noise_is_the_strongest_stack() {
        let cfg = CorpusConfig {
            wrong_vector_fraction: 0.0,
            hard_noise_fraction: 1.0,
            ..small()
        };
        let a = generate_corpus(&cfg).unwrap();
        assert!(a.iter().all(|s| s.label || s.kind == SampleKind::HardNoise));
    }

    #[test]
    fn rejects_tiny_sensor() {
        let cfg = CorpusConfig {
            width: 10,
            ..small()
        };
        assert!(generate_corpus(&cfg).is_err());
    }
}
