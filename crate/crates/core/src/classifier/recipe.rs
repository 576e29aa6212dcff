//! End-to-end training recipe: corpus, SGD, held-out validation and
//! operating-threshold calibration, all driven by one seed.

use serde::{Deserialize, Serialize};

use super::{evaluate, generate_corpus, train_cnn, Architecture, CnnModel, CorpusConfig};
use super::{Hyperparams, SampleKind, DEFAULT_CNN_THRESHOLD};
use crate::error::{Error, Result};
use crate::pipeline::{calibrate_threshold, PipelineConfig, ThresholdCalibration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingRecipe {
    /// Master seed; the corpus, validation set, initialization, shuffling
    /// and calibration windows are all derived from it.
    pub seed: u64,
    /// Corpus parameters. Its own `seed` is ignored.
    pub corpus: CorpusConfig,
    pub validation_samples: usize,
    /// Its own `seed` is ignored.
    pub hyperparams: Hyperparams,
    /// Pure-noise windows used to pick the operating threshold; 0 skips
    /// calibration.
    pub calibration_windows: usize,
    pub target_false_alarm: f64,
}

impl Default for TrainingRecipe {
    fn default() -> Self {
        Self {
            seed: 1,
            corpus: CorpusConfig::default(),
            validation_samples: 1000,
            hyperparams: Hyperparams::default(),
            calibration_windows: 4000,
            target_false_alarm: 0.0025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindAccuracy {
    pub kind: SampleKind,
    pub samples: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub recipe: TrainingRecipe,
    pub parameters: usize,
    pub initial_loss: Option<f64>,
    pub loss_curve: Vec<f64>,
    /// Accuracy at probability 0.5 on the held-out set.
    pub validation_accuracy: f64,
    pub by_kind: Vec<KindAccuracy>,
    pub calibration: Option<ThresholdCalibration>,
}

impl TrainingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

const VALIDATION_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const CALIBRATION_STREAM: u64 = 0xd1b5_4a32_d192_ed03;

impl TrainingRecipe {
    pub fn from_toml(text: &str) -> Result<Self> {
        let r: Self =
            toml::from_str(text).map_err(|e| Error::config("recipe", e.message().to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        if self.validation_samples == 0 {
            return Err(Error::config("validation_samples", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.target_false_alarm) {
            return Err(Error::config("target_false_alarm", "must be within [0, 1)"));
        }
        Ok(())
    }

    pub fn training_corpus(&self) -> CorpusConfig {
        CorpusConfig {
            seed: self.seed,
            ..self.corpus.clone()
        }
    }

    pub fn validation_corpus(&self) -> CorpusConfig {
        CorpusConfig {
            seed: self.seed ^ VALIDATION_STREAM,
            samples: self.validation_samples,
            ..self.corpus.clone()
        }
    }

    /// Pipeline settings matching the corpus geometry.
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            n: self.corpus.n,
            dt_us: self.corpus.dt_us,
            max_displacement: self.corpus.max_displacement,
            ..PipelineConfig::default()
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::standard(self.corpus.width as usize, self.corpus.height as usize)
    }
}

/// Runs the whole recipe. The result depends only on the recipe.
pub fn run_recipe(recipe: &TrainingRecipe) -> Result<(CnnModel, TrainingReport)> {
    recipe.validate()?;
    let train = generate_corpus(&recipe.training_corpus())?;
    let hp = Hyperparams {
        seed: recipe.seed,
        ..recipe.hyperparams
    };
    let mut model = train_cnn(&train, recipe.architecture(), &hp)?;
    drop(train);

    let val = generate_corpus(&recipe.validation_corpus())?;
    let validation_accuracy = evaluate(&model, &val, DEFAULT_CNN_THRESHOLD)?;
    let mut by_kind = Vec::new();
    for kind in [
        SampleKind::Coherent,
        SampleKind::WrongVector,
        SampleKind::NoiseOnly,
        SampleKind::HardNoise,
    ] {
        let subset: Vec<_> = val.iter().filter(|s| s.kind == kind).cloned().collect();
        if !subset.is_empty() {
            by_kind.push(KindAccuracy {
                kind,
                samples: subset.len(),
                accuracy: evaluate(&model, &subset, DEFAULT_CNN_THRESHOLD)?,
            });
        }
    }
    model.metadata.validation_accuracy = Some(validation_accuracy);
    model.metadata.corpus = Some(serde_json::to_string(&recipe.corpus).expect("corpus serializes"));

    let calibration = if recipe.calibration_windows > 0 {
        let cal = calibrate_threshold(
            &model,
            &recipe.pipeline(),
            recipe.corpus.background_rate,
            recipe.calibration_windows,
            recipe.target_false_alarm,
            recipe.seed ^ CALIBRATION_STREAM,
        )?;
        model.metadata.operating_threshold = Some(cal.threshold);
        model.metadata.calibration =
            Some(serde_json::to_string(&cal).expect("calibration serializes"));
        Some(cal)
    } else {
        None
    };

    let report = TrainingReport {
        recipe: recipe.clone(),
        parameters: model.params().len(),
        initial_loss: model.metadata.initial_loss,
        loss_curve: model.metadata.loss_curve.clone(),
        validation_accuracy,
        by_kind,
        calibration,
    };
    Ok((model, report))
}
