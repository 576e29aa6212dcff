//! Binary "coherent point source present" classification of stacked images.
//!
//! Two classifiers share one input convention: a matched-filter baseline
//! that scores the brightest covered pixel in background-sigma units, and a
//! small CNN trained on synthetic stacks.

mod cnn;
mod corpus;
mod matched;
mod model_file;
mod normalize;
mod recipe;
mod train;

use serde::{Deserialize, Serialize};

pub(crate) use cnn::sigmoid;
pub use cnn::{
    gradient_check, Activation, Architecture, CnnModel, GradientCheck, Gradients, Head,
    TrainingMetadata,
};
pub use corpus::{generate_corpus, CorpusConfig, Sample, SampleKind};
pub use matched::{matched_filter_score, MatchedFilter, MatchedScore};
pub use model_file::{read_model, write_model, MODEL_MAGIC};
pub use normalize::{normalize, zscore, ClassifierInput};
pub use recipe::{run_recipe, KindAccuracy, TrainingRecipe, TrainingReport};
pub use train::{evaluate, train_cnn, Hyperparams};

pub const DEFAULT_CNN_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SIGMA_THRESHOLD: f64 = 5.0;

/// Classifier output with the threshold it is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub threshold: f64,
}

impl Score {
    pub fn decision(&self) -> bool {
        self.value >= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Cnn,
    MatchedFilter,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Cnn => "cnn",
            ClassifierKind::MatchedFilter => "matched_filter",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn" => Ok(ClassifierKind::Cnn),
            "matched_filter" | "matched-filter" => Ok(ClassifierKind::MatchedFilter),
            other => Err(format!("unknown classifier {other:?}")),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
