//! Detection of faint moving point sources in event-camera streams by
//! shift-and-add stacking of event-count frames followed by a binary
//! classifier.
//!
//! The processing chain is: [`events`] (ingest and frame accumulation) →
//! [`stacking`] (trial-velocity pool, shift-and-add) → [`classifier`]
//! (matched filter and CNN) → [`pipeline`] (sliding window, trigger
//! merging). [`synth`] produces labeled synthetic scenes and [`geometry`]
//! relates sensor optics to apparent motion.

pub mod classifier;
pub mod error;
pub mod events;
pub mod geometry;
pub mod grid;
pub mod pipeline;
pub mod stacking;
pub mod synth;

pub use classifier::{normalize, ClassifierInput, ClassifierKind, CnnModel, MatchedFilter, Score};
pub use error::{Error, Location, Result};
pub use events::{Event, Polarity, PolarityPolicy, SensorHeader, SimilFrame};
pub use grid::{Grid, Rect};
pub use pipeline::{Detection, PipelineConfig};
pub use stacking::{make_hex_pool, stack, stack_all, StackedImage, TrialVector, VectorPool};
pub use synth::{generate_scene, GroundTruth, SceneConfig, SourceSpec};

/// Per-pixel background event rate (events/s) used by the default training
/// corpus; 8 expected events per pixel per 80 ms frame.
pub const DEFAULT_BACKGROUND_RATE: f64 = 100.0;
