use serde::{Deserialize, Serialize};

use super::{Score, DEFAULT_SIGMA_THRESHOLD};
use crate::error::{Error, Result};
use crate::stacking::StackedImage;
use crate::synth::measure_snr_in;

/// Peak-significance baseline. The score is the SNR of the brightest
/// fully covered cell against the rest of the covered region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedFilter {
    pub threshold: f64,
    pub exclusion_radius: f64,
}

impl Default for MatchedFilter {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_SIGMA_THRESHOLD,
            exclusion_radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedScore {
    pub score: Score,
    pub peak: (usize, usize),
}

/// Errors with [`Error::Degenerate`] when the covered background has no
/// variance; callers treat that as a negative.
pub fn matched_filter_score(img: &StackedImage, filter: &MatchedFilter) -> Result<MatchedScore> {
    let (peak, _) = img
        .peak()
        .ok_or_else(|| Error::Degenerate("stack has no fully covered cells".into()))?;
    let value = measure_snr_in(
        &img.values.to_f64(),
        img.coverage,
        peak,
        filter.exclusion_radius,
    )?;
    Ok(MatchedScore {
        score: Score {
            value,
            threshold: filter.threshold,
        },
        peak,
    })
}

impl MatchedFilter {
    /// Score, or `None` when the stack cannot be scored.
    pub fn score(&self, img: &StackedImage) -> Option<MatchedScore> {
        matched_filter_score(img, self).ok()
    }
}
