use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Detection, LatencyStats, PipelineConfig};
use crate::error::Result;

pub const REPORT_HEADER: &str = "t_end_us,vx,vy,score,peak_x,peak_y,classifier_kind,mf_sigma";

/// One CSV line per detection. Floats use the shortest representation that
/// round-trips; an undefined matched-filter sigma is left empty.
pub fn write_report_csv<W: Write>(mut out: W, detections: &[Detection]) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for d in detections {
        let sigma = d.matched_sigma.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            d.t_end_us,
            d.vector.vx,
            d.vector.vy,
            d.score,
            d.peak.0,
            d.peak.1,
            d.classifier_kind,
            sigma
        )?;
    }
    Ok(())
}

/// Machine-readable summary of a detection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: PipelineConfig,
    pub input: String,
    pub model: Option<String>,
    pub sensor: (usize, usize),
    pub frame_dims: (usize, usize),
    pub frames: u64,
    pub windows_evaluated: u64,
    pub detections: u64,
    /// Decision threshold actually applied.
    pub threshold: f64,
    /// Wall time per evaluated window. Varies between runs, unlike every
    /// other field.
    pub latency: Option<LatencyStats>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
