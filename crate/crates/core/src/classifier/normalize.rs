use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Rect};
use crate::stacking::StackedImage;

/// Z-scored stacked image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierInput {
    pub grid: Grid<f64>,
}

impl ClassifierInput {
    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }
}

/// Z-scores the cells of `region` (population statistics) and zeroes every
/// other cell. A constant region maps to all zeros.
pub fn zscore(grid: &Grid<f64>, region: Rect) -> Grid<f64> {
    let mut out = Grid::<f64>::new(grid.width(), grid.height());
    let count = region.area();
    if count == 0 {
        return out;
    }
    let mean = region.iter().map(|(x, y)| grid.get(x, y)).sum::<f64>() / count as f64;
    let var = region
        .iter()
        .map(|(x, y)| (grid.get(x, y) - mean).powi(2))
        .sum::<f64>()
        / count as f64;
    if var <= 0.0 {
        return out;
    }
    let inv = 1.0 / var.sqrt();
    for (x, y) in region.iter() {
        *out.get_mut(x, y) = (grid.get(x, y) - mean) * inv;
    }
    out
}

/// Classifier input for a stack. Statistics come from the region covered by
/// all frames; partially covered border cells are zeroed so the shift
/// pattern of the trial vector does not leak into the input.
pub fn normalize(img: &StackedImage) -> ClassifierInput {
    ClassifierInput {
        grid: zscore(&img.values.to_f64(), img.coverage),
    }
}
