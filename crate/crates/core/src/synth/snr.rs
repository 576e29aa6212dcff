use crate::error::{Error, Result};
use crate::grid::{Grid, Rect};

/// Peak significance in units of background standard deviation.
///
/// The background is every cell of the grid outside a disc of
/// `exclusion_radius` around `peak`; its spread is the population standard
/// deviation.
pub fn measure_snr(grid: &Grid<f64>, peak: (usize, usize), exclusion_radius: f64) -> Result<f64> {
    measure_snr_in(grid, grid.full_rect(), peak, exclusion_radius)
}

/// [`measure_snr`] restricted to the cells of `region`.
pub fn measure_snr_in(
    grid: &Grid<f64>,
    region: Rect,
    peak: (usize, usize),
    exclusion_radius: f64,
) -> Result<f64> {
    let (px, py) = peak;
    if px >= grid.width() || py >= grid.height() {
        return Err(Error::dims(
            format!("peak inside {}x{}", grid.width(), grid.height()),
            format!("({px}, {py})"),
        ));
    }
    let r2 = exclusion_radius * exclusion_radius;
    let outside = |x: usize, y: usize| {
        let dx = x as f64 - px as f64;
        let dy = y as f64 - py as f64;
        dx * dx + dy * dy > r2
    };

    let mut count = 0usize;
    let mut sum = 0.0;
    for (x, y) in region.iter().filter(|&(x, y)| outside(x, y)) {
        count += 1;
        sum += grid.get(x, y);
    }
    if count < 2 {
        return Err(Error::Degenerate(format!(
            "only {count} background cells outside radius {exclusion_radius}"
        )));
    }
    let mean = sum / count as f64;
    let var = region
        .iter()
        .filter(|&(x, y)| outside(x, y))
        .map(|(x, y)| (grid.get(x, y) - mean).powi(2))
        .sum::<f64>()
        / count as f64;
    if var <= 0.0 {
        return Err(Error::Degenerate("background variance is zero".into()));
    }
    Ok((grid.get(px, py) - mean) / var.sqrt())
}
