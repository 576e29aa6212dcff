//! Apparent motion of a transverse-moving object seen by a square-FOV
//! sensor at a given distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// Full field-of-view angle in degrees.
    pub fov_deg: f64,
    /// Pixels along one side of the (square) matrix.
    pub matrix_size: u32,
    /// Transverse speed in m/s.
    pub speed: f64,
    /// Frame exposure in seconds.
    pub dt: f64,
}

impl GeometryParams {
    pub fn new(fov_deg: f64, matrix_size: u32, speed: f64, dt: f64) -> Result<Self> {
        let p = Self {
            fov_deg,
            matrix_size,
            speed,
            dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::config("fov_deg", "must be in (0, 180)"));
        }
        if self.matrix_size == 0 {
            return Err(Error::config("matrix_size", "must be at least 1"));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::config("speed", "must be finite and positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be finite and positive"));
        }
        Ok(())
    }

    fn half_angle_tan(&self) -> f64 {
        (self.fov_deg.to_radians() / 2.0).tan()
    }

    /// Ground size of one pixel at `distance` metres.
    pub fn pixel_footprint(&self, distance: f64) -> f64 {
        2.0 * distance * self.half_angle_tan() / self.matrix_size as f64
    }

    /// Same as [`Self::pixel_footprint`] with `tan(x) ~ x`.
    pub fn pixel_footprint_small_angle(&self, distance: f64) -> f64 {
        distance * self.fov_deg.to_radians() / self.matrix_size as f64
    }

    pub fn displacement_px_per_frame(&self, distance: f64) -> f64 {
        self.speed * self.dt / self.pixel_footprint(distance)
    }

    /// Distance below which the object moves more than `max_disp`
    /// pixels per frame.
    pub fn min_detectable_distance(&self, max_disp: f64) -> f64 {
        self.speed * self.dt * self.matrix_size as f64 / (2.0 * self.half_angle_tan() * max_disp)
    }

    pub fn table(&self, distances: &[f64]) -> Vec<GeometryRow> {
        distances
            .iter()
            .map(|&d| GeometryRow {
                distance_m: d,
                footprint_m: self.pixel_footprint(d),
                px_per_frame: self.displacement_px_per_frame(d),
                px_per_frame_small_angle: self.speed * self.dt
                    / self.pixel_footprint_small_angle(d),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub distance_m: f64,
    pub footprint_m: f64,
    pub px_per_frame: f64,
    pub px_per_frame_small_angle: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> GeometryParams {
        GeometryParams::new(40.0, 48, 7500.0, 0.08).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn worked_example() {
        let g = reference();
        let t20 = 0.363_970_234_266_202_4_f64;
        assert!(rel(g.pixel_footprint(25_000.0), 2.0 * 25_000.0 * t20 / 48.0) < 1e-12);
        assert!((g.pixel_footprint(25_000.0) - 379.14).abs() < 0.01);
        assert!((g.displacement_px_per_frame(25_000.0) - 1.5825).abs() < 1e-4);
        assert!((g.min_detectable_distance(1.5) - 26_375.78).abs() < 0.01);
        assert!((g.min_detectable_distance(1.0) - 39_563.67).abs() < 0.01);
    }

    #[test]
    fn linearity_and_limits() {
        let g = reference();
        assert!(
            rel(
                g.pixel_footprint(50_000.0),
                2.0 * g.pixel_footprint(25_000.0)
            ) < 1e-15
        );
        let half = GeometryParams { dt: 0.04, ..g };
        assert!(
            rel(
                half.displacement_px_per_frame(9e3),
                g.displacement_px_per_frame(9e3) / 2.0
            ) < 1e-15
        );
        let narrow = GeometryParams::new(1e-9, 1, 1.0, 1.0).unwrap();
        assert!(narrow.pixel_footprint(1.0) < 1e-10);
        assert!(g.displacement_px_per_frame(1e15) < 1e-9);
    }

    #[test]
    fn small_angle_differs_by_a_few_percent_at_40_degrees() {
        let row = reference().table(&[25_000.0])[0];
        let d = row.px_per_frame_small_angle / row.px_per_frame - 1.0;
        assert!(d > 0.03 && d < 0.05, "{d}");
    }

    #[test]
    fn rejects_invalid() {
        assert!(GeometryParams::new(180.0, 48, 1.0, 1.0).is_err());
        assert!(GeometryParams::new(40.0, 0, 1.0, 1.0).is_err());
        assert!(GeometryParams::new(40.0, 48, -1.0, 1.0).is_err());
        assert!(GeometryParams::new(40.0, 48, 1.0, 0.0).is_err());
    }

    fn params() -> impl Strategy<Value = GeometryParams> {
        (0.1f64..179.0, 1u32..4096, 1.0f64..2e4, 1e-4f64..2.0)
            .prop_map(|(f, n, v, dt)| GeometryParams::new(f, n, v, dt).unwrap())
    }

    proptest! {
        #[test]
        fn inverse_identity(g in params(), x in 0.01f64..20.0) {
            let d = g.min_detectable_distance(x);
            prop_assert!(rel(g.displacement_px_per_frame(d), x) < 1e-12);
        }

        #[test]
        fn monotonicity(g in params(), d in 1.0f64..1e7, x in 0.01f64..20.0) {
            prop_assert!(g.displacement_px_per_frame(d * 1.01) < g.displacement_px_per_frame(d));
            prop_assert!(g.min_detectable_distance(x * 1.01) < g.min_detectable_distance(x));
            let faster = GeometryParams { speed: g.speed * 1.01, ..g };
            let longer = GeometryParams { dt: g.dt * 1.01, ..g };
            prop_assert!(faster.displacement_px_per_frame(d) > g.displacement_px_per_frame(d));
            prop_assert!(longer.min_detectable_distance(x) > g.min_detectable_distance(x));
        }
    }
}
