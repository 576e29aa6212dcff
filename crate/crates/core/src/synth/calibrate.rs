//! Brightness calibration for point sources: relates a source event rate to
//! the expected peak-pixel SNR of a correctly stacked window.

use std::collections::HashMap;

use rand::Rng;

use super::{round_half_up, SourceSpec, US_PER_S};

const SUBSAMPLES: usize = 256;

/// Fraction of one frame's source events that land, on average, in the
/// brightest pixel of an `n`-frame stack ending at frame `newest` and
/// shifted by `trial` (pixels/frame).
///
/// Computed by midpoint quadrature over the source trajectory; PSF scatter
/// and sensor clipping are ignored.
pub fn expected_peak_fraction(
    source: &SourceSpec,
    dt_us: u64,
    n: usize,
    newest: u64,
    trial: [f64; 2],
) -> f64 {
    assert!(n >= 1 && newest + 1 >= n as u64);
    let mut mass: HashMap<(i64, i64), f64> = HashMap::new();
    let weight = 1.0 / SUBSAMPLES as f64;
    for i in 0..n {
        let lag = (n - 1 - i) as f64;
        let frame = newest - (n - 1 - i) as u64;
        let shift = (round_half_up(trial[0] * lag), round_half_up(trial[1] * lag));
        for s in 0..SUBSAMPLES {
            let t = (frame as f64 + (s as f64 + 0.5) / SUBSAMPLES as f64) * dt_us as f64;
            if t < source.t_enter_us as f64 || t >= source.t_exit_us as f64 {
                continue;
            }
            let [x, y] = source.position_at(t);
            let key = (round_half_up(x) + shift.0, round_half_up(y) + shift.1);
            *mass.entry(key).or_default() += weight;
        }
    }
    mass.values().fold(0.0_f64, |a, &b| a.max(b)) / n as f64
}

/// Expected peak SNR of an `n`-frame stack for a source of `event_rate`
/// over a Poisson background of `background_rate` per pixel.
pub fn stacked_snr(
    event_rate: f64,
    background_rate: f64,
    dt_us: u64,
    n: usize,
    peak_fraction: f64,
) -> f64 {
    let dt = dt_us as f64 / US_PER_S;
    let n = n as f64;
    n * event_rate * dt * peak_fraction / (n * background_rate * dt).sqrt()
}

/// Inverse of [`stacked_snr`] in the event rate.
pub fn source_rate_for_snr(
    target_snr: f64,
    background_rate: f64,
    dt_us: u64,
    n: usize,
    peak_fraction: f64,
) -> f64 {
    let dt = dt_us as f64 / US_PER_S;
    let n = n as f64;
    target_snr * (n * background_rate * dt).sqrt() / (n * dt * peak_fraction)
}

/// A point source moving at `v` (pixels/frame) whose whole `n`-frame track
/// stays at least one pixel inside a `(width, height)` sensor, with
/// brightness set so the correctly stacked peak has expected SNR `snr`.
pub fn random_track_source(
    rng: &mut impl Rng,
    (width, height): (u32, u32),
    n: usize,
    dt_us: u64,
    background_rate: f64,
    v: [f64; 2],
    snr: f64,
) -> SourceSpec {
    let span = n as f64;
    let mut pick = |size: u32, vel: f64| {
        let lo = 1.0 - (vel * span).min(0.0);
        let hi = size as f64 - 2.0 - (vel * span).max(0.0);
        rng.random_range(lo..hi)
    };
    let start = [pick(width, v[0]), pick(height, v[1])];
    let per_s = US_PER_S / dt_us as f64;
    let mut src = SourceSpec {
        start,
        velocity: [v[0] * per_s, v[1] * per_s],
        event_rate: 1.0,
        t_enter_us: 0,
        t_exit_us: n as u64 * dt_us,
        psf_sigma: 0.0,
    };
    let f = expected_peak_fraction(&src, dt_us, n, n as u64 - 1, v);
    src.event_rate = source_rate_for_snr(snr, background_rate, dt_us, n, f);
    src
}
