//! Trial-velocity pool and shift-and-add stacking.
//!
//! Frame `i` of an `n`-frame window (0 = oldest) is translated by
//! `round(v * (n - 1 - i))` and summed, so an object moving at `v`
//! pixels/frame lands on its position in the newest frame. Shifts are rounded
//! half-up once per frame from the cumulative displacement; pixels pushed
//! off the grid are dropped.

mod dump;
mod pool;

use std::borrow::Borrow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::SimilFrame;
use crate::grid::{Grid, Rect};

pub use dump::{write_csv_grid, write_pgm, PgmKind};
pub use pool::{make_hex_pool, VectorPool, DEFAULT_POOL_SIZE};

/// Candidate displacement in pixels/frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialVector {
    pub vx: f64,
    pub vy: f64,
}

impl TrialVector {
    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn distance(&self, other: &TrialVector) -> f64 {
        (self.vx - other.vx).hypot(self.vy - other.vy)
    }

    /// Integer translation applied to a frame `lag` frames older than the
    /// newest one.
    #[inline]
    pub fn shift(&self, lag: usize) -> (i64, i64) {
        let k = lag as f64;
        (
            crate::synth::round_half_up(self.vx * k),
            crate::synth::round_half_up(self.vy * k),
        )
    }
}

/// Shift-and-add sum of `n` frames under one trial vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedImage {
    pub values: Grid<u32>,
    pub n: usize,
    pub vector: TrialVector,
    /// End of the newest frame's exposure window.
    pub t_end: u64,
    /// Cells that received a contribution from every input frame.
    pub coverage: Rect,
}

impl StackedImage {
    pub fn total(&self) -> u64 {
        self.values.total()
    }

    /// Brightest cell inside the full-coverage region; ties resolve to the
    /// first cell in row-major order.
    pub fn peak(&self) -> Option<((usize, usize), u32)> {
        let mut best: Option<((usize, usize), u32)> = None;
        for y in self.coverage.y0..self.coverage.y1 {
            let row = &self.values.row(y)[self.coverage.x0..self.coverage.x1];
            for (i, &v) in row.iter().enumerate() {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some(((self.coverage.x0 + i, y), v));
                }
            }
        }
        best
    }
}

fn validate<F: Borrow<SimilFrame>>(frames: &[F]) -> Result<(usize, usize)> {
    if frames.len() < 2 {
        return Err(Error::config(
            "n",
            format!("stacking needs at least 2 frames, got {}", frames.len()),
        ));
    }
    let dims = frames[0].borrow().counts.dims();
    for f in frames {
        let d = f.borrow().counts.dims();
        if d != dims {
            return Err(Error::dims(
                format!("{}x{}", dims.0, dims.1),
                format!("{}x{}", d.0, d.1),
            ));
        }
    }
    Ok(dims)
}

/// Region covered by every shifted frame.
pub fn coverage(width: usize, height: usize, n: usize, v: &TrialVector) -> Rect {
    let (mut x0, mut y0, mut x1, mut y1) = (0i64, 0i64, width as i64, height as i64);
    for lag in 0..n {
        let (dx, dy) = v.shift(lag);
        x0 = x0.max(dx);
        y0 = y0.max(dy);
        x1 = x1.min(width as i64 + dx);
        y1 = y1.min(height as i64 + dy);
    }
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64) as usize;
    let (x0, x1) = (clamp(x0, width), clamp(x1, width));
    let (y0, y1) = (clamp(y0, height), clamp(y1, height));
    Rect {
        x0,
        y0,
        x1: x1.max(x0),
        y1: y1.max(y0),
    }
}

/// Shift-and-add of chronologically ordered `frames` under `v`, aligned to
/// the newest frame.
pub fn stack<F: Borrow<SimilFrame>>(frames: &[F], v: TrialVector) -> Result<StackedImage> {
    let (w, h) = validate(frames)?;
    Ok(stack_unchecked(frames, v, w, h))
}

fn stack_unchecked<F: Borrow<SimilFrame>>(
    frames: &[F],
    v: TrialVector,
    w: usize,
    h: usize,
) -> StackedImage {
    let n = frames.len();
    let mut out = Grid::<u32>::new(w, h);
    for (i, frame) in frames.iter().enumerate() {
        let src = &frame.borrow().counts;
        let (dx, dy) = v.shift(n - 1 - i);
        // destination x range whose source x = x - dx is inside the grid
        let xs = dx.max(0);
        let xe = (w as i64 + dx).min(w as i64);
        if xs >= xe {
            continue;
        }
        let (xs, xe) = (xs as usize, xe as usize);
        let sx = (xs as i64 - dx) as usize;
        for y in 0..h {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            let src_row = &src.row(sy as usize)[sx..sx + (xe - xs)];
            let dst_row = &mut out.as_mut_slice()[y * w + xs..y * w + xe];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += s;
            }
        }
    }
    let newest = frames[n - 1].borrow();
    StackedImage {
        values: out,
        n,
        vector: v,
        t_end: newest.t_end(),
        coverage: coverage(w, h, n, &v),
    }
}

/// One stacked image per pool vector, in pool order. With `parallel` the
/// vectors are evaluated on the rayon pool; the output is identical.
pub fn stack_all<F: Borrow<SimilFrame> + Sync>(
    frames: &[F],
    pool: &VectorPool,
    parallel: bool,
) -> Result<Vec<StackedImage>> {
    let (w, h) = validate(frames)?;
    let one = |v: &TrialVector| stack_unchecked(frames, *v, w, h);
    Ok(if parallel {
        pool.vectors().par_iter().map(one).collect()
    } else {
        pool.vectors().iter().map(one).collect()
    })
}
