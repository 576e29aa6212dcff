use serde::{Deserialize, Serialize};

use super::{Event, Polarity, SensorHeader};
use crate::error::{Error, Location, Result};
use crate::grid::Grid;

/// Which events feed a simil-frame. Accepted events add 1 regardless of sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityPolicy {
    #[default]
    Both,
    PositiveOnly,
}

impl PolarityPolicy {
    #[inline]
    pub fn accepts(self, p: Polarity) -> bool {
        match self {
            PolarityPolicy::Both => true,
            PolarityPolicy::PositiveOnly => p == Polarity::On,
        }
    }
}

/// Event counts per pixel over `[t_start, t_start + dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilFrame {
    pub counts: Grid<u32>,
    pub t_start: u64,
    pub dt: u64,
    /// Set when a downsampling step had to zero-pad the right or bottom edge.
    pub padded: bool,
}

impl SimilFrame {
    pub fn empty(width: usize, height: usize, t_start: u64, dt: u64) -> Self {
        Self {
            counts: Grid::new(width, height),
            t_start,
            dt,
            padded: false,
        }
    }

    pub fn t_end(&self) -> u64 {
        self.t_start + self.dt
    }

    pub fn total(&self) -> u64 {
        self.counts.total()
    }
}

/// Incremental simil-frame builder for a time-sorted event stream.
///
/// Frames are emitted as soon as an event at or beyond their end time
/// arrives, so a consumer never waits for more than one frame of lookahead.
#[derive(Debug)]
pub struct FrameAccumulator {
    width: usize,
    height: usize,
    dt: u64,
    policy: PolarityPolicy,
    current: SimilFrame,
    index: u64,
    seen: usize,
}

impl FrameAccumulator {
    pub fn new(width: usize, height: usize, dt: u64, policy: PolarityPolicy) -> Result<Self> {
        if dt == 0 {
            return Err(Error::config("dt", "exposure window must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::config("width/height", "must be at least 1"));
        }
        Ok(Self {
            width,
            height,
            dt,
            policy,
            current: SimilFrame::empty(width, height, 0, dt),
            index: 0,
            seen: 0,
        })
    }

    pub fn dt(&self) -> u64 {
        self.dt
    }

    /// Start time of the frame currently being filled.
    pub fn current_start(&self) -> u64 {
        self.current.t_start
    }

    /// Adds one event; returns every frame that the event's timestamp closes.
    pub fn push(&mut self, e: &Event) -> Result<Vec<SimilFrame>> {
        let location = Location::Index(self.seen);
        self.seen += 1;
        if e.t < self.current.t_start {
            return Err(Error::TimestampRegression {
                location,
                t: e.t,
                previous: self.current.t_start,
            });
        }
        let (x, y) = (usize::from(e.x), usize::from(e.y));
        if x >= self.width || y >= self.height {
            return Err(Error::CoordinateOutOfRange {
                location,
                x: x as u64,
                y: y as u64,
                width: self.width as u32,
                height: self.height as u32,
            });
        }
        let closed = self.advance_to(e.t / self.dt);
        if self.policy.accepts(e.polarity) {
            *self.current.counts.get_mut(x, y) += 1;
        }
        Ok(closed)
    }

    /// Closes frames up to (not including) frame index `k`.
    fn advance_to(&mut self, k: u64) -> Vec<SimilFrame> {
        let mut out = Vec::new();
        while self.index < k {
            self.index += 1;
            let next = SimilFrame::empty(self.width, self.height, self.index * self.dt, self.dt);
            out.push(std::mem::replace(&mut self.current, next));
        }
        out
    }

    /// Flushes the open frame plus any empty frames needed so the output
    /// covers `[0, duration)`. Returns nothing if no event was seen and
    /// `duration` is zero.
    pub fn finish(mut self, duration: u64) -> Vec<SimilFrame> {
        let needed = duration.div_ceil(self.dt);
        if self.seen == 0 && needed == 0 {
            return Vec::new();
        }
        let last = needed.max(self.index + 1);
        let mut out = self.advance_to(last - 1);
        out.push(self.current);
        out
    }
}

/// Accumulates a sorted event stream into consecutive frames of width `dt`.
/// The output covers at least `[0, header.duration)`.
pub fn build_simil_frames(
    header: &SensorHeader,
    events: &[Event],
    dt: u64,
    policy: PolarityPolicy,
) -> Result<Vec<SimilFrame>> {
    let mut acc = FrameAccumulator::new(header.width as usize, header.height as usize, dt, policy)?;
    let mut frames = Vec::new();
    for e in events {
        frames.extend(acc.push(e)?);
    }
    frames.extend(acc.finish(header.duration));
    Ok(frames)
}

/// Sums `factor x factor` pixel blocks. Dimensions that are not multiples of
/// `factor` are zero-padded on the right/bottom and the result is flagged
/// `padded`.
pub fn downsample(frame: &SimilFrame, factor: usize) -> Result<SimilFrame> {
    if factor == 0 {
        return Err(Error::config(
            "factor",
            "downsample factor must be positive",
        ));
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let (w, h) = frame.counts.dims();
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut out = Grid::<u32>::new(ow, oh);
    for y in 0..h {
        let row = frame.counts.row(y);
        let oy = y / factor;
        for (x, &v) in row.iter().enumerate() {
            *out.get_mut(x / factor, oy) += v;
        }
    }
    Ok(SimilFrame {
        counts: out,
        t_start: frame.t_start,
        dt: frame.dt,
        padded: frame.padded || w % factor != 0 || h % factor != 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(w: u32, h: u32, duration: u64) -> SensorHeader {
        SensorHeader::new(w, h, duration).unwrap()
    }

    #[test]
    fn half_open_windows() {
        let dt = 100;
        let ev = [
            Event::on(0, 3, 4),
            Event::on(dt - 1, 3, 4),
            Event::on(dt, 3, 4),
        ];
        let frames = build_simil_frames(&header(8, 8, 0), &ev, dt, PolarityPolicy::Both).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(*frames[0].counts.get(3, 4), 2);
        assert_eq!(*frames[1].counts.get(3, 4), 1);
        assert_eq!(frames[1].t_start, dt);
    }

    #[test]
    fn no_events_gives_empty_frames_over_duration() {
        let frames =
            build_simil_frames(&header(5, 5, 300), &[], 100, PolarityPolicy::Both).unwrap();
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().all(|f| f.total() == 0));
        assert_eq!(
            frames.iter().map(|f| f.t_start).collect::<Vec<_>>(),
            vec![0, 100, 200]
        );
    }

    #[test]
    fn gaps_produce_empty_frames() {
        let ev = [Event::on(5, 0, 0), Event::on(450, 1, 1)];
        let frames = build_simil_frames(&header(2, 2, 0), &ev, 100, PolarityPolicy::Both).unwrap();
        assert_eq!(frames.len(), 5);
        assert_eq!(
            frames.iter().map(SimilFrame::total).collect::<Vec<_>>(),
            vec![1, 0, 0, 0, 1]
        );
    }

    #[test]
    fn zero_dt_rejected() {
        assert!(build_simil_frames(&header(2, 2, 10), &[], 0, PolarityPolicy::Both).is_err());
    }

    #[test]
    fn positive_only_counts_on_events() {
        let ev = [
            Event::new(0, 0, 0, Polarity::On),
            Event::new(1, 0, 0, Polarity::Off),
            Event::new(2, 1, 0, Polarity::On),
        ];
        let frames =
            build_simil_frames(&header(2, 1, 0), &ev, 10, PolarityPolicy::PositiveOnly).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].total(), 2);
    }

    #[test]
    fn unsorted_input_rejected() {
        let ev = [Event::on(250, 0, 0), Event::on(10, 0, 0)];
        let err = build_simil_frames(&header(2, 2, 0), &ev, 100, PolarityPolicy::Both).unwrap_err();
        assert!(matches!(
            err,
            Error::TimestampRegression {
                location: Location::Index(1),
                ..
            }
        ));
    }

    #[test]
    fn downsample_240x180_by_3() {
        let mut f = SimilFrame::empty(240, 180, 0, 1);
        for (i, v) in f.counts.as_mut_slice().iter_mut().enumerate() {
            *v = (i % 7) as u32;
        }
        let d = downsample(&f, 3).unwrap();
        assert_eq!(d.counts.dims(), (80, 60));
        assert_eq!(d.total(), f.total());
        assert!(!d.padded);
    }

    #[test]
    fn downsample_factor_one_is_identity() {
        let mut f = SimilFrame::empty(4, 3, 7, 2);
        *f.counts.get_mut(1, 2) = 5;
        assert_eq!(downsample(&f, 1).unwrap(), f);
        assert!(downsample(&f, 0).is_err());
    }

    #[test]
    fn downsample_pads_non_divisible() {
        let mut f = SimilFrame::empty(5, 4, 0, 1);
        f.counts.as_mut_slice().fill(1);
        let d = downsample(&f, 3).unwrap();
        assert_eq!(d.counts.dims(), (2, 2));
        assert!(d.padded);
        assert_eq!(d.counts.as_slice(), &[9, 6, 3, 2]);
        assert_eq!(d.total(), 20);
    }
}
