//! Event data model, file interchange formats, and simil-frame accumulation.
//!
//! An event is a single brightness-change report from the sensor. Events are
//! turned into [`SimilFrame`]s by counting them per pixel over consecutive,
//! half-open exposure windows `[k*dt, (k+1)*dt)` aligned to the stream origin.

mod frames;
mod io;

use serde::{Deserialize, Serialize};

pub use frames::{build_simil_frames, downsample, FrameAccumulator, PolarityPolicy, SimilFrame};
pub use io::{
    read_events, write_events, EventFormat, EventReader, ReadOptions, BINARY_HEADER_LEN,
    BINARY_MAGIC, BINARY_RECORD_LEN,
};

/// Sign of the brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_i8(p: i8) -> Option<Self> {
        match p {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

/// One sensor event. `t` is in microseconds since stream start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }

    pub fn on(t: u64, x: u16, y: u16) -> Self {
        Self::new(t, x, y, Polarity::On)
    }
}

/// Declared sensor resolution and stream duration.
///
/// The interchange formats store only the resolution; when a stream is read
/// back its duration is derived as one past the last timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorHeader {
    pub width: u32,
    pub height: u32,
    pub duration: u64,
}

impl SensorHeader {
    pub fn new(width: u32, height: u32, duration: u64) -> crate::Result<Self> {
        if width == 0 {
            return Err(crate::Error::config("width", "must be at least 1"));
        }
        if height == 0 {
            return Err(crate::Error::config("height", "must be at least 1"));
        }
        Ok(Self {
            width,
            height,
            duration,
        })
    }

    /// Header whose duration is the one a reader derives for `events`.
    pub fn for_events(width: u32, height: u32, events: &[Event]) -> Self {
        Self {
            width,
            height,
            duration: derived_duration(events),
        }
    }

    pub fn contains(&self, x: u64, y: u64) -> bool {
        x < u64::from(self.width) && y < u64::from(self.height)
    }
}

pub(crate) fn derived_duration(events: &[Event]) -> u64 {
    events.last().map_or(0, |e| e.t + 1)
}
