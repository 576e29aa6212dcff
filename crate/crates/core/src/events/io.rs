use std::io::{BufRead, BufReader, Read, Write};

use super::{derived_duration, Event, Polarity, SensorHeader};
use crate::error::{Error, Location, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"EVS1";
/// magic + u32 width + u32 height + u64 count
pub const BINARY_HEADER_LEN: u64 = 4 + 4 + 4 + 8;
/// u64 t + u16 x + u16 y + i8 p
pub const BINARY_RECORD_LEN: u64 = 8 + 2 + 2 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Binary,
}

impl EventFormat {
    /// Guesses the format from the first bytes of a file.
    pub fn sniff(prefix: &[u8]) -> Option<Self> {
        if prefix.starts_with(BINARY_MAGIC) {
            Some(EventFormat::Binary)
        } else if prefix.first() == Some(&b'#') {
            Some(EventFormat::Csv)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Largest backwards step in time (us) accepted before a record is
    /// rejected. Accepted out-of-order records are re-sorted by
    /// [`read_events`].
    pub regression_tolerance_us: u64,
}

/// Streaming reader over an event file. Yields events in file order and
/// validates each record as it is read.
pub struct EventReader<R: BufRead> {
    inner: R,
    format: EventFormat,
    width: u32,
    height: u32,
    options: ReadOptions,
    max_t: Option<u64>,
    // CSV: current line number. Binary: remaining record count and offset.
    line: usize,
    remaining: u64,
    offset: u64,
    buf: String,
    done: bool,
}

impl<R: Read> EventReader<BufReader<R>> {
    pub fn new(source: R, format: EventFormat, options: ReadOptions) -> Result<Self> {
        Self::from_buf_read(BufReader::new(source), format, options)
    }
}

impl<R: BufRead> EventReader<R> {
    pub fn from_buf_read(mut inner: R, format: EventFormat, options: ReadOptions) -> Result<Self> {
        let mut reader = match format {
            EventFormat::Csv => {
                let mut first = String::new();
                let n = inner.read_line(&mut first)?;
                if n == 0 {
                    return Err(Error::Malformed {
                        location: Location::Line(1),
                        reason: "missing '# width=<W> height=<H>' header".into(),
                    });
                }
                let (width, height) = parse_csv_header(&first)?;
                Self::with_dims(inner, format, width, height, options)?
            }
            EventFormat::Binary => {
                let mut head = [0u8; BINARY_HEADER_LEN as usize];
                read_exact_at(&mut inner, &mut head, 0)?;
                if &head[0..4] != BINARY_MAGIC {
                    return Err(Error::Malformed {
                        location: Location::Offset(0),
                        reason: format!(
                            "bad magic {:?}, expected {:?}",
                            String::from_utf8_lossy(&head[0..4]),
                            "EVS1"
                        ),
                    });
                }
                let width = u32::from_le_bytes(head[4..8].try_into().unwrap());
                let height = u32::from_le_bytes(head[8..12].try_into().unwrap());
                let count = u64::from_le_bytes(head[12..20].try_into().unwrap());
                let mut r = Self::with_dims(inner, format, width, height, options)?;
                r.remaining = count;
                r.offset = BINARY_HEADER_LEN;
                r
            }
        };
        reader.line = 1;
        Ok(reader)
    }

    fn with_dims(
        inner: R,
        format: EventFormat,
        width: u32,
        height: u32,
        options: ReadOptions,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Malformed {
                location: match format {
                    EventFormat::Csv => Location::Line(1),
                    EventFormat::Binary => Location::Offset(4),
                },
                reason: format!("sensor resolution {width}x{height} must be at least 1x1"),
            });
        }
        Ok(Self {
            inner,
            format,
            width,
            height,
            options,
            max_t: None,
            line: 0,
            remaining: 0,
            offset: 0,
            buf: String::new(),
            done: false,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn next_csv(&mut self) -> Result<Option<(Event, Location)>> {
        loop {
            self.buf.clear();
            if self.inner.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let location = Location::Line(self.line);
            let text = self.buf.trim_end_matches(['\n', '\r']);
            if text.is_empty() {
                continue;
            }
            return parse_csv_record(text, location, self.width, self.height)
                .map(|e| Some((e, location)));
        }
    }

    fn next_binary(&mut self) -> Result<Option<(Event, Location)>> {
        if self.remaining == 0 {
            let mut probe = [0u8; 1];
            if self.inner.read(&mut probe)? != 0 {
                return Err(Error::Malformed {
                    location: Location::Offset(self.offset),
                    reason: "trailing bytes after declared event count".into(),
                });
            }
            return Ok(None);
        }
        let location = Location::Offset(self.offset);
        let mut rec = [0u8; BINARY_RECORD_LEN as usize];
        read_exact_at(&mut self.inner, &mut rec, self.offset)?;
        self.offset += BINARY_RECORD_LEN;
        self.remaining -= 1;
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes(rec[8..10].try_into().unwrap());
        let y = u16::from_le_bytes(rec[10..12].try_into().unwrap());
        let p = rec[12] as i8;
        let polarity = Polarity::from_i8(p).ok_or_else(|| Error::Malformed {
            location,
            reason: format!("polarity {p} is not 1 or -1"),
        })?;
        Ok(Some((Event { t, x, y, polarity }, location)))
    }

    fn check(&mut self, e: &Event, location: Location) -> Result<()> {
        if u32::from(e.x) >= self.width || u32::from(e.y) >= self.height {
            return Err(Error::CoordinateOutOfRange {
                location,
                x: e.x.into(),
                y: e.y.into(),
                width: self.width,
                height: self.height,
            });
        }
        if let Some(prev) = self.max_t {
            if e.t + self.options.regression_tolerance_us < prev {
                return Err(Error::TimestampRegression {
                    location,
                    t: e.t,
                    previous: prev,
                });
            }
        }
        self.max_t = Some(self.max_t.map_or(e.t, |m| m.max(e.t)));
        Ok(())
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let next = match self.format {
            EventFormat::Csv => self.next_csv(),
            EventFormat::Binary => self.next_binary(),
        };
        let item = match next {
            Ok(Some((e, loc))) => self.check(&e, loc).map(|_| e),
            Ok(None) => {
                self.done = true;
                return None;
            }
            Err(err) => Err(err),
        };
        if item.is_err() {
            self.done = true;
        }
        Some(item)
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Malformed {
                    location: Location::Offset(offset + filled as u64),
                    reason: format!("truncated: expected {} more bytes", buf.len() - filled),
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn parse_csv_header(line: &str) -> Result<(u32, u32)> {
    let malformed = |reason: String| Error::Malformed {
        location: Location::Line(1),
        reason,
    };
    let body = line
        .trim_end_matches(['\n', '\r'])
        .strip_prefix('#')
        .ok_or_else(|| malformed("header must start with '#'".into()))?;
    let mut width = None;
    let mut height = None;
    for token in body.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            return Err(malformed(format!("expected key=value, found {token:?}")));
        };
        let slot = match key {
            "width" => &mut width,
            "height" => &mut height,
            _ => continue,
        };
        *slot = Some(
            value
                .parse::<u32>()
                .map_err(|e| malformed(format!("{key}: {e}")))?,
        );
    }
    match (width, height) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(malformed("header needs both width= and height=".into())),
    }
}

fn parse_csv_record(text: &str, location: Location, width: u32, height: u32) -> Result<Event> {
    let malformed = |reason: String| Error::Malformed { location, reason };
    let mut fields = text.split(',');
    let mut field = |name: &str| {
        fields
            .next()
            .map(str::trim)
            .ok_or_else(|| malformed(format!("missing field {name}")))
    };
    let t = field("t_us")?
        .parse::<u64>()
        .map_err(|e| malformed(format!("t_us: {e}")))?;
    let x_raw = field("x")?
        .parse::<u64>()
        .map_err(|e| malformed(format!("x: {e}")))?;
    let y_raw = field("y")?
        .parse::<u64>()
        .map_err(|e| malformed(format!("y: {e}")))?;
    let p_raw = field("p")?;
    if fields.next().is_some() {
        return Err(malformed("expected exactly 4 fields".into()));
    }
    let polarity = match p_raw {
        "1" => Polarity::On,
        "-1" => Polarity::Off,
        other => return Err(malformed(format!("polarity {other:?} is not 1 or -1"))),
    };
    let (Ok(x), Ok(y)) = (u16::try_from(x_raw), u16::try_from(y_raw)) else {
        return Err(Error::CoordinateOutOfRange {
            location,
            x: x_raw,
            y: y_raw,
            width,
            height,
        });
    };
    Ok(Event { t, x, y, polarity })
}

/// Reads a whole event file. Returned events are sorted by timestamp; the
/// header duration is derived from the last event.
pub fn read_events<R: Read>(
    source: R,
    format: EventFormat,
    options: ReadOptions,
) -> Result<(SensorHeader, Vec<Event>)> {
    let reader = EventReader::new(source, format, options)?;
    let (width, height) = (reader.width(), reader.height());
    let mut events = reader.collect::<Result<Vec<_>>>()?;
    if options.regression_tolerance_us > 0 {
        events.sort_by_key(|e| e.t);
    }
    let header = SensorHeader {
        width,
        height,
        duration: derived_duration(&events),
    };
    Ok((header, events))
}

/// Writes `events` in the requested format. Only the header's resolution is
/// stored.
pub fn write_events<W: Write>(
    mut sink: W,
    header: &SensorHeader,
    events: &[Event],
    format: EventFormat,
) -> Result<()> {
    match format {
        EventFormat::Csv => {
            let mut out = std::io::BufWriter::new(&mut sink);
            writeln!(out, "# width={} height={}", header.width, header.height)?;
            for e in events {
                writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.as_i8())?;
            }
            out.flush()?;
        }
        EventFormat::Binary => {
            let mut out = std::io::BufWriter::new(&mut sink);
            out.write_all(BINARY_MAGIC)?;
            out.write_all(&header.width.to_le_bytes())?;
            out.write_all(&header.height.to_le_bytes())?;
            out.write_all(&(events.len() as u64).to_le_bytes())?;
            for e in events {
                out.write_all(&e.t.to_le_bytes())?;
                out.write_all(&e.x.to_le_bytes())?;
                out.write_all(&e.y.to_le_bytes())?;
                out.write_all(&[e.polarity.as_i8() as u8])?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_csv(text: &str) -> Result<(SensorHeader, Vec<Event>)> {
        read_events(text.as_bytes(), EventFormat::Csv, ReadOptions::default())
    }

    #[test]
    fn csv_record_maps_fields() {
        let (h, ev) = read_csv("# width=240 height=180\n0,5,7,1\n").unwrap();
        assert_eq!((h.width, h.height), (240, 180));
        assert_eq!(ev, vec![Event::new(0, 5, 7, Polarity::On)]);
    }

    #[test]
    fn csv_x_equal_to_width_is_out_of_range() {
        let err = read_csv("# width=240 height=180\n0,240,7,1\n").unwrap_err();
        assert!(matches!(
            err,
            Error::CoordinateOutOfRange {
                location: Location::Line(2),
                x: 240,
                ..
            }
        ));
    }

    #[test]
    fn csv_timestamp_regression_rejected() {
        let err = read_csv("# width=4 height=4\n100,0,0,1\n50,0,0,1\n").unwrap_err();
        assert!(matches!(
            err,
            Error::TimestampRegression {
                location: Location::Line(3),
                t: 50,
                previous: 100
            }
        ));
    }

    #[test]
    fn regression_within_tolerance_is_resorted() {
        let text = "# width=4 height=4\n100,1,0,1\n90,2,0,-1\n";
        let opts = ReadOptions {
            regression_tolerance_us: 10,
        };
        let (_, ev) = read_events(text.as_bytes(), EventFormat::Csv, opts).unwrap();
        assert_eq!(ev.iter().map(|e| e.t).collect::<Vec<_>>(), vec![90, 100]);
    }

    #[test]
    fn csv_malformed_reports_line() {
        let err = read_csv("# width=4 height=4\n0,1,1,1\n5,1,x,1\n").unwrap_err();
        assert!(matches!(
            err,
            Error::Malformed {
                location: Location::Line(3),
                ..
            }
        ));
        assert!(read_csv("# width=4 height=4\n0,1,1,0\n").is_err());
        assert!(read_csv("# width=4 height=4\n0,1,1\n").is_err());
        assert!(read_csv("# width=4 height=4\n0,1,1,1,9\n").is_err());
        assert!(read_csv("width=4 height=4\n").is_err());
        assert!(read_csv("# width=4\n").is_err());
        assert!(read_csv("").is_err());
    }

    #[test]
    fn empty_stream_writes_header_only() {
        let h = SensorHeader::new(80, 60, 0).unwrap();
        let mut csv = Vec::new();
        write_events(&mut csv, &h, &[], EventFormat::Csv).unwrap();
        assert_eq!(csv, b"# width=80 height=60\n");
        let mut bin = Vec::new();
        write_events(&mut bin, &h, &[], EventFormat::Binary).unwrap();
        assert_eq!(bin.len() as u64, BINARY_HEADER_LEN);
        let (h2, ev) = read_events(&bin[..], EventFormat::Binary, ReadOptions::default()).unwrap();
        assert_eq!(h2, h);
        assert!(ev.is_empty());
    }

    #[test]
    fn binary_layout_is_bit_exact() {
        let h = SensorHeader::new(3, 2, 0).unwrap();
        let ev = [Event::new(0x0102, 2, 1, Polarity::Off)];
        let mut bin = Vec::new();
        write_events(&mut bin, &h, &ev, EventFormat::Binary).unwrap();
        let expected: Vec<u8> = [
            &b"EVS1"[..],
            &3u32.to_le_bytes(),
            &2u32.to_le_bytes(),
            &1u64.to_le_bytes(),
            &0x0102u64.to_le_bytes(),
            &2u16.to_le_bytes(),
            &1u16.to_le_bytes(),
            &[0xff],
        ]
        .concat();
        assert_eq!(bin, expected);
    }

    #[test]
    fn binary_errors_carry_offsets() {
        let h = SensorHeader::new(3, 2, 0).unwrap();
        let ev = [Event::on(1, 0, 0), Event::on(2, 1, 1)];
        let mut bin = Vec::new();
        write_events(&mut bin, &h, &ev, EventFormat::Binary).unwrap();

        let mut bad_magic = bin.clone();
        bad_magic[3] = b'X';
        let err = read_events(&bad_magic[..], EventFormat::Binary, ReadOptions::default());
        assert!(matches!(
            err,
            Err(Error::Malformed {
                location: Location::Offset(0),
                ..
            })
        ));

        let truncated = &bin[..bin.len() - 3];
        let err = read_events(truncated, EventFormat::Binary, ReadOptions::default());
        assert!(matches!(err, Err(Error::Malformed { .. })));

        let mut trailing = bin.clone();
        trailing.push(0);
        assert!(read_events(&trailing[..], EventFormat::Binary, ReadOptions::default()).is_err());

        let mut bad_pol = bin.clone();
        let last = bad_pol.len() - 1;
        bad_pol[last] = 0;
        let err = read_events(&bad_pol[..], EventFormat::Binary, ReadOptions::default());
        let second = BINARY_HEADER_LEN + BINARY_RECORD_LEN;
        assert!(matches!(
            err,
            Err(Error::Malformed { location: Location::Offset(o), .. }) if o == second
        ));
    }

    #[test]
    fn sniff_detects_formats() {
        assert_eq!(EventFormat::sniff(b"EVS1...."), Some(EventFormat::Binary));
        assert_eq!(EventFormat::sniff(b"# width"), Some(EventFormat::Csv));
        assert_eq!(EventFormat::sniff(b"EVS2"), None);
        assert_eq!(EventFormat::sniff(b""), None);
    }
}
