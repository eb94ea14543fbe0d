//! Events, event sets and their on-disk formats.
//!
//! Two formats are supported:
//!
//! * CSV, one `t,x,y,p` record per line, `#` starts a comment. Polarity `0`
//!   is read as `-1`.
//! * A binary cache: magic `EVT1`, `u32` width, `u32` height, `u64` count,
//!   then packed `(f64 t, u16 x, u16 y, i8 p)` records, all little-endian.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SensorSize {
    pub width: u32,
    pub height: u32,
}

impl SensorSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    /// Row-major linear index of an in-bounds pixel.
    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

/// A single brightness-change spike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: u16,
    pub y: u16,
    /// `-1` or `+1`.
    pub p: i8,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, p: i8) -> Self {
        Self {
            t,
            x,
            y,
            p: if p > 0 { 1 } else { -1 },
        }
    }
}

/// Time-ordered events from one sensor over a window `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSet {
    events: Vec<Event>,
    sensor_size: SensorSize,
    t_start: f64,
    t_end: f64,
}

impl EventSet {
    /// Builds a set spanning exactly the event timestamps. Events are sorted
    /// by time (ties by row, column, polarity) and checked against the sensor.
    pub fn new(events: Vec<Event>, sensor_size: SensorSize) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyEventSet);
        }
        let (lo, hi) = time_range(&events);
        Self::with_window(events, sensor_size, lo, hi)
    }

    /// Builds a set over an explicit window that must contain every event.
    pub fn with_window(
        mut events: Vec<Event>,
        sensor_size: SensorSize,
        t_start: f64,
        t_end: f64,
    ) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyEventSet);
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_start <= t_end) {
            return Err(Error::Validation(format!(
                "invalid window [{t_start}, {t_end}]"
            )));
        }
        for (i, e) in events.iter().enumerate() {
            if !sensor_size.contains(e.x as i64, e.y as i64) {
                return Err(Error::OutOfBounds {
                    line: i + 1,
                    x: e.x as i64,
                    y: e.y as i64,
                    width: sensor_size.width,
                    height: sensor_size.height,
                });
            }
            if !e.t.is_finite() || e.t < t_start || e.t > t_end {
                return Err(Error::Validation(format!(
                    "event {i} at t={} outside window [{t_start}, {t_end}]",
                    e.t
                )));
            }
        }
        sort_events(&mut events);
        Ok(Self {
            events,
            sensor_size,
            t_start,
            t_end,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn sensor_size(&self) -> SensorSize {
        self.sensor_size
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }

    /// Events with `t0 <= t < t1` (the last window is closed at `t_end`),
    /// re-windowed to `[t0, t1]`.
    pub fn slice_time(&self, t0: f64, t1: f64) -> Result<Self> {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = if t1 >= self.t_end {
            self.events.len()
        } else {
            self.events.partition_point(|e| e.t < t1)
        };
        Self::with_window(self.events[lo..hi].to_vec(), self.sensor_size, t0, t1)
    }

    /// The first `count` events at or after `t0`; the window ends at the last
    /// one taken.
    pub fn slice_count(&self, t0: f64, count: usize) -> Result<Self> {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = (lo + count).min(self.events.len());
        let slice = self.events[lo..hi].to_vec();
        let t1 = slice.last().map(|e| e.t).ok_or(Error::EmptyEventSet)?;
        Self::with_window(slice, self.sensor_size, t0, t1)
    }
}

fn time_range(events: &[Event]) -> (f64, f64) {
    events
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.t), hi.max(e.t))
        })
}

fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(a.p.cmp(&b.p))
    });
}

/// Parses the CSV dialect from a string. Line numbers in errors are 1-based.
pub fn parse_events_csv(text: &str, sensor_size: SensorSize) -> Result<EventSet> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields `t,x,y,p`, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str, v: &str| Error::Parse {
            line,
            msg: format!("invalid {what} `{v}`"),
        };
        let t: f64 = fields[0].parse().map_err(|_| parse_err("timestamp", fields[0]))?;
        if !t.is_finite() {
            return Err(parse_err("timestamp", fields[0]));
        }
        let x: i64 = fields[1].parse().map_err(|_| parse_err("x", fields[1]))?;
        let y: i64 = fields[2].parse().map_err(|_| parse_err("y", fields[2]))?;
        let p: i64 = fields[3].parse().map_err(|_| parse_err("polarity", fields[3]))?;
        let p = match p {
            1 => 1,
            0 | -1 => -1,
            _ => return Err(parse_err("polarity", fields[3])),
        };
        if !sensor_size.contains(x, y) {
            return Err(Error::OutOfBounds {
                line,
                x,
                y,
                width: sensor_size.width,
                height: sensor_size.height,
            });
        }
        events.push(Event::new(t, x as u16, y as u16, p));
    }
    EventSet::new(events, sensor_size)
}

pub fn read_events_csv(path: impl AsRef<Path>, sensor_size: SensorSize) -> Result<EventSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events_csv(&text, sensor_size)
}

pub fn format_events_csv(set: &EventSet) -> String {
    let mut out = String::with_capacity(set.len() * 24);
    for e in set.events() {
        // `{}` on f64 is the shortest representation that round-trips.
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p);
    }
    out
}

pub fn write_events_csv(path: impl AsRef<Path>, set: &EventSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_events_csv(set)).map_err(|e| Error::io(path, e))
}

const EVT_MAGIC: &[u8; 4] = b"EVT1";
const EVT_HEADER: usize = 4 + 4 + 4 + 8;
const EVT_RECORD: usize = 8 + 2 + 2 + 1;

pub fn encode_events_bin(set: &EventSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(EVT_HEADER + set.len() * EVT_RECORD);
    buf.extend_from_slice(EVT_MAGIC);
    buf.extend_from_slice(&set.sensor_size.width.to_le_bytes());
    buf.extend_from_slice(&set.sensor_size.height.to_le_bytes());
    buf.extend_from_slice(&(set.len() as u64).to_le_bytes());
    for e in set.events() {
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.extend_from_slice(&e.p.to_le_bytes());
    }
    buf
}

pub fn decode_events_bin(bytes: &[u8]) -> Result<EventSet> {
    if bytes.len() < EVT_HEADER || &bytes[..4] != EVT_MAGIC {
        return Err(Error::Format("missing EVT1 magic".into()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let payload = &bytes[EVT_HEADER..];
    if payload.len() != count.saturating_mul(EVT_RECORD) {
        return Err(Error::Format(format!(
            "expected {count} records ({} bytes), found {} bytes",
            count * EVT_RECORD,
            payload.len()
        )));
    }
    let events = payload
        .chunks_exact(EVT_RECORD)
        .map(|r| {
            Event::new(
                f64::from_le_bytes(r[0..8].try_into().unwrap()),
                u16::from_le_bytes(r[8..10].try_into().unwrap()),
                u16::from_le_bytes(r[10..12].try_into().unwrap()),
                r[12] as i8,
            )
        })
        .collect();
    EventSet::new(events, SensorSize::new(width, height))
}

pub fn read_events_bin(path: impl AsRef<Path>) -> Result<EventSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_events_bin(&bytes)
}

pub fn write_events_bin(path: impl AsRef<Path>, set: &EventSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_events_bin(set)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const S10: SensorSize = SensorSize::new(10, 10);

    #[test]
    fn parses_two_events() {
        let set = parse_events_csv("0.0,5,5,1\n0.001,6,5,-1", S10).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.t_start(), 0.0);
        assert_eq!(set.t_end(), 0.001);
        assert_eq!(set.events()[1].p, -1);
    }

    #[test]
    fn out_of_bounds_names_line() {
        match parse_events_csv("0.0,12,5,1", S10) {
            Err(Error::OutOfBounds { line: 1, x: 12, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(parse_events_csv("", S10), Err(Error::EmptyEventSet)));
        assert!(matches!(
            parse_events_csv("# only a comment\n\n", S10),
            Err(Error::EmptyEventSet)
        ));
    }

    #[test]
    fn zero_polarity_and_comments() {
        let set = parse_events_csv("# header\n0.5,1,2,0 # trailing\n0.25,3,4,1\n", S10).unwrap();
        assert_eq!(set.events()[0].t, 0.25);
        assert_eq!(set.events()[1].p, -1);
    }

    #[test]
    fn malformed_line_reports_number() {
        match parse_events_csv("0.0,1,1,1\n0.1,abc,1,1", S10) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_events_csv("0.0,1,1,2", S10),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let set = parse_events_csv("0.3,1,1,1\n0.1,2,2,1\n0.2,3,3,-1", S10).unwrap();
        let ts: Vec<f64> = set.events().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn binary_rejects_truncation() {
        let set = parse_events_csv("0.0,1,1,1\n0.1,2,2,1", S10).unwrap();
        let mut bytes = encode_events_bin(&set);
        assert_eq!(bytes.len(), 20 + 2 * 13);
        bytes.pop();
        assert!(matches!(decode_events_bin(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_events_bin(b"EVT0"), Err(Error::Format(_))));
    }

    #[test]
    fn slicing_by_count_and_time() {
        let text: String = (0..10).map(|i| format!("{},{},0,1\n", i as f64 * 0.1, i)).collect();
        let set = parse_events_csv(&text, S10).unwrap();
        let w = set.slice_count(0.25, 3).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.t_start(), 0.25);
        assert!((w.t_end() - 0.5).abs() < 1e-12);
        let w = set.slice_time(0.0, 0.35).unwrap();
        assert_eq!(w.len(), 4);
    }
}
