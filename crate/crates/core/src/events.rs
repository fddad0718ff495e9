//! Event ingestion, slicing, and the synthetic scenes used as test oracles.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flowrep::DenseFlow;

/// A single brightness-change record from an event camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Pixel column, 0-based.
    pub x: u16,
    /// Pixel row, 0-based.
    pub y: u16,
    /// Timestamp in seconds.
    pub t: f64,
    /// Polarity, -1 or +1. Raw 0/1 input is remapped to -1/+1 on load.
    pub p: i8,
}

/// A non-empty, time-sorted batch of events with its sensor geometry and the
/// three reference times used by the multi-reference objective.
#[derive(Debug, Clone)]
pub struct EventSlice {
    events: Vec<Event>,
    width: usize,
    height: usize,
    t_first: f64,
    t_mid: f64,
    t_last: f64,
}

impl EventSlice {
    /// Builds a slice, stably sorting by timestamp if the input is unsorted.
    ///
    /// Errors on an empty event list or on any event outside the sensor.
    pub fn new(mut events: Vec<Event>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "sensor geometry {width}x{height}"
            )));
        }
        if events.is_empty() {
            return Err(Error::EmptySlice("slice construction".into()));
        }
        for e in &events {
            if usize::from(e.x) >= width || usize::from(e.y) >= height {
                return Err(Error::InvalidArgument(format!(
                    "event at ({}, {}) outside {}x{} sensor",
                    e.x, e.y, width, height
                )));
            }
            if e.p != -1 && e.p != 1 {
                return Err(Error::InvalidArgument(format!("polarity {}", e.p)));
            }
            if !e.t.is_finite() {
                return Err(Error::InvalidArgument(format!("timestamp {}", e.t)));
            }
        }
        if !events.windows(2).all(|w| w[0].t <= w[1].t) {
            // Stable sort keeps same-timestamp events in arrival order.
            events.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite timestamps"));
        }
        let t_first = events[0].t;
        let t_last = events[events.len() - 1].t;
        Ok(Self {
            events,
            width,
            height,
            t_first,
            t_mid: 0.5 * (t_first + t_last),
            t_last,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Slices are non-empty by construction; kept for idiomatic call sites.
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Timestamp of the first event.
    pub fn t_first(&self) -> f64 {
        self.t_first
    }

    /// Midpoint (t_first + t_last) / 2, where the solver parameterizes flow.
    pub fn t_mid(&self) -> f64 {
        self.t_mid
    }

    /// Timestamp of the last event.
    pub fn t_last(&self) -> f64 {
        self.t_last
    }

    /// Time span t_last - t_first in seconds.
    pub fn span(&self) -> f64 {
        self.t_last - self.t_first
    }
}

/// What `load_events_text` had to do beyond plain parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Events discarded because they fell outside the sensor.
    pub dropped_out_of_bounds: usize,
    /// True when the file was not time-sorted and a stable sort was applied.
    pub sorted_on_load: bool,
}

/// Loads a text event log: one event per line as "t x y p", whitespace
/// separated, `#` lines ignored, p in {0,1} or {-1,1} (0 maps to -1).
///
/// Out-of-bounds events are dropped and counted; unsorted input is stably
/// sorted. Errors on malformed lines (with the line number) and when no
/// in-bounds event remains.
pub fn load_events_text(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
) -> Result<(EventSlice, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);

    let mut events = Vec::new();
    let mut dropped = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.into(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 fields \"t x y p\", found {}",
                fields.len()
            )));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|e| parse_err(format!("timestamp {:?}: {e}", fields[0])))?;
        let x: u32 = fields[1]
            .parse()
            .map_err(|e| parse_err(format!("x {:?}: {e}", fields[1])))?;
        let y: u32 = fields[2]
            .parse()
            .map_err(|e| parse_err(format!("y {:?}: {e}", fields[2])))?;
        let p_raw: i32 = fields[3]
            .parse()
            .map_err(|e| parse_err(format!("polarity {:?}: {e}", fields[3])))?;
        let p = match p_raw {
            0 | -1 => -1i8,
            1 => 1i8,
            other => return Err(parse_err(format!("polarity {other} not in {{-1,0,1}}"))),
        };
        if !t.is_finite() {
            return Err(parse_err(format!("non-finite timestamp {t}")));
        }
        if x as usize >= width || y as usize >= height || x > u32::from(u16::MAX) || y > u32::from(u16::MAX)
        {
            dropped += 1;
            continue;
        }
        events.push(Event {
            x: x as u16,
            y: y as u16,
            t,
            p,
        });
    }

    if events.is_empty() {
        return Err(Error::EmptySlice(format!(
            "{}: no in-bounds events ({dropped} dropped)",
            path.display()
        )));
    }
    let sorted_on_load = !events.windows(2).all(|w| w[0].t <= w[1].t);
    let slice = EventSlice::new(events, width, height)?;
    Ok((
        slice,
        LoadReport {
            dropped_out_of_bounds: dropped,
            sorted_on_load,
        },
    ))
}

/// Writes a slice in the same text format `load_events_text` reads.
///
/// Timestamps use the shortest decimal form that round-trips the exact f64,
/// so save followed by load reproduces the slice bit for bit.
pub fn save_events_text(slice: &EventSlice, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.into(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for e in slice.events() {
        writeln!(out, "{} {} {} {}", e.t, e.x, e.y, e.p).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Cuts a stream into consecutive slices of exactly `n` events.
///
/// A final remainder shorter than `n` is emitted only when `keep_remainder`
/// is set; by default it is dropped.
pub fn slice_by_count(stream: &EventSlice, n: usize, keep_remainder: bool) -> Result<Vec<EventSlice>> {
    if n == 0 {
        return Err(Error::InvalidArgument("slice size n = 0".into()));
    }
    let mut slices = Vec::with_capacity(stream.len() / n + 1);
    for chunk in stream.events().chunks(n) {
        if chunk.len() < n && !keep_remainder {
            break;
        }
        slices.push(EventSlice::new(
            chunk.to_vec(),
            stream.width(),
            stream.height(),
        )?);
    }
    Ok(slices)
}

/// Binary scene mask for the synthetic generator; `true` pixels emit events
/// while the scene translates.
#[derive(Debug, Clone)]
pub struct ScenePattern {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl ScenePattern {
    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "mask length {} for {width}x{height}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidArgument("pattern has no active pixel".into()));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    /// A single active pixel.
    pub fn single_pixel(width: usize, height: usize, x: usize, y: usize) -> Result<Self> {
        if x >= width || y >= height {
            return Err(Error::InvalidArgument(format!(
                "pixel ({x}, {y}) outside {width}x{height}"
            )));
        }
        let mut mask = vec![false; width * height];
        mask[y * width + x] = true;
        Self::from_mask(width, height, mask)
    }

    /// A one-pixel-wide vertical bar at `column` spanning `rows`.
    pub fn vertical_bar(
        width: usize,
        height: usize,
        column: usize,
        rows: std::ops::Range<usize>,
    ) -> Result<Self> {
        if column >= width || rows.end > height || rows.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "bar at column {column}, rows {rows:?} outside {width}x{height}"
            )));
        }
        let mut mask = vec![false; width * height];
        for y in rows {
            mask[y * width + column] = true;
        }
        Self::from_mask(width, height, mask)
    }

    /// Random sprinkle of active pixels with the given density.
    pub fn random_dots(width: usize, height: usize, density: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::InvalidArgument(format!("dot density {density}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<bool> = (0..width * height)
            .map(|_| rng.gen::<f64>() < density)
            .collect();
        Self::from_mask(width, height, mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_active(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Generates events for a scene translating at constant velocity, plus the
/// constant ground-truth flow field.
///
/// Each active pattern pixel emits `rate` events with timestamps uniform in
/// [0, duration] (deterministic for a fixed `seed`), positioned on the line
/// x(t) = x0 - t * v_true rounded to the nearest pixel; events leaving the
/// frame are clipped. Errors when every event is clipped.
///
/// The sign convention follows the warp x' = x + (t - t_ref) v: an event at
/// (x0 - t v, t) lands on x0 - t_ref v for every t when warped with v, so
/// the returned ground-truth field v_true is exactly the flow that
/// motion-compensates the generated slice.
pub fn generate_linear_motion_events(
    pattern: &ScenePattern,
    v_true: (f64, f64),
    duration: f64,
    rate: usize,
    seed: u64,
) -> Result<(EventSlice, DenseFlow<f64>)> {
    if duration <= 0.0 || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!("duration {duration}")));
    }
    if rate == 0 {
        return Err(Error::InvalidArgument("rate = 0 events per pixel".into()));
    }
    let (w, h) = (pattern.width(), pattern.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(pattern.active_count() * rate);
    let mut emitted = 0usize;
    for y0 in 0..h {
        for x0 in 0..w {
            if !pattern.is_active(x0, y0) {
                continue;
            }
            for _ in 0..rate {
                let t = rng.gen_range(0.0..=duration);
                let x = (x0 as f64 - t * v_true.0).round();
                let y = (y0 as f64 - t * v_true.1).round();
                emitted += 1;
                if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                    continue;
                }
                events.push(Event {
                    x: x as u16,
                    y: y as u16,
                    t,
                    p: if emitted % 2 == 0 { 1 } else { -1 },
                });
            }
        }
    }
    if events.is_empty() {
        return Err(Error::EmptySlice(
            "synthetic scene: every event left the frame".into(),
        ));
    }
    let slice = EventSlice::new(events, w, h)?;
    let gt = DenseFlow::constant(w, h, (v_true.0, v_true.1), 0.5 * duration);
    Ok((slice, gt))
}
