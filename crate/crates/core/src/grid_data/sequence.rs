use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{read_to_string, write_atomic};

const MAGIC: &str = "#pasta-flow v1";
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Chronological stack of equally spaced grid snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSequence {
    n: usize,
    m: usize,
    interval_minutes: u32,
    start: NaiveDateTime,
    frames: Vec<Grid>,
}

impl FlowSequence {
    pub fn new(interval_minutes: u32, start: NaiveDateTime, frames: Vec<Grid>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Empty("flow sequence has no frames".into()))?;
        let (n, m) = (first.n(), first.m());
        if interval_minutes == 0 {
            return Err(Error::NonMonotonic(
                "interval_minutes must be positive".into(),
            ));
        }
        for (idx, f) in frames.iter().enumerate() {
            if (f.n(), f.m()) != (n, m) {
                return Err(Error::Shape(format!(
                    "frame {idx} is {}x{}, expected {n}x{m}",
                    f.n(),
                    f.m()
                )));
            }
            if let Some(v) = f.data().iter().find(|v| **v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "frame {idx} holds invalid value {v}"
                )));
            }
        }
        Ok(FlowSequence {
            n,
            m,
            interval_minutes,
            start,
            frames,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn frames(&self) -> &[Grid] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, index: usize) -> Option<&Grid> {
        self.frames.get(index)
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::minutes(i64::from(self.interval_minutes) * index as i64)
    }

    pub fn frames_per_day(&self) -> Result<usize> {
        if 1440 % self.interval_minutes != 0 {
            return Err(Error::InvalidArgument(format!(
                "interval {} does not divide a day",
                self.interval_minutes
            )));
        }
        Ok((1440 / self.interval_minutes) as usize)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MAGIC} n={} m={} interval_minutes={} start={}\n",
            self.n,
            self.m,
            self.interval_minutes,
            self.start.format(TIME_FORMAT)
        );
        for frame in &self.frames {
            for (idx, v) in frame.data().iter().enumerate() {
                if idx > 0 {
                    out.push(',');
                }
                // `Display` for f64 prints the shortest string that parses back to the same bits.
                write!(out, "{v}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
        let (n, m, interval, start) = parse_header(header)?;
        let mut frames = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut values = Vec::with_capacity(n * m);
            for (col, field) in line.split(',').enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid number {:?}", field.trim()),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite value {v}"),
                    });
                }
                if v < 0.0 {
                    return Err(Error::NegativeValue {
                        line: line_no,
                        column: col + 1,
                        value: v,
                    });
                }
                values.push(v);
            }
            if values.len() != n * m {
                return Err(Error::RaggedRow {
                    line: line_no,
                    expected: n * m,
                    found: values.len(),
                });
            }
            frames.push(Grid::new(n, m, values)?);
        }
        if frames.is_empty() {
            return Err(Error::Empty("flow file holds no frames".into()));
        }
        FlowSequence::new(interval, start, frames)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, u32, NaiveDateTime)> {
    let bad = |msg: &str| Error::MalformedHeader(format!("{msg}: {line:?}"));
    let rest = line
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad("missing `#pasta-flow v1` prefix"))?;
    let mut n = None;
    let mut m = None;
    let mut interval = None;
    let mut start = None;
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad("expected key=value"))?;
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad("invalid n"))?),
            "m" => m = Some(value.parse::<usize>().map_err(|_| bad("invalid m"))?),
            "interval_minutes" => {
                let v: i64 = value.parse().map_err(|_| bad("invalid interval_minutes"))?;
                if v <= 0 {
                    return Err(Error::NonMonotonic(format!(
                        "interval_minutes={v} does not advance time"
                    )));
                }
                interval = Some(u32::try_from(v).map_err(|_| bad("interval_minutes too large"))?);
            }
            "start" => {
                start = Some(
                    NaiveDateTime::parse_from_str(value, TIME_FORMAT)
                        .or_else(|_| NaiveDateTime::parse_from_str(value, "%Y-%m-%dT%H:%M"))
                        .map_err(|_| bad("invalid start timestamp"))?,
                )
            }
            _ => return Err(bad(&format!("unknown key `{key}`"))),
        }
    }
    let (n, m, interval, start) = match (n, m, interval, start) {
        (Some(n), Some(m), Some(i), Some(s)) => (n, m, i, s),
        _ => return Err(bad("header needs n, m, interval_minutes and start")),
    };
    if n == 0 || m == 0 {
        return Err(bad("grid extents must be positive"));
    }
    Ok((n, m, interval, start))
}
