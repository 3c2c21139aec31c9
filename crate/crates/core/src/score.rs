//! Strict parsing of model output into compass scores.
//!
//! Accepted: optional surrounding whitespace, `[`, number, `,` with optional
//! spaces on either side, number, `]`. Numbers are integers or decimals with
//! an optional sign. Anything else is a [`ScoreError::Format`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const AXIS_MIN: f64 = -10.0;
pub const AXIS_MAX: f64 = 10.0;
/// Bins per axis in the heatmap grid (-10..=10).
pub const GRID_SIDE: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Economic,
    Democracy,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Economic, Axis::Democracy];

    pub fn name(&self) -> &'static str {
        match self {
            Axis::Economic => "economic",
            Axis::Democracy => "democracy",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("response is not in [economic, democracy] format: {0:?}")]
    Format(String),
    #[error("{axis} score {value} is outside [-10, 10]")]
    Range { axis: Axis, value: f64 },
}

/// A point on the compass. Both coordinates lie in [-10, 10].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScore", into = "RawScore")]
pub struct CompassScore {
    economic: f64,
    democracy: f64,
}

#[derive(Serialize, Deserialize)]
struct RawScore {
    economic: f64,
    democracy: f64,
}

impl TryFrom<RawScore> for CompassScore {
    type Error = ScoreError;

    fn try_from(raw: RawScore) -> Result<Self, Self::Error> {
        CompassScore::new(raw.economic, raw.democracy)
    }
}

impl From<CompassScore> for RawScore {
    fn from(s: CompassScore) -> Self {
        RawScore {
            economic: s.economic,
            democracy: s.democracy,
        }
    }
}

fn check_axis(axis: Axis, value: f64) -> Result<f64, ScoreError> {
    if value.is_finite() && (AXIS_MIN..=AXIS_MAX).contains(&value) {
        // folds -0.0 into 0.0
        Ok(value + 0.0)
    } else {
        Err(ScoreError::Range { axis, value })
    }
}

impl CompassScore {
    pub const ORIGIN: CompassScore = CompassScore {
        economic: 0.0,
        democracy: 0.0,
    };

    pub fn new(economic: f64, democracy: f64) -> Result<Self, ScoreError> {
        Ok(Self {
            economic: check_axis(Axis::Economic, economic)?,
            democracy: check_axis(Axis::Democracy, democracy)?,
        })
    }

    pub fn economic(&self) -> f64 {
        self.economic
    }

    pub fn democracy(&self) -> f64 {
        self.democracy
    }

    pub fn axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Economic => self.economic,
            Axis::Democracy => self.democracy,
        }
    }

    pub fn is_integer_pair(&self) -> bool {
        self.economic.fract() == 0.0 && self.democracy.fract() == 0.0
    }

    pub fn distance(&self, other: &CompassScore) -> f64 {
        (self.economic - other.economic).hypot(self.democracy - other.democracy)
    }
}

/// Renders in the response format, e.g. `[-3, 2.5]`.
impl fmt::Display for CompassScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.economic, self.democracy)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn skip_spaces(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t')) {
            self.pos += 1;
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        self.pos - start
    }

    /// `[+-]? digits ( '.' digits )?`
    fn number(&mut self) -> Option<f64> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        if self.digits() == 0 {
            return None;
        }
        if self.eat(b'.') && self.digits() == 0 {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

fn excerpt(raw: &str) -> String {
    const MAX: usize = 80;
    if raw.chars().count() <= MAX {
        raw.to_string()
    } else {
        let mut s: String = raw.chars().take(MAX).collect();
        s.push('…');
        s
    }
}

pub fn parse_score(raw: &str) -> Result<CompassScore, ScoreError> {
    let format_err = || ScoreError::Format(excerpt(raw));
    let mut cur = Cursor {
        bytes: raw.trim().as_bytes(),
        pos: 0,
    };
    if !cur.eat(b'[') {
        return Err(format_err());
    }
    let economic = cur.number().ok_or_else(format_err)?;
    cur.skip_spaces();
    if !cur.eat(b',') {
        return Err(format_err());
    }
    cur.skip_spaces();
    let democracy = cur.number().ok_or_else(format_err)?;
    if !cur.eat(b']') || cur.pos != cur.bytes.len() {
        return Err(format_err());
    }
    CompassScore::new(economic, democracy)
}

/// Heatmap bin of a score: each axis rounded half away from zero.
pub fn score_to_bin(score: &CompassScore) -> (i32, i32) {
    let bin = |v: f64| (v.round() as i32).clamp(AXIS_MIN as i32, AXIS_MAX as i32);
    (bin(score.economic), bin(score.democracy))
}

/// Row-major index of a bin in a 21×21 grid.
pub fn bin_index(bin: (i32, i32)) -> usize {
    let offset = |v: i32| (v - AXIS_MIN as i32) as usize;
    offset(bin.0) * GRID_SIDE + offset(bin.1)
}
