use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, contiguous slice of the flat parameter array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn new(name: impl Into<String>, start: usize, len: usize) -> Self {
        Self {
            name: name.into(),
            start,
            len,
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Flat parameter values with segment boundaries.
///
/// Segments tile `values` exactly, in order. Derefs to `[f64]` so objectives
/// and update rules can work on plain slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        validate_layout(&segments, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "parameter {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { values, segments })
    }

    /// A single segment named `w` spanning all values.
    pub fn flat(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![Segment::new("w", 0, n)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.range()])
    }

    /// Replaces the values, keeping the layout.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.segments.clone())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

pub fn validate_layout(segments: &[Segment], len: usize) -> Result<()> {
    let mut cursor = 0;
    for s in segments {
        if s.start != cursor {
            return Err(Error::config(format!(
                "segment `{}` starts at {} but previous segment ended at {cursor}",
                s.name, s.start
            )));
        }
        cursor += s.len;
    }
    if cursor != len {
        return Err(Error::config(format!(
            "segments cover {cursor} values but the vector has {len}"
        )));
    }
    Ok(())
}

/// Index ranges of the named segments; an empty name list selects the last
/// two segments (or all of them when there are fewer).
pub fn subset_ranges(
    segments: &[Segment],
    names: &[String],
) -> Result<Vec<std::ops::Range<usize>>> {
    if names.is_empty() {
        let skip = segments.len().saturating_sub(2);
        return Ok(segments[skip..].iter().map(Segment::range).collect());
    }
    names
        .iter()
        .map(|n| {
            segments
                .iter()
                .find(|s| &s.name == n)
                .map(Segment::range)
                .ok_or_else(|| Error::config(format!("unknown parameter segment `{n}`")))
        })
        .collect()
}

/// Euclidean norm restricted to the given index ranges.
pub fn subset_norm(v: &[f64], ranges: &[std::ops::Range<usize>]) -> f64 {
    ranges
        .iter()
        .flat_map(|r| v[r.clone()].iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}
