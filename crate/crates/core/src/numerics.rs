//! Flat parameter vectors with a fixed two-segment layout.
//!
//! A [`ParamVector`] stores every trainable scalar of a model contiguously.
//! Its [`Layout`] splits the storage into a `feature` segment (the feature
//! extractor) followed by a `classifier` segment. The layout is fixed when the
//! vector is built and never changes afterwards.
//!
//! Slice-level kernels (`dot`, `axpy`, ...) are exposed as free functions so
//! they work on whole vectors and on single segments alike.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;

pub const CHECKPOINT_MAGIC: &str = "GESTURv1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Feature,
    Classifier,
}

impl Segment {
    pub const ALL: [Segment; 2] = [Segment::Feature, Segment::Classifier];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Feature => "feature",
            Segment::Classifier => "classifier",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "feature" => Some(Segment::Feature),
            "classifier" => Some(Segment::Classifier),
            _ => None,
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentRange {
    pub segment: Segment,
    pub offset: usize,
    pub len: usize,
}

impl SegmentRange {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Feature segment first, classifier segment second, no gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    segments: [SegmentRange; 2],
}

impl Layout {
    pub fn new(feature_len: usize, classifier_len: usize) -> Self {
        Self {
            segments: [
                SegmentRange {
                    segment: Segment::Feature,
                    offset: 0,
                    len: feature_len,
                },
                SegmentRange {
                    segment: Segment::Classifier,
                    offset: feature_len,
                    len: classifier_len,
                },
            ],
        }
    }

    /// Rebuilds a layout from an explicit table, rejecting anything that is
    /// not exactly a contiguous `feature` + `classifier` cover.
    pub fn from_table(table: &[(String, usize, usize)]) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "layout table",
            detail,
        };
        if table.len() != 2 {
            return Err(bad(format!("expected 2 segments, found {}", table.len())));
        }
        let mut lens = [None, None];
        let mut cursor = 0usize;
        for (name, offset, len) in table {
            let seg =
                Segment::from_name(name).ok_or_else(|| bad(format!("unknown segment {name:?}")))?;
            if *offset != cursor {
                return Err(bad(format!(
                    "segment {name} starts at {offset}, expected {cursor}"
                )));
            }
            let slot = &mut lens[seg as usize];
            if slot.is_some() {
                return Err(bad(format!("duplicate segment {name}")));
            }
            *slot = Some((*offset, *len));
            cursor += len;
        }
        let (f_off, f_len) = lens[0].unwrap();
        let (c_off, c_len) = lens[1].unwrap();
        if f_off != 0 || c_off != f_len {
            return Err(bad("feature segment must precede classifier segment".into()));
        }
        Ok(Layout::new(f_len, c_len))
    }

    pub fn segments(&self) -> &[SegmentRange] {
        &self.segments
    }

    pub fn get(&self, segment: Segment) -> SegmentRange {
        self.segments[segment as usize]
    }

    pub fn range(&self, segment: Segment) -> Range<usize> {
        self.get(segment).range()
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape(format!(
                "{} values for a layout of length {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, segment: Segment) -> &[f64] {
        &self.values[self.layout.range(segment)]
    }

    pub fn segment_mut(&mut self, segment: Segment) -> &mut [f64] {
        let r = self.layout.range(segment);
        &mut self.values[r]
    }

    pub fn view(&self, segment: Segment) -> SegmentView<'_> {
        SegmentView {
            parent: self,
            segment,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout)
    }

    fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Shape(format!(
                "layouts differ: {:?} vs {:?}",
                self.layout, other.layout
            )));
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        dot(&self.values, &other.values)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// `alpha * x + y` with `self` as `x`.
    pub fn axpy(&self, alpha: f64, y: &ParamVector) -> Result<ParamVector> {
        self.check_layout(y)?;
        Ok(Self {
            values: axpy(alpha, &self.values, &y.values)?,
            layout: self.layout,
        })
    }

    pub fn scale(&self, alpha: f64) -> ParamVector {
        Self {
            values: scale(alpha, &self.values),
            layout: self.layout,
        }
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other)?;
        Ok(Self {
            values: sub(&self.values, &other.values)?,
            layout: self.layout,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Serializes to the checkpoint byte format.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        out.push_str(&format!("segments {}\n", self.layout.segments().len()));
        for s in self.layout.segments() {
            out.push_str(&format!("{} {} {}\n", s.segment, s.offset, s.len));
        }
        out.push_str(&format!("values {}\n", self.values.len()));
        let mut bytes = out.into_bytes();
        bytes.reserve(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "checkpoint",
            detail,
        };
        let mut cursor = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[cursor..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header".into()))?;
            cursor += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not utf-8".into()))
        };
        let magic = next_line()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let count = parse_tagged(next_line()?, "segments").map_err(bad)?;
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next_line()?;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 3 {
                return Err(bad(format!("bad segment line {line:?}")));
            }
            let offset = parts[1]
                .parse()
                .map_err(|_| bad(format!("bad offset in {line:?}")))?;
            let len = parts[2]
                .parse()
                .map_err(|_| bad(format!("bad length in {line:?}")))?;
            table.push((parts[0].to_string(), offset, len));
        }
        let n = parse_tagged(next_line()?, "values").map_err(bad)?;
        let layout = Layout::from_table(&table)?;
        if layout.len() != n {
            return Err(bad(format!(
                "layout covers {} values but header declares {n}",
                layout.len()
            )));
        }
        let payload = &bytes[cursor..];
        if payload.len() != n * 8 {
            return Err(bad(format!(
                "expected {} payload bytes, found {}",
                n * 8,
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ParamVector::from_values(layout, values)
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_checkpoint_bytes())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&fsutil::read(path)?)
    }
}

fn parse_tagged(line: &str, tag: &str) -> std::result::Result<usize, String> {
    line.strip_prefix(tag)
        .and_then(|r| r.strip_prefix(' '))
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| format!("expected `{tag} N`, found {line:?}"))
}

/// Read-only view of one named segment.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    parent: &'a ParamVector,
    segment: Segment,
}

impl<'a> SegmentView<'a> {
    pub fn segment(&self) -> Segment {
        self.segment
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.parent.segment(self.segment)
    }
}

impl std::ops::Deref for SegmentView<'_> {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        self.as_slice()
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "length {} vs length {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_len(x, y)?;
    Ok(x.iter().zip(y).map(|(xi, yi)| alpha * xi + yi).collect())
}

pub fn scale(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

pub fn zeros_like(a: &[f64]) -> Vec<f64> {
    vec![0.0; a.len()]
}
