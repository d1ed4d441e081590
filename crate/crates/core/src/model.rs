//! Labeled point data and the x-sorted dataset every scan reads from.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in the plane carrying a binary label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

impl LabeledPoint {
    pub fn new(x: f64, y: f64, label: u8) -> Result<Self> {
        let p = Self { x, y, label };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::InvalidPoint(format!(
                "non-finite coordinate ({}, {})",
                self.x, self.y
            )));
        }
        if self.label > 1 {
            return Err(Error::InvalidPoint(format!("label {} is not 0 or 1", self.label)));
        }
        Ok(())
    }
}

/// Points sorted ascending by x, ties broken by y and then by input order.
///
/// Positions in the sorted order are called x-ranks. The public order-statistic
/// accessors are 1-based; slices returned by [`Dataset::xs`] and friends are
/// 0-based as usual.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
    labels: Vec<u8>,
    input_index: Vec<usize>,
    ones_total: usize,
}

impl Dataset {
    pub fn new(points: Vec<LabeledPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        for p in &points {
            p.validate()?;
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&points[a], &points[b]);
            pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(a.cmp(&b))
        });
        let xs = order.iter().map(|&i| points[i].x).collect();
        let ys = order.iter().map(|&i| points[i].y).collect();
        let labels: Vec<u8> = order.iter().map(|&i| points[i].label).collect();
        let ones_total = labels.iter().map(|&l| l as usize).sum();
        Ok(Self {
            xs,
            ys,
            labels,
            input_index: order,
            ones_total,
        })
    }

    /// Same geometry with a new label vector given in x-rank order.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} labels, got {}",
                self.labels.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidPoint(format!("label {bad} is not 0 or 1")));
        }
        let ones_total = labels.iter().map(|&l| l as usize).sum();
        Ok(Self {
            xs: self.xs.clone(),
            ys: self.ys.clone(),
            labels,
            input_index: self.input_index.clone(),
            ones_total,
        })
    }

    pub fn n_total(&self) -> usize {
        self.xs.len()
    }

    pub fn ones_total(&self) -> usize {
        self.ones_total
    }

    /// Overall proportion of label-1 points.
    pub fn pbar(&self) -> f64 {
        self.ones_total as f64 / self.n_total() as f64
    }

    pub fn is_degenerate(&self) -> bool {
        self.ones_total == 0 || self.ones_total == self.n_total()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Position of each sorted point in the original input.
    pub fn input_index(&self) -> &[usize] {
        &self.input_index
    }

    pub fn point(&self, idx: usize) -> LabeledPoint {
        LabeledPoint {
            x: self.xs[idx],
            y: self.ys[idx],
            label: self.labels[idx],
        }
    }

    pub fn points(&self) -> impl Iterator<Item = LabeledPoint> + '_ {
        (0..self.n_total()).map(move |i| self.point(i))
    }

    /// x-coordinate of the order statistic `X_(round(r) ∧ N)`, clamped below at 1.
    pub fn order_stat_x(&self, r: f64) -> f64 {
        order_stat(&self.xs, r)
    }

    /// Number of points inside the closed rectangle `[x_lo, x_hi] × [y_lo, y_hi]`.
    pub fn count_in(&self, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> (usize, usize) {
        let start = self.xs.partition_point(|&x| x < x_lo);
        let end = self.xs.partition_point(|&x| x <= x_hi);
        let mut n = 0;
        let mut ones = 0;
        for idx in start..end {
            let y = self.ys[idx];
            if y >= y_lo && y <= y_hi {
                n += 1;
                ones += self.labels[idx] as usize;
            }
        }
        (n, ones)
    }
}

/// Round half up and clamp into `[1, n]`.
///
/// This is the 1-based index behind `X_(r) := X_(round(r) ∧ N)`.
pub fn rank_index(r: f64, n: usize) -> usize {
    debug_assert!(n > 0);
    let rounded = (r + 0.5).floor();
    if rounded.is_nan() || rounded < 1.0 {
        1
    } else if rounded >= n as f64 {
        n
    } else {
        rounded as usize
    }
}

/// Order statistic of an ascending slice at real index `r` (1-based, see [`rank_index`]).
pub fn order_stat(sorted: &[f64], r: f64) -> f64 {
    assert!(!sorted.is_empty(), "order statistic of an empty sample");
    sorted[rank_index(r, sorted.len()) - 1]
}

fn parse_err(row: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        message: message.into(),
    }
}

/// Read a CSV with header `x,y,label` (columns may appear in any order).
///
/// Row numbers in errors are 1-based file lines, so the header is row 1.
pub fn ingest_csv<R: Read>(source: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(parse_err(1, e.to_string())),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput);
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let (cx, cy, cl) = (column("x")?, column("y")?, column("label")?);

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(row, e.to_string())
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |c: usize, name: &str| {
            record
                .get(c)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| parse_err(row, format!("missing `{name}`")))
        };
        let coord = |c: usize, name: &str| -> Result<f64> {
            let raw = field(c, name)?;
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(row, format!("`{name}` is not a number: {raw:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, format!("`{name}` is not finite: {raw:?}")));
            }
            Ok(v)
        };
        let x = coord(cx, "x")?;
        let y = coord(cy, "y")?;
        let label = match field(cl, "label")? {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(row, format!("label must be 0 or 1, got {other:?}"))),
        };
        points.push(LabeledPoint { x, y, label });
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    Dataset::new(points)
}

/// Write points in sorted order with a `x,y,label` header.
pub fn write_csv<W: Write>(points: impl IntoIterator<Item = LabeledPoint>, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["x", "y", "label"]).map_err(csv_io)?;
    for p in points {
        writer
            .write_record([p.x.to_string(), p.y.to_string(), p.label.to_string()])
            .map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Ascending comparison on `f64` used for y-sorting inside strips.
pub(crate) fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}
