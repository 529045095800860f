//! The e.d.f. of the p-values and its rescaled fluctuation paths.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::c1;
use crate::normal::upper_tail;

pub const DEFAULT_GRID_POINTS: usize = 513;

/// Strictly increasing evaluation points in `[0, 1]`, containing both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "Vec<f64>")]
pub struct ProcessGrid {
    points: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GridRepr {
    Count(usize),
    Points(Vec<f64>),
}

impl TryFrom<GridRepr> for ProcessGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        match r {
            GridRepr::Count(n) => ProcessGrid::uniform(n),
            GridRepr::Points(p) => ProcessGrid::new(p),
        }
    }
}

impl From<ProcessGrid> for Vec<f64> {
    fn from(g: ProcessGrid) -> Self {
        g.points
    }
}

impl Default for ProcessGrid {
    fn default() -> Self {
        ProcessGrid::uniform(DEFAULT_GRID_POINTS).unwrap()
    }
}

impl ProcessGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a grid needs at least the two endpoints"));
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::invalid("grid must start at 0 and end at 1"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("grid points must be strictly increasing"));
        }
        Ok(ProcessGrid { points })
    }

    /// `n` equispaced points `0, 1/(n-1), ..., 1`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a uniform grid needs at least 2 points"));
        }
        let d = (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| i as f64 / d).collect();
        points[n - 1] = 1.0;
        Ok(ProcessGrid { points })
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the point closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let i = self.points.partition_point(|&p| p < t);
        if i == 0 {
            0
        } else if i == self.points.len() || t - self.points[i - 1] <= self.points[i] - t {
            i - 1
        } else {
            i
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    RawEdf,
    RescaledEdf,
    ModifiedRescaled,
    LimitDraw,
}

impl PathKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathKind::RawEdf => "raw_edf",
            PathKind::RescaledEdf => "rescaled_edf",
            PathKind::ModifiedRescaled => "modified_rescaled",
            PathKind::LimitDraw => "limit_draw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "raw_edf" => PathKind::RawEdf,
            "rescaled_edf" => PathKind::RescaledEdf,
            "modified_rescaled" => PathKind::ModifiedRescaled,
            "limit_draw" => PathKind::LimitDraw,
            _ => return None,
        })
    }
}

/// Values of a path on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessPath {
    pub grid: ProcessGrid,
    pub values: Vec<f64>,
    pub kind: PathKind,
}

impl ProcessPath {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// CSV with a `t,value` header. Each entry of `comments` becomes a leading
    /// `# ` line, followed by a `# kind: ...` line.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        let mut out = String::new();
        for c in comments {
            for line in c.lines() {
                writeln!(out, "# {line}").unwrap();
            }
        }
        writeln!(out, "# kind: {}", self.kind.as_str()).unwrap();
        out.push_str("t,value\n");
        for (t, v) in self.grid.points().iter().zip(&self.values) {
            writeln!(out, "{t},{v}").unwrap();
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn to_csv_string(&self, comments: &[String]) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, comments).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// Parses the format written by [`ProcessPath::write_csv`]. A missing
    /// `kind` comment defaults to [`PathKind::RescaledEdf`].
    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut kind = PathKind::RescaledEdf;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# kind:") {
                kind = PathKind::parse(rest.trim())
                    .ok_or_else(|| Error::invalid(format!("unknown path kind {:?}", rest.trim())))?;
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
            return Err(Error::invalid("path CSV header must be t,value"));
        }
        let mut ts = Vec::new();
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("not a number: {s:?}")))
            };
            if rec.len() != 2 {
                return Err(Error::invalid("path CSV rows must have two fields"));
            }
            ts.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        Ok(ProcessPath {
            grid: ProcessGrid::new(ts)?,
            values,
            kind,
        })
    }
}

/// p-values `upper_tail(Y_i)`, sorted ascending.
pub fn sorted_pvalues(y: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = y.iter().map(|&v| upper_tail(v)).collect();
    p.sort_unstable_by(f64::total_cmp);
    p
}

/// `F_m(t)` at each of the increasing points `ts`, given sorted p-values.
/// Ties `p_i = t` count as `p_i <= t`.
pub fn edf_at_sorted(sorted: &[f64], ts: &[f64], out: &mut [f64]) {
    let m = sorted.len() as f64;
    let mut k = 0;
    for (o, &t) in out.iter_mut().zip(ts) {
        while k < sorted.len() && sorted[k] <= t {
            k += 1;
        }
        *o = k as f64 / m;
    }
}

/// `F_m(t) = m^{-1} #{i : upper_tail(Y_i) <= t}` on the grid.
pub fn edf(y: &[f64], grid: &ProcessGrid) -> Result<ProcessPath> {
    if y.is_empty() {
        return Err(Error::invalid("the e.d.f. needs at least one value"));
    }
    let sorted = sorted_pvalues(y);
    let mut values = vec![0.0; grid.len()];
    edf_at_sorted(&sorted, grid.points(), &mut values);
    Ok(ProcessPath {
        grid: grid.clone(),
        values,
        kind: PathKind::RawEdf,
    })
}

/// Writes `scale * (F(t) - t)` over `edf_values`, pinned to zero at the ends.
pub fn rescale_in_place(ts: &[f64], values: &mut [f64], scale: f64) {
    for (v, &t) in values.iter_mut().zip(ts) {
        *v = if t == 0.0 || t == 1.0 { 0.0 } else { scale * (*v - t) };
    }
}

/// `r_m (F_m - I)`.
pub fn rescaled_path(y: &[f64], r_m: f64, grid: &ProcessGrid) -> Result<ProcessPath> {
    check_rate(r_m)?;
    let mut p = edf(y, grid)?;
    rescale_in_place(grid.points(), &mut p.values, r_m);
    p.kind = PathKind::RescaledEdf;
    Ok(p)
}

/// `r_m (F~_m - I) = r_m (F_m - I) - c_1(t) r_m mean(Y)`.
pub fn modified_path(y: &[f64], r_m: f64, grid: &ProcessGrid) -> Result<ProcessPath> {
    let mut p = rescaled_path(y, r_m, grid)?;
    let shift = r_m * mean(y);
    for (v, &t) in p.values.iter_mut().zip(grid.points()) {
        *v -= c1(t) * shift;
    }
    p.kind = PathKind::ModifiedRescaled;
    Ok(p)
}

/// `h_t(x) = 1{upper_tail(x) <= t} - t - c_1(t) x`.
pub fn h_t(x: f64, t: f64) -> f64 {
    let ind = if upper_tail(x) <= t { 1.0 } else { 0.0 };
    ind - t - c1(t) * x
}

pub(crate) fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

fn check_rate(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            what: "rate",
            value: r,
        })
    }
}
