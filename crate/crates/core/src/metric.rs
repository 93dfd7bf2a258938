//! Attribute space `[0,1]^d`, its metric, and regular grid partitions.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = Vec<f64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    #[serde(alias = "sup", alias = "supnorm", alias = "linf")]
    SupNorm,
    #[serde(alias = "l2")]
    Euclidean,
}

impl Metric {
    pub fn distance(self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Metric::SupNorm => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            Metric::Euclidean => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Diameter of a box with side lengths all equal to `side` in dimension `d`.
    pub fn cube_diameter(self, d: usize, side: f64) -> f64 {
        match self {
            Metric::SupNorm => side,
            Metric::Euclidean => side * (d as f64).sqrt(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" | "sup-norm" | "supnorm" | "linf" => Ok(Metric::SupNorm),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceConfig {
    dim: usize,
    metric: Metric,
}

impl SpaceConfig {
    pub fn new(dim: usize, metric: Metric) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(Self { dim, metric })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn diameter(&self) -> f64 {
        self.metric.cube_diameter(self.dim, 1.0)
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.metric.distance(x, y)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(())
    }
}

/// Axis-aligned box `[lower, upper)`, closed on the upper side along axes
/// where it touches 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Cell {
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Partition {
    space: SpaceConfig,
    k_per_axis: usize,
    cells: Vec<Cell>,
    cell_diams: Vec<f64>,
    max_diam: f64,
}

/// Smallest `k` with `k^d >= m`.
fn axis_resolution(m: usize, d: usize) -> usize {
    let covers = |k: usize| -> bool {
        let mut acc: u128 = 1;
        for _ in 0..d {
            acc = acc.saturating_mul(k as u128);
            if acc >= m as u128 {
                return true;
            }
        }
        acc >= m as u128
    };
    let mut k = ((m as f64).powf(1.0 / d as f64).round() as usize).max(1);
    while k > 1 && covers(k - 1) {
        k -= 1;
    }
    while !covers(k) {
        k += 1;
    }
    k
}

/// Regular grid with `ceil(m_request^{1/d})` cells per axis.
pub fn build_grid_partition(space: SpaceConfig, m_request: usize) -> Result<Partition> {
    if m_request == 0 {
        return Err(Error::InvalidParameter("partition needs at least one cell".into()));
    }
    let d = space.dim();
    let k = axis_resolution(m_request, d);
    let m = k
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidParameter(format!("grid {k}^{d} is too large")))?;
    let mut cells = Vec::with_capacity(m);
    for idx in 0..m {
        let mut rest = idx;
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for _ in 0..d {
            let i = rest % k;
            rest /= k;
            lower.push(i as f64 / k as f64);
            upper.push((i + 1) as f64 / k as f64);
        }
        cells.push(Cell { lower, upper });
    }
    let diam = space.metric().cube_diameter(d, 1.0 / k as f64);
    Ok(Partition {
        space,
        k_per_axis: k,
        cells,
        cell_diams: vec![diam; m],
        max_diam: diam,
    })
}

impl Partition {
    pub fn space(&self) -> &SpaceConfig {
        &self.space
    }

    pub fn k_per_axis(&self) -> usize {
        self.k_per_axis
    }

    pub fn m(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_diams(&self) -> &[f64] {
        &self.cell_diams
    }

    pub fn max_diam(&self) -> f64 {
        self.max_diam
    }

    /// Index of the cell containing `x`; the first axis varies fastest.
    pub fn cell_index(&self, x: &[f64]) -> Result<usize> {
        self.space.check_point(x)?;
        let k = self.k_per_axis;
        let mut idx = 0;
        let mut stride = 1;
        for &v in x {
            let i = ((v * k as f64).floor() as usize).min(k - 1);
            idx += i * stride;
            stride *= k;
        }
        Ok(idx)
    }

    pub fn contains(&self, k: usize, x: &[f64]) -> bool {
        matches!(self.cell_index(x), Ok(i) if i == k)
    }

    /// Uniform point in cell `k`. Rounding can push a draw onto a neighbouring
    /// cell's boundary; such draws are rejected so membership stays exact.
    pub fn sample_uniform_in_cell<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Point> {
        let cell = self.cells.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.cells.len(),
        })?;
        loop {
            let p: Point = cell
                .lower
                .iter()
                .zip(&cell.upper)
                .map(|(l, u)| l + rng.random::<f64>() * (u - l))
                .collect();
            if self.contains(k, &p) {
                return Ok(p);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeDataset {
    dim: usize,
    points: Vec<Point>,
}

impl AttributeDataset {
    pub fn new(dim: usize, points: Vec<Point>) -> Result<Self> {
        let space = SpaceConfig::new(dim, Metric::SupNorm)?;
        for p in &points {
            space.check_point(p)?;
        }
        Ok(Self { dim, points })
    }

    /// One-dimensional convenience constructor.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.iter().map(|&v| vec![v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Reads decimal coordinates, one point per row. `dim` is inferred from
    /// the first row when not given.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        dim: Option<usize>,
        has_header: bool,
        source_name: &str,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        let mut dim = dim;
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let parse_err = |msg: String| Error::Parse {
                source_name: source_name.to_string(),
                row,
                msg,
            };
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let expected = *dim.get_or_insert(rec.len());
            if rec.len() != expected {
                return Err(parse_err(format!("expected {expected} columns, found {}", rec.len())));
            }
            let mut p = Vec::with_capacity(expected);
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(format!("`{field}` is not a number")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(parse_err(format!("value {v} is outside [0,1]")));
                }
                p.push(v);
            }
            points.push(p);
        }
        let dim = dim.ok_or_else(|| Error::Parse {
            source_name: source_name.to_string(),
            row: 0,
            msg: "no data rows".into(),
        })?;
        Self::new(dim, points)
    }

    pub fn from_csv_path(path: &Path, dim: Option<usize>, has_header: bool) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, dim, has_header, &path.display().to_string())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
