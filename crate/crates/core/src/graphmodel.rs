//! Random connection model: Poisson many attributed vertices and
//! conditionally independent edges with probability `kappa(x, y)`.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::metric::{AttributeDataset, Metric, Point};
use crate::psmm::{DiscreteMeasure, ProbabilityMeasure};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// Product of coordinates of both endpoints.
    ChungLu,
    Constant { p: f64 },
    /// `exp(-d(x, y) / scale)`.
    InverseDistance { scale: f64 },
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    /// `chung-lu`, `constant:P` or `inverse-distance:SCALE`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::InvalidParameter(format!("kernel `{name}` needs :{what}")))?
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad {what} in kernel `{s}`")))
        };
        let kind = match name.replace('_', "-").as_str() {
            "chung-lu" => KernelKind::ChungLu,
            "constant" => KernelKind::Constant { p: num("P")? },
            "inverse-distance" => KernelKind::InverseDistance {
                scale: num("SCALE")?,
            },
            _ => return Err(Error::InvalidParameter(format!("unknown kernel `{s}`"))),
        };
        kind.validated()
    }
}

impl KernelKind {
    pub fn validated(self) -> Result<Self> {
        match self {
            KernelKind::Constant { p } if !(0.0..=1.0).contains(&p) => Err(
                Error::InvalidParameter(format!("constant kernel needs p in [0,1], got {p}")),
            ),
            KernelKind::InverseDistance { scale } if !(scale.is_finite() && scale > 0.0) => Err(
                Error::InvalidParameter(format!("kernel scale must be positive, got {scale}")),
            ),
            k => Ok(k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub metric: Metric,
    pub dim: usize,
}

impl Kernel {
    pub fn new(kind: KernelKind, metric: Metric, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(Self {
            kind: kind.validated()?,
            metric,
            dim,
        })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::ChungLu => x.iter().zip(y).map(|(a, b)| a * b).product(),
            KernelKind::Constant { p } => p,
            KernelKind::InverseDistance { scale } => (-self.metric.distance(x, y) / scale).exp(),
        }
    }

    /// Lipschitz constant in one argument with respect to the attribute metric.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            // |prod x - prod x'| <= sum |x_j - x'_j| on the unit cube
            KernelKind::ChungLu => match self.metric {
                Metric::SupNorm => self.dim as f64,
                Metric::Euclidean => (self.dim as f64).sqrt(),
            },
            KernelKind::Constant { .. } => 0.0,
            KernelKind::InverseDistance { scale } => 1.0 / scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub attr: Point,
    pub id: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributedGraph {
    pub vertices: Vec<Vertex>,
    /// Unordered pairs stored as `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl AttributedGraph {
    /// Normalises, deduplicates and validates the edge list.
    pub fn new(vertices: Vec<Vertex>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = vertices.len();
        let mut norm = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at vertex {i}")));
            }
            if i.max(j) >= n {
                return Err(Error::IndexOutOfRange {
                    index: i.max(j),
                    len: n,
                });
            }
            norm.push((i.min(j), i.max(j)));
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Self {
            vertices,
            edges: norm,
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn attributes(&self) -> Vec<Point> {
        self.vertices.iter().map(|v| v.attr.clone()).collect()
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::new(self.len(), &self.edges)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.len()];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: AttributedGraph = serde_json::from_str(text)?;
        Self::new(raw.vertices, raw.edges)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Graphviz export; vertices are shaded by mean attribute, dark for small.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "graph {name} {{");
        let _ = writeln!(out, "  node [shape=circle, style=filled, label=\"\", width=0.15];");
        for (i, v) in self.vertices.iter().enumerate() {
            let mean = if v.attr.is_empty() {
                0.0
            } else {
                v.attr.iter().sum::<f64>() / v.attr.len() as f64
            };
            let g = (mean.clamp(0.0, 1.0) * 230.0).round() as u8;
            let _ = writeln!(out, "  {i} [fillcolor=\"#{g:02x}{g:02x}{g:02x}\"];");
        }
        for (i, j) in &self.edges {
            let _ = writeln!(out, "  {i} -- {j};");
        }
        out.push_str("}\n");
        out
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}

/// Dense bit matrix plus neighbour lists for a simple undirected graph.
#[derive(Clone, Debug)]
pub struct Adjacency {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            bits[i * words + j / 64] |= 1 << (j % 64);
            bits[j * words + i / 64] |= 1 << (i % 64);
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Self {
            n,
            words,
            bits,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn has(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Law of a single vertex attribute.
#[derive(Clone, Copy, Debug)]
pub enum AttributeLaw<'a> {
    /// Uniform over the data points.
    Empirical(&'a AttributeDataset),
    Discrete(&'a ProbabilityMeasure),
}

pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::InvalidParameter(format!("poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

/// Identifier source that never repeats a value within one graph.
#[derive(Default)]
pub(crate) struct IdentifierPool {
    seen: HashSet<u64>,
}

impl IdentifierPool {
    pub(crate) fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if self.seen.insert(u.to_bits()) {
                return u;
            }
        }
    }
}

/// Draws `N ~ Poi(intensity)` vertices with i.i.d. attributes from `law`,
/// uniform identifiers, and each edge independently with probability kappa.
pub fn sample_graph<R: Rng + ?Sized>(
    law: AttributeLaw<'_>,
    intensity: f64,
    kernel: &Kernel,
    rng: &mut R,
) -> Result<AttributedGraph> {
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(Error::InvalidParameter(format!("intensity must be positive, got {intensity}")));
    }
    let n = sample_poisson(intensity, rng)?;
    let attrs: Vec<Point> = match law {
        AttributeLaw::Empirical(x) => {
            if x.is_empty() {
                return Err(Error::Precondition("dataset is empty".into()));
            }
            (0..n)
                .map(|_| x.points()[rng.random_range(0..x.n())].clone())
                .collect()
        }
        AttributeLaw::Discrete(mu) => {
            let idx = WeightedIndex::new(mu.weights())
                .map_err(|e| Error::InvalidParameter(format!("attribute measure: {e}")))?;
            (0..n).map(|_| mu.support()[idx.sample(rng)].clone()).collect()
        }
    };
    let mut ids = IdentifierPool::default();
    let vertices: Vec<Vertex> = attrs
        .into_iter()
        .map(|attr| Vertex {
            attr,
            id: ids.draw(rng),
        })
        .collect();
    let edges = independent_edges(&vertices, kernel, rng);
    Ok(AttributedGraph { vertices, edges })
}

pub(crate) fn independent_edges<R: Rng + ?Sized>(
    vertices: &[Vertex],
    kernel: &Kernel,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            if rng.random::<f64>() < kernel.eval(&vertices[i].attr, &vertices[j].attr) {
                edges.push((i, j));
            }
        }
    }
    edges
}
