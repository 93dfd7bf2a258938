//! Fused Gromov-Wasserstein distance with unit exponents.
//!
//! For couplings `pi` of weight vectors `h`, `g` the objective is
//! `sum_{ijkl} [(1-alpha) d(a_i, b_j) + alpha |S_A(i,k) - S_B(j,l)|] pi_ij pi_kl`.
//! Structure is `C` times the adjacency indicator unless stated otherwise.

mod exact;
mod ot;
mod plan;

pub use exact::{EXACT_CAP, fgw_exact_small};
pub use ot::solve_transport;
pub use plan::{
    DfEstimate, Evaluator, McConfig, McEstimate, ReplicateFgw, default_references,
    df_from_profiles, df_lower_bound, mc_expected_fgw, plan_exact_cost, proof_plan_cost,
    proof_plan_coupling, reference_profile, refined_fgw, run_replicate, summarize, worst_case_cost,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::graphmodel::{Adjacency, AttributedGraph};
use crate::metric::{Metric, Point};
use crate::{Error, Result};

const MARGINAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FgwParams {
    pub alpha: f64,
    /// Structural cost of a single edge.
    pub cap: f64,
    #[serde(default)]
    pub metric: Metric,
}

impl FgwParams {
    pub fn new(alpha: f64, cap: f64, metric: Metric) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0,1], got {alpha}")));
        }
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::InvalidParameter(format!("edge cost must be positive, got {cap}")));
        }
        Ok(Self { alpha, cap, metric })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureKind {
    #[default]
    Adjacency,
    /// Hop distance scaled into `[0, C]`; for exploration only.
    ShortestPath,
}

#[derive(Clone, Debug)]
pub enum Structure {
    /// `cap` on edges, zero elsewhere.
    Binary { cap: f64, adjacency: Adjacency },
    Dense(DMatrix<f64>),
}

#[derive(Clone, Debug)]
pub struct GraphMeasure {
    attributes: Vec<Point>,
    weights: Vec<f64>,
    structure: Structure,
}

impl GraphMeasure {
    pub fn from_dense(attributes: Vec<Point>, weights: Vec<f64>, structure: DMatrix<f64>) -> Result<Self> {
        let n = attributes.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if weights.len() != n || structure.nrows() != n || structure.ncols() != n {
            return Err(Error::InvalidParameter("graph measure components differ in size".into()));
        }
        if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("weights must be a probability vector".into()));
        }
        for i in 0..n {
            if structure[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter("structure diagonal must vanish".into()));
            }
            for k in 0..n {
                let s = structure[(i, k)];
                if s < 0.0 || s != structure[(k, i)] {
                    return Err(Error::InvalidParameter(
                        "structure must be symmetric and nonnegative".into(),
                    ));
                }
            }
        }
        Ok(Self {
            attributes,
            weights,
            structure: Structure::Dense(structure),
        })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Point] {
        &self.attributes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    #[inline]
    pub fn structure_entry(&self, i: usize, k: usize) -> f64 {
        match &self.structure {
            Structure::Binary { cap, adjacency } => {
                if adjacency.has(i, k) {
                    *cap
                } else {
                    0.0
                }
            }
            Structure::Dense(m) => m[(i, k)],
        }
    }

    pub fn structure_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.len(), |i, k| self.structure_entry(i, k))
    }

    pub fn max_structure(&self) -> f64 {
        match &self.structure {
            Structure::Binary { cap, adjacency } => {
                if adjacency.edge_count() > 0 {
                    *cap
                } else {
                    0.0
                }
            }
            Structure::Dense(m) => m.max(),
        }
    }
}

/// Uniform weights and `C`-scaled adjacency.
pub fn graph_to_measure(g: &AttributedGraph, params: &FgwParams) -> Result<GraphMeasure> {
    graph_to_measure_with(g, params, StructureKind::Adjacency)
}

pub fn graph_to_measure_with(
    g: &AttributedGraph,
    params: &FgwParams,
    kind: StructureKind,
) -> Result<GraphMeasure> {
    let n = g.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let adjacency = g.adjacency();
    let structure = match kind {
        StructureKind::Adjacency => Structure::Binary {
            cap: params.cap,
            adjacency,
        },
        StructureKind::ShortestPath => Structure::Dense(hop_structure(&adjacency, params.cap)),
    };
    Ok(GraphMeasure {
        attributes: g.attributes(),
        weights: vec![1.0 / n as f64; n],
        structure,
    })
}

/// `C * hops / (n - 1)`; unreachable pairs get `C`.
fn hop_structure(adj: &Adjacency, cap: f64) -> DMatrix<f64> {
    let n = adj.len();
    let scale = if n > 1 { cap / (n - 1) as f64 } else { 0.0 };
    let mut out = DMatrix::from_element(n, n, cap);
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &w in adj.neighbors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        for t in 0..n {
            if dist[t] != usize::MAX {
                out[(s, t)] = dist[t] as f64 * scale;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub matrix: DMatrix<f64>,
}

impl Coupling {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn product(p: &[f64], q: &[f64]) -> Self {
        Self {
            matrix: DMatrix::from_fn(p.len(), q.len(), |i, j| p[i] * q[j]),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.sum()).collect()
    }

    pub fn validate(&self, source: &[f64], target: &[f64]) -> Result<()> {
        let (n, m) = self.matrix.shape();
        if n != source.len() || m != target.len() {
            return Err(Error::InvalidCoupling(format!(
                "shape {n}x{m} does not match {}x{}",
                source.len(),
                target.len()
            )));
        }
        if self.matrix.iter().any(|x| !x.is_finite() || *x < -MARGINAL_TOL) {
            return Err(Error::InvalidCoupling("entries must be nonnegative".into()));
        }
        for (i, (r, w)) in self.row_sums().iter().zip(source).enumerate() {
            if (r - w).abs() > MARGINAL_TOL {
                return Err(Error::InvalidCoupling(format!("row {i} sums to {r}, expected {w}")));
            }
        }
        for (j, (c, w)) in self.col_sums().iter().zip(target).enumerate() {
            if (c - w).abs() > MARGINAL_TOL {
                return Err(Error::InvalidCoupling(format!(
                    "column {j} sums to {c}, expected {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

fn feature_matrix(a: &GraphMeasure, b: &GraphMeasure, metric: Metric) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        metric.distance(&a.attributes[i], &b.attributes[j])
    })
}

fn dot(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// `(A pi B)_{ij}` for 0/1 adjacencies given by neighbour lists.
fn adjacency_sandwich(a: &Adjacency, pi: &DMatrix<f64>, b: &Adjacency) -> DMatrix<f64> {
    let (n, m) = pi.shape();
    let mut api = DMatrix::<f64>::zeros(n, m);
    for i in 0..n {
        for &k in a.neighbors(i) {
            for l in 0..m {
                api[(i, l)] += pi[(k, l)];
            }
        }
    }
    let mut out = DMatrix::zeros(n, m);
    for j in 0..m {
        for &l in b.neighbors(j) {
            for i in 0..n {
                out[(i, j)] += api[(i, l)];
            }
        }
    }
    out
}

/// `G_ij = sum_{kl} |S_A(i,k) - S_B(j,l)| x_kl`, linear in `x`.
fn structure_tensor(a: &GraphMeasure, b: &GraphMeasure, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = x.shape();
    if let (
        Structure::Binary { cap: ca, adjacency: aa },
        Structure::Binary { cap: cb, adjacency: ab },
    ) = (&a.structure, &b.structure)
    {
        if ca == cb {
            // |cA - cB| = c (A + B - 2AB) entrywise for 0/1 matrices
            let p: Vec<f64> = x.row_iter().map(|r| r.sum()).collect();
            let q: Vec<f64> = x.column_iter().map(|c| c.sum()).collect();
            let ap: Vec<f64> = (0..n).map(|i| aa.neighbors(i).iter().map(|&k| p[k]).sum()).collect();
            let bq: Vec<f64> = (0..m).map(|j| ab.neighbors(j).iter().map(|&l| q[l]).sum()).collect();
            let s = adjacency_sandwich(aa, x, ab);
            return DMatrix::from_fn(n, m, |i, j| ca * (ap[i] + bq[j] - 2.0 * s[(i, j)]));
        }
    }
    let sa = a.structure_matrix();
    let sb = b.structure_matrix();
    DMatrix::from_fn(n, m, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..m {
                let w = x[(k, l)];
                if w != 0.0 {
                    acc += (sa[(i, k)] - sb[(j, l)]).abs() * w;
                }
            }
        }
        acc
    })
}

fn check_inputs(a: &GraphMeasure, b: &GraphMeasure, params: &FgwParams) -> Result<()> {
    for g in [a, b] {
        if g.max_structure() > params.cap * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter("structure exceeds the edge cost cap".into()));
        }
    }
    Ok(())
}

/// Objective value at coupling `pi`.
pub fn fgw_cost(pi: &Coupling, a: &GraphMeasure, b: &GraphMeasure, params: &FgwParams) -> Result<f64> {
    pi.validate(&a.weights, &b.weights)?;
    check_inputs(a, b, params)?;
    let d = feature_matrix(a, b, params.metric);
    let g = structure_tensor(a, b, &pi.matrix);
    Ok(objective(&d, &g, &pi.matrix, params.alpha))
}

fn objective(d: &DMatrix<f64>, g: &DMatrix<f64>, pi: &DMatrix<f64>, alpha: f64) -> f64 {
    let mass = pi.sum();
    ((1.0 - alpha) * dot(d, pi) * mass + alpha * dot(pi, g)).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwResult {
    pub value: f64,
    pub coupling: Coupling,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Conditional-gradient descent from `init` with exact line search. Steps are
/// accepted only if they do not increase the objective, so the returned value
/// never exceeds the cost of `init`.
pub fn fgw_upper_bound(
    a: &GraphMeasure,
    b: &GraphMeasure,
    params: &FgwParams,
    init: &Coupling,
    iterations: usize,
) -> Result<FwResult> {
    init.validate(&a.weights, &b.weights)?;
    check_inputs(a, b, params)?;
    let alpha = params.alpha;
    let d = feature_matrix(a, b, params.metric);
    let mut pi = init.matrix.map(|x| x.max(0.0));
    let mut g = structure_tensor(a, b, &pi);
    let mut f = objective(&d, &g, &pi, alpha);
    let mut history = vec![f];
    let scale = 1.0 + f.abs();
    for _ in 0..iterations {
        let grad = d.scale(1.0 - alpha) + g.scale(2.0 * alpha);
        let s = solve_transport(&grad, &a.weights, &b.weights);
        let delta = &s - &pi;
        let lin = dot(&grad, &delta);
        if lin >= -1e-13 * scale {
            break;
        }
        let gd = structure_tensor(a, b, &delta);
        let quad = alpha * dot(&delta, &gd);
        let t = if quad > 0.0 {
            (-lin / (2.0 * quad)).clamp(0.0, 1.0)
        } else if lin + quad < 0.0 {
            1.0
        } else {
            0.0
        };
        if t <= 0.0 {
            break;
        }
        let next_pi = &pi + delta.scale(t);
        let next_g = &g + gd.scale(t);
        let next_f = objective(&d, &next_g, &next_pi, alpha);
        if next_f >= f - 1e-15 * scale {
            break;
        }
        pi = next_pi;
        g = next_g;
        f = next_f;
        history.push(f);
    }
    let coupling = Coupling::new(pi);
    Ok(FwResult {
        value: f,
        coupling,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphmodel::Vertex;

    pub(crate) fn graph(attrs: &[f64], edges: &[(usize, usize)]) -> AttributedGraph {
        let vertices = attrs
            .iter()
            .enumerate()
            .map(|(i, &x)| Vertex {
                attr: vec![x],
                id: (i as f64 + 0.5) / attrs.len() as f64,
            })
            .collect();
        AttributedGraph::new(vertices, edges.to_vec()).unwrap()
    }

    fn params(alpha: f64) -> FgwParams {
        FgwParams::new(alpha, 1.0, Metric::SupNorm).unwrap()
    }

    #[test]
    fn measure_construction() {
        let p = params(0.5);
        let m = graph_to_measure(&graph(&[0.3], &[]), &p).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert_eq!(m.structure_matrix(), DMatrix::from_element(1, 1, 0.0));
        let m = graph_to_measure(&graph(&[0.3, 0.6], &[(0, 1)]), &p).unwrap();
        assert_eq!(m.structure_matrix(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(matches!(graph_to_measure(&graph(&[], &[]), &p), Err(Error::EmptyGraph)));
        let k4 = graph(&[0.1, 0.2, 0.3, 0.4], &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let s = graph_to_measure(&k4, &FgwParams::new(0.5, 2.0, Metric::SupNorm).unwrap())
            .unwrap()
            .structure_matrix();
        assert!((0..4).all(|i| (0..4).all(|k| s[(i, k)] == if i == k { 0.0 } else { 2.0 })));
    }

    #[test]
    fn cost_examples() {
        let one = Coupling::new(DMatrix::from_element(1, 1, 1.0));
        let a = graph_to_measure(&graph(&[0.0], &[]), &params(0.5)).unwrap();
        let b = graph_to_measure(&graph(&[1.0], &[]), &params(0.5)).unwrap();
        assert_eq!(fgw_cost(&one, &a, &a, &params(0.5)).unwrap(), 0.0);
        assert!((fgw_cost(&one, &a, &b, &params(0.5)).unwrap() - 0.5).abs() < 1e-15);

        let a = graph_to_measure(&graph(&[0.5, 0.5], &[(0, 1)]), &params(1.0)).unwrap();
        let b = graph_to_measure(&graph(&[0.5, 0.5], &[]), &params(1.0)).unwrap();
        for t in [0.0, 0.1, 0.25, 0.4, 0.5] {
            let pi = Coupling::new(DMatrix::from_row_slice(2, 2, &[t, 0.5 - t, 0.5 - t, t]));
            assert!((fgw_cost(&pi, &a, &b, &params(1.0)).unwrap() - 0.5).abs() < 1e-12);
        }
        let bad = Coupling::new(DMatrix::from_element(2, 2, 0.3));
        assert!(fgw_cost(&bad, &a, &b, &params(1.0)).is_err());
    }

    #[test]
    fn binary_tensor_matches_dense_formula() {
        let p = params(0.7);
        let a = graph_to_measure(&graph(&[0.1, 0.5, 0.9], &[(0, 1), (1, 2)]), &p).unwrap();
        let b = graph_to_measure(&graph(&[0.2, 0.4, 0.6, 0.8], &[(0, 3), (1, 2), (2, 3)]), &p).unwrap();
        let x = DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin().abs());
        let fast = structure_tensor(&a, &b, &x);
        let sa = a.structure_matrix();
        let sb = b.structure_matrix();
        let da = GraphMeasure::from_dense(a.attributes().to_vec(), a.weights().to_vec(), sa).unwrap();
        let db = GraphMeasure::from_dense(b.attributes().to_vec(), b.weights().to_vec(), sb).unwrap();
        let slow = structure_tensor(&da, &db, &x);
        assert!((fast - slow).abs().max() < 1e-12);
    }

    #[test]
    fn hop_structure_is_capped() {
        let g = graph(&[0.1, 0.2, 0.3, 0.4], &[(0, 1), (1, 2)]);
        let m = graph_to_measure_with(&g, &params(0.5), StructureKind::ShortestPath).unwrap();
        let s = m.structure_matrix();
        assert!((s[(0, 2)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[(0, 3)], 1.0);
        assert!(s.max() <= 1.0);
    }

    #[test]
    fn conditional_gradient_is_monotone() {
        let p = params(0.5);
        let a = graph_to_measure(&graph(&[0.1, 0.5, 0.9, 0.3], &[(0, 1), (1, 2), (2, 3)]), &p).unwrap();
        let b = graph_to_measure(&graph(&[0.2, 0.8, 0.6], &[(0, 1), (0, 2)]), &p).unwrap();
        let init = Coupling::product(a.weights(), b.weights());
        let start = fgw_cost(&init, &a, &b, &p).unwrap();
        let r = fgw_upper_bound(&a, &b, &p, &init, 50).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.value <= start);
        assert!((fgw_cost(&r.coupling, &a, &b, &p).unwrap() - r.value).abs() < 1e-12);
    }
}
