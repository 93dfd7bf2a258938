//! Transport plans built from the coupled generator, Monte-Carlo estimates of
//! the expected distance, and reference-graph lower bounds.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Coupling, FgwParams, fgw_exact_small, fgw_upper_bound, graph_to_measure, EXACT_CAP};
use crate::graphmodel::{AttributedGraph, Kernel, Vertex};
use crate::metric::{AttributeDataset, Partition};
use crate::noise::NoiseSpec;
use crate::psgg::{CoupledPair, run_psgg};
use crate::seed::{derive_seed, stream};
use crate::stats::mean_and_stderr;
use crate::{Error, Result};

/// `(1-alpha) diam + alpha min{C, 2 C L diam}`, the charge per unit of
/// unmatched mass and the value assigned to comparisons with an empty graph.
pub fn worst_case_cost(params: &FgwParams, kernel: &Kernel) -> f64 {
    let diam = kernel.metric.cube_diameter(kernel.dim, 1.0);
    (1.0 - params.alpha) * diam
        + params.alpha * params.cap.min(2.0 * params.cap * kernel.lipschitz() * diam)
}

fn empty_convention(pair: &CoupledPair, params: &FgwParams, kernel: &Kernel) -> Option<f64> {
    match (pair.true_graph.is_empty(), pair.synthetic_graph.is_empty()) {
        (true, true) => Some(0.0),
        (true, false) | (false, true) => Some(worst_case_cost(params, kernel)),
        _ => None,
    }
}

/// Bound evaluated at the plan that moves mass `1/max(N, M)` along each common
/// match and charges all other mass at `worst_case_cost`.
pub fn proof_plan_cost(pair: &CoupledPair, params: &FgwParams, kernel: &Kernel) -> f64 {
    if let Some(v) = empty_convention(pair, params, kernel) {
        return v;
    }
    let n_star = pair.true_graph.len().max(pair.synthetic_graph.len()) as f64;
    let z = pair.z();
    let at = pair.true_graph.adjacency();
    let as_ = pair.synthetic_graph.adjacency();
    let tv = &pair.true_graph.vertices;
    let sv = &pair.synthetic_graph.vertices;
    let feature: f64 = pair
        .common_matches
        .iter()
        .map(|m| params.metric.distance(&tv[m.true_vertex].attr, &sv[m.synthetic_vertex].attr))
        .sum();
    let mut disagreements = 0usize;
    for (x, mx) in pair.common_matches.iter().enumerate() {
        for my in &pair.common_matches[x + 1..] {
            if at.has(mx.true_vertex, my.true_vertex)
                != as_.has(mx.synthetic_vertex, my.synthetic_vertex)
            {
                disagreements += 2;
            }
        }
    }
    let matched = (1.0 - params.alpha) * feature * z as f64
        + params.alpha * params.cap * disagreements as f64;
    let zf = z as f64;
    matched / (n_star * n_star)
        + (1.0 - zf * zf / (n_star * n_star)) * worst_case_cost(params, kernel)
}

/// Row/column masses outside the matched block of the plan.
fn plan_residuals(pair: &CoupledPair) -> (Vec<f64>, Vec<f64>, f64) {
    let n = pair.true_graph.len();
    let m = pair.synthetic_graph.len();
    let n_star = n.max(m) as f64;
    let mut r = vec![1.0 / n as f64; n];
    let mut s = vec![1.0 / m as f64; m];
    for mt in &pair.common_matches {
        r[mt.true_vertex] -= 1.0 / n_star;
        s[mt.synthetic_vertex] -= 1.0 / n_star;
    }
    r.iter_mut().chain(s.iter_mut()).for_each(|x| *x = x.max(0.0));
    let mass = 1.0 - pair.z() as f64 / n_star;
    (r, s, mass)
}

/// The concrete plan: `1/max(N, M)` on matches plus the rank-one completion
/// of the leftover marginals.
pub fn proof_plan_coupling(pair: &CoupledPair) -> Option<Coupling> {
    if pair.true_graph.is_empty() || pair.synthetic_graph.is_empty() {
        return None;
    }
    let n_star = pair.true_graph.len().max(pair.synthetic_graph.len()) as f64;
    let (r, s, mass) = plan_residuals(pair);
    let mut pi = if mass > 1e-15 {
        DMatrix::from_fn(r.len(), s.len(), |i, j| r[i] * s[j] / mass)
    } else {
        DMatrix::zeros(r.len(), s.len())
    };
    for mt in &pair.common_matches {
        pi[(mt.true_vertex, mt.synthetic_vertex)] += 1.0 / n_star;
    }
    Some(Coupling::new(pi))
}

/// Exact objective at `proof_plan_coupling`, computed without forming the
/// coupling: with `pi = D + u v^T` every structural product reduces to
/// matched-pair sums and adjacency-vector products.
pub fn plan_exact_cost(pair: &CoupledPair, params: &FgwParams, kernel: &Kernel) -> f64 {
    if let Some(v) = empty_convention(pair, params, kernel) {
        return v;
    }
    let tg = &pair.true_graph;
    let sg = &pair.synthetic_graph;
    let (n, m) = (tg.len(), sg.len());
    let n_star = n.max(m) as f64;
    let (r, s, mass) = plan_residuals(pair);
    let (u, v): (Vec<f64>, Vec<f64>) = if mass > 1e-15 {
        (r.iter().map(|x| x / mass).collect(), s)
    } else {
        (vec![0.0; n], vec![0.0; m])
    };
    let metric = params.metric;
    let at = tg.adjacency();
    let as_ = sg.adjacency();

    let mut feat_d = 0.0;
    for mt in &pair.common_matches {
        feat_d += metric.distance(&tg.vertices[mt.true_vertex].attr, &sg.vertices[mt.synthetic_vertex].attr);
    }
    feat_d /= n_star;
    let mut feat_r = 0.0;
    for (i, ui) in u.iter().enumerate() {
        if *ui == 0.0 {
            continue;
        }
        for (j, vj) in v.iter().enumerate() {
            if *vj != 0.0 {
                feat_r += ui * vj * metric.distance(&tg.vertices[i].attr, &sg.vertices[j].attr);
            }
        }
    }

    let au: Vec<f64> = (0..n).map(|i| at.neighbors(i).iter().map(|&k| u[k]).sum()).collect();
    let bv: Vec<f64> = (0..m).map(|j| as_.neighbors(j).iter().map(|&l| v[l]).sum()).collect();
    let mut both = 0usize;
    for mx in &pair.common_matches {
        for my in &pair.common_matches {
            if at.has(mx.true_vertex, my.true_vertex) && as_.has(mx.synthetic_vertex, my.synthetic_vertex) {
                both += 1;
            }
        }
    }
    let dd = both as f64 / (n_star * n_star);
    let dr: f64 = pair
        .common_matches
        .iter()
        .map(|mt| au[mt.true_vertex] * bv[mt.synthetic_vertex])
        .sum::<f64>()
        / n_star;
    let uau: f64 = u.iter().zip(&au).map(|(a, b)| a * b).sum();
    let vbv: f64 = v.iter().zip(&bv).map(|(a, b)| a * b).sum();
    let sandwich = dd + 2.0 * dr + uau * vbv;
    let pap = 2.0 * at.edge_count() as f64 / (n * n) as f64;
    let qbq = 2.0 * as_.edge_count() as f64 / (m * m) as f64;
    let structure = params.cap * (pap + qbq - 2.0 * sandwich);
    ((1.0 - params.alpha) * (feat_d + feat_r) + params.alpha * structure).max(0.0)
}

/// Upper bound on the realised distance: conditional gradient from the plan
/// when both graphs have at most `refine_cap` vertices, otherwise the plan
/// itself.
pub fn refined_fgw(
    pair: &CoupledPair,
    params: &FgwParams,
    kernel: &Kernel,
    refine_cap: usize,
    iterations: usize,
) -> Result<(f64, bool)> {
    if let Some(v) = empty_convention(pair, params, kernel) {
        return Ok((v, false));
    }
    if pair.true_graph.len().max(pair.synthetic_graph.len()) > refine_cap {
        return Ok((plan_exact_cost(pair, params, kernel), false));
    }
    let a = graph_to_measure(&pair.true_graph, params)?;
    let b = graph_to_measure(&pair.synthetic_graph, params)?;
    let init = proof_plan_coupling(pair).expect("both graphs nonempty");
    Ok((fgw_upper_bound(&a, &b, params, &init, iterations)?.value, true))
}

/// How `f_xi(G) = d(xi, G)` is computed for reference graphs `xi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluator {
    /// Exact oracle when both sides fit, conditional gradient otherwise.
    ExactOrRefined { iterations: usize },
    Refined { iterations: usize },
}

impl Default for Evaluator {
    fn default() -> Self {
        Evaluator::Refined { iterations: 30 }
    }
}

impl Evaluator {
    pub fn eval(&self, xi: &AttributedGraph, g: &AttributedGraph, params: &FgwParams, empty_value: f64) -> Result<f64> {
        match (xi.is_empty(), g.is_empty()) {
            (true, true) => return Ok(0.0),
            (true, false) | (false, true) => return Ok(empty_value),
            _ => {}
        }
        let a = graph_to_measure(xi, params)?;
        let b = graph_to_measure(g, params)?;
        let iterations = match *self {
            Evaluator::ExactOrRefined { iterations } => {
                if a.len() <= EXACT_CAP && b.len() <= EXACT_CAP {
                    return Ok(fgw_exact_small(&a, &b, params)?.0);
                }
                iterations
            }
            Evaluator::Refined { iterations } => iterations,
        };
        let init = Coupling::product(a.weights(), b.weights());
        Ok(fgw_upper_bound(&a, &b, params, &init, iterations)?.value)
    }
}

/// Small test graphs spread over the cube: singletons at the corners and the
/// centre, and two-vertex graphs with and without an edge.
pub fn default_references(dim: usize) -> Vec<AttributedGraph> {
    let at = |x: f64| vec![x; dim];
    let single = |x: f64| AttributedGraph {
        vertices: vec![Vertex { attr: at(x), id: 0.5 }],
        edges: vec![],
    };
    let pair = |x: f64, y: f64, edge: bool| AttributedGraph {
        vertices: vec![Vertex { attr: at(x), id: 0.25 }, Vertex { attr: at(y), id: 0.75 }],
        edges: if edge { vec![(0, 1)] } else { vec![] },
    };
    vec![
        single(0.0),
        single(0.5),
        single(1.0),
        pair(0.25, 0.75, true),
        pair(0.25, 0.75, false),
        pair(1.0, 1.0, true),
    ]
}

pub fn reference_profile(
    g: &AttributedGraph,
    references: &[AttributedGraph],
    params: &FgwParams,
    evaluator: &Evaluator,
    empty_value: f64,
) -> Result<Vec<f64>> {
    references
        .iter()
        .map(|xi| evaluator.eval(xi, g, params, empty_value))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfEstimate {
    pub value: f64,
    pub best_reference: usize,
    /// `|mean_A f_xi - mean_B f_xi|` per reference graph.
    pub gaps: Vec<f64>,
}

pub fn df_from_profiles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DfEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("sample sets must be nonempty".into()));
    }
    let k = a[0].len();
    let mean = |rows: &[Vec<f64>], r: usize| rows.iter().map(|p| p[r]).sum::<f64>() / rows.len() as f64;
    let gaps: Vec<f64> = (0..k).map(|r| (mean(a, r) - mean(b, r)).abs()).collect();
    let (best_reference, value) = gaps
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (r, g)| if g > acc.1 { (r, g) } else { acc });
    Ok(DfEstimate {
        value,
        best_reference,
        gaps,
    })
}

/// Largest gap in mean reference distance between two samples of graphs.
pub fn df_lower_bound(
    samples_a: &[AttributedGraph],
    samples_b: &[AttributedGraph],
    references: &[AttributedGraph],
    params: &FgwParams,
    evaluator: &Evaluator,
    empty_value: f64,
) -> Result<DfEstimate> {
    let prof = |set: &[AttributedGraph]| -> Result<Vec<Vec<f64>>> {
        set.iter()
            .map(|g| reference_profile(g, references, params, evaluator, empty_value))
            .collect()
    };
    df_from_profiles(&prof(samples_a)?, &prof(samples_b)?)
}

#[derive(Clone, Debug)]
pub struct McConfig {
    pub dataset: AttributeDataset,
    pub partition: Partition,
    pub noise: NoiseSpec,
    pub a: f64,
    pub b: f64,
    pub kernel: Kernel,
    pub params: FgwParams,
    pub refine_cap: usize,
    pub fw_iterations: usize,
    pub references: Vec<AttributedGraph>,
    pub evaluator: Evaluator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFgw {
    pub replicate: usize,
    pub seed: u64,
    pub true_vertices: usize,
    pub synthetic_vertices: usize,
    pub matches: usize,
    pub proof_plan_cost: f64,
    pub plan_cost: f64,
    pub refined_fgw: f64,
    pub refined_by_solver: bool,
    pub true_profile: Vec<f64>,
    pub synthetic_profile: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Mean of the refined per-replicate upper bounds.
    pub mean: f64,
    pub stderr: f64,
    pub proof_plan_mean: f64,
    pub proof_plan_stderr: f64,
    pub df: Option<DfEstimate>,
    pub replicates: Vec<ReplicateFgw>,
}

pub fn run_replicate(cfg: &McConfig, replicate: usize, seed: u64) -> Result<ReplicateFgw> {
    let mut rng = stream(seed);
    let pair = run_psgg(&cfg.dataset, &cfg.partition, &cfg.noise, cfg.a, cfg.b, &cfg.kernel, &mut rng)?;
    let empty_value = worst_case_cost(&cfg.params, &cfg.kernel);
    let (refined, by_solver) = refined_fgw(&pair, &cfg.params, &cfg.kernel, cfg.refine_cap, cfg.fw_iterations)?;
    let profile = |g| reference_profile(g, &cfg.references, &cfg.params, &cfg.evaluator, empty_value);
    Ok(ReplicateFgw {
        replicate,
        seed,
        true_vertices: pair.true_graph.len(),
        synthetic_vertices: pair.synthetic_graph.len(),
        matches: pair.z(),
        proof_plan_cost: proof_plan_cost(&pair, &cfg.params, &cfg.kernel),
        plan_cost: plan_exact_cost(&pair, &cfg.params, &cfg.kernel),
        refined_fgw: refined,
        refined_by_solver: by_solver,
        true_profile: profile(&pair.true_graph)?,
        synthetic_profile: profile(&pair.synthetic_graph)?,
    })
}

/// Runs `replicates` independent generator draws in parallel on the current
/// rayon pool; results are ordered by replicate index.
pub fn mc_expected_fgw(cfg: &McConfig, replicates: usize, seed: u64) -> Result<McEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidParameter("need at least two replicates".into()));
    }
    let rows: Vec<ReplicateFgw> = (0..replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r, derive_seed(seed, r as u64)))
        .collect::<Result<_>>()?;
    summarize(rows)
}

pub fn summarize(rows: Vec<ReplicateFgw>) -> Result<McEstimate> {
    let refined: Vec<f64> = rows.iter().map(|r| r.refined_fgw).collect();
    let proof: Vec<f64> = rows.iter().map(|r| r.proof_plan_cost).collect();
    let (mean, stderr) = mean_and_stderr(&refined);
    let (proof_plan_mean, proof_plan_stderr) = mean_and_stderr(&proof);
    let df = if rows.first().is_some_and(|r| !r.true_profile.is_empty()) {
        let a: Vec<Vec<f64>> = rows.iter().map(|r| r.true_profile.clone()).collect();
        let b: Vec<Vec<f64>> = rows.iter().map(|r| r.synthetic_profile.clone()).collect();
        Some(df_from_profiles(&a, &b)?)
    } else {
        None
    };
    Ok(McEstimate {
        mean,
        stderr,
        proof_plan_mean,
        proof_plan_stderr,
        df,
        replicates: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{fgw_cost, graph_to_measure};
    use super::*;
    use crate::graphmodel::KernelKind;
    use crate::metric::{Metric, SpaceConfig, build_grid_partition};
    use crate::psgg::CoupledSampler;
    use crate::psmm::run_tv_psmm;
    use crate::seed::stream;

    fn setup(a: f64, b: f64, eps: f64, seed: u64) -> (AttributeDataset, Partition, Kernel, NoiseSpec, u64) {
        let space = SpaceConfig::new(1, Metric::SupNorm).unwrap();
        let part = build_grid_partition(space, 4).unwrap();
        let x = AttributeDataset::from_scalars(&[0.05, 0.3, 0.35, 0.6, 0.9, 0.95, 0.97]).unwrap();
        let kernel = Kernel::new(KernelKind::ChungLu, Metric::SupNorm, 1).unwrap();
        let _ = (a, b);
        (x, part, kernel, NoiseSpec::discrete_laplace(eps).unwrap(), seed)
    }

    #[test]
    fn plan_formula_matches_dense_evaluation() {
        let (x, part, kernel, noise, _) = setup(6.0, 4.0, 0.7, 0);
        let params = FgwParams::new(0.5, 1.0, Metric::SupNorm).unwrap();
        for seed in 0..200 {
            let mut rng = stream(seed);
            let (a, b) = if seed % 2 == 0 { (6.0, 4.0) } else { (3.0, 7.0) };
            let pair = run_psgg(&x, &part, &noise, a, b, &kernel, &mut rng).unwrap();
            let Some(pi) = proof_plan_coupling(&pair) else { continue };
            let ma = graph_to_measure(&pair.true_graph, &params).unwrap();
            let mb = graph_to_measure(&pair.synthetic_graph, &params).unwrap();
            let dense = fgw_cost(&pi, &ma, &mb, &params).unwrap();
            let fast = plan_exact_cost(&pair, &params, &kernel);
            assert!((dense - fast).abs() < 1e-10, "seed {seed}: {dense} vs {fast}");
            // the worst-case charge dominates every unmatched term here
            assert!(proof_plan_cost(&pair, &params, &kernel) >= fast - 1e-12);
        }
    }

    #[test]
    fn perfect_matching_costs_nothing() {
        let space = SpaceConfig::new(1, Metric::SupNorm).unwrap();
        let part = build_grid_partition(space, 2).unwrap();
        let x = AttributeDataset::from_scalars(&[0.25, 0.75]).unwrap();
        let zero = NoiseSpec::custom([(0, 1.0)].into()).unwrap();
        let kernel = Kernel::new(KernelKind::ChungLu, Metric::SupNorm, 1).unwrap();
        let params = FgwParams::new(0.5, 1.0, Metric::SupNorm).unwrap();
        let mut rng = stream(1);
        let mut psmm = run_tv_psmm(&x, &part, &zero, &mut rng).unwrap();
        psmm.representatives = vec![vec![0.25], vec![0.75]];
        let sampler = CoupledSampler::new(&x, &part, &psmm, 10.0, 10.0, &kernel).unwrap();
        for _ in 0..20 {
            let pair = sampler.sample(&mut rng).unwrap();
            if pair.true_graph.is_empty() {
                continue;
            }
            assert!(proof_plan_cost(&pair, &params, &kernel).abs() < 1e-12);
            assert!(plan_exact_cost(&pair, &params, &kernel).abs() < 1e-12);
        }
    }

    #[test]
    fn df_examples() {
        let params = FgwParams::new(0.5, 1.0, Metric::SupNorm).unwrap();
        let g0 = AttributedGraph { vertices: vec![Vertex { attr: vec![0.0], id: 0.1 }], edges: vec![] };
        let g1 = AttributedGraph { vertices: vec![Vertex { attr: vec![1.0], id: 0.1 }], edges: vec![] };
        let ev = Evaluator::ExactOrRefined { iterations: 10 };
        let same = df_lower_bound(&[g0.clone(), g1.clone()], &[g0.clone(), g1.clone()], &default_references(1), &params, &ev, 1.0).unwrap();
        assert_eq!(same.value, 0.0);
        let d = df_lower_bound(std::slice::from_ref(&g0), std::slice::from_ref(&g1), std::slice::from_ref(&g0), &params, &ev, 1.0).unwrap();
        assert!((d.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mc_is_deterministic() {
        let (x, part, kernel, noise, _) = setup(5.0, 5.0, 1.0, 0);
        let cfg = McConfig {
            dataset: x,
            partition: part,
            noise,
            a: 5.0,
            b: 5.0,
            kernel,
            params: FgwParams::new(0.5, 1.0, Metric::SupNorm).unwrap(),
            refine_cap: 16,
            fw_iterations: 20,
            references: default_references(1),
            evaluator: Evaluator::default(),
        };
        let a = mc_expected_fgw(&cfg, 16, 3).unwrap();
        let b = mc_expected_fgw(&cfg, 16, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.replicates.iter().all(|r| r.refined_fgw <= r.plan_cost + 1e-12));
    }
}
