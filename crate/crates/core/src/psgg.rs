//! Joint generation of a true graph and a private synthetic graph whose
//! vertex and edge processes are maximally coupled.
//!
//! Each of the `L` shared Poisson points is first offered to the common
//! indicator; if no common cell is drawn the two sides pick their cells
//! independently from the residual laws. The extra `K_N` true and `K_M`
//! synthetic points use the plain base laws, so cell counts on each side are
//! exactly the independent Poisson counts of the uncoupled model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graphmodel::{AttributedGraph, IdentifierPool, Kernel, Vertex, sample_poisson};
use crate::metric::{AttributeDataset, Partition};
use crate::noise::NoiseSpec;
use crate::psmm::{DiscreteMeasure, PsmmResult, run_tv_psmm};
use crate::{Error, Result};

const MASS_SLACK: f64 = 1e-12;

/// Categorical law over `0..len` with an optional leftover "none" outcome.
#[derive(Clone, Debug)]
pub(crate) struct Categorical {
    cdf: Vec<f64>,
    total: f64,
}

impl Categorical {
    pub(crate) fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        Self { cdf, total: acc }
    }

    pub(crate) fn total(&self) -> f64 {
        self.total
    }

    /// Index `k` with probability `w_k`, `None` with probability `1 - total`.
    pub(crate) fn sample_sub<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        let u: f64 = rng.random();
        if u >= self.total {
            return None;
        }
        Some(self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1))
    }

    /// Index `k` with probability `w_k / total`.
    pub(crate) fn sample_normalized<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.total;
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        // skip zero-width cells that rounding could land on
        let mut k = k;
        while k > 0 && self.cdf[k] == self.cdf[k - 1] {
            k -= 1;
        }
        k
    }
}

fn common_law(probs: &[f64]) -> Result<Categorical> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidParameter("common masses must be nonnegative".into()));
    }
    let cat = Categorical::new(probs);
    let residual = 1.0 - cat.total();
    if residual < -MASS_SLACK {
        return Err(Error::InvalidParameter(format!(
            "common masses sum to {} > 1",
            cat.total()
        )));
    }
    if residual < 0.0 {
        log::warn!("common masses exceed one by {:e}; clamping", -residual);
    }
    Ok(cat)
}

fn draw_common<R: Rng + ?Sized>(law: &Categorical, rng: &mut R) -> Option<usize> {
    if law.total() >= 1.0 {
        Some(law.sample_normalized(rng))
    } else {
        law.sample_sub(rng)
    }
}

/// Returns cell `k` with probability `probs[k]`, otherwise `None`.
pub fn sample_common_indicator<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<Option<usize>> {
    let law = common_law(probs)?;
    Ok(draw_common(&law, rng))
}

fn residual_law(base: &[f64], common: &[f64]) -> Result<Categorical> {
    if base.len() != common.len() {
        return Err(Error::InvalidParameter("base and common lengths differ".into()));
    }
    let resid: Vec<f64> = base.iter().zip(common).map(|(b, c)| (b - c).max(0.0)).collect();
    let cat = Categorical::new(&resid);
    if cat.total() <= 0.0 {
        return Err(Error::Precondition("residual law has no mass".into()));
    }
    Ok(cat)
}

/// Cell `k` with probability `(base_k - common_k) / (1 - sum common)`.
pub fn residual_cell_sampler<R: Rng + ?Sized>(
    base: &[f64],
    common: &[f64],
    rng: &mut R,
) -> Result<usize> {
    Ok(residual_law(base, common)?.sample_normalized(rng))
}

/// Comonotone coupling of `Ber(p)` and `Ber(q)`: the bits differ with
/// probability `|p - q|`, the smallest possible.
pub fn maximal_coupling_bernoulli<R: Rng + ?Sized>(p: f64, q: f64, rng: &mut R) -> (bool, bool) {
    let u: f64 = rng.random();
    (u < p, u < q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonMatch {
    pub cell: usize,
    pub true_vertex: usize,
    pub synthetic_vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledPair {
    pub true_graph: AttributedGraph,
    pub synthetic_graph: AttributedGraph,
    pub shared: usize,
    pub extra_true: usize,
    pub extra_synthetic: usize,
    pub common_matches: Vec<CommonMatch>,
    pub true_cells: Vec<usize>,
    pub synthetic_cells: Vec<usize>,
    pub psmm: PsmmResult,
}

impl CoupledPair {
    /// Number of common-cell matches.
    pub fn z(&self) -> usize {
        self.common_matches.len()
    }
}

/// Fixed ingredients of the coupled sampler for a given mechanism output.
pub struct CoupledSampler<'a> {
    dataset: &'a AttributeDataset,
    psmm: &'a PsmmResult,
    kernel: &'a Kernel,
    a: f64,
    b: f64,
    points_by_cell: Vec<Vec<usize>>,
    common: Categorical,
    base_true: Categorical,
    base_syn: Categorical,
    resid_true: Option<Categorical>,
    resid_syn: Option<Categorical>,
}

impl<'a> CoupledSampler<'a> {
    pub fn new(
        dataset: &'a AttributeDataset,
        partition: &Partition,
        psmm: &'a PsmmResult,
        a: f64,
        b: f64,
        kernel: &'a Kernel,
    ) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if dataset.is_empty() {
            return Err(Error::Precondition("dataset is empty".into()));
        }
        if psmm.counts.len() != partition.m() {
            return Err(Error::InvalidParameter("mechanism output does not match partition".into()));
        }
        let mut points_by_cell = vec![Vec::new(); partition.m()];
        for (i, p) in dataset.points().iter().enumerate() {
            points_by_cell[partition.cell_index(p)?].push(i);
        }
        let base = psmm.empirical_weights();
        let hat = psmm.private_measure.weights();
        let minima: Vec<f64> = base.iter().zip(hat).map(|(x, y)| x.min(*y)).collect();
        let common = common_law(&minima)?;
        let has_residual = common.total() < 1.0;
        Ok(Self {
            dataset,
            psmm,
            kernel,
            a,
            b,
            points_by_cell,
            resid_true: if has_residual { residual_law(&base, &minima).ok() } else { None },
            resid_syn: if has_residual { residual_law(hat, &minima).ok() } else { None },
            common,
            base_true: Categorical::new(&base),
            base_syn: Categorical::new(hat),
        })
    }

    /// Probability that a shared point lands in a common cell.
    pub fn common_mass(&self) -> f64 {
        self.common.total().min(1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CoupledPair> {
        let ab = self.a.min(self.b);
        let extra_true = sample_poisson(self.a - ab, rng)?;
        let extra_synthetic = sample_poisson(self.b - ab, rng)?;
        let shared = sample_poisson(ab, rng)?;

        let mut true_cells = Vec::with_capacity(shared + extra_true);
        let mut syn_cells = Vec::with_capacity(shared + extra_synthetic);
        let mut matches = Vec::new();
        for _ in 0..shared {
            match draw_common(&self.common, rng) {
                Some(k) => {
                    matches.push(CommonMatch {
                        cell: k,
                        true_vertex: true_cells.len(),
                        synthetic_vertex: syn_cells.len(),
                    });
                    true_cells.push(k);
                    syn_cells.push(k);
                }
                None => {
                    // a None draw implies positive residual mass on both sides
                    let (rt, rs) = match (&self.resid_true, &self.resid_syn) {
                        (Some(rt), Some(rs)) => (rt, rs),
                        _ => (&self.base_true, &self.base_syn),
                    };
                    true_cells.push(rt.sample_normalized(rng));
                    syn_cells.push(rs.sample_normalized(rng));
                }
            }
        }
        for _ in 0..extra_true {
            true_cells.push(self.base_true.sample_normalized(rng));
        }
        for _ in 0..extra_synthetic {
            syn_cells.push(self.base_syn.sample_normalized(rng));
        }

        let mut ids = IdentifierPool::default();
        let true_vertices = true_cells
            .iter()
            .map(|&k| {
                let pool = &self.points_by_cell[k];
                assert!(!pool.is_empty(), "true vertex assigned to empty cell {k}");
                let x = &self.dataset.points()[pool[rng.random_range(0..pool.len())]];
                Vertex {
                    attr: x.clone(),
                    id: ids.draw(rng),
                }
            })
            .collect::<Vec<_>>();
        let mut ids = IdentifierPool::default();
        let syn_vertices = syn_cells
            .iter()
            .map(|&k| Vertex {
                attr: self.psmm.representatives[k].clone(),
                id: ids.draw(rng),
            })
            .collect::<Vec<_>>();

        let mut partner_of_true = vec![None; true_vertices.len()];
        let mut matched_syn = vec![false; syn_vertices.len()];
        for m in &matches {
            partner_of_true[m.true_vertex] = Some(m.synthetic_vertex);
            matched_syn[m.synthetic_vertex] = true;
        }
        let mut true_edges = Vec::new();
        let mut syn_edges = Vec::new();
        for i in 0..true_vertices.len() {
            for j in i + 1..true_vertices.len() {
                let p = self.kernel.eval(&true_vertices[i].attr, &true_vertices[j].attr);
                match (partner_of_true[i], partner_of_true[j]) {
                    (Some(s), Some(t)) => {
                        let q = self.kernel.eval(&syn_vertices[s].attr, &syn_vertices[t].attr);
                        let (et, es) = maximal_coupling_bernoulli(p, q, rng);
                        if et {
                            true_edges.push((i, j));
                        }
                        if es {
                            syn_edges.push((s.min(t), s.max(t)));
                        }
                    }
                    _ => {
                        if rng.random::<f64>() < p {
                            true_edges.push((i, j));
                        }
                    }
                }
            }
        }
        for s in 0..syn_vertices.len() {
            for t in s + 1..syn_vertices.len() {
                if matched_syn[s] && matched_syn[t] {
                    continue;
                }
                let q = self.kernel.eval(&syn_vertices[s].attr, &syn_vertices[t].attr);
                if rng.random::<f64>() < q {
                    syn_edges.push((s, t));
                }
            }
        }
        syn_edges.sort_unstable();

        Ok(CoupledPair {
            true_graph: AttributedGraph {
                vertices: true_vertices,
                edges: true_edges,
            },
            synthetic_graph: AttributedGraph {
                vertices: syn_vertices,
                edges: syn_edges,
            },
            shared,
            extra_true,
            extra_synthetic,
            common_matches: matches,
            true_cells,
            synthetic_cells: syn_cells,
            psmm: self.psmm.clone(),
        })
    }
}

/// Runs the mechanism and then the coupled sampler once.
#[allow(clippy::too_many_arguments)]
pub fn run_psgg<R: Rng + ?Sized>(
    dataset: &AttributeDataset,
    partition: &Partition,
    noise: &NoiseSpec,
    a: f64,
    b: f64,
    kernel: &Kernel,
    rng: &mut R,
) -> Result<CoupledPair> {
    let psmm = run_tv_psmm(dataset, partition, noise, rng)?;
    CoupledSampler::new(dataset, partition, &psmm, a, b, kernel)?.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphmodel::KernelKind;
    use crate::metric::{Metric, SpaceConfig, build_grid_partition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn indicator_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            assert!(sample_common_indicator(&[0.5, 0.5], &mut rng).unwrap().is_some());
            assert!(sample_common_indicator(&[0.0, 0.0], &mut rng).unwrap().is_none());
        }
        assert!(sample_common_indicator(&[0.7, 0.7], &mut rng).is_err());
        assert!(sample_common_indicator(&[0.5, 0.5 + 5e-13], &mut rng).is_ok());
    }

    #[test]
    fn residual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            assert_eq!(residual_cell_sampler(&[0.5, 0.5], &[0.5, 0.25], &mut rng).unwrap(), 1);
        }
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| residual_cell_sampler(&[0.6, 0.4], &[0.3, 0.3], &mut rng).unwrap() == 1)
            .count();
        let f = ones as f64 / n as f64;
        assert!((f - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt());
        assert!(residual_cell_sampler(&[0.5, 0.5], &[0.5, 0.5], &mut rng).is_err());
    }

    #[test]
    fn coupling_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let (x, y) = maximal_coupling_bernoulli(0.3, 0.3, &mut rng);
            assert_eq!(x, y);
            assert_eq!(maximal_coupling_bernoulli(1.0, 0.0, &mut rng), (true, false));
        }
    }

    #[test]
    fn zero_noise_equal_sizes_match_everything() {
        let space = SpaceConfig::new(1, Metric::SupNorm).unwrap();
        let part = build_grid_partition(space, 4).unwrap();
        let x = AttributeDataset::from_scalars(&[0.125, 0.375, 0.375, 0.625, 0.875]).unwrap();
        let zero = NoiseSpec::custom([(0, 1.0)].into()).unwrap();
        let k = Kernel::new(KernelKind::ChungLu, Metric::SupNorm, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pair = run_psgg(&x, &part, &zero, 30.0, 30.0, &k, &mut rng).unwrap();
            assert_eq!(pair.z(), pair.shared);
            assert_eq!(pair.true_graph.len(), pair.synthetic_graph.len());
            let mut tc = pair.true_cells.clone();
            let mut sc = pair.synthetic_cells.clone();
            tc.sort_unstable();
            sc.sort_unstable();
            assert_eq!(tc, sc);
            for m in &pair.common_matches {
                let xt = &pair.true_graph.vertices[m.true_vertex].attr;
                assert!(part.contains(m.cell, xt));
                assert_eq!(pair.synthetic_graph.vertices[m.synthetic_vertex].attr, pair.psmm.representatives[m.cell]);
            }
        }
    }

    #[test]
    fn sizes_follow_poisson_split() {
        let space = SpaceConfig::new(1, Metric::SupNorm).unwrap();
        let part = build_grid_partition(space, 2).unwrap();
        let x = AttributeDataset::from_scalars(&[0.2, 0.7]).unwrap();
        let noise = NoiseSpec::discrete_laplace(1.0).unwrap();
        let k = Kernel::new(KernelKind::Constant { p: 0.2 }, Metric::SupNorm, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pair = run_psgg(&x, &part, &noise, 40.0, 10.0, &k, &mut rng).unwrap();
        assert_eq!(pair.true_graph.len(), pair.shared + pair.extra_true);
        assert_eq!(pair.synthetic_graph.len(), pair.shared + pair.extra_synthetic);
        assert_eq!(pair.extra_synthetic, 0);
        assert!(pair.z() <= pair.shared);
    }
}
