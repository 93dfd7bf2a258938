//! Private signed measure mechanism with total-variation projection.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metric::{AttributeDataset, Partition, Point};
use crate::noise::NoiseSpec;
use crate::{Error, Result};

pub trait DiscreteMeasure {
    fn support(&self) -> &[Point];
    fn weights(&self) -> &[f64];

    fn len(&self) -> usize {
        self.weights().len()
    }

    fn is_empty(&self) -> bool {
        self.weights().is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl SignedMeasure {
    pub fn new(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite".into()));
        }
        Ok(Self { support, weights })
    }

    /// Measure on placeholder support points `0, 1, ..., m-1` in one dimension.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let support = (0..weights.len()).map(|i| vec![i as f64]).collect();
        Self::new(support, weights)
    }
}

impl DiscreteMeasure for SignedMeasure {
    fn support(&self) -> &[Point] {
        &self.support
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMeasure {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl ProbabilityMeasure {
    pub fn new(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() || support.is_empty() {
            return Err(Error::InvalidParameter(
                "probability measure needs matching, nonempty support and weights".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        Ok(Self { support, weights })
    }

    pub fn to_signed(&self) -> SignedMeasure {
        SignedMeasure {
            support: self.support.clone(),
            weights: self.weights.clone(),
        }
    }
}

impl DiscreteMeasure for ProbabilityMeasure {
    fn support(&self) -> &[Point] {
        &self.support
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `sum_i |w1_i - w2_i|` for measures on the same support list.
pub fn tv_distance<A: DiscreteMeasure, B: DiscreteMeasure>(a: &A, b: &B) -> Result<f64> {
    if a.support() != b.support() {
        return Err(Error::SupportMismatch);
    }
    Ok(l1(a.weights(), b.weights()))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `sum nu^- + |sum nu^+ - 1|`, the optimal projection distance.
pub fn projection_distance(weights: &[f64]) -> f64 {
    let neg: f64 = weights.iter().map(|w| (-w).max(0.0)).sum();
    let pos: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    neg + (pos - 1.0).abs()
}

/// Closed-form nearest probability vector in l1. Negative entries are clipped;
/// surplus is removed in ascending index order, and any deficit goes to the
/// first coordinate.
pub fn project_weights(nu: &[f64]) -> Vec<f64> {
    let mut tau: Vec<f64> = nu.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = tau.iter().sum();
    if total > 1.0 {
        let mut surplus = total - 1.0;
        for t in tau.iter_mut() {
            if surplus <= 0.0 {
                break;
            }
            let cut = t.min(surplus);
            *t -= cut;
            surplus -= cut;
        }
    } else if total < 1.0 {
        tau[0] += 1.0 - total;
    }
    tau
}

pub fn tv_project(nu: &SignedMeasure) -> Result<(ProbabilityMeasure, f64)> {
    if nu.is_empty() {
        return Err(Error::InvalidParameter("cannot project an empty measure".into()));
    }
    let tau = project_weights(&nu.weights);
    let dist = l1(&nu.weights, &tau);
    Ok((
        ProbabilityMeasure {
            support: nu.support.clone(),
            weights: tau,
        },
        dist,
    ))
}

/// The projection stated as a linear program over `(tau, u)`:
/// minimise `sum u` with `u >= nu - tau`, `u >= tau - nu`, `tau >= 0`,
/// `sum tau = 1`.
pub fn tv_project_lp(nu: &SignedMeasure) -> Result<(ProbabilityMeasure, f64)> {
    let m = nu.len();
    if m == 0 {
        return Err(Error::InvalidParameter("cannot project an empty measure".into()));
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let tau: Vec<_> = (0..m).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let u: Vec<_> = (0..m)
        .map(|_| lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for i in 0..m {
        lp.add_constraint([(u[i], 1.0), (tau[i], 1.0)], ComparisonOp::Ge, nu.weights[i]);
        lp.add_constraint([(u[i], 1.0), (tau[i], -1.0)], ComparisonOp::Ge, -nu.weights[i]);
    }
    let ones: Vec<_> = tau.iter().map(|&t| (t, 1.0)).collect();
    lp.add_constraint(&ones, ComparisonOp::Eq, 1.0);
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    let mut weights: Vec<f64> = tau.iter().map(|&t| sol[t].max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((
        ProbabilityMeasure {
            support: nu.support.clone(),
            weights,
        },
        sol.objective(),
    ))
}

pub fn true_counts(dataset: &AttributeDataset, partition: &Partition) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; partition.m()];
    for p in dataset.points() {
        counts[partition.cell_index(p)?] += 1;
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsmmResult {
    pub representatives: Vec<Point>,
    pub counts: Vec<u64>,
    pub noise_draws: Vec<i64>,
    pub raw_measure: SignedMeasure,
    pub private_measure: ProbabilityMeasure,
    pub tv_residual: f64,
}

/// What may leave the trusted boundary: counts and noise are optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsmmRelease {
    pub representatives: Vec<Point>,
    pub private_weights: Vec<f64>,
    pub tv_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_draws: Option<Vec<i64>>,
}

impl PsmmResult {
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn empirical_weights(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn release(&self, redact_counts: bool) -> PsmmRelease {
        PsmmRelease {
            representatives: self.representatives.clone(),
            private_weights: self.private_measure.weights.clone(),
            tv_residual: self.tv_residual,
            counts: (!redact_counts).then(|| self.counts.clone()),
            noise_draws: (!redact_counts).then(|| self.noise_draws.clone()),
        }
    }
}

/// Noisy per-cell counts, normalised by `n` and projected onto the simplex.
/// Representatives are drawn afresh on every call.
pub fn run_tv_psmm<R: Rng + ?Sized>(
    dataset: &AttributeDataset,
    partition: &Partition,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<PsmmResult> {
    if dataset.is_empty() {
        return Err(Error::Precondition("dataset is empty".into()));
    }
    if dataset.dim() != partition.space().dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.space().dim(),
            got: dataset.dim(),
        });
    }
    let counts = true_counts(dataset, partition)?;
    let representatives = (0..partition.m())
        .map(|k| partition.sample_uniform_in_cell(k, rng))
        .collect::<Result<Vec<_>>>()?;
    let sampler = noise.sampler();
    let noise_draws: Vec<i64> = (0..partition.m()).map(|_| sampler.sample(rng)).collect();
    let n = dataset.n() as f64;
    let raw: Vec<f64> = counts
        .iter()
        .zip(&noise_draws)
        .map(|(&c, &l)| (c as f64 + l as f64) / n)
        .collect();
    let raw_measure = SignedMeasure::new(representatives.clone(), raw)?;
    let (private_measure, tv_residual) = tv_project(&raw_measure)?;
    Ok(PsmmResult {
        representatives,
        counts,
        noise_draws,
        raw_measure,
        private_measure,
        tv_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{Metric, SpaceConfig, build_grid_partition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn proj(w: &[f64]) -> (Vec<f64>, f64) {
        let (p, d) = tv_project(&SignedMeasure::from_weights(w.to_vec()).unwrap()).unwrap();
        (p.weights().to_vec(), d)
    }

    #[test]
    fn projection_examples() {
        assert_eq!(proj(&[0.3, 0.7]), (vec![0.3, 0.7], 0.0));
        let (w, d) = proj(&[1.2, -0.2]);
        assert_eq!(w, vec![1.0, 0.0]);
        assert!((d - 0.4).abs() < 1e-15);
        let (w, d) = proj(&[0.5, 0.2, 0.2]);
        assert!((d - 0.1).abs() < 1e-12);
        assert!((w[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn lp_agrees_on_examples() {
        for w in [vec![1.2, -0.2], vec![0.5, 0.2, 0.2], vec![-1.0, 2.0, 0.5, -0.3]] {
            let nu = SignedMeasure::from_weights(w.clone()).unwrap();
            let (p, d) = tv_project_lp(&nu).unwrap();
            assert!((d - projection_distance(&w)).abs() < 1e-9);
            assert!((tv_distance(&nu, &p).unwrap() - d).abs() < 1e-9);
        }
    }

    #[test]
    fn tv_distance_needs_common_support() {
        let a = SignedMeasure::from_weights(vec![1.0, 0.0]).unwrap();
        let b = SignedMeasure::from_weights(vec![0.0, 1.0]).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), 2.0);
        let c = SignedMeasure::new(vec![vec![0.5], vec![0.7]], vec![0.0, 1.0]).unwrap();
        assert!(matches!(tv_distance(&a, &c), Err(Error::SupportMismatch)));
    }

    #[test]
    fn counts_examples() {
        let s = SpaceConfig::new(1, Metric::SupNorm).unwrap();
        let x = AttributeDataset::from_scalars(&[0.1, 0.2, 0.9]).unwrap();
        assert_eq!(true_counts(&x, &build_grid_partition(s, 2).unwrap()).unwrap(), vec![2, 1]);
        let x = AttributeDataset::from_scalars(&[0.1]).unwrap();
        assert_eq!(
            true_counts(&x, &build_grid_partition(s, 4).unwrap()).unwrap(),
            vec![1, 0, 0, 0]
        );
    }

    #[test]
    fn zero_noise_returns_empirical_measure() {
        let s = SpaceConfig::new(1, Metric::SupNorm).unwrap();
        let part = build_grid_partition(s, 4).unwrap();
        let x = AttributeDataset::from_scalars(&[0.1, 0.2, 0.6, 0.9, 0.95]).unwrap();
        let zero = NoiseSpec::custom([(0, 1.0)].into()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = run_tv_psmm(&x, &part, &zero, &mut rng).unwrap();
        assert_eq!(r.private_measure.weights(), r.empirical_weights().as_slice());
        assert_eq!(r.tv_residual, 0.0);
        for (k, y) in r.representatives.iter().enumerate() {
            assert!(part.contains(k, y));
        }
    }

    #[test]
    fn release_redacts() {
        let s = SpaceConfig::new(1, Metric::SupNorm).unwrap();
        let part = build_grid_partition(s, 2).unwrap();
        let x = AttributeDataset::from_scalars(&[0.1, 0.9]).unwrap();
        let noise = NoiseSpec::discrete_laplace(1.0).unwrap();
        let r = run_tv_psmm(&x, &part, &noise, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let json = serde_json::to_value(r.release(true)).unwrap();
        assert!(json.get("counts").is_none());
        assert!(json.get("noise_draws").is_none());
        assert!(serde_json::to_value(r.release(false)).unwrap().get("counts").is_some());
    }
}
