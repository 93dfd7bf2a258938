//! Integer noise distributions for private counting.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Geometric, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Finite tables may deviate from total mass one by this much before they are
/// rejected; accepted tables are renormalised.
const TABLE_MASS_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    DiscreteLaplace { eps: f64 },
    BoundedPower { eps: f64, a: u32 },
    Custom {
        #[serde(deserialize_with = "integer_keys")]
        pmf: BTreeMap<i64, f64>,
    },
}

/// Tagged enums buffer their content, after which serde no longer parses
/// string map keys as integers; do it by hand.
fn integer_keys<'de, D: serde::Deserializer<'de>>(de: D) -> std::result::Result<BTreeMap<i64, f64>, D::Error> {
    BTreeMap::<String, f64>::deserialize(de)?
        .into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<i64>()
                .map(|k| (k, v))
                .map_err(|_| serde::de::Error::custom(format!("noise table key {k:?} is not an integer")))
        })
        .collect()
}

#[derive(Deserialize)]
struct PmfFile {
    pmf: BTreeMap<i64, f64>,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("privacy level must be positive, got {eps}")))
    }
}

impl NoiseSpec {
    pub fn discrete_laplace(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self::DiscreteLaplace { eps })
    }

    pub fn bounded_power(eps: f64, a: u32) -> Result<Self> {
        check_eps(eps)?;
        if a == 0 {
            return Err(Error::InvalidParameter("bounded power range A must be >= 1".into()));
        }
        Ok(Self::BoundedPower { eps, a })
    }

    pub fn custom(pmf: BTreeMap<i64, f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidNoise("table is empty".into()));
        }
        if let Some((k, p)) = pmf.iter().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidNoise(format!("mass {p} at {k} is not a probability")));
        }
        let total: f64 = pmf.values().sum();
        if (total - 1.0).abs() > TABLE_MASS_TOLERANCE {
            return Err(Error::InvalidNoise(format!("masses sum to {total}")));
        }
        let pmf = pmf
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(k, p)| (k, p / total))
            .collect();
        Ok(Self::Custom { pmf })
    }

    /// Parses `{"pmf": {"-1": 0.25, "0": 0.5, "1": 0.25}}`.
    pub fn custom_from_json(text: &str) -> Result<Self> {
        let file: PmfFile = serde_json::from_str(text)?;
        Self::custom(file.pmf)
    }

    pub fn custom_from_path(path: &Path) -> Result<Self> {
        Self::custom_from_json(&std::fs::read_to_string(path)?)
    }

    /// Re-checks invariants of a value that did not come from a constructor.
    pub fn validate(self) -> Result<Self> {
        match self {
            Self::DiscreteLaplace { eps } => Self::discrete_laplace(eps),
            Self::BoundedPower { eps, a } => Self::bounded_power(eps, a),
            Self::Custom { pmf } => Self::custom(pmf),
        }
    }

    pub fn pmf(&self, k: i64) -> f64 {
        match self {
            Self::DiscreteLaplace { eps } => {
                let p = (-eps).exp();
                (1.0 - p) / (1.0 + p) * p.powf(k.unsigned_abs() as f64)
            }
            Self::BoundedPower { eps, a } => {
                let ak = k.unsigned_abs();
                if ak == 0 || ak > *a as u64 {
                    0.0
                } else {
                    (ak as f64).powf(*eps) / bounded_power_norm(*eps, *a)
                }
            }
            Self::Custom { pmf } => pmf.get(&k).copied().unwrap_or(0.0),
        }
    }

    /// Support as an explicit list, `None` for infinite support.
    pub fn finite_support(&self) -> Option<Vec<i64>> {
        match self {
            Self::DiscreteLaplace { .. } => None,
            Self::BoundedPower { a, .. } => {
                let a = *a as i64;
                Some((-a..=-1).chain(1..=a).collect())
            }
            Self::Custom { pmf } => Some(pmf.keys().copied().collect()),
        }
    }

    pub fn expected_abs(&self) -> f64 {
        match self {
            Self::DiscreteLaplace { eps } => {
                let p = (-eps).exp();
                2.0 * p / (1.0 - p * p)
            }
            _ => self
                .finite_support()
                .expect("finite")
                .into_iter()
                .map(|k| k.unsigned_abs() as f64 * self.pmf(k))
                .sum(),
        }
    }

    pub fn sampler(&self) -> NoiseSampler {
        match self {
            Self::DiscreteLaplace { eps } => NoiseSampler::Laplace(
                Geometric::new(1.0 - (-eps).exp()).expect("success probability in (0,1]"),
            ),
            _ => {
                let support = self.finite_support().expect("finite");
                let weights: Vec<f64> = support.iter().map(|&k| self.pmf(k)).collect();
                NoiseSampler::Table {
                    index: WeightedIndex::new(&weights).expect("validated table"),
                    support,
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.sampler().sample(rng)
    }

    /// Checks `pmf(k+a)/pmf(k) <= e^eps` for every support point `k` and
    /// shift `a` in `{-1, 1}`.
    pub fn dp_ratio_satisfied(&self, eps: f64) -> DpRatioReport {
        let bound = eps.exp();
        let (worst_ratio, worst_k, worst_shift) = match self {
            // ratio = p^{|k+a|-|k|}, largest when the shift moves towards 0
            Self::DiscreteLaplace { eps: e } => (e.exp(), 1, -1),
            _ => {
                let mut worst = (0.0, 0, 1);
                for k in self.finite_support().expect("finite") {
                    let base = self.pmf(k);
                    for a in [-1i8, 1] {
                        let r = self.pmf(k + a as i64) / base;
                        if r >= worst.0 {
                            worst = (r, k, a);
                        }
                    }
                }
                worst
            }
        };
        DpRatioReport {
            satisfied: worst_ratio <= bound * (1.0 + 1e-12),
            level: eps,
            bound,
            worst_ratio,
            worst_k,
            worst_shift,
        }
    }
}

fn bounded_power_norm(eps: f64, a: u32) -> f64 {
    2.0 * (1..=a).map(|j| (j as f64).powf(eps)).sum::<f64>()
}

#[derive(Clone, Debug)]
pub enum NoiseSampler {
    Laplace(Geometric),
    Table {
        support: Vec<i64>,
        index: WeightedIndex<f64>,
    },
}

impl NoiseSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match self {
            // difference of two i.i.d. geometric variables is discrete Laplace
            Self::Laplace(g) => g.sample(rng) as i64 - g.sample(rng) as i64,
            Self::Table { support, index } => support[index.sample(rng)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpRatioReport {
    pub satisfied: bool,
    pub level: f64,
    pub bound: f64,
    pub worst_ratio: f64,
    pub worst_k: i64,
    pub worst_shift: i8,
}
