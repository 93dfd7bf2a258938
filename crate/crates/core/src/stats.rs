//! Small statistical helpers shared by the experiment harness and the
//! distributional tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::{Error, Result};

/// Sample mean and standard error of the mean (`sd / sqrt(n)`, unbiased sd).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi2_sf(stat: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.sf(stat))
}

/// Merges adjacent bins left to right until each has expected count at least
/// `min_expected`; a short tail is folded into the last kept bin.
fn pool(observed: &[f64], expected: &[f64], min_expected: f64) -> (Vec<f64>, Vec<f64>) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let (mut acc_o, mut acc_e) = (0.0, 0.0);
    for (x, y) in observed.iter().zip(expected) {
        acc_o += x;
        acc_e += y;
        if acc_e >= min_expected {
            o.push(acc_o);
            e.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        if let (Some(lo), Some(le)) = (o.last_mut(), e.last_mut()) {
            *lo += acc_o;
            *le += acc_e;
        } else {
            o.push(acc_o);
            e.push(acc_e);
        }
    }
    (o, e)
}

/// Pearson goodness of fit. `expected` must sum to the observed total; bins
/// are pooled to expected count 5.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch {
            expected: expected.len(),
            got: observed.len(),
        });
    }
    let (o, e) = pool(observed, expected, 5.0);
    let statistic: f64 = o.iter().zip(&e).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = o.len().saturating_sub(1);
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof)?,
    })
}

/// Goodness of fit of integer samples to Poisson(`mean`).
pub fn poisson_gof(samples: &[u64], mean: f64) -> Result<ChiSquareTest> {
    if mean <= 0.0 {
        let all_zero = samples.iter().all(|&s| s == 0);
        return Ok(ChiSquareTest {
            statistic: 0.0,
            dof: 0,
            p_value: if all_zero { 1.0 } else { 0.0 },
        });
    }
    let dist = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let max = samples.iter().copied().max().unwrap_or(0) as usize;
    let top = max.max((mean + 10.0 * mean.sqrt() + 10.0) as usize);
    let total = samples.len() as f64;
    let mut observed = vec![0.0; top + 2];
    for &s in samples {
        observed[s as usize] += 1.0;
    }
    let mut expected: Vec<f64> = (0..=top).map(|k| total * dist.pmf(k as u64)).collect();
    let tail = (total - expected.iter().sum::<f64>()).max(0.0);
    expected.push(tail);
    chi_square_gof(&observed, &expected)
}

/// Chi-square test that two count vectors come from the same distribution.
pub fn chi_square_homogeneity(a: &[f64], b: &[f64]) -> Result<ChiSquareTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    // pool on the combined counts so both rows share the same bins
    let combined: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut xa, mut xb) = (0.0, 0.0);
    for (i, c) in combined.iter().enumerate() {
        xa += a[i];
        xb += b[i];
        if xa + xb >= 10.0 && c.is_finite() {
            bins.push((xa, xb));
            xa = 0.0;
            xb = 0.0;
        }
    }
    if xa + xb > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += xa;
                last.1 += xb;
            }
            None => bins.push((xa, xb)),
        }
    }
    let total = na + nb;
    let mut statistic = 0.0;
    for &(x, y) in &bins {
        let col = x + y;
        let (ea, eb) = (na * col / total, nb * col / total);
        statistic += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = bins.len().saturating_sub(1);
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof)?,
    })
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant or has
/// fewer than two points.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_of_known_sample() {
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sd = sqrt(5/3)
        assert!((s - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn chi_square_reference_value() {
        // statistic 4 on one dof
        let t = chi_square_gof(&[60.0, 40.0], &[50.0, 50.0]).unwrap();
        assert_eq!(t.dof, 1);
        assert!((t.statistic - 4.0).abs() < 1e-12);
        assert!((t.p_value - 0.04550026389635842).abs() < 1e-9);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn wilson_contains_truth() {
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!((hi - lo - 0.1918).abs() < 1e-3);
    }

    #[test]
    fn slope_of_line() {
        assert!((ols_slope(&[0.0, 1.0, 2.0], &[1.0, -1.0, -3.0]) + 2.0).abs() < 1e-15);
    }
}
