//! Closed-form error bounds for the generator and the parameter rules that
//! balance them.

use serde::{Deserialize, Serialize};

use crate::metric::Metric;
use crate::noise::NoiseSpec;
use crate::{Error, Result};

/// Relative tolerance for the equality preconditions of the simplified bounds.
const PRECOND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub a: f64,
    pub b: f64,
    pub n: u64,
    pub m: u64,
    pub eps: f64,
    pub d: u32,
    pub alpha: f64,
    #[serde(rename = "C")]
    pub cap: f64,
    #[serde(rename = "L_kappa")]
    pub lipschitz: f64,
    pub diam_omega: f64,
    pub max_cell_diam: f64,
    pub leb_omega: f64,
    pub expected_abs_noise: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("eps", self.eps),
            ("C", self.cap),
            ("diam_omega", self.diam_omega),
            ("max_cell_diam", self.max_cell_diam),
            ("leb_omega", self.leb_omega),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("n, m and d must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz >= 0.0) {
            return Err(Error::InvalidParameter("L_kappa must be nonnegative".into()));
        }
        if !(self.expected_abs_noise.is_finite() && self.expected_abs_noise >= 0.0) {
            return Err(Error::InvalidParameter("expected_abs_noise must be nonnegative".into()));
        }
        Ok(())
    }

    fn min_ab(&self) -> f64 {
        self.a.min(self.b)
    }

    fn gap(&self) -> f64 {
        (self.a - self.b).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub total: f64,
}

impl BoundEntry {
    fn new(name: &str, terms: Vec<(&str, f64)>) -> Self {
        let total = terms.iter().map(|t| t.1).sum();
        BoundEntry {
            name: name.to_string(),
            terms: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            total,
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.0 == name).map(|t| t.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub thm2: BoundEntry,
    /// `None` when the simplified bound's preconditions fail; the reason is
    /// kept alongside.
    pub cor5: Option<BoundEntry>,
    pub cor5_skipped: Option<String>,
    pub thm3: BoundEntry,
    pub cor6: Option<BoundEntry>,
    pub cor6_skipped: Option<String>,
    pub rate_coupling: BoundEntry,
    pub rate_stein: BoundEntry,
}

pub fn log_plus(x: f64) -> f64 {
    if x > 1.0 { x.ln() } else { 0.0 }
}

/// `eps e^{-eps} / (1 - e^{-2 eps})`, which equals `eps E|Lambda| / 2` for the
/// discrete Laplace law.
pub fn laplace_factor(eps: f64) -> f64 {
    eps * (-eps).exp() / -(-2.0 * eps).exp_m1()
}

/// Largest `laplace_factor` on `steps` equally spaced points of `(0, upper]`.
pub fn laplace_factor_scan(upper: f64, steps: usize) -> f64 {
    (1..=steps)
        .map(|i| laplace_factor(upper * i as f64 / steps as f64))
        .fold(0.0, f64::max)
}

/// `(C~1, C~2)`.
pub fn c_tilde(inp: &BoundInputs) -> (f64, f64) {
    let alpha = inp.alpha;
    let cl = inp.cap * inp.lipschitz;
    let c1 = 1.0 - alpha + alpha * 2.0 * cl;
    let c2 = (1.0 - alpha) * inp.diam_omega + alpha * inp.cap.min(2.0 * cl * inp.diam_omega);
    (c1, c2)
}

pub fn c_alpha(alpha: f64, cap: f64, diam: f64) -> f64 {
    (1.0 - alpha) * diam + alpha * cap
}

/// `1 / (1 + (a^b)/|a-b|)` when `a != b`, else 1.
fn mismatch_factor(inp: &BoundInputs) -> f64 {
    let gap = inp.gap();
    if gap > 0.0 { 1.0 / (1.0 + inp.min_ab() / gap) } else { 1.0 }
}

pub fn thm2_bound(inp: &BoundInputs) -> Result<BoundEntry> {
    inp.validate()?;
    let (c1, c2) = c_tilde(inp);
    let f = mismatch_factor(inp);
    let mismatch = if inp.gap() > 0.0 { c2 * (1.0 - f * f) } else { 0.0 };
    Ok(BoundEntry::new(
        "thm2",
        vec![
            ("matched_cell", c1 * inp.max_cell_diam * f),
            ("noise", 4.0 * c2 * (inp.m as f64 / inp.n as f64) * inp.expected_abs_noise),
            ("size_mismatch", mismatch),
        ],
    ))
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= PRECOND_TOL * x.abs().max(y.abs()).max(1.0)
}

/// Checks `a = b`, realised cell diameter `m^{-1/d}` and discrete Laplace
/// noise (recognised through its mean absolute value).
fn simplified_preconditions(inp: &BoundInputs) -> Result<()> {
    if !close(inp.a, inp.b) {
        return Err(Error::Precondition(format!("requires a = b, got a={} b={}", inp.a, inp.b)));
    }
    let side = (inp.m as f64).powf(-1.0 / inp.d as f64);
    if !close(inp.max_cell_diam, side) {
        return Err(Error::Precondition(format!(
            "requires max cell diameter m^(-1/d) = {side}, got {}",
            inp.max_cell_diam
        )));
    }
    let laplace = NoiseSpec::DiscreteLaplace { eps: inp.eps }.expected_abs();
    if !close(inp.expected_abs_noise, laplace) {
        return Err(Error::Precondition(format!(
            "requires discrete Laplace noise (E|noise| = {laplace}), got {}",
            inp.expected_abs_noise
        )));
    }
    Ok(())
}

pub fn cor5_bound(inp: &BoundInputs) -> Result<BoundEntry> {
    inp.validate()?;
    simplified_preconditions(inp)?;
    let (c1, c2) = c_tilde(inp);
    let f_n = inp.m as f64 / inp.n as f64;
    let m_side = (inp.m as f64).powf(-1.0 / inp.d as f64);
    let eps = inp.eps;
    Ok(BoundEntry::new(
        "cor5",
        vec![
            ("discretisation", c1 * m_side),
            ("noise", 4.0 * c2 * f_n * (-eps).exp() / -(-2.0 * eps).exp_m1()),
        ],
    ))
}

/// `(c_V(c), c_E(c), C_alpha)`. `c_E` is clamped at 0: the printed expression
/// goes negative for `c` below about 0.7.
pub fn stein_constants(c: f64, inp: &BoundInputs) -> Result<(f64, f64, f64)> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    let ca = c_alpha(inp.alpha, inp.cap, inp.diam_omega);
    let e = (-c).exp();
    let cv = ca.min((1.0 + (1.0 - e) * log_plus(c)) * ca / c);
    let raw = (2.0 - e) / c - (1.5 - e) / (c * c);
    let ce = raw.clamp(0.0, 1.0) * inp.alpha * inp.cap;
    Ok((cv, ce, ca))
}

pub fn thm3_bound(inp: &BoundInputs) -> Result<BoundEntry> {
    inp.validate()?;
    let (_, c2) = c_tilde(inp);
    let low = inp.min_ab();
    let gap = inp.gap();
    let f = mismatch_factor(inp);
    let (cv, ce, _) = stein_constants(low, inp)?;
    let mismatch = if gap > 0.0 { c2 * (1.0 - f * f) } else { 0.0 };
    Ok(BoundEntry::new(
        "thm3",
        vec![
            ("vertex_attributes", (1.0 + f) * (1.0 - inp.alpha) * inp.max_cell_diam),
            ("size_mismatch", mismatch),
            ("noise", 2.0 * cv * (low / inp.n as f64) * inp.leb_omega * inp.expected_abs_noise),
            ("edges", ce * 2.0 * inp.lipschitz * inp.max_cell_diam.powi(3) * low * low),
        ],
    ))
}

pub fn cor6_bound(inp: &BoundInputs) -> Result<BoundEntry> {
    inp.validate()?;
    simplified_preconditions(inp)?;
    if !close(inp.leb_omega, 1.0) {
        return Err(Error::Precondition("requires the unit cube (Lebesgue measure 1)".into()));
    }
    let (alpha, eps, a) = (inp.alpha, inp.eps, inp.a);
    let m = inp.m as f64;
    let d = inp.d as f64;
    let ca = c_alpha(alpha, inp.cap, inp.diam_omega);
    let n = inp.n as f64;
    Ok(BoundEntry::new(
        "cor6",
        vec![
            ("discretisation", 2.0 * (1.0 - alpha) * m.powf(-1.0 / d)),
            ("noise", 2.0 * (1.0 + log_plus(a)) / (eps * n) * ca * laplace_factor(eps)),
            ("edges", 4.0 * alpha * inp.cap * inp.lipschitz * m.powf(-3.0 / d) * a),
        ],
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalParams {
    pub f_n: f64,
    /// `ceil(f_n n)` before grid realisation.
    pub m_request: u64,
    pub k_per_axis: u64,
    /// Realised cell count `k^d`.
    pub m: u64,
    pub a: f64,
}

pub fn optimal_params(eps: f64, n: u64, d: u32) -> Result<OptimalParams> {
    if !(eps.is_finite() && eps > 0.0) || n == 0 || d == 0 {
        return Err(Error::InvalidParameter("eps > 0, n >= 1 and d >= 1 required".into()));
    }
    let df = d as f64;
    let f_n = eps.powf(df / (df + 1.0)) * (n as f64).powf(-1.0 / (df + 1.0));
    // guard against ceil(31.0000000001) style round-off on exact products
    let raw = (f_n * n as f64 - 1e-9).ceil();
    let m_request = if raw < 1.0 {
        log::warn!("f_n * n = {} rounds below one cell; using m = 1", f_n * n as f64);
        1
    } else {
        raw as u64
    };
    let mut k = (m_request as f64).powf(1.0 / df).round().max(1.0) as u64;
    while k.pow(d) < m_request {
        k += 1;
    }
    while k > 1 && (k - 1).pow(d) >= m_request {
        k -= 1;
    }
    let m = k.pow(d);
    Ok(OptimalParams {
        f_n,
        m_request,
        k_per_axis: k,
        m,
        a: (m as f64).powf(2.0 / df),
    })
}

/// Inputs for the unit cube under `metric` with optimal parameters, `a = b`
/// and discrete Laplace noise.
pub fn optimal_inputs(eps: f64, n: u64, d: u32, alpha: f64, cap: f64, lipschitz: f64, metric: Metric) -> Result<BoundInputs> {
    let p = optimal_params(eps, n, d)?;
    let inp = BoundInputs {
        a: p.a,
        b: p.a,
        n,
        m: p.m,
        eps,
        d,
        alpha,
        cap,
        lipschitz,
        diam_omega: metric.cube_diameter(d as usize, 1.0),
        max_cell_diam: metric.cube_diameter(d as usize, 1.0 / p.k_per_axis as f64),
        leb_omega: 1.0,
        expected_abs_noise: NoiseSpec::DiscreteLaplace { eps }.expected_abs(),
    };
    inp.validate()?;
    Ok(inp)
}

/// `(coupling rate, Stein rate)`; both are for the unit cube with diameter
/// `diam`.
pub fn rate_bounds(eps: f64, n: u64, d: u32, alpha: f64, cap: f64, lipschitz: f64, diam: f64) -> (BoundEntry, BoundEntry) {
    let en = eps * n as f64;
    let df = d as f64;
    let power = en.powf(-1.0 / (df + 1.0));
    let cl = cap * lipschitz;
    let c1 = 1.0 - alpha + 2.0 * alpha * cl;
    let c2 = (1.0 - alpha) * diam + alpha * cap.min(2.0 * cl * diam);
    let coupling = BoundEntry::new("rate_coupling", vec![("rate", (c1 + 2.0 * c2) * power)]);
    let ca = c_alpha(alpha, cap, diam);
    let stein = BoundEntry::new(
        "rate_stein",
        vec![
            ("rate", (2.0 * (1.0 - alpha) + 4.0 * alpha * cl) * power),
            ("log", ca * (1.0 + 2.0 / (df + 1.0) * log_plus(en)) / en),
        ],
    );
    (coupling, stein)
}

pub fn bound_report(inp: &BoundInputs) -> Result<BoundReport> {
    let thm2 = thm2_bound(inp)?;
    let thm3 = thm3_bound(inp)?;
    let split = |r: Result<BoundEntry>| match r {
        Ok(e) => Ok((Some(e), None)),
        Err(Error::Precondition(msg)) => Ok((None, Some(msg))),
        Err(e) => Err(e),
    };
    let (cor5, cor5_skipped) = split(cor5_bound(inp))?;
    let (cor6, cor6_skipped) = split(cor6_bound(inp))?;
    let (rate_coupling, rate_stein) =
        rate_bounds(inp.eps, inp.n, inp.d, inp.alpha, inp.cap, inp.lipschitz, inp.diam_omega);
    Ok(BoundReport {
        inputs: *inp,
        thm2,
        cor5,
        cor5_skipped,
        thm3,
        cor6,
        cor6_skipped,
        rate_coupling,
        rate_stein,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub eps: Vec<f64>,
    pub n: Vec<u64>,
    /// `cor5[e][j]` is the entry for `eps[e]` and `n[j]`.
    pub cor5: Vec<Vec<f64>>,
    pub cor6: Vec<Vec<f64>>,
}

pub const DEFAULT_TABLE_EPS: [f64; 6] = [5.0, 2.0, 1.0, 0.5, 0.1, 0.01];
pub const DEFAULT_TABLE_N: [u64; 3] = [100, 1000, 10000];

/// Simplified bounds under the optimal parameters on the sup-norm unit cube.
pub fn bound_table(eps: &[f64], n: &[u64], d: u32, alpha: f64, cap: f64, lipschitz: f64) -> Result<BoundTable> {
    if eps.is_empty() || n.is_empty() {
        return Err(Error::InvalidParameter("eps and n lists must be nonempty".into()));
    }
    let mut cor5 = Vec::with_capacity(eps.len());
    let mut cor6 = Vec::with_capacity(eps.len());
    for &e in eps {
        let mut r5 = Vec::with_capacity(n.len());
        let mut r6 = Vec::with_capacity(n.len());
        for &nn in n {
            let inp = optimal_inputs(e, nn, d, alpha, cap, lipschitz, Metric::SupNorm)?;
            r5.push(cor5_bound(&inp)?.total);
            r6.push(cor6_bound(&inp)?.total);
        }
        cor5.push(r5);
        cor6.push(r6);
    }
    Ok(BoundTable {
        eps: eps.to_vec(),
        n: n.to_vec(),
        cor5,
        cor6,
    })
}

impl BoundTable {
    /// Every entry strictly decreases along increasing `n` (columns are
    /// compared in ascending `n` order).
    pub fn decreasing_in_n(&self) -> bool {
        let mut order: Vec<usize> = (0..self.n.len()).collect();
        order.sort_by_key(|&j| self.n[j]);
        [&self.cor5, &self.cor6].iter().all(|rows| {
            rows.iter()
                .all(|row| order.windows(2).all(|w| row[w[1]] < row[w[0]]))
        })
    }

    /// Two header lines (`n` values, then bound names), one row per `eps`
    /// and a trailing comment with the monotonicity check.
    pub fn to_csv(&self, sep: char) -> String {
        let mut out = String::new();
        for n in &self.n {
            out.push_str(&format!("{sep}{n}{sep}{n}"));
        }
        out.push('\n');
        out.push_str("eps");
        for _ in &self.n {
            out.push_str(&format!("{sep}Cor5{sep}Cor6"));
        }
        out.push('\n');
        for (e, eps) in self.eps.iter().enumerate() {
            out.push_str(&eps.to_string());
            for j in 0..self.n.len() {
                out.push_str(&format!("{sep}{:.6}{sep}{:.6}", self.cor5[e][j], self.cor6[e][j]));
            }
            out.push('\n');
        }
        out.push_str(&format!("# decreasing_in_n={}\n", self.decreasing_in_n()));
        out
    }
}
