//! Experiment configuration, manifests and the generate/evaluate pipelines
//! behind the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundInputs, optimal_params};
use crate::fgw::{
    self, DfEstimate, Evaluator, FgwParams, McConfig, ReplicateFgw, default_references,
};
use crate::graphmodel::{AttributedGraph, Kernel, KernelKind};
use crate::metric::{AttributeDataset, Metric, Partition, SpaceConfig, build_grid_partition};
use crate::noise::NoiseSpec;
use crate::psgg::{CommonMatch, run_psgg};
use crate::psmm::PsmmRelease;
use crate::seed::{derive_seed, stream};
use crate::stats::{mean_and_stderr, spearman};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoWord {
    Auto,
}

/// A parameter that is either given or resolved from the optimal rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting<T> {
    Auto(AutoWord),
    Value(T),
}

impl<T> Default for Setting<T> {
    fn default() -> Self {
        Setting::Auto(AutoWord::Auto)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
    },
    /// `n` points, the first half at the origin and the rest at the far
    /// corner.
    TwoPoint { n: usize },
    /// `n` uniform points drawn from the stream `derive_seed(seed, u64::MAX)`.
    Uniform { n: usize },
}

fn default_alpha() -> f64 {
    0.5
}
fn default_cap() -> f64 {
    1.0
}
fn default_replicates() -> usize {
    1
}
fn default_refine_cap() -> usize {
    32
}
fn default_fw_iterations() -> usize {
    30
}
fn default_kernel() -> KernelKind {
    KernelKind::ChungLu
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub dim: usize,
    #[serde(default)]
    pub metric: Metric,
    /// Requested cell count; the grid realises the smallest `k^d >= m`.
    #[serde(default)]
    pub m: Setting<usize>,
    pub eps: f64,
    /// Defaults to discrete Laplace at `eps`.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub a: Setting<f64>,
    #[serde(default)]
    pub b: Setting<f64>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_cap", rename = "C")]
    pub cap: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub private_only: bool,
    #[serde(default)]
    pub redact_counts: bool,
    #[serde(default)]
    pub dot: bool,
    #[serde(default = "default_refine_cap")]
    pub refine_cap: usize,
    #[serde(default = "default_fw_iterations")]
    pub fw_iterations: usize,
}

impl ExperimentConfig {
    /// Accepts either a bare config or a manifest (its `config` field), so a
    /// manifest can be replayed directly.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match value.get("config") {
            Some(c) if value.get("software_version").is_some() => c.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("reading config {}: {e}", path.display())))
        })?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub n: usize,
    pub dim: usize,
    pub metric: Metric,
    pub m_request: usize,
    pub m: usize,
    pub k_per_axis: usize,
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub noise: NoiseSpec,
    pub kernel: Kernel,
    pub fgw: FgwParams,
    /// Parameters that were `"auto"` in the config.
    pub auto: Vec<String>,
}

/// Everything needed to run a config, validated before any sampling.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub dataset: AttributeDataset,
    pub partition: Partition,
    pub params: ResolvedParams,
}

pub fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    let space = SpaceConfig::new(config.dim, config.metric)?;
    if !(config.eps.is_finite() && config.eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {}", config.eps)));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be at least 1".into()));
    }
    let dataset = load_data(&config.data, config.dim, config.seed)?;
    for p in dataset.points() {
        space.check_point(p)?;
    }
    let n = dataset.n();
    let mut auto = Vec::new();
    let opt = optimal_params(config.eps, n as u64, config.dim as u32)?;
    let m_request = match config.m {
        Setting::Value(m) if m >= 1 => m,
        Setting::Value(_) => return Err(Error::InvalidParameter("m must be at least 1".into())),
        Setting::Auto(_) => {
            auto.push("m".to_string());
            opt.m_request as usize
        }
    };
    let partition = build_grid_partition(space, m_request)?;
    let realized_a = (partition.m() as f64).powf(2.0 / config.dim as f64);
    let mut side = |s: Setting<f64>, name: &str| -> Result<f64> {
        match s {
            Setting::Value(v) if v.is_finite() && v > 0.0 => Ok(v),
            Setting::Value(v) => Err(Error::InvalidParameter(format!("{name} must be positive, got {v}"))),
            Setting::Auto(_) => {
                auto.push(name.to_string());
                Ok(realized_a)
            }
        }
    };
    let a = side(config.a, "a")?;
    let b = side(config.b, "b")?;
    let noise = match &config.noise {
        Some(spec) => spec.clone().validate()?,
        None => NoiseSpec::discrete_laplace(config.eps)?,
    };
    let kernel = Kernel::new(config.kernel, config.metric, config.dim)?;
    let fgw = FgwParams::new(config.alpha, config.cap, config.metric)?;
    let params = ResolvedParams {
        n,
        dim: config.dim,
        metric: config.metric,
        m_request,
        m: partition.m(),
        k_per_axis: partition.k_per_axis(),
        a,
        b,
        eps: config.eps,
        noise,
        kernel,
        fgw,
        auto,
    };
    Ok(Resolved {
        config: config.clone(),
        dataset,
        partition,
        params,
    })
}

fn load_data(src: &DataSource, dim: usize, seed: u64) -> Result<AttributeDataset> {
    match src {
        DataSource::Csv { path, has_header } => AttributeDataset::from_csv_path(path, Some(dim), *has_header),
        DataSource::TwoPoint { n } => two_point_data(*n, dim),
        DataSource::Uniform { n } => {
            let mut rng = stream(derive_seed(seed, u64::MAX));
            let pts = (0..*n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
            AttributeDataset::new(dim, pts)
        }
    }
}

pub fn two_point_data(n: usize, dim: usize) -> Result<AttributeDataset> {
    let pts = (0..n)
        .map(|i| vec![if i < n / 2 { 0.0 } else { 1.0 }; dim])
        .collect();
    AttributeDataset::new(dim, pts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub resolved: ResolvedParams,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    /// Wall-clock time; the only field that differs between replays.
    pub elapsed_ms: u128,
}

fn manifest(res: &Resolved, command: &str, seeds: Vec<u64>, outputs: Vec<String>, start: Instant) -> RunManifest {
    RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: res.config.clone(),
        resolved: res.params.clone(),
        seeds,
        outputs,
        elapsed_ms: start.elapsed().as_millis(),
    }
}

/// One generated pair as written to disk. The true graph and the matching
/// are left out in private-only mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub replicate: usize,
    pub seed: u64,
    pub release: PsmmRelease,
    pub synthetic_graph: AttributedGraph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_graph: Option<AttributedGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_matches: Option<Vec<CommonMatch>>,
}

fn out_dir(res: &Resolved, override_dir: Option<&Path>) -> Result<PathBuf> {
    let dir = override_dir
        .map(Path::to_path_buf)
        .or_else(|| res.config.out_dir.clone())
        .ok_or_else(|| Error::InvalidParameter("no output directory given".into()))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn file_name(stem: &str, ext: &str, replicate: usize, replicates: usize) -> String {
    if replicates == 1 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_{replicate:04}.{ext}")
    }
}

/// Samples every replicate in parallel, then writes `pair*.json`, optional
/// DOT files and `manifest.json` in replicate order.
pub fn generate(config: &ExperimentConfig, override_dir: Option<&Path>) -> Result<RunManifest> {
    let start = Instant::now();
    let res = resolve(config)?;
    let dir = out_dir(&res, override_dir)?;
    let p = &res.params;
    let private_only = config.private_only;
    let redact = config.redact_counts || private_only;
    let seeds: Vec<u64> = (0..config.replicates).map(|r| derive_seed(config.seed, r as u64)).collect();
    let records: Vec<PairRecord> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            let mut rng = stream(seed);
            let pair = run_psgg(&res.dataset, &res.partition, &p.noise, p.a, p.b, &p.kernel, &mut rng)?;
            Ok(PairRecord {
                replicate: r,
                seed,
                release: pair.psmm.release(redact),
                synthetic_graph: pair.synthetic_graph,
                true_graph: (!private_only).then_some(pair.true_graph),
                common_matches: (!private_only).then_some(pair.common_matches),
            })
        })
        .collect::<Result<_>>()?;
    let mut outputs = Vec::new();
    for rec in &records {
        let name = file_name("pair", "json", rec.replicate, config.replicates);
        fs::write(dir.join(&name), serde_json::to_string_pretty(rec)? + "\n")?;
        outputs.push(name);
        if config.dot {
            let name = file_name("synthetic", "dot", rec.replicate, config.replicates);
            fs::write(dir.join(&name), rec.synthetic_graph.to_dot("synthetic"))?;
            outputs.push(name);
            if let Some(t) = &rec.true_graph {
                let name = file_name("true", "dot", rec.replicate, config.replicates);
                fs::write(dir.join(&name), t.to_dot("true"))?;
                outputs.push(name);
            }
        }
    }
    let man = manifest(&res, "generate", seeds, outputs, start);
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&man)? + "\n")?;
    Ok(man)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub replicates: usize,
    pub proof_plan_mean: f64,
    pub proof_plan_stderr: f64,
    pub refined_mean: f64,
    pub refined_stderr: f64,
    pub thm2_bound: f64,
    pub cor5_bound: Option<f64>,
    pub df_lower: DfEstimate,
    /// Mean proof-plan cost within three standard errors of the bound.
    pub thm2_satisfied: bool,
    pub cor5_satisfied: Option<bool>,
    /// Reference lower bound within three standard errors of the refined mean.
    pub df_satisfied: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<ReplicateFgw>,
    pub summary: EvaluationSummary,
}

pub fn bound_inputs(res: &Resolved) -> BoundInputs {
    let p = &res.params;
    BoundInputs {
        a: p.a,
        b: p.b,
        n: p.n as u64,
        m: p.m as u64,
        eps: p.eps,
        d: p.dim as u32,
        alpha: p.fgw.alpha,
        cap: p.fgw.cap,
        lipschitz: p.kernel.lipschitz(),
        diam_omega: res.partition.space().diameter(),
        max_cell_diam: res.partition.max_diam(),
        leb_omega: 1.0,
        expected_abs_noise: p.noise.expected_abs(),
    }
}

pub fn mc_config(res: &Resolved) -> McConfig {
    let p = &res.params;
    McConfig {
        dataset: res.dataset.clone(),
        partition: res.partition.clone(),
        noise: p.noise.clone(),
        a: p.a,
        b: p.b,
        kernel: p.kernel,
        params: p.fgw,
        refine_cap: res.config.refine_cap,
        fw_iterations: res.config.fw_iterations,
        references: default_references(p.dim),
        evaluator: Evaluator::Refined {
            iterations: res.config.fw_iterations,
        },
    }
}

pub fn evaluate_resolved(res: &Resolved) -> Result<Evaluation> {
    let cfg = mc_config(res);
    let reps = res.config.replicates.max(2);
    let est = fgw::mc_expected_fgw(&cfg, reps, res.config.seed)?;
    let inp = bound_inputs(res);
    let thm2 = bounds::thm2_bound(&inp)?.total;
    let cor5 = bounds::cor5_bound(&inp).ok().map(|e| e.total);
    let (pm, ps) = mean_and_stderr(&est.replicates.iter().map(|r| r.proof_plan_cost).collect::<Vec<_>>());
    let df = est.df.clone().expect("references are nonempty");
    let summary = EvaluationSummary {
        replicates: reps,
        proof_plan_mean: pm,
        proof_plan_stderr: ps,
        refined_mean: est.mean,
        refined_stderr: est.stderr,
        thm2_bound: thm2,
        cor5_bound: cor5,
        thm2_satisfied: pm <= thm2 + 3.0 * ps,
        cor5_satisfied: cor5.map(|c| pm <= c + 3.0 * ps),
        df_satisfied: df.value <= est.mean + 3.0 * est.stderr,
        df_lower: df,
    };
    Ok(Evaluation {
        rows: est.replicates,
        summary,
    })
}

pub const EVAL_HEADER: [&str; 11] = [
    "replicate",
    "seed",
    "true_vertices",
    "synthetic_vertices",
    "matches",
    "proof_plan_cost",
    "plan_cost",
    "refined_fgw",
    "thm2_bound",
    "cor5_bound",
    "df_lower",
];

/// Per-replicate rows followed by `mean`, `stderr` and `satisfied` rows.
pub fn evaluation_csv(ev: &Evaluation, sep: u8) -> Result<String> {
    let mut w = csv::WriterBuilder::new().delimiter(sep).from_writer(Vec::new());
    w.write_record(EVAL_HEADER)?;
    let s = &ev.summary;
    let cor5 = s.cor5_bound.map(|c| c.to_string()).unwrap_or_default();
    for r in &ev.rows {
        w.write_record([
            r.replicate.to_string(),
            r.seed.to_string(),
            r.true_vertices.to_string(),
            r.synthetic_vertices.to_string(),
            r.matches.to_string(),
            r.proof_plan_cost.to_string(),
            r.plan_cost.to_string(),
            r.refined_fgw.to_string(),
            s.thm2_bound.to_string(),
            cor5.clone(),
            String::new(),
        ])?;
    }
    let col_mean = |f: fn(&ReplicateFgw) -> f64| mean_and_stderr(&ev.rows.iter().map(f).collect::<Vec<_>>());
    let plan = col_mean(|r| r.plan_cost);
    let tv = col_mean(|r| r.true_vertices as f64);
    let sv = col_mean(|r| r.synthetic_vertices as f64);
    let mt = col_mean(|r| r.matches as f64);
    w.write_record([
        "mean".to_string(),
        String::new(),
        tv.0.to_string(),
        sv.0.to_string(),
        mt.0.to_string(),
        s.proof_plan_mean.to_string(),
        plan.0.to_string(),
        s.refined_mean.to_string(),
        s.thm2_bound.to_string(),
        cor5.clone(),
        s.df_lower.value.to_string(),
    ])?;
    w.write_record([
        "stderr".to_string(),
        String::new(),
        tv.1.to_string(),
        sv.1.to_string(),
        mt.1.to_string(),
        s.proof_plan_stderr.to_string(),
        plan.1.to_string(),
        s.refined_stderr.to_string(),
        String::new(),
        String::new(),
        String::new(),
    ])?;
    w.write_record([
        "satisfied".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        s.thm2_satisfied.to_string(),
        s.cor5_satisfied.map(|b| b.to_string()).unwrap_or_default(),
        s.df_satisfied.to_string(),
    ])?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `evaluation.csv`, `summary.json` and `manifest.json`.
pub fn evaluate(config: &ExperimentConfig, override_dir: Option<&Path>, sep: u8) -> Result<(RunManifest, Evaluation)> {
    let start = Instant::now();
    let res = resolve(config)?;
    let dir = out_dir(&res, override_dir)?;
    let ev = evaluate_resolved(&res)?;
    fs::write(dir.join("evaluation.csv"), evaluation_csv(&ev, sep)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&ev.summary)? + "\n")?;
    let seeds = ev.rows.iter().map(|r| r.seed).collect();
    let outputs = vec!["evaluation.csv".to_string(), "summary.json".to_string()];
    let man = manifest(&res, "evaluate", seeds, outputs, start);
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&man)? + "\n")?;
    Ok((man, ev))
}

pub const FIG1_EPS: [f64; 3] = [1.0, 0.1, 0.01];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1Panel {
    pub label: String,
    pub eps: Option<f64>,
    pub m: usize,
    pub graph: AttributedGraph,
}

/// The true graph plus one synthetic graph per privacy level for `n` points
/// split between 0 and 1, `m = ceil(sqrt(eps n))` cells and `a = b = size`.
pub fn fig1_panels(n: usize, size: f64, seed: u64) -> Result<Vec<Fig1Panel>> {
    let space = SpaceConfig::new(1, Metric::SupNorm)?;
    let data = two_point_data(n, 1)?;
    let kernel = Kernel::new(KernelKind::ChungLu, Metric::SupNorm, 1)?;
    let mut panels = Vec::with_capacity(FIG1_EPS.len() + 1);
    for (i, &eps) in FIG1_EPS.iter().enumerate() {
        let m = ((eps * n as f64).sqrt() - 1e-9).ceil().max(1.0) as usize;
        let part = build_grid_partition(space, m)?;
        let noise = NoiseSpec::discrete_laplace(eps)?;
        let mut rng = stream(derive_seed(seed, i as u64));
        let pair = run_psgg(&data, &part, &noise, size, size, &kernel, &mut rng)?;
        if i == 0 {
            panels.push(Fig1Panel {
                label: "true".into(),
                eps: None,
                m: part.m(),
                graph: pair.true_graph,
            });
        }
        panels.push(Fig1Panel {
            label: format!("synthetic_eps_{eps}"),
            eps: Some(eps),
            m: part.m(),
            graph: pair.synthetic_graph,
        });
    }
    Ok(panels)
}

/// Writes a DOT and a JSON file per panel; returns the file names.
pub fn write_fig1(dir: &Path, panels: &[Fig1Panel]) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for p in panels {
        let stem = p.label.replace('.', "_");
        fs::write(dir.join(format!("{stem}.dot")), p.graph.to_dot(&stem))?;
        fs::write(dir.join(format!("{stem}.json")), p.graph.to_json()? + "\n")?;
        names.push(format!("{stem}.dot"));
        names.push(format!("{stem}.json"));
    }
    Ok(names)
}

/// Spearman correlation between mean attribute and degree; `None` for
/// graphs where either is constant.
pub fn attribute_degree_spearman(g: &AttributedGraph) -> Option<f64> {
    let attr: Vec<f64> = g
        .vertices
        .iter()
        .map(|v| v.attr.iter().sum::<f64>() / v.attr.len().max(1) as f64)
        .collect();
    let deg: Vec<f64> = g.degrees().into_iter().map(|d| d as f64).collect();
    spearman(&attr, &deg)
}
