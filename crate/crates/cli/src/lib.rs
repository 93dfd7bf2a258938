//! Argument parsing and command dispatch shared by the `privgraph` binary and
//! its single-purpose aliases.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use clap::{Args, CommandFactory, Parser, Subcommand};
use privgraph::bounds::{self, BoundInputs, DEFAULT_TABLE_EPS, DEFAULT_TABLE_N};
use privgraph::experiment::{self, DataSource, ExperimentConfig, Setting};
use privgraph::fgw::{self, Coupling, EXACT_CAP, FgwParams, graph_to_measure};
use privgraph::graphmodel::{AttributedGraph, KernelKind};
use privgraph::metric::Metric;
use privgraph::noise::NoiseSpec;
use privgraph::psmm::{DiscreteMeasure, SignedMeasure, tv_project, tv_project_lp};

#[derive(Parser, Debug)]
#[command(name = "privgraph", version, about = "Differentially private synthetic attributed graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample true/synthetic graph pairs and write them with a manifest.
    Generate(GenerateArgs),
    /// Monte-Carlo distances against the closed-form bounds.
    Evaluate(EvaluateArgs),
    /// Closed-form bounds.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// The simplified-bound table with its default grid.
    Table(TableArgs),
    /// Project a signed weight vector onto the probability simplex.
    Project(ProjectArgs),
    /// Check the likelihood-ratio condition of a noise law.
    Noisecheck(NoiseArgs),
    /// Distance computations.
    #[command(subcommand)]
    Fgw(FgwCommand),
    /// Write the true graph and three synthetic graphs of the two-point recipe.
    Fig1(Fig1Args),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON config (or a manifest to replay); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV attribute file, one point per row.
    #[arg(long, conflicts_with_all = ["two_point", "uniform"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub has_header: bool,
    /// Use N points split between the origin and the far corner.
    #[arg(long, value_name = "N")]
    pub two_point: Option<usize>,
    /// Use N seeded uniform points.
    #[arg(long, value_name = "N")]
    pub uniform: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Cell count or `auto`.
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// `laplace`, `bounded-power:A`, `custom:PATH` or `zero`.
    #[arg(long)]
    pub noise: Option<String>,
    /// Expected true-graph size or `auto`.
    #[arg(long)]
    pub a: Option<String>,
    /// Expected synthetic-graph size or `auto`.
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "C")]
    pub cap: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub refine_cap: Option<usize>,
    #[arg(long)]
    pub fw_iterations: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Omit the true graph and the matching; implies --redact.
    #[arg(long)]
    pub private_only: bool,
    /// Omit raw counts and noise draws from the release.
    #[arg(long)]
    pub redact: bool,
    /// Also write Graphviz files.
    #[arg(long)]
    pub dot: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = ",")]
    pub csv_sep: char,
}

#[derive(Subcommand, Debug)]
pub enum BoundsCommand {
    /// Simplified bounds for a grid of privacy levels and sample sizes.
    Table(TableArgs),
    /// Every bound with its per-term breakdown.
    Eval(BoundsEvalArgs),
}

#[derive(Args, Debug)]
pub struct TableArgs {
    #[arg(long, default_value_t = 2)]
    pub d: u32,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    pub cap: f64,
    #[arg(long = "Lk", default_value_t = 1.0)]
    pub lipschitz: f64,
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = ";")]
    pub csv_sep: char,
}

#[derive(Args, Debug)]
pub struct BoundsEvalArgs {
    #[arg(long)]
    pub json: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Comma-separated weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "input")]
    pub weights: Option<Vec<f64>>,
    /// JSON array of weights.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Solve the linear program instead of the closed form.
    #[arg(long)]
    pub lp: bool,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    #[arg(long, default_value = "laplace")]
    pub noise: String,
    #[arg(long)]
    pub eps: f64,
    /// Exit with an error when the check fails.
    #[arg(long)]
    pub require: bool,
}

#[derive(Subcommand, Debug)]
pub enum FgwCommand {
    /// Distance between two graphs stored as JSON.
    Dist(DistArgs),
    /// Monte-Carlo estimate of the expected distance for a config.
    Mc(Box<McArgs>),
}

#[derive(Args, Debug)]
pub struct DistArgs {
    #[arg(long = "from")]
    pub from: PathBuf,
    #[arg(long = "to")]
    pub to: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    pub cap: f64,
    #[arg(long, default_value = "sup")]
    pub metric: Metric,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Require the exact solver (at most four vertices per side).
    #[arg(long)]
    pub exact: bool,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Include per-replicate records in the output.
    #[arg(long)]
    pub rows: bool,
}

#[derive(Args, Debug)]
pub struct Fig1Args {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 100.0)]
    pub a: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() && !e.render().to_string().contains("Usage:") => {
            // value errors omit the usage line
            eprint!("{}", e.render());
            eprintln!("\n{}", Cli::command().render_usage());
            std::process::exit(2);
        }
        Err(e) => e.exit(),
    };
    configure_threads()?;
    dispatch(cli.command)
}

/// Runs an alias binary: the subcommand is inserted after the program name.
pub fn run_alias(subcommand: &str) -> Result<()> {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    args.insert(1.min(args.len()), subcommand.into());
    run(args)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PRIVGRAPH_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("PRIVGRAPH_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("PRIVGRAPH_THREADS must be at least 1");
        }
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(g) => {
            let mut cfg = build_config(&g.config)?;
            cfg.private_only |= g.private_only;
            cfg.redact_counts |= g.redact;
            cfg.dot |= g.dot;
            let man = experiment::generate(&cfg, g.config.out.as_deref())?;
            log::info!("wrote {} files in {} ms", man.outputs.len() + 1, man.elapsed_ms);
            Ok(())
        }
        Command::Evaluate(e) => {
            let cfg = build_config(&e.config)?;
            let (_, ev) = experiment::evaluate(&cfg, e.config.out.as_deref(), sep_byte(e.csv_sep)?)?;
            println!("{}", serde_json::to_string_pretty(&ev.summary)?);
            Ok(())
        }
        Command::Bounds(BoundsCommand::Table(t)) | Command::Table(t) => table(&t),
        Command::Bounds(BoundsCommand::Eval(b)) => {
            let text = fs::read_to_string(&b.json).with_context(|| format!("reading {}", b.json.display()))?;
            let inputs: BoundInputs =
                serde_json::from_str(&text).with_context(|| format!("parsing bound inputs in {}", b.json.display()))?;
            let report = bounds::bound_report(&inputs)?;
            emit(b.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::Project(p) => project(&p),
        Command::Noisecheck(n) => {
            let spec = parse_noise(&n.noise, n.eps)?;
            let report = spec.dp_ratio_satisfied(n.eps);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if n.require && !report.satisfied {
                bail!("likelihood ratio {} exceeds e^eps = {}", report.worst_ratio, report.bound);
            }
            Ok(())
        }
        Command::Fgw(FgwCommand::Dist(d)) => dist(&d),
        Command::Fgw(FgwCommand::Mc(m)) => {
            let cfg = build_config(&m.config)?;
            let res = experiment::resolve(&cfg)?;
            let mc = experiment::mc_config(&res);
            let mut est = fgw::mc_expected_fgw(&mc, cfg.replicates.max(2), cfg.seed)?;
            if !m.rows {
                est.replicates.clear();
            }
            println!("{}", serde_json::to_string_pretty(&est)?);
            Ok(())
        }
        Command::Fig1(f) => {
            let panels = experiment::fig1_panels(f.n, f.a, f.seed)?;
            let names = experiment::write_fig1(&f.out, &panels)?;
            let rho = experiment::attribute_degree_spearman(&panels[0].graph);
            let summary = serde_json::json!({ "files": names, "true_graph_spearman": rho });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}

fn sep_byte(c: char) -> Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        bail!("CSV separator must be ASCII, got `{c}`")
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn table(t: &TableArgs) -> Result<()> {
    let eps = t.eps.clone().unwrap_or_else(|| DEFAULT_TABLE_EPS.to_vec());
    let n = t.n.clone().unwrap_or_else(|| DEFAULT_TABLE_N.to_vec());
    let tab = bounds::bound_table(&eps, &n, t.d, t.alpha, t.cap, t.lipschitz)?;
    emit(t.out.as_deref(), &tab.to_csv(t.csv_sep))
}

fn project(p: &ProjectArgs) -> Result<()> {
    let weights = match (&p.weights, &p.input) {
        (Some(w), _) => w.clone(),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{} must hold a JSON array of numbers", path.display()))?
        }
        (None, None) => bail!("give --weights or --input"),
    };
    let nu = SignedMeasure::from_weights(weights)?;
    let (mu, distance) = if p.lp { tv_project_lp(&nu)? } else { tv_project(&nu)? };
    let out = serde_json::json!({ "weights": mu.weights(), "distance": distance });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn read_graph(path: &Path) -> Result<AttributedGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    AttributedGraph::from_json(&text).with_context(|| format!("parsing graph {}", path.display()))
}

fn dist(d: &DistArgs) -> Result<()> {
    let params = FgwParams::new(d.alpha, d.cap, d.metric)?;
    let ga = read_graph(&d.from)?;
    let gb = read_graph(&d.to)?;
    let a = graph_to_measure(&ga, &params)?;
    let b = graph_to_measure(&gb, &params)?;
    let small = a.len() <= EXACT_CAP && b.len() <= EXACT_CAP;
    let (value, method) = if small {
        (fgw::fgw_exact_small(&a, &b, &params)?.0, "exact")
    } else if d.exact {
        bail!("--exact supports at most {EXACT_CAP} vertices per side, got {} and {}", a.len(), b.len());
    } else {
        let init = Coupling::product(a.weights(), b.weights());
        (fgw::fgw_upper_bound(&a, &b, &params, &init, d.iterations)?.value, "conditional_gradient")
    };
    let out = serde_json::json!({ "value": value, "method": method });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

/// `laplace`, `bounded-power:A`, `custom:PATH` (JSON `{"pmf": {...}}`) or
/// `zero` for the point mass at 0.
pub fn parse_noise(s: &str, eps: f64) -> Result<NoiseSpec> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let spec = match (name, arg) {
        ("laplace" | "discrete-laplace", None) => NoiseSpec::discrete_laplace(eps)?,
        ("bounded-power", Some(a)) => {
            let a: u32 = a.parse().with_context(|| format!("bad exponent in `{s}`"))?;
            NoiseSpec::bounded_power(eps, a)?
        }
        ("custom", Some(path)) => NoiseSpec::custom_from_path(Path::new(path))?,
        ("zero", None) => NoiseSpec::custom([(0, 1.0)].into())?,
        _ => bail!("unknown noise `{s}`; expected laplace, bounded-power:A, custom:PATH or zero"),
    };
    Ok(spec)
}

fn parse_setting<T: std::str::FromStr>(s: &str, name: &str) -> Result<Setting<T>> {
    if s == "auto" {
        return Ok(Setting::default());
    }
    s.parse()
        .map(Setting::Value)
        .map_err(|_| anyhow::anyhow!("--{name} must be a number or `auto`, got `{s}`"))
}

/// Merges the optional config file with command-line overrides.
pub fn build_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::from_path(path)?;
            // data paths in a config file are relative to the file
            if let DataSource::Csv { path: data, .. } = &mut cfg.data {
                if data.is_relative() {
                    if let Some(dir) = path.parent() {
                        *data = dir.join(&*data);
                    }
                }
            }
            Some(cfg)
        }
        None => None,
    };
    let data = if let Some(p) = &args.data {
        Some(DataSource::Csv {
            path: p.clone(),
            has_header: args.has_header,
        })
    } else if let Some(n) = args.two_point {
        Some(DataSource::TwoPoint { n })
    } else {
        args.uniform.map(|n| DataSource::Uniform { n })
    };
    let cfg = match cfg.take() {
        Some(mut c) => {
            if let Some(d) = data {
                c.data = d;
            }
            if let Some(d) = args.dim {
                c.dim = d;
            }
            if let Some(eps) = args.eps {
                c.eps = eps;
            }
            if let Some(s) = args.seed {
                c.seed = s;
            }
            c
        }
        None => {
            let data = data.context("no data: give --config, --data, --two-point or --uniform")?;
            let eps = args.eps.context("--eps is required without --config")?;
            let seed = args.seed.context("--seed is required without --config")?;
            let dim = args.dim.unwrap_or(1);
            let base = serde_json::json!({ "data": data, "dim": dim, "eps": eps, "seed": seed });
            ExperimentConfig::from_json(&base.to_string())?
        }
    };
    let mut cfg = cfg;
    if let Some(m) = args.metric {
        cfg.metric = m;
    }
    if let Some(m) = &args.m {
        cfg.m = parse_setting(m, "m")?;
    }
    if let Some(a) = &args.a {
        cfg.a = parse_setting(a, "a")?;
    }
    if let Some(b) = &args.b {
        cfg.b = parse_setting(b, "b")?;
    }
    if let Some(n) = &args.noise {
        cfg.noise = Some(parse_noise(n, cfg.eps)?);
    }
    if let Some(k) = args.kernel {
        cfg.kernel = k;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(c) = args.cap {
        cfg.cap = c;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(r) = args.refine_cap {
        cfg.refine_cap = r;
    }
    if let Some(r) = args.fw_iterations {
        cfg.fw_iterations = r;
    }
    // reject bad values before anything is sampled or written
    experiment::resolve(&cfg)?;
    Ok(cfg)
}
