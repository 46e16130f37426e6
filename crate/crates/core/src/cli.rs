//! Command-line front end: configuration, data ingestion and run outputs.
//!
//! Each subcommand writes one run directory holding `config.txt` (the fully
//! resolved configuration), `manifest.json` (seeds and file list) and its own
//! outputs. Everything written is a deterministic function of the
//! configuration and input files.

mod config;
mod table;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::copula::{pseudo_observations, CopulaModel, Family};
use crate::diagnostics::{self, gof_harness, scaled_draws, PosteriorSummary, Sample2, Scale};
use crate::error::{Error, Result};
use crate::sampler::{ChainTrace, Dataset, Sampler};
use crate::sim::{data_seed, fit_seed, generate_dataset, replicate_study, FitOutput};
use crate::tree::Covariates;

pub use config::{RunConfig, KEYS};
pub use table::Table;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "CCBART_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "ccbart-runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Fit,
    Gof,
    Metrics,
    Plotdata,
    Study,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Simulate,
        Subcommand::Fit,
        Subcommand::Gof,
        Subcommand::Metrics,
        Subcommand::Plotdata,
        Subcommand::Study,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Fit => "fit",
            Subcommand::Gof => "gof",
            Subcommand::Metrics => "metrics",
            Subcommand::Plotdata => "plotdata",
            Subcommand::Study => "study",
        }
    }

    fn about(self) -> &'static str {
        match self {
            Subcommand::Simulate => "Simulate one conditional-copula dataset",
            Subcommand::Fit => "Fit the tree ensemble to a dataset",
            Subcommand::Gof => "Goodness-of-fit tests for a fitted model",
            Subcommand::Metrics => "RMSE and credible-interval metrics of a fit against the truth",
            Subcommand::Plotdata => "Posterior tau(x) curve of a fitted model",
            Subcommand::Study => "Replicate study comparing fixed and adaptive samplers",
        }
    }
}

/// A parsed command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Subcommand,
    pub config: RunConfig,
}

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

/// The clap command tree. Every configuration key is also a `--flag`.
pub fn command() -> Command {
    let mut root = Command::new("ccbart")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Conditional copula estimation with Bayesian additive trees")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in Subcommand::ALL {
        let mut cmd = Command::new(sub.name())
            .about(sub.about())
            .args_override_self(true)
            .arg(
                Arg::new("config")
                    .long("config")
                    .short('c')
                    .value_name("FILE")
                    .help("key=value configuration file; flags override it"),
            )
            .arg(
                Arg::new("output_root")
                    .long("output-root")
                    .value_name("DIR")
                    .env(OUTPUT_ROOT_ENV)
                    .default_value(DEFAULT_OUTPUT_ROOT)
                    .help("parent of the run directory when 'output' is not set"),
            );
        for (key, help) in KEYS {
            cmd = cmd.arg(
                Arg::new(*key)
                    .long(flag(key))
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .help(*help),
            );
        }
        root = root.subcommand(cmd);
    }
    root
}

/// Resolves defaults, the config file and flag overrides, in that order.
pub fn invocation_from_matches(matches: &ArgMatches) -> Result<Invocation> {
    let (name, sub) = matches
        .subcommand()
        .ok_or_else(|| Error::config("no subcommand given"))?;
    let command = Subcommand::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| Error::config(format!("unknown subcommand '{name}'")))?;
    let mut config = match sub.get_one::<String>("config") {
        Some(path) => RunConfig::from_file(Path::new(path))?,
        None => RunConfig::default(),
    };
    for (key, _) in KEYS {
        if let Some(v) = sub.get_one::<String>(key) {
            config
                .set(key, v)
                .map_err(|e| Error::config(format!("--{}: {}", flag(key), config::strip_kind(&e))))?;
        }
    }
    if config.output.is_empty() {
        let root = sub
            .get_one::<String>("output_root")
            .map_or(DEFAULT_OUTPUT_ROOT, String::as_str);
        config.output = Path::new(root)
            .join(format!("{}-seed{}", command.name(), config.seed))
            .display()
            .to_string();
    }
    config.validate()?;
    Ok(Invocation { command, config })
}

/// Parses `args` (program name first) and runs the subcommand, returning the
/// run directory. Usage errors are reported as configuration errors.
pub fn run_args<I, T>(args: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = command()
        .try_get_matches_from(args)
        .map_err(|e| Error::config(e.to_string()))?;
    execute(&invocation_from_matches(&matches)?)
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// anything wrong with the data or files.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}

pub fn execute(inv: &Invocation) -> Result<PathBuf> {
    let out = PathBuf::from(&inv.config.output);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut run = RunDir::new(out.clone(), inv.command);
    run.write("config.txt", &inv.config.to_text())?;
    match inv.command {
        Subcommand::Simulate => cmd_simulate(&inv.config, &mut run)?,
        Subcommand::Fit => cmd_fit(&inv.config, &mut run)?,
        Subcommand::Gof => cmd_gof(&inv.config, &mut run)?,
        Subcommand::Metrics => cmd_metrics(&inv.config, &mut run)?,
        Subcommand::Plotdata => cmd_plotdata(&inv.config, &mut run)?,
        Subcommand::Study => cmd_study(&inv.config, &mut run)?,
    }
    run.finish(&inv.config)?;
    Ok(out)
}

/// Seeds and files of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Derived seeds by role, e.g. `data` or `chains`.
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    pub files: Vec<String>,
}

struct RunDir {
    root: PathBuf,
    command: Subcommand,
    files: Vec<String>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<String>,
}

impl RunDir {
    fn new(root: PathBuf, command: Subcommand) -> Self {
        Self {
            root,
            command,
            files: Vec::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
        }
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        write_file(&self.root.join(rel), contents)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn finish(mut self, config: &RunConfig) -> Result<()> {
        self.files.push("manifest.json".into());
        self.files.sort();
        let manifest = Manifest {
            command: self.command.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            seeds: self.seeds,
            inputs: self.inputs,
            files: self.files,
        };
        write_file(&self.root.join("manifest.json"), &to_json(&manifest)?)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::input(format!("json encoding failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn require<'a>(value: &'a str, key: &str) -> Result<&'a Path> {
    if value.is_empty() {
        Err(Error::config(format!("'{key}' is required for this subcommand")))
    } else {
        Ok(Path::new(value))
    }
}

fn covariate_header(p: usize) -> Vec<String> {
    if p == 1 {
        vec!["x".into()]
    } else {
        (1..=p).map(|j| format!("x{j}")).collect()
    }
}

fn cmd_simulate(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let spec = cfg.dgp()?;
    let data = generate_dataset(&spec, cfg.replicate)?;
    run.seeds.insert("data".into(), data_seed(cfg.seed, cfg.replicate));
    let std_normal = Normal::standard();
    let mut out = String::from("x,u1,u2");
    if cfg.raw {
        out.push_str(",y1,y2");
    }
    out.push_str(",theta_true,tau_true\n");
    for i in 0..data.n() {
        let _ = write!(out, "{:?},{:?},{:?}", data.x[i], data.u1[i], data.u2[i]);
        if cfg.raw {
            let _ = write!(
                out,
                ",{:?},{:?}",
                std_normal.inverse_cdf(data.u1[i]),
                std_normal.inverse_cdf(data.u2[i])
            );
        }
        let _ = writeln!(out, ",{:?},{:?}", data.theta_true[i], data.tau_true[i]);
    }
    run.write("data.csv", &out)
}

/// Observations read from a data file.
#[derive(Debug, Clone, PartialEq)]
pub struct InputData {
    pub x: Covariates,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// True when u1, u2 were computed from raw y1, y2 by ranks.
    pub from_raw: bool,
}

/// Reads covariates and pseudo-observations. Columns `u1,u2` are used as
/// given; otherwise raw `y1,y2` are rank-transformed.
pub fn read_input(path: &Path) -> Result<InputData> {
    let table = Table::read(path)?;
    if table.n_rows() < 2 {
        return Err(Error::data(format!(
            "{}: need at least 2 observations, got {}",
            path.display(),
            table.n_rows()
        )));
    }
    let names = table.covariate_names()?;
    let cols = names.iter().map(|c| table.column(c)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = (0..table.n_rows()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let x = Covariates::from_rows(&rows).map_err(|e| Error::data(e.to_string()))?;
    let (u1, u2, from_raw) = if table.has("u1") || table.has("u2") {
        (table.column("u1")?, table.column("u2")?, false)
    } else if table.has("y1") || table.has("y2") {
        let ps = pseudo_observations(&table.column("y1")?, &table.column("y2")?)
            .map_err(|e| Error::data(e.to_string()))?;
        (ps.u1, ps.u2, true)
    } else {
        return Err(Error::data(format!(
            "{}: missing columns 'u1','u2' (or raw 'y1','y2')",
            path.display()
        )));
    };
    Ok(InputData { x, u1, u2, from_raw })
}

/// Per-observation posterior summaries on both scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub theta: PosteriorSummary,
    pub tau: PosteriorSummary,
}

impl Posterior {
    pub fn from_eta(eta: &[Vec<f64>], model: &CopulaModel) -> Result<Self> {
        Ok(Self {
            theta: PosteriorSummary::from_draws(&scaled_draws(eta, model, Scale::Theta)?)?,
            tau: PosteriorSummary::from_draws(&scaled_draws(eta, model, Scale::Tau)?)?,
        })
    }

    pub fn on(&self, scale: Scale) -> &PosteriorSummary {
        match scale {
            Scale::Theta => &self.theta,
            Scale::Tau => &self.tau,
        }
    }
}

const POSTERIOR_COLUMNS: [&str; 6] = ["theta_mean", "theta_lower", "theta_upper", "tau_mean", "tau_lower", "tau_upper"];

fn posterior_csv(x: &Covariates, post: &Posterior) -> String {
    let mut out = covariate_header(x.p()).join(",");
    for c in POSTERIOR_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for i in 0..x.n() {
        let xs: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            xs.join(","),
            post.theta.mean[i],
            post.theta.lower[i],
            post.theta.upper[i],
            post.tau.mean[i],
            post.tau.lower[i],
            post.tau.upper[i]
        );
    }
    out
}

fn read_posterior_csv(path: &Path) -> Result<Posterior> {
    let t = Table::read(path)?;
    let c = |name: &str| t.column(name);
    Ok(Posterior {
        theta: PosteriorSummary {
            mean: c("theta_mean")?,
            lower: c("theta_lower")?,
            upper: c("theta_upper")?,
        },
        tau: PosteriorSummary {
            mean: c("tau_mean")?,
            lower: c("tau_lower")?,
            upper: c("tau_upper")?,
        },
    })
}

/// Per-chain figures reported in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: u64,
    pub seed: u64,
    pub acceptance: f64,
    /// Posterior mean leaf count per tree.
    pub mean_n_leaves: Vec<f64>,
    pub mean_depth: Vec<f64>,
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub family: Family,
    pub df: f64,
    pub n: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: Vec<ChainSummary>,
    /// Pooled over chains, one entry per observation.
    pub posterior: Posterior,
}

/// Everything `gof` and `plotdata` need from a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: Family,
    pub df: f64,
    /// Covariate rows.
    pub x: Vec<Vec<f64>>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Pooled posterior summaries.
    pub posterior: Posterior,
    /// Final trees of each chain in the tree text format.
    pub trees: Vec<Vec<String>>,
}

impl FittedModel {
    pub fn model(&self) -> Result<CopulaModel> {
        if self.family == Family::StudentT {
            CopulaModel::with_df(self.family, self.df)
        } else {
            Ok(CopulaModel::new(self.family))
        }
    }

    /// Reads a model file, or `model.json` inside a fit run directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join("model.json") } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", file.display())))
    }
}

fn chain_summary(t: &ChainTrace) -> ChainSummary {
    let m = t.final_state.n_trees();
    ChainSummary {
        chain: t.chain,
        seed: t.seed,
        acceptance: t.acceptance_rate(),
        mean_n_leaves: (0..m).map(|k| t.mean_leaves(k)).collect(),
        mean_depth: (0..m).map(|k| t.mean_depth(k)).collect(),
        proposed: t.counts.proposed,
        accepted: t.counts.accepted,
    }
}

fn trees_text(t: &ChainTrace) -> String {
    let mut out = String::new();
    for (k, tree) in t.final_state.trees.iter().enumerate() {
        let _ = writeln!(out, "# tree {}", k + 1);
        out.push_str(&tree.to_text());
    }
    out
}

fn cmd_fit(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let input = require(&cfg.input, "input")?;
    run.inputs.push(cfg.input.clone());
    let data = read_input(input)?;
    let model = cfg.model()?;
    let sampler_config = cfg.sampler_config()?;
    let dataset = Dataset::new(data.u1.clone(), data.u2.clone(), data.x.clone())?;
    let prepared = dataset.prepare(&model)?;
    let sampler = Sampler::new(&prepared, &dataset.x, &sampler_config)?;
    let traces = sampler.run_chains(cfg.seed, cfg.chains);
    run.seeds.insert("chains".into(), cfg.seed);

    let mut pooled = Vec::new();
    for t in &traces {
        let c = t.chain + 1;
        run.write(&format!("trace_chain{c}.csv"), &t.to_csv())?;
        run.write(&format!("trees_chain{c}.txt"), &trees_text(t))?;
        let post = Posterior::from_eta(&t.eta_draws, &model)?;
        run.write(&format!("posterior_chain{c}.csv"), &posterior_csv(&dataset.x, &post))?;
        pooled.extend(t.eta_draws.iter().cloned());
    }
    let posterior = Posterior::from_eta(&pooled, &model)?;
    let summary = FitSummary {
        family: model.family(),
        df: model.df(),
        n: dataset.n(),
        iterations: sampler_config.iterations,
        burn_in: sampler_config.burn_in,
        chains: traces.iter().map(chain_summary).collect(),
        posterior: posterior.clone(),
    };
    run.write("summary.json", &to_json(&summary)?)?;
    let fitted = FittedModel {
        family: model.family(),
        df: model.df(),
        x: (0..dataset.n()).map(|i| dataset.x.row(i).to_vec()).collect(),
        u1: data.u1,
        u2: data.u2,
        posterior,
        trees: traces
            .iter()
            .map(|t| t.final_state.trees.iter().map(|tr| tr.to_text()).collect())
            .collect(),
    };
    run.write("model.json", &to_json(&fitted)?)
}

fn cmd_gof(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let path = require(&cfg.model, "model")?;
    run.inputs.push(cfg.model.clone());
    let fitted = FittedModel::load(path)?;
    let model = fitted.model()?;
    let (u1, u2) = if cfg.input.is_empty() {
        (fitted.u1.clone(), fitted.u2.clone())
    } else {
        run.inputs.push(cfg.input.clone());
        let data = read_input(Path::new(&cfg.input))?;
        if data.u1.len() != fitted.u1.len() {
            return Err(Error::data(format!(
                "data has {} observations but the model was fitted to {}",
                data.u1.len(),
                fitted.u1.len()
            )));
        }
        (data.u1, data.u2)
    };
    let observed = Sample2::new(u1, u2)?;
    let table = gof_harness(
        &fitted.posterior.theta.mean,
        &observed,
        &model,
        cfg.gof_replicates,
        cfg.n_perm,
        cfg.seed,
    )?;
    run.seeds.insert("gof".into(), cfg.seed);
    run.write("gof.csv", &table.to_csv())?;
    let mut ps = String::from("replicate,cramer,fasano_franceschini\n");
    for (r, (c, f)) in table.cramer.iter().zip(&table.ff).enumerate() {
        let _ = writeln!(ps, "{},{c:?},{f:?}", r + 1);
    }
    run.write("gof_pvalues.csv", &ps)
}

/// Metrics of one fit against known truth, as written by `metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub scale: Scale,
    /// Chain-averaged mean squared error (the "RMSE" column of the study table).
    pub rmse: f64,
    pub rmse_rooted: f64,
    pub ci_length: f64,
    pub ci_cov: f64,
    pub chains: Vec<ChainFitMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFitMetrics {
    pub chain: usize,
    pub mse: f64,
    pub ci_length: f64,
    pub ci_cov: f64,
}

/// Reads the per-chain posterior files of a fit run directory.
pub fn read_fit_posteriors(dir: &Path) -> Result<Vec<Posterior>> {
    let mut out = Vec::new();
    loop {
        let p = dir.join(format!("posterior_chain{}.csv", out.len() + 1));
        if !p.exists() {
            break;
        }
        out.push(read_posterior_csv(&p)?);
    }
    if out.is_empty() {
        return Err(Error::data(format!("{}: no posterior_chain files", dir.display())));
    }
    Ok(out)
}

/// Truth column for the scale: `tau_true` or `theta_true`.
pub fn read_truth(path: &Path, scale: Scale) -> Result<Vec<f64>> {
    let t = Table::read(path)?;
    t.column(match scale {
        Scale::Tau => "tau_true",
        Scale::Theta => "theta_true",
    })
}

pub fn fit_metrics(posteriors: &[Posterior], truth: &[f64], scale: Scale) -> Result<FitMetrics> {
    let chains: Vec<PosteriorSummary> = posteriors.iter().map(|p| p.on(scale).clone()).collect();
    if let Some(c) = chains.iter().find(|c| c.len() != truth.len()) {
        return Err(Error::data(format!(
            "posterior covers {} observations but the truth file has {}",
            c.len(),
            truth.len()
        )));
    }
    let summaries = vec![chains];
    let truths = vec![truth.to_vec()];
    Ok(FitMetrics {
        scale,
        rmse: diagnostics::rmse(&summaries, &truths)?,
        rmse_rooted: diagnostics::rmse_rooted(&summaries, &truths)?,
        ci_length: diagnostics::ci_length(&summaries)?,
        ci_cov: diagnostics::ci_cov(&summaries, &truths)?,
        chains: summaries[0]
            .iter()
            .enumerate()
            .map(|(j, s)| ChainFitMetrics {
                chain: j + 1,
                mse: diagnostics::chain_mse(s, truth),
                ci_length: diagnostics::chain_ci_length(s),
                ci_cov: diagnostics::chain_ci_cov(s, truth),
            })
            .collect(),
    })
}

fn cmd_metrics(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let traces = require(&cfg.traces, "traces")?;
    let truth_path = require(&cfg.truth, "truth")?;
    run.inputs.push(cfg.traces.clone());
    run.inputs.push(cfg.truth.clone());
    let posteriors = read_fit_posteriors(traces)?;
    let truth = read_truth(truth_path, cfg.scale)?;
    let m = fit_metrics(&posteriors, &truth, cfg.scale)?;
    let mut out = String::from("metric,value\n");
    for (k, v) in [
        ("rmse", m.rmse),
        ("rmse_rooted", m.rmse_rooted),
        ("ci_length", m.ci_length),
        ("ci_cov", m.ci_cov),
    ] {
        let _ = writeln!(out, "{k},{v:?}");
    }
    run.write("metrics.csv", &out)?;
    let mut per = String::from("chain,mse,ci_length,ci_cov\n");
    for c in &m.chains {
        let _ = writeln!(per, "{},{:?},{:?},{:?}", c.chain, c.mse, c.ci_length, c.ci_cov);
    }
    run.write("metrics_chains.csv", &per)
}

/// Rows `(x, tau_hat, lower, upper)` sorted by covariate.
pub fn plot_rows(fitted: &FittedModel) -> Vec<(Vec<f64>, f64, f64, f64)> {
    let tau = &fitted.posterior.tau;
    let mut idx: Vec<usize> = (0..fitted.x.len()).collect();
    idx.sort_by(|&a, &b| {
        fitted.x[a]
            .iter()
            .zip(&fitted.x[b])
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.cmp(&b))
    });
    idx.into_iter()
        .map(|i| (fitted.x[i].clone(), tau.mean[i], tau.lower[i], tau.upper[i]))
        .collect()
}

fn cmd_plotdata(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let path = require(&cfg.model, "model")?;
    run.inputs.push(cfg.model.clone());
    let fitted = FittedModel::load(path)?;
    let p = fitted.x.first().map_or(1, Vec::len);
    let mut out = covariate_header(p).join(",");
    out.push_str(",tau_hat,lower,upper\n");
    for (x, m, lo, hi) in plot_rows(&fitted) {
        let xs: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{},{m:?},{lo:?},{hi:?}", xs.join(","));
    }
    run.write("plot.csv", &out)
}

fn cmd_study(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let study = cfg.study()?;
    for r in 0..study.dgp.replicates {
        run.seeds.insert(format!("data_r{}", r + 1), data_seed(cfg.seed, r));
        run.seeds.insert(format!("fit_r{}", r + 1), fit_seed(cfg.seed, r));
    }
    let root = run.root.clone();
    let written = std::sync::Mutex::new(Vec::new());
    let report = replicate_study(&study, |f: &FitOutput<'_>| {
        let dir = format!("replicates/r{}-{}", f.replicate + 1, f.variant);
        let mut files = vec![(format!("{dir}/metrics.csv"), f.record.to_csv())];
        for t in f.traces {
            files.push((format!("{dir}/trace_chain{}.csv", t.chain + 1), t.to_csv()));
        }
        for (rel, text) in files {
            write_file(&root.join(&rel), &text)?;
            written.lock().expect("file list lock").push(rel);
        }
        Ok(())
    })?;
    run.files.extend(written.into_inner().expect("file list lock"));
    run.write("study.csv", &report.to_csv())
}
