//! Synthetic conditional-copula data and replicate studies comparing the
//! fixed-variance and adaptive samplers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{CopulaModel, Family};
use crate::diagnostics::{chain_ci_cov, chain_ci_length, chain_mse, summarize_chain, Scale};
use crate::error::{Error, Result};
use crate::sampler::{chain_rng, sub_seed, ChainTrace, Dataset, Sampler, SamplerConfig};
use crate::stats;
use crate::tree::Covariates;

const DATA_TAG: u64 = 1;
const FIT_TAG: u64 = 2;

/// Seed of the RNG that simulates replicate `replicate`.
pub fn data_seed(master: u64, replicate: usize) -> u64 {
    sub_seed(master, DATA_TAG, replicate as u64)
}

/// Master seed of the chains fitted to replicate `replicate`.
pub fn fit_seed(master: u64, replicate: usize) -> u64 {
    sub_seed(master, FIT_TAG, replicate as u64)
}

/// Kendall's τ as a function of a covariate on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauFunction {
    /// 0.3 for x ≤ 0.33, 0.8 for 0.33 < x ≤ 0.66, 0.3 above.
    Tree,
    /// 0.2 sin(2πx) + 0.5.
    Sine,
    Constant(f64),
}

pub fn tau1(x: f64) -> f64 {
    if x <= 0.33 {
        0.3
    } else if x <= 0.66 {
        0.8
    } else {
        0.3
    }
}

pub fn tau2(x: f64) -> f64 {
    0.2 * (2.0 * PI * x).sin() + 0.5
}

impl TauFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TauFunction::Tree => tau1(x),
            TauFunction::Sine => tau2(x),
            TauFunction::Constant(t) => *t,
        }
    }

    /// Smallest and largest value over [0, 1].
    pub fn range(&self) -> (f64, f64) {
        match self {
            TauFunction::Tree => (0.3, 0.8),
            TauFunction::Sine => (0.3, 0.7),
            TauFunction::Constant(t) => (*t, *t),
        }
    }
}

impl fmt::Display for TauFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauFunction::Tree => f.write_str("tree"),
            TauFunction::Sine => f.write_str("sine"),
            TauFunction::Constant(t) => write!(f, "constant:{t:?}"),
        }
    }
}

impl FromStr for TauFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" | "tau1" => Ok(TauFunction::Tree),
            "sine" | "tau2" => Ok(TauFunction::Sine),
            _ => match s.strip_prefix("constant:") {
                Some(v) => v
                    .parse()
                    .map(TauFunction::Constant)
                    .map_err(|_| Error::config(format!("bad constant tau '{v}'"))),
                None => Err(Error::config(format!(
                    "unknown tau function '{s}' (expected tree, sine or constant:<value>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub tau: TauFunction,
    pub family: Family,
    /// Student-t degrees of freedom; ignored by other families.
    pub df: f64,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(tau: TauFunction, family: Family) -> Self {
        Self {
            tau,
            family,
            df: crate::copula::DEFAULT_DF,
            n: 200,
            replicates: 10,
            seed: 1,
        }
    }

    pub fn model(&self) -> Result<CopulaModel> {
        if self.family == Family::StudentT {
            CopulaModel::with_df(self.family, self.df)
        } else {
            Ok(CopulaModel::new(self.family))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("need at least 2 observations, got {}", self.n)));
        }
        if self.replicates == 0 {
            return Err(Error::config("need at least one replicate"));
        }
        let model = self.model().map_err(|e| Error::config(e.to_string()))?;
        let (lo, hi) = self.tau.range();
        for t in [lo, hi] {
            if !model.tau_attainable(t) {
                return Err(Error::config(format!(
                    "tau function {} reaches {t}, outside the {} family's range",
                    self.tau, self.family
                )));
            }
        }
        Ok(())
    }
}

/// One simulated dataset with its true conditional parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub x: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub tau_true: Vec<f64>,
    pub theta_true: Vec<f64>,
}

impl SimulatedData {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(
            self.u1.clone(),
            self.u2.clone(),
            Covariates::from_column(self.x.clone())?,
        )
    }

    /// True values on the given scale.
    pub fn truth(&self, scale: Scale) -> &[f64] {
        match scale {
            Scale::Theta => &self.theta_true,
            Scale::Tau => &self.tau_true,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// Draws xᵢ ~ U(0,1), sets θᵢ from τ(xᵢ) and samples one pair per xᵢ.
pub fn generate_dataset(spec: &DgpSpec, replicate: usize) -> Result<SimulatedData> {
    spec.validate()?;
    let model = spec.model()?;
    let mut rng = chain_rng(data_seed(spec.seed, replicate), 0);
    let mut out = SimulatedData {
        x: Vec::with_capacity(spec.n),
        u1: Vec::with_capacity(spec.n),
        u2: Vec::with_capacity(spec.n),
        tau_true: Vec::with_capacity(spec.n),
        theta_true: Vec::with_capacity(spec.n),
    };
    for _ in 0..spec.n {
        let x: f64 = rng.random();
        let tau = spec.tau.eval(x);
        let theta = model.theta_from_tau(tau)?;
        let (a, b) = model.sample_pair(theta, &mut rng)?;
        out.x.push(x);
        out.u1.push(a);
        out.u2.push(b);
        out.tau_true.push(tau);
        out.theta_true.push(theta);
    }
    Ok(out)
}

/// Fixed proposal variance or the adaptive scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Fixed,
    Adaptive,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Fixed => "fixed",
            Variant::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Variant::Fixed),
            "adaptive" => Ok(Variant::Adaptive),
            _ => Err(Error::config(format!("unknown sampler variant '{s}' (expected fixed or adaptive)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dgp: DgpSpec,
    /// Shared sampler settings; `adaptive` is overridden per variant.
    pub sampler: SamplerConfig,
    pub chains: usize,
    pub variants: Vec<Variant>,
    pub scale: Scale,
}

impl StudyConfig {
    pub fn new(dgp: DgpSpec, sampler: SamplerConfig) -> Self {
        Self {
            dgp,
            sampler,
            chains: 4,
            variants: vec![Variant::Fixed, Variant::Adaptive],
            scale: Scale::Tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.sampler.validate()?;
        if self.chains == 0 {
            return Err(Error::config("need at least one chain"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("no sampler variants selected"));
        }
        Ok(())
    }

    pub fn sampler_for(&self, variant: Variant) -> SamplerConfig {
        SamplerConfig {
            adaptive: variant == Variant::Adaptive,
            ..self.sampler.clone()
        }
    }
}

/// Per-chain quantities behind the study tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMetrics {
    pub chain: u64,
    /// Posterior mean leaf count, averaged over trees.
    pub mean_n_leaves: f64,
    /// Posterior mean depth, averaged over trees.
    pub mean_depth: f64,
    pub acceptance: f64,
    pub mse: f64,
    pub ci_length: f64,
    pub ci_cov: f64,
}

impl ChainMetrics {
    pub fn from_trace(trace: &ChainTrace, model: &CopulaModel, truth: &[f64], scale: Scale) -> Result<Self> {
        let m = trace.final_state.n_trees();
        let summary = summarize_chain(trace, model, scale)?;
        Ok(Self {
            chain: trace.chain,
            mean_n_leaves: (0..m).map(|k| trace.mean_leaves(k)).sum::<f64>() / m as f64,
            mean_depth: (0..m).map(|k| trace.mean_depth(k)).sum::<f64>() / m as f64,
            acceptance: trace.acceptance_rate(),
            mse: chain_mse(&summary, truth),
            ci_length: chain_ci_length(&summary),
            ci_cov: chain_ci_cov(&summary, truth),
        })
    }
}

/// One fitted replicate under one sampler variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub variant: Variant,
    pub chains: Vec<ChainMetrics>,
}

pub const REPLICATE_CSV_HEADER: &str = "chain,mean_n_leaves,mean_depth,acceptance,mse,ci_length,ci_cov";

impl ReplicateRecord {
    fn chain_mean(&self, f: impl Fn(&ChainMetrics) -> f64) -> f64 {
        stats::mean(&self.chains.iter().map(f).collect::<Vec<_>>())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPLICATE_CSV_HEADER}\n");
        for c in &self.chains {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                c.chain, c.mean_n_leaves, c.mean_depth, c.acceptance, c.mse, c.ci_length, c.ci_cov
            ));
        }
        out
    }

    /// Parses the output of [`ReplicateRecord::to_csv`].
    pub fn from_csv(replicate: usize, variant: Variant, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPLICATE_CSV_HEADER) {
            return Err(Error::data("replicate metrics file has an unexpected header"));
        }
        let mut chains = Vec::new();
        for (k, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::data(format!("replicate metrics row {} is malformed", k + 2));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            chains.push(ChainMetrics {
                chain: f[0].parse().map_err(|_| bad())?,
                mean_n_leaves: num(1)?,
                mean_depth: num(2)?,
                acceptance: num(3)?,
                mse: num(4)?,
                ci_length: num(5)?,
                ci_cov: num(6)?,
            });
        }
        Ok(Self {
            replicate,
            variant,
            chains,
        })
    }
}

/// One line of the study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub family: Family,
    pub variant: Variant,
    pub replicates: usize,
    pub mean_n_leaves: f64,
    pub sd_n_leaves: f64,
    pub mean_depth: f64,
    pub sd_depth: f64,
    pub mean_acc: f64,
    pub sd_acc: f64,
    /// Square root of `mse`.
    pub rmse: f64,
    /// Replicate average of the chain-averaged mean squared error.
    pub mse: f64,
    pub ci_length: f64,
    pub ci_cov: f64,
}

pub const STUDY_CSV_HEADER: &str =
    "family,variant,replicates,mean_n_leaves,sd_n_leaves,mean_depth,sd_depth,mean_acc,sd_acc,rmse,mse,ci_length,ci_cov";

impl StudyRow {
    /// Aggregates replicate records of one family and variant. Replicate
    /// values are chain averages; means and SDs are taken across replicates.
    pub fn aggregate(family: Family, variant: Variant, records: &[ReplicateRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::input("no replicate records to aggregate"));
        }
        let per = |f: &dyn Fn(&ChainMetrics) -> f64| -> Vec<f64> {
            records.iter().map(|r| r.chain_mean(f)).collect()
        };
        let leaves = per(&|c| c.mean_n_leaves);
        let depth = per(&|c| c.mean_depth);
        let acc = per(&|c| c.acceptance);
        let mse = stats::mean(&per(&|c| c.mse));
        Ok(Self {
            family,
            variant,
            replicates: records.len(),
            mean_n_leaves: stats::mean(&leaves),
            sd_n_leaves: stats::sd(&leaves),
            mean_depth: stats::mean(&depth),
            sd_depth: stats::sd(&depth),
            mean_acc: stats::mean(&acc),
            sd_acc: stats::sd(&acc),
            rmse: mse.sqrt(),
            mse,
            ci_length: stats::mean(&per(&|c| c.ci_length)),
            ci_cov: stats::mean(&per(&|c| c.ci_cov)),
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.family,
            self.variant,
            self.replicates,
            self.mean_n_leaves,
            self.sd_n_leaves,
            self.mean_depth,
            self.sd_depth,
            self.mean_acc,
            self.sd_acc,
            self.rmse,
            self.mse,
            self.ci_length,
            self.ci_cov
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    /// Sorted by replicate, then variant in configuration order.
    pub records: Vec<ReplicateRecord>,
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{STUDY_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn row(&self, variant: Variant) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Everything produced by fitting one replicate with one variant, handed to
/// an observer before the traces are dropped.
pub struct FitOutput<'a> {
    pub replicate: usize,
    pub variant: Variant,
    pub data: &'a SimulatedData,
    pub traces: &'a [ChainTrace],
    pub record: &'a ReplicateRecord,
}

/// Fits one simulated replicate under one variant.
pub fn fit_replicate(config: &StudyConfig, data: &SimulatedData, replicate: usize, variant: Variant) -> Result<(Vec<ChainTrace>, ReplicateRecord)> {
    let model = config.dgp.model()?;
    let dataset = data.dataset()?;
    let prepared = dataset.prepare(&model)?;
    let sampler_config = config.sampler_for(variant);
    let sampler = Sampler::new(&prepared, &dataset.x, &sampler_config)?;
    let traces = sampler.run_chains(fit_seed(config.dgp.seed, replicate), config.chains);
    let chains = traces
        .iter()
        .map(|t| ChainMetrics::from_trace(t, &model, data.truth(config.scale), config.scale))
        .collect::<Result<Vec<_>>>()?;
    let record = ReplicateRecord {
        replicate,
        variant,
        chains,
    };
    Ok((traces, record))
}

/// Simulates every replicate, fits it with each configured variant and
/// aggregates the results. Replicates run concurrently; the report is
/// assembled in replicate order. `observe` sees each fit's traces (e.g. to
/// write them out) before they are dropped.
pub fn replicate_study<F>(config: &StudyConfig, observe: F) -> Result<StudyReport>
where
    F: Fn(&FitOutput<'_>) -> Result<()> + Sync,
{
    config.validate()?;
    let per_rep: Vec<Result<Vec<ReplicateRecord>>> = (0..config.dgp.replicates)
        .into_par_iter()
        .map(|r| {
            let data = generate_dataset(&config.dgp, r)?;
            config
                .variants
                .iter()
                .map(|&v| {
                    let (traces, record) = fit_replicate(config, &data, r, v)?;
                    observe(&FitOutput {
                        replicate: r,
                        variant: v,
                        data: &data,
                        traces: &traces,
                        record: &record,
                    })?;
                    Ok(record)
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for r in per_rep {
        records.extend(r?);
    }
    let rows = config
        .variants
        .iter()
        .map(|&v| {
            let mine: Vec<ReplicateRecord> = records.iter().filter(|r| r.variant == v).cloned().collect();
            StudyRow::aggregate(config.dgp.family, v, &mine)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyReport { rows, records })
}

#[cfg(test)]
mod tests;
