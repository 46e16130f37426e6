//! Flat `key=value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::copula::{CopulaModel, Family, DEFAULT_DF};
use crate::diagnostics::Scale;
use crate::error::{Error, Result};
use crate::sampler::{default_prop_var0, HyperParams, SamplerConfig};
use crate::sim::{DgpSpec, StudyConfig, TauFunction, Variant};
use crate::tree::{LossPrior, PriorSign};

/// Recognised keys with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("family", "copula family: gaussian, student-t, clayton, gumbel, frank"),
    ("df", "Student-t degrees of freedom"),
    ("tau", "true tau(x) for simulate/study: tree, sine or constant:<v>"),
    ("n", "observations per simulated dataset"),
    ("replicate", "replicate index drawn by simulate"),
    ("replicates", "replicates in a study"),
    ("raw", "simulate also writes normal-margin columns y1,y2"),
    ("trees", "number of trees m"),
    ("iterations", "MCMC iterations per chain"),
    ("burn_in", "iterations discarded before summaries"),
    ("chains", "independent chains"),
    ("eta0", "iterations with the fixed proposal variance before adaptation"),
    ("prop_var0", "fixed leaf proposal variance, or auto (1 for frank, 0.2 otherwise)"),
    ("adaptive", "adapt leaf proposal variances (fit)"),
    ("variants", "sampler variants compared by study: fixed, adaptive"),
    ("epsilon", "jitter added to the running covariance diagonal"),
    ("init_mu_var", "variance of the initial leaf values"),
    ("omega", "loss prior weight on the leaf count"),
    ("zeta", "loss prior weight on the root imbalance"),
    ("prior_sign", "penalizing (-omega*n_L) or as-printed (+omega*n_L)"),
    ("a", "inverse-gamma shape of the leaf variance hyperprior"),
    ("b", "inverse-gamma scale of the leaf variance hyperprior"),
    ("move_probs", "grow,prune,change,swap probabilities"),
    ("scale", "metric scale: tau or theta"),
    ("gof_replicates", "simulated samples compared by gof"),
    ("n_perm", "permutations per goodness-of-fit test"),
    ("seed", "master seed"),
    ("input", "input data CSV"),
    ("model", "fitted model file or fit run directory"),
    ("truth", "CSV with tau_true or theta_true for metrics"),
    ("traces", "fit run directory read by metrics"),
    ("output", "run directory (default: <output root>/<subcommand>-seed<seed>)"),
];

/// Every setting of every subcommand. Empty paths mean "not given".
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub df: f64,
    pub tau: TauFunction,
    pub n: usize,
    pub replicate: usize,
    pub replicates: usize,
    pub raw: bool,
    pub trees: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub eta0: usize,
    /// `None` picks the family default.
    pub prop_var0: Option<f64>,
    pub adaptive: bool,
    pub variants: Vec<Variant>,
    pub epsilon: f64,
    pub init_mu_var: f64,
    pub omega: f64,
    pub zeta: f64,
    pub prior_sign: PriorSign,
    pub a: f64,
    pub b: f64,
    pub move_probs: [f64; 4],
    pub scale: Scale,
    pub gof_replicates: usize,
    pub n_perm: usize,
    pub seed: u64,
    pub input: String,
    pub model: String,
    pub truth: String,
    pub traces: String,
    pub output: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            family: Family::Gaussian,
            df: DEFAULT_DF,
            tau: TauFunction::Tree,
            n: 200,
            replicate: 0,
            replicates: 10,
            raw: false,
            trees: s.n_trees,
            iterations: s.iterations,
            burn_in: s.burn_in,
            chains: 4,
            eta0: s.eta0,
            prop_var0: None,
            adaptive: s.adaptive,
            variants: vec![Variant::Fixed, Variant::Adaptive],
            epsilon: s.epsilon,
            init_mu_var: s.init_mu_var,
            omega: s.hyper.prior.omega,
            zeta: s.hyper.prior.zeta,
            prior_sign: s.hyper.prior.sign,
            a: s.hyper.a,
            b: s.hyper.b,
            move_probs: s.hyper.move_probs,
            scale: Scale::Tau,
            gof_replicates: 100,
            n_perm: 1000,
            seed: 1,
            input: String::new(),
            model: String::new(),
            truth: String::new(),
            traces: String::new(),
            output: String::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("invalid value '{value}' for '{key}' (expected true or false)"))),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn is_key(key: &str) -> bool {
        KEYS.iter().any(|(k, _)| *k == key)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "family" => self.family = v.parse()?,
            "df" => self.df = parse(key, v)?,
            "tau" => self.tau = v.parse()?,
            "n" => self.n = parse(key, v)?,
            "replicate" => self.replicate = parse(key, v)?,
            "replicates" => self.replicates = parse(key, v)?,
            "raw" => self.raw = parse_bool(key, v)?,
            "trees" => self.trees = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "burn_in" => self.burn_in = parse(key, v)?,
            "chains" => self.chains = parse(key, v)?,
            "eta0" => self.eta0 = parse(key, v)?,
            "prop_var0" => self.prop_var0 = if v == "auto" { None } else { Some(parse(key, v)?) },
            "adaptive" => self.adaptive = parse_bool(key, v)?,
            "variants" => {
                self.variants = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<Variant>>>()?;
            }
            "epsilon" => self.epsilon = parse(key, v)?,
            "init_mu_var" => self.init_mu_var = parse(key, v)?,
            "omega" => self.omega = parse(key, v)?,
            "zeta" => self.zeta = parse(key, v)?,
            "prior_sign" => self.prior_sign = v.parse()?,
            "a" => self.a = parse(key, v)?,
            "b" => self.b = parse(key, v)?,
            "move_probs" => {
                let ps: Vec<f64> = v.split(',').map(|s| parse(key, s.trim())).collect::<Result<_>>()?;
                self.move_probs = ps
                    .try_into()
                    .map_err(|_| Error::config(format!("'{key}' needs four comma-separated values, got '{v}'")))?;
            }
            "scale" => self.scale = v.parse()?,
            "gof_replicates" => self.gof_replicates = parse(key, v)?,
            "n_perm" => self.n_perm = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "input" => self.input = v.to_string(),
            "model" => self.model = v.to_string(),
            "truth" => self.truth = v.to_string(),
            "traces" => self.traces = v.to_string(),
            "output" => self.output = v.to_string(),
            _ => return Err(Error::config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Text form of one key's value, parseable by [`RunConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "family" => self.family.to_string(),
            "df" => self.df.to_string(),
            "tau" => self.tau.to_string(),
            "n" => self.n.to_string(),
            "replicate" => self.replicate.to_string(),
            "replicates" => self.replicates.to_string(),
            "raw" => self.raw.to_string(),
            "trees" => self.trees.to_string(),
            "iterations" => self.iterations.to_string(),
            "burn_in" => self.burn_in.to_string(),
            "chains" => self.chains.to_string(),
            "eta0" => self.eta0.to_string(),
            "prop_var0" => self.prop_var0.map_or("auto".into(), |v| v.to_string()),
            "adaptive" => self.adaptive.to_string(),
            "variants" => join(&self.variants),
            "epsilon" => self.epsilon.to_string(),
            "init_mu_var" => self.init_mu_var.to_string(),
            "omega" => self.omega.to_string(),
            "zeta" => self.zeta.to_string(),
            "prior_sign" => self.prior_sign.to_string(),
            "a" => self.a.to_string(),
            "b" => self.b.to_string(),
            "move_probs" => join(&self.move_probs),
            "scale" => self.scale.to_string(),
            "gof_replicates" => self.gof_replicates.to_string(),
            "n_perm" => self.n_perm.to_string(),
            "seed" => self.seed.to_string(),
            "input" => self.input.clone(),
            "model" => self.model.clone(),
            "truth" => self.truth.clone(),
            "traces" => self.traces.clone(),
            "output" => self.output.clone(),
            _ => return None,
        })
    }

    /// Parses config text: one `key=value` per line, `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(format!("config line {}: expected key=value, got '{line}'", i + 1)));
            };
            self.set(k.trim(), v)
                .map_err(|e| Error::config(format!("config line {}: {}", i + 1, strip_kind(&e))))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::config(format!("{}: {}", path.display(), strip_kind(&e))))
    }

    /// Every key in file order; round-trips through [`RunConfig::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k}={}", self.get(k).expect("listed key"));
        }
        out
    }

    pub fn model(&self) -> Result<CopulaModel> {
        if self.family == Family::StudentT {
            CopulaModel::with_df(self.family, self.df).map_err(|e| Error::config(strip_kind(&e)))
        } else {
            Ok(CopulaModel::new(self.family))
        }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let prior = LossPrior::new(self.omega, self.zeta, self.prior_sign)?;
        let config = SamplerConfig {
            n_trees: self.trees,
            iterations: self.iterations,
            burn_in: self.burn_in,
            adaptive: self.adaptive,
            eta0: self.eta0,
            prop_var0: self.prop_var0.unwrap_or(default_prop_var0(self.family)),
            epsilon: self.epsilon,
            init_mu_var: self.init_mu_var,
            hyper: HyperParams {
                a: self.a,
                b: self.b,
                prior,
                move_probs: self.move_probs,
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn dgp(&self) -> Result<DgpSpec> {
        let spec = DgpSpec {
            tau: self.tau,
            family: self.family,
            df: self.df,
            n: self.n,
            replicates: self.replicates.max(self.replicate + 1),
            seed: self.seed,
        };
        spec.validate().map_err(|e| Error::config(strip_kind(&e)))?;
        Ok(spec)
    }

    pub fn study(&self) -> Result<StudyConfig> {
        let mut dgp = self.dgp()?;
        dgp.replicates = self.replicates;
        let config = StudyConfig {
            chains: self.chains,
            variants: self.variants.clone(),
            scale: self.scale,
            ..StudyConfig::new(dgp, self.sampler_config()?)
        };
        config.validate().map_err(|e| Error::config(strip_kind(&e)))?;
        Ok(config)
    }

    /// Checks the ranges shared by all subcommands.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.sampler_config()?;
        if self.chains == 0 {
            return Err(Error::config("chains must be at least 1"));
        }
        if self.gof_replicates == 0 {
            return Err(Error::config("gof_replicates must be at least 1"));
        }
        if self.n_perm == 0 {
            return Err(Error::config("n_perm must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants must name at least one sampler variant"));
        }
        Ok(())
    }
}

/// Message of an error without its "kind error:" prefix.
pub(crate) fn strip_kind(e: &Error) -> String {
    match e {
        Error::Domain(m) | Error::Input(m) | Error::Config(m) | Error::Data(m) => m.clone(),
        other => other.to_string(),
    }
}
