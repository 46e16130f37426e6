//! Backfitting reversible-jump sampler for a sum of trees feeding a copula
//! parameter through its link.
//!
//! One sweep updates each tree in turn: a structural move (grow, prune, change
//! or swap) accepted by its Metropolis-Hastings ratio, a random-walk refresh of
//! every leaf value, and a Gibbs draw of the tree's leaf-prior variance. Leaf
//! proposal variances are either fixed or adapted from the running covariance
//! of the tree's value-at-observation vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{CopulaModel, Family, PreparedPairs};
use crate::error::{Error, Result};
use crate::tree::{Covariates, DecisionTree, LossPrior, NodeId, Reshape};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * d * d / var
}

/// Per-observation log likelihood as a function of the summed tree output η.
pub trait ObservationLikelihood: Sync {
    fn n(&self) -> usize;
    /// log c(u₁ᵢ, u₂ᵢ | h(η)); −∞ for invalid parameters.
    fn log_density(&self, i: usize, eta: f64) -> f64;
}

impl ObservationLikelihood for PreparedPairs {
    fn n(&self) -> usize {
        self.len()
    }

    #[inline]
    fn log_density(&self, i: usize, eta: f64) -> f64 {
        self.log_density_at_link(i, eta)
    }
}

/// Likelihood identically 1; the chain then samples the prior.
#[derive(Debug, Clone, Copy)]
pub struct FlatLikelihood {
    pub n: usize,
}

impl ObservationLikelihood for FlatLikelihood {
    fn n(&self) -> usize {
        self.n
    }

    fn log_density(&self, _i: usize, _eta: f64) -> f64 {
        0.0
    }
}

/// Σᵢ log c(u₁ᵢ, u₂ᵢ | h(ηᵢ)).
pub fn log_likelihood<L: ObservationLikelihood + ?Sized>(lik: &L, eta: &[f64]) -> f64 {
    eta.iter()
        .enumerate()
        .map(|(i, &e)| lik.log_density(i, e))
        .sum()
}

/// Pseudo-observations paired with covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub x: Covariates,
}

impl Dataset {
    pub fn new(u1: Vec<f64>, u2: Vec<f64>, x: Covariates) -> Result<Self> {
        if u1.len() != u2.len() || u1.len() != x.n() {
            return Err(Error::data(format!(
                "column lengths differ: u1={}, u2={}, x={}",
                u1.len(),
                u2.len(),
                x.n()
            )));
        }
        if u1.len() < 2 {
            return Err(Error::data(format!("need at least 2 observations, got {}", u1.len())));
        }
        if let Some((i, _)) = u1
            .iter()
            .zip(&u2)
            .enumerate()
            .find(|(_, (a, b))| !(**a > 0.0 && **a < 1.0 && **b > 0.0 && **b < 1.0))
        {
            return Err(Error::data(format!(
                "pseudo-observation row {} lies outside (0,1)²",
                i + 1
            )));
        }
        Ok(Self { u1, u2, x })
    }

    pub fn n(&self) -> usize {
        self.u1.len()
    }

    pub fn prepare(&self, model: &CopulaModel) -> Result<PreparedPairs> {
        model.prepare(&self.u1, &self.u2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Grow,
    Prune,
    Change,
    Swap,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Grow, Move::Prune, Move::Change, Move::Swap];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Move::Grow => "grow",
            Move::Prune => "prune",
            Move::Change => "change",
            Move::Swap => "swap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Inverse-gamma shape for σ_t².
    pub a: f64,
    /// Inverse-gamma scale for σ_t².
    pub b: f64,
    pub prior: LossPrior,
    /// Probabilities of grow, prune, change, swap.
    pub move_probs: [f64; 4],
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 2.0,
            prior: LossPrior::default(),
            move_probs: [0.25; 4],
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite() && self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::config(format!(
                "inverse-gamma a and b must be positive, got ({}, {})",
                self.a, self.b
            )));
        }
        LossPrior::new(self.prior.omega, self.prior.zeta, self.prior.sign)?;
        let sum: f64 = self.move_probs.iter().sum();
        if self.move_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "move probabilities must be nonnegative and sum to 1, got {:?}",
                self.move_probs
            )));
        }
        Ok(())
    }

    fn draw_move<R: Rng + ?Sized>(&self, rng: &mut R) -> Move {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for m in Move::ALL {
            acc += self.move_probs[m.index()];
            if u < acc {
                return m;
            }
        }
        // rounding left u above the running sum; take the last move with mass
        *Move::ALL
            .iter()
            .rev()
            .find(|m| self.move_probs[m.index()] > 0.0)
            .expect("validated probabilities")
    }
}

/// Sampler settings for one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_trees: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub adaptive: bool,
    /// Iterations with the fixed proposal variance before adaptation.
    pub eta0: usize,
    /// Fixed proposal variance used before (or without) adaptation.
    pub prop_var0: f64,
    /// Jitter ε added to the running covariance diagonal at read time.
    pub epsilon: f64,
    /// Variance of the initial leaf values.
    pub init_mu_var: f64,
    pub hyper: HyperParams,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_trees: 1,
            iterations: 3000,
            burn_in: 1500,
            adaptive: true,
            eta0: 500,
            prop_var0: 0.2,
            epsilon: 1e-6,
            init_mu_var: 0.1,
            hyper: HyperParams::default(),
        }
    }
}

/// Pre-adaptation proposal variance for a family. Frank's identity link puts
/// θ on a much wider scale than the other links, so it starts with 1.
pub fn default_prop_var0(family: Family) -> f64 {
    match family {
        Family::Frank => 1.0,
        _ => 0.2,
    }
}

impl SamplerConfig {
    /// Defaults with the family's initial proposal variance.
    pub fn for_family(family: Family) -> Self {
        Self {
            prop_var0: default_prop_var0(family),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.n_trees == 0 {
            return bad("number of trees must be at least 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        for (name, v) in [
            ("initial proposal variance", self.prop_var0),
            ("epsilon", self.epsilon),
            ("initial leaf variance", self.init_mu_var),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        self.hyper.validate()
    }
}

/// Running mean and centred cross-product sums of one tree's
/// value-at-observation vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeAdaptation {
    count: usize,
    mean: Vec<f64>,
    /// Row-major n × n Σ (V − V̄)(V − V̄)ᵀ.
    m2: Vec<f64>,
}

impl TreeAdaptation {
    pub fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n * n],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one vector with the rank-one running-covariance update.
    pub fn update(&mut self, v: &[f64]) -> Result<()> {
        let n = self.mean.len();
        if v.len() != n {
            return Err(Error::input(format!(
                "value vector has length {}, expected {n}",
                v.len()
            )));
        }
        self.count += 1;
        let k = self.count as f64;
        let delta: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / k;
        }
        // m2 += δ (v − mean_new)ᵀ = ((k−1)/k) δδᵀ, exactly symmetric in this form
        let w = (k - 1.0) / k;
        for r in 0..n {
            let dr = delta[r];
            if dr == 0.0 {
                continue;
            }
            let row = &mut self.m2[r * n..(r + 1) * n];
            for (c, d) in delta.iter().enumerate() {
                row[c] += w * (dr * d);
            }
        }
        Ok(())
    }

    /// Sample covariance plus εI; zero history counts as zero covariance.
    pub fn covariance(&self, epsilon: f64) -> Vec<f64> {
        let n = self.mean.len();
        let denom = if self.count > 1 { (self.count - 1) as f64 } else { 1.0 };
        let mut c: Vec<f64> = self.m2.iter().map(|v| v / denom).collect();
        for i in 0..n {
            c[i * n + i] += epsilon;
        }
        c
    }

    /// Σ_{c,d ∈ cell} [Cov + εI]_{cd}.
    pub fn block_sum(&self, cell: &[usize], epsilon: f64) -> f64 {
        let n = self.mean.len();
        let denom = if self.count > 1 { (self.count - 1) as f64 } else { 1.0 };
        let mut s = 0.0;
        for &c in cell {
            let row = &self.m2[c * n..(c + 1) * n];
            for &d in cell {
                s += row[d];
            }
        }
        s / denom + epsilon * cell.len() as f64
    }
}

/// Adaptation state for every tree of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub trees: Vec<TreeAdaptation>,
    pub enabled: bool,
    pub eta0: usize,
    pub epsilon: f64,
    pub prop_var0: f64,
    /// Completed sweeps.
    pub iteration: usize,
}

impl AdaptiveState {
    pub fn new(n_trees: usize, n: usize, config: &SamplerConfig) -> Self {
        Self {
            trees: (0..n_trees).map(|_| TreeAdaptation::new(n)).collect(),
            enabled: config.adaptive,
            eta0: config.eta0,
            epsilon: config.epsilon,
            prop_var0: config.prop_var0,
            iteration: 0,
        }
    }

    /// Whether adapted variances are in use for the next sweep.
    pub fn active(&self) -> bool {
        self.enabled && self.iteration > self.eta0
    }

    /// Proposal variance for a leaf whose cell is `cell` in tree `k`.
    pub fn leaf_variance(&self, k: usize, cell: &[usize]) -> f64 {
        if self.active() {
            leaf_proposal_variance(&self.trees[k], cell, self.epsilon)
        } else {
            self.prop_var0
        }
    }
}

/// (2.4² / |I|³) Σ_{c,d ∈ I} [C + εI]_{cd}.
pub fn leaf_proposal_variance(adapt: &TreeAdaptation, cell: &[usize], epsilon: f64) -> f64 {
    assert!(!cell.is_empty(), "leaf cells are never empty");
    let q = cell.len() as f64;
    2.4 * 2.4 / (q * q * q) * adapt.block_sum(cell, epsilon)
}

/// m trees with their leaf-prior variances and cached values at observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    pub trees: Vec<DecisionTree>,
    pub sigma2: Vec<f64>,
    /// values[k][i] = g(xᵢ, T_k, M_k).
    pub values: Vec<Vec<f64>>,
    /// fitted[i] = Σ_k values[k][i], summed in tree order.
    pub fitted: Vec<f64>,
}

impl EnsembleState {
    pub fn initial<R: Rng + ?Sized>(x: &Covariates, config: &SamplerConfig, rng: &mut R) -> Self {
        let init = Normal::new(0.0, config.init_mu_var.sqrt()).expect("validated variance");
        let sigma2_0 = config.hyper.b / (config.hyper.a + 1.0);
        let trees: Vec<DecisionTree> = (0..config.n_trees)
            .map(|_| DecisionTree::new(x.p(), init.sample(rng)))
            .collect();
        Self::from_trees(trees, vec![sigma2_0; config.n_trees], x)
    }

    pub fn from_trees(trees: Vec<DecisionTree>, sigma2: Vec<f64>, x: &Covariates) -> Self {
        let values: Vec<Vec<f64>> = trees.iter().map(|t| t.values(x)).collect();
        let mut state = Self {
            trees,
            sigma2,
            values,
            fitted: Vec::new(),
        };
        state.refresh_fitted();
        state
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn refresh_fitted(&mut self) {
        let n = self.values.first().map_or(0, Vec::len);
        self.fitted = (0..n).map(|i| self.values.iter().map(|v| v[i]).sum()).collect();
    }

    /// Σ_{t≠k} g(xᵢ, T_t, M_t).
    pub fn residual_fit(&self, k: usize) -> Result<Vec<f64>> {
        if k >= self.trees.len() {
            return Err(Error::input(format!(
                "tree index {k} out of range for {} trees",
                self.trees.len()
            )));
        }
        let n = self.fitted.len();
        Ok((0..n)
            .map(|i| {
                let mut s = 0.0;
                for (t, v) in self.values.iter().enumerate() {
                    if t != k {
                        s += v[i];
                    }
                }
                s
            })
            .collect())
    }

    /// Replaces tree k and refreshes its cached values and the fitted sum.
    fn set_tree(&mut self, k: usize, tree: DecisionTree, x: &Covariates) {
        self.values[k] = tree.values(x);
        self.trees[k] = tree;
        self.refresh_fitted();
    }

}

/// Σ_{i∈cell} log c(u₁ᵢ, u₂ᵢ | h(Rᵢ + μ)).
fn cell_log_lik<L: ObservationLikelihood + ?Sized>(lik: &L, resid: &[f64], cell: &[usize], mu: f64) -> f64 {
    cell.iter().map(|&i| lik.log_density(i, resid[i] + mu)).sum()
}

/// Groups observations by leaf, ordered by the tree's pre-order leaf listing.
fn cells_of(tree: &DecisionTree, x: &Covariates) -> Vec<(NodeId, Vec<usize>)> {
    let leaves = tree.leaves();
    let mut pos = std::collections::HashMap::with_capacity(leaves.len());
    for (p, &l) in leaves.iter().enumerate() {
        pos.insert(l, p);
    }
    let mut cells: Vec<(NodeId, Vec<usize>)> = leaves.iter().map(|&l| (l, Vec::new())).collect();
    for i in 0..x.n() {
        cells[pos[&tree.leaf_for(x.row(i))]].1.push(i);
    }
    cells
}

/// Everything a grow (or its reverse prune) ratio depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowPruneTerms {
    /// Leaf value before the grow (after the prune).
    pub mu_parent: f64,
    pub mu_left: f64,
    pub mu_right: f64,
    pub cell_left: Vec<usize>,
    pub cell_right: Vec<usize>,
    /// Proposal variances γ_j, γ_jl, γ_jr.
    pub gamma_parent: f64,
    pub gamma_left: f64,
    pub gamma_right: f64,
    /// |TN| of the smaller tree.
    pub n_terminal_small: usize,
    /// |PN| of the larger tree.
    pub n_prunable_large: usize,
    /// Loss-prior log values of the smaller and larger trees.
    pub log_prior_small: f64,
    pub log_prior_large: f64,
    pub sigma2: f64,
}

impl GrowPruneTerms {
    fn cell_parent(&self) -> Vec<usize> {
        let mut c = self.cell_left.clone();
        c.extend_from_slice(&self.cell_right);
        c
    }

    fn weighted_child_mean(&self) -> f64 {
        let (nl, nr) = (self.cell_left.len() as f64, self.cell_right.len() as f64);
        (nl * self.mu_left + nr * self.mu_right) / (nl + nr)
    }

    /// log AR for growing the small tree into the large one. The rule prior
    /// π_RULE appears in both the prior and the proposal and cancels.
    pub fn log_ratio_grow<L: ObservationLikelihood + ?Sized>(&self, lik: &L, resid: &[f64]) -> f64 {
        let prior = self.log_prior_large - self.log_prior_small
            + log_normal_pdf(self.mu_left, 0.0, self.sigma2)
            + log_normal_pdf(self.mu_right, 0.0, self.sigma2)
            - log_normal_pdf(self.mu_parent, 0.0, self.sigma2);
        let like = cell_log_lik(lik, resid, &self.cell_left, self.mu_left)
            + cell_log_lik(lik, resid, &self.cell_right, self.mu_right)
            - cell_log_lik(lik, resid, &self.cell_parent(), self.mu_parent);
        let select = (self.n_terminal_small as f64).ln() - (self.n_prunable_large as f64).ln();
        let values = log_normal_pdf(self.mu_parent, self.weighted_child_mean(), self.gamma_parent)
            - log_normal_pdf(self.mu_left, self.mu_parent, self.gamma_left)
            - log_normal_pdf(self.mu_right, self.mu_parent, self.gamma_right);
        prior + like + select + values
    }

    /// log AR for pruning the large tree back to the small one.
    pub fn log_ratio_prune<L: ObservationLikelihood + ?Sized>(&self, lik: &L, resid: &[f64]) -> f64 {
        -self.log_ratio_grow(lik, resid)
    }
}

/// Counters for one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
    /// Proposals that could not be formed (counted as rejections).
    pub unavailable: [u64; 4],
    pub leaf_proposed: u64,
    pub leaf_accepted: u64,
}

impl MoveCounts {
    pub fn tree_acceptance(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        let a: u64 = self.accepted.iter().sum();
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }
}

/// What happened to one tree in one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeStep {
    pub kind: Move,
    pub available: bool,
    pub accepted: bool,
}

/// Draws log u for u ~ U(0,1) and compares with a log ratio; NaN rejects.
fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.sample(Open01);
    u.ln() < log_ratio
}

/// Everything fixed during a chain.
pub struct Sampler<'a, L: ObservationLikelihood + ?Sized> {
    pub lik: &'a L,
    pub x: &'a Covariates,
    pub config: &'a SamplerConfig,
}

impl<'a, L: ObservationLikelihood + ?Sized> Sampler<'a, L> {
    pub fn new(lik: &'a L, x: &'a Covariates, config: &'a SamplerConfig) -> Result<Self> {
        config.validate()?;
        if lik.n() != x.n() {
            return Err(Error::data(format!(
                "likelihood has {} observations, covariates {}",
                lik.n(),
                x.n()
            )));
        }
        Ok(Self { lik, x, config })
    }

    fn hyper(&self) -> &HyperParams {
        &self.config.hyper
    }

    /// Terms for growing `leaf` of tree k with the given rule and child values.
    pub fn grow_terms(
        &self,
        state: &EnsembleState,
        adapt: &AdaptiveState,
        k: usize,
        leaf: NodeId,
        rule: crate::tree::SplitRule,
        mu_left: f64,
        mu_right: f64,
    ) -> GrowPruneTerms {
        let tree = &state.trees[k];
        let cell = tree.members(self.x, leaf);
        let (cell_left, cell_right): (Vec<usize>, Vec<usize>) =
            cell.iter().partition(|&&i| rule.goes_left(self.x.row(i)));
        let mut grown = tree.clone();
        grown.grow(leaf, rule, mu_left, mu_right);
        let prior = &self.hyper().prior;
        GrowPruneTerms {
            mu_parent: tree.mu(leaf),
            mu_left,
            mu_right,
            gamma_parent: adapt.leaf_variance(k, &cell),
            gamma_left: adapt.leaf_variance(k, &cell_left),
            gamma_right: adapt.leaf_variance(k, &cell_right),
            cell_left,
            cell_right,
            n_terminal_small: tree.n_leaves(),
            n_prunable_large: grown.node_sets().prunable.len(),
            log_prior_small: prior.log_prior(tree),
            log_prior_large: prior.log_prior(&grown),
            sigma2: state.sigma2[k],
        }
    }

    /// Terms for pruning `node` of tree k to a leaf with value `mu_parent`.
    pub fn prune_terms(
        &self,
        state: &EnsembleState,
        adapt: &AdaptiveState,
        k: usize,
        node: NodeId,
        mu_parent: f64,
    ) -> GrowPruneTerms {
        let tree = &state.trees[k];
        let (l, r) = tree.children(node).expect("prunable node");
        let cell_left = tree.members(self.x, l);
        let cell_right = tree.members(self.x, r);
        let mut cell = cell_left.clone();
        cell.extend_from_slice(&cell_right);
        let mut pruned = tree.clone();
        pruned.prune(node, mu_parent);
        let prior = &self.hyper().prior;
        GrowPruneTerms {
            mu_parent,
            mu_left: tree.mu(l),
            mu_right: tree.mu(r),
            gamma_parent: adapt.leaf_variance(k, &cell),
            gamma_left: adapt.leaf_variance(k, &cell_left),
            gamma_right: adapt.leaf_variance(k, &cell_right),
            cell_left,
            cell_right,
            n_terminal_small: pruned.n_leaves(),
            n_prunable_large: tree.node_sets().prunable.len(),
            log_prior_small: prior.log_prior(&pruned),
            log_prior_large: prior.log_prior(tree),
            sigma2: state.sigma2[k],
        }
    }

    /// log AR for replacing tree k's topology with `proposed` at unchanged
    /// leaf values: prior ratio times full-data likelihood ratio.
    pub fn log_ratio_reshape(&self, state: &EnsembleState, k: usize, resid: &[f64], proposed: &DecisionTree) -> f64 {
        let prior = &self.hyper().prior;
        let current = &state.values[k];
        let mut like = 0.0;
        for (i, &r) in resid.iter().enumerate() {
            let new = proposed.mu(proposed.leaf_for(self.x.row(i)));
            let old = current[i];
            if new != old {
                like += self.lik.log_density(i, r + new) - self.lik.log_density(i, r + old);
            }
        }
        prior.log_prior(proposed) - prior.log_prior(&state.trees[k]) + like
    }

    /// Structural move on tree k.
    fn tree_move<R: Rng + ?Sized>(
        &self,
        state: &mut EnsembleState,
        adapt: &AdaptiveState,
        k: usize,
        resid: &[f64],
        rng: &mut R,
    ) -> TreeStep {
        let kind = self.hyper().draw_move(rng);
        let unavailable = TreeStep {
            kind,
            available: false,
            accepted: false,
        };
        let (accepted, new_tree) = match kind {
            Move::Grow => {
                let Some(g) = state.trees[k].propose_grow(self.x, rng) else {
                    return unavailable;
                };
                let tree = &state.trees[k];
                let mu = tree.mu(g.leaf);
                let cell = tree.members(self.x, g.leaf);
                let (cl, cr): (Vec<usize>, Vec<usize>) =
                    cell.iter().partition(|&&i| g.rule.goes_left(self.x.row(i)));
                let sl = adapt.leaf_variance(k, &cl).sqrt();
                let sr = adapt.leaf_variance(k, &cr).sqrt();
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let mu_l = mu + sl * z;
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let mu_r = mu + sr * z;
                let terms = self.grow_terms(state, adapt, k, g.leaf, g.rule, mu_l, mu_r);
                let acc = mh_accept(terms.log_ratio_grow(self.lik, resid), rng);
                let mut t = state.trees[k].clone();
                if acc {
                    t.grow(g.leaf, g.rule, mu_l, mu_r);
                }
                (acc, acc.then_some(t))
            }
            Move::Prune => {
                let Some(p) = state.trees[k].propose_prune(rng) else {
                    return unavailable;
                };
                let tree = &state.trees[k];
                let cl = tree.members(self.x, p.left);
                let cr = tree.members(self.x, p.right);
                let (nl, nr) = (cl.len() as f64, cr.len() as f64);
                let avg = (nl * tree.mu(p.left) + nr * tree.mu(p.right)) / (nl + nr);
                let mut cell = cl;
                cell.extend_from_slice(&cr);
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let mu_new = avg + adapt.leaf_variance(k, &cell).sqrt() * z;
                let terms = self.prune_terms(state, adapt, k, p.node, mu_new);
                let acc = mh_accept(terms.log_ratio_prune(self.lik, resid), rng);
                let mut t = state.trees[k].clone();
                if acc {
                    t.prune(p.node, mu_new);
                }
                (acc, acc.then_some(t))
            }
            Move::Change | Move::Swap => {
                let proposal = if kind == Move::Change {
                    state.trees[k].propose_change(self.x, rng)
                } else {
                    state.trees[k].propose_swap(self.x, rng)
                };
                match proposal {
                    Reshape::Unavailable => return unavailable,
                    Reshape::EmptyLeaf => (false, None),
                    Reshape::Proposed(t) => {
                        let acc = mh_accept(self.log_ratio_reshape(state, k, resid, &t), rng);
                        (acc, acc.then_some(t))
                    }
                }
            }
        };
        if let Some(t) = new_tree {
            state.set_tree(k, t, self.x);
        }
        TreeStep {
            kind,
            available: true,
            accepted,
        }
    }

    /// One random-walk MH update per leaf of tree k, targeting the cell
    /// likelihood times the N(0, σ_k²) leaf prior. Returns (proposed, accepted).
    pub fn leaf_mh_refresh<R: Rng + ?Sized>(
        &self,
        state: &mut EnsembleState,
        adapt: &AdaptiveState,
        k: usize,
        resid: &[f64],
        rng: &mut R,
    ) -> (u64, u64) {
        let cells = cells_of(&state.trees[k], self.x);
        let s2 = state.sigma2[k];
        let mut accepted = 0;
        for (leaf, cell) in &cells {
            let mu = state.trees[k].mu(*leaf);
            let step = adapt.leaf_variance(k, cell).sqrt();
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let prop = mu + step * z;
            let log_ratio = cell_log_lik(self.lik, resid, cell, prop) - cell_log_lik(self.lik, resid, cell, mu)
                + log_normal_pdf(prop, 0.0, s2)
                - log_normal_pdf(mu, 0.0, s2);
            if mh_accept(log_ratio, rng) {
                state.trees[k].set_mu(*leaf, prop);
                for &i in cell {
                    state.values[k][i] = prop;
                }
                accepted += 1;
            }
        }
        state.refresh_fitted();
        (cells.len() as u64, accepted)
    }

    /// One full sweep over the trees.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut EnsembleState,
        adapt: &mut AdaptiveState,
        counts: &mut MoveCounts,
        rng: &mut R,
    ) -> Vec<TreeStep> {
        let mut steps = Vec::with_capacity(state.n_trees());
        for k in 0..state.n_trees() {
            let resid = state.residual_fit(k).expect("k in range");
            let step = self.tree_move(state, adapt, k, &resid, rng);
            let m = step.kind.index();
            counts.proposed[m] += 1;
            if !step.available {
                counts.unavailable[m] += 1;
            }
            if step.accepted {
                counts.accepted[m] += 1;
            }
            let (lp, la) = self.leaf_mh_refresh(state, adapt, k, &resid, rng);
            counts.leaf_proposed += lp;
            counts.leaf_accepted += la;
            state.sigma2[k] = sigma2_gibbs(&state.trees[k], &self.config.hyper, rng);
            if adapt.enabled {
                adapt.trees[k]
                    .update(&state.values[k])
                    .expect("value vector has n entries");
            }
            steps.push(step);
        }
        adapt.iteration += 1;
        steps
    }

    /// Full log likelihood at the current state.
    pub fn state_log_lik(&self, state: &EnsembleState) -> f64 {
        log_likelihood(self.lik, &state.fitted)
    }

    /// Runs one chain from the default initial state.
    pub fn run_chain(&self, seed: u64, chain: u64) -> ChainTrace {
        let mut rng = chain_rng(seed, chain);
        let mut state = EnsembleState::initial(self.x, self.config, &mut rng);
        let mut adapt = AdaptiveState::new(self.config.n_trees, self.x.n(), self.config);
        let mut counts = MoveCounts::default();
        let mut records = Vec::with_capacity(self.config.iterations);
        let mut eta_draws = Vec::with_capacity(self.config.iterations - self.config.burn_in);
        for it in 0..self.config.iterations {
            self.sweep(&mut state, &mut adapt, &mut counts, &mut rng);
            records.push(IterationRecord {
                iteration: it + 1,
                log_lik: self.state_log_lik(&state),
                n_leaves: state.trees.iter().map(DecisionTree::n_leaves).collect(),
                depth: state.trees.iter().map(DecisionTree::depth).collect(),
                sigma2: state.sigma2.clone(),
                accepted: counts.accepted,
                proposed: counts.proposed,
            });
            if it >= self.config.burn_in {
                eta_draws.push(state.fitted.clone());
            }
        }
        ChainTrace {
            chain,
            seed,
            burn_in: self.config.burn_in,
            records,
            eta_draws,
            counts,
            final_state: state,
        }
    }

    /// Runs `n_chains` chains in parallel; results are ordered by chain index.
    pub fn run_chains(&self, seed: u64, n_chains: usize) -> Vec<ChainTrace> {
        (0..n_chains as u64)
            .into_par_iter()
            .map(|c| self.run_chain(seed, c))
            .collect()
    }
}

/// Deterministic per-task stream derived from a master seed.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th task of kind `tag`, mixed from a master seed with
/// the SplitMix64 finalizer so nearby inputs give unrelated outputs.
pub fn sub_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// σ² ~ InvGamma(a + n_L/2, b + Σμ²/2).
pub fn sigma2_gibbs<R: Rng + ?Sized>(tree: &DecisionTree, hyper: &HyperParams, rng: &mut R) -> f64 {
    let leaves = tree.leaves();
    let ss: f64 = leaves.iter().map(|&l| tree.mu(l).powi(2)).sum();
    let (shape, scale) = sigma2_posterior_params(leaves.len(), ss, hyper);
    draw_inv_gamma(shape, scale, rng)
}

/// Shape and scale of the σ² full conditional.
pub fn sigma2_posterior_params(n_leaves: usize, sum_sq: f64, hyper: &HyperParams) -> (f64, f64) {
    (hyper.a + 0.5 * n_leaves as f64, hyper.b + 0.5 * sum_sq)
}

pub fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("positive parameters");
    loop {
        let v = 1.0 / g.sample(rng);
        if v.is_finite() && v > 0.0 {
            return v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_lik: f64,
    pub n_leaves: Vec<usize>,
    pub depth: Vec<usize>,
    pub sigma2: Vec<f64>,
    /// Cumulative accepted moves (grow, prune, change, swap).
    pub accepted: [u64; 4],
    /// Cumulative proposed moves, unavailable ones included.
    pub proposed: [u64; 4],
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub chain: u64,
    pub seed: u64,
    pub burn_in: usize,
    pub records: Vec<IterationRecord>,
    /// Post-burn-in draws of Σ_t g(xᵢ, T_t, M_t), one vector per iteration.
    pub eta_draws: Vec<Vec<f64>>,
    pub counts: MoveCounts,
    pub final_state: EnsembleState,
}

impl ChainTrace {
    fn post_burn(&self) -> &[IterationRecord] {
        &self.records[self.burn_in..]
    }

    /// Posterior mean leaf count of tree k.
    pub fn mean_leaves(&self, k: usize) -> f64 {
        let r = self.post_burn();
        r.iter().map(|x| x.n_leaves[k] as f64).sum::<f64>() / r.len() as f64
    }

    /// Posterior mean depth of tree k.
    pub fn mean_depth(&self, k: usize) -> f64 {
        let r = self.post_burn();
        r.iter().map(|x| x.depth[k] as f64).sum::<f64>() / r.len() as f64
    }

    /// Structural-move acceptance over all iterations.
    pub fn acceptance_rate(&self) -> f64 {
        self.counts.tree_acceptance()
    }

    /// Post-burn-in draws of θ(xᵢ) under the model's link.
    pub fn theta_draws(&self, model: &CopulaModel) -> Vec<Vec<f64>> {
        self.eta_draws
            .iter()
            .map(|row| row.iter().map(|&e| model.link_unchecked(e)).collect())
            .collect()
    }

    /// Iteration trace as CSV text.
    pub fn to_csv(&self) -> String {
        let m = self.records.first().map_or(0, |r| r.n_leaves.len());
        let mut out = String::from("iteration,log_lik");
        for k in 1..=m {
            out.push_str(&format!(",n_leaves_{k}"));
        }
        for k in 1..=m {
            out.push_str(&format!(",depth_{k}"));
        }
        for k in 1..=m {
            out.push_str(&format!(",sigma2_{k}"));
        }
        for mv in Move::ALL {
            out.push_str(&format!(",{0}_proposed,{0}_accepted", mv.name()));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{:?}", r.iteration, r.log_lik));
            for v in &r.n_leaves {
                out.push_str(&format!(",{v}"));
            }
            for v in &r.depth {
                out.push_str(&format!(",{v}"));
            }
            for v in &r.sigma2 {
                out.push_str(&format!(",{v:?}"));
            }
            for mv in Move::ALL {
                out.push_str(&format!(",{},{}", r.proposed[mv.index()], r.accepted[mv.index()]));
            }
            out.push('\n');
        }
        out
    }
}
