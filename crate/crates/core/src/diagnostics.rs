//! Posterior summaries, the replicate-averaged accuracy metrics, and two
//! permutation goodness-of-fit tests for bivariate samples.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaModel;
use crate::error::{Error, Result};
use crate::sampler::{chain_rng, ChainTrace};
use crate::stats;

/// Scale on which posterior draws are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// The copula parameter θ itself.
    Theta,
    /// Kendall's τ implied by θ.
    Tau,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(Scale::Theta),
            "tau" => Ok(Scale::Tau),
            _ => Err(Error::config(format!("unknown scale '{s}' (expected theta or tau)"))),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Theta => "theta",
            Scale::Tau => "tau",
        })
    }
}

/// Per-observation posterior mean and 95% band for one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PosteriorSummary {
    /// Summarizes `draws[t][i]`, draw t of observation i.
    pub fn from_draws(draws: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = draws.first() else {
            return Err(Error::input("no posterior draws to summarize"));
        };
        let n = first.len();
        if draws.iter().any(|d| d.len() != n) {
            return Err(Error::input("posterior draws have ragged rows"));
        }
        let mut mean = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut col = vec![0.0; draws.len()];
        for i in 0..n {
            for (c, d) in col.iter_mut().zip(draws) {
                *c = d[i];
            }
            mean.push(stats::mean(&col));
            col.sort_by(f64::total_cmp);
            lower.push(stats::quantile_sorted(&col, 0.025));
            upper.push(stats::quantile_sorted(&col, 0.975));
        }
        Ok(Self { mean, lower, upper })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Summary of one chain's post-burn-in draws on the requested scale.
pub fn summarize_chain(trace: &ChainTrace, model: &CopulaModel, scale: Scale) -> Result<PosteriorSummary> {
    let draws = scaled_draws(&trace.eta_draws, model, scale)?;
    PosteriorSummary::from_draws(&draws)
}

/// Maps summed-tree draws η through the link (and to τ when asked).
pub fn scaled_draws(eta: &[Vec<f64>], model: &CopulaModel, scale: Scale) -> Result<Vec<Vec<f64>>> {
    eta.iter()
        .map(|row| {
            row.iter()
                .map(|&e| {
                    let theta = model.link_unchecked(e);
                    match scale {
                        Scale::Theta => Ok(theta),
                        Scale::Tau => model.tau_from_theta(theta),
                    }
                })
                .collect()
        })
        .collect()
}

fn check_dims(summaries: &[Vec<PosteriorSummary>], truth: &[Vec<f64>]) -> Result<()> {
    if summaries.is_empty() || summaries.len() != truth.len() {
        return Err(Error::input(format!(
            "{} replicate summaries against {} truth vectors",
            summaries.len(),
            truth.len()
        )));
    }
    for (k, (chains, t)) in summaries.iter().zip(truth).enumerate() {
        if chains.is_empty() {
            return Err(Error::input(format!("replicate {} has no chains", k + 1)));
        }
        if let Some(s) = chains.iter().find(|s| s.len() != t.len()) {
            return Err(Error::input(format!(
                "replicate {}: summary covers {} observations, truth has {}",
                k + 1,
                s.len(),
                t.len()
            )));
        }
    }
    Ok(())
}

/// Average over replicates of the chain- and observation-averaged squared
/// error of the posterior mean. `summaries[k][j]` is chain j of replicate k
/// and `truth[k]` the true values for replicate k. This is a mean squared
/// error; [`rmse_rooted`] takes its square root.
pub fn rmse(summaries: &[Vec<PosteriorSummary>], truth: &[Vec<f64>]) -> Result<f64> {
    check_dims(summaries, truth)?;
    let per_rep: Vec<f64> = summaries
        .iter()
        .zip(truth)
        .map(|(chains, t)| stats::mean(&chains.iter().map(|s| chain_mse(s, t)).collect::<Vec<_>>()))
        .collect();
    Ok(stats::mean(&per_rep))
}

pub fn rmse_rooted(summaries: &[Vec<PosteriorSummary>], truth: &[Vec<f64>]) -> Result<f64> {
    rmse(summaries, truth).map(f64::sqrt)
}

/// Mean squared error of one chain's posterior means.
pub fn chain_mse(s: &PosteriorSummary, truth: &[f64]) -> f64 {
    stats::mean(&s.mean.iter().zip(truth).map(|(m, t)| (t - m) * (t - m)).collect::<Vec<_>>())
}

pub fn chain_ci_length(s: &PosteriorSummary) -> f64 {
    stats::mean(&s.upper.iter().zip(&s.lower).map(|(u, l)| u - l).collect::<Vec<_>>())
}

pub fn chain_ci_cov(s: &PosteriorSummary, truth: &[f64]) -> f64 {
    let hits = s
        .lower
        .iter()
        .zip(&s.upper)
        .zip(truth)
        .filter(|((l, u), t)| *l <= *t && *t <= *u)
        .count();
    hits as f64 / truth.len() as f64
}

/// Average 95% band width over replicates, chains and observations.
pub fn ci_length(summaries: &[Vec<PosteriorSummary>]) -> Result<f64> {
    if summaries.is_empty() || summaries.iter().any(Vec::is_empty) {
        return Err(Error::input("no summaries"));
    }
    Ok(stats::mean(
        &summaries
            .iter()
            .map(|c| stats::mean(&c.iter().map(chain_ci_length).collect::<Vec<_>>()))
            .collect::<Vec<_>>(),
    ))
}

/// Fraction of (replicate, chain, observation) triples whose true value lies
/// in the band [q2.5, q97.5].
pub fn ci_cov(summaries: &[Vec<PosteriorSummary>], truth: &[Vec<f64>]) -> Result<f64> {
    check_dims(summaries, truth)?;
    Ok(stats::mean(
        &summaries
            .iter()
            .zip(truth)
            .map(|(c, t)| stats::mean(&c.iter().map(|s| chain_ci_cov(s, t)).collect::<Vec<_>>()))
            .collect::<Vec<_>>(),
    ))
}

/// A bivariate sample as parallel coordinate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample2 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Sample2 {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::input(format!(
                "sample columns differ in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::input("sample contains non-finite values"));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn check_two_sample(a: &Sample2, b: &Sample2, n_perm: usize) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::input(format!(
            "each sample needs at least 2 points, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n_perm == 0 {
        return Err(Error::input("need at least one permutation"));
    }
    Ok(())
}

/// Outcome of a permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n_perm: usize,
}

/// (1 + #{permuted ≥ observed}) / (n_perm + 1). Each permutation draws its
/// labels from its own stream, so the count does not depend on scheduling. A
/// relative slack absorbs summation-order roundoff between equal statistics.
fn permutation_p<F>(observed: f64, n_a: usize, n_total: usize, n_perm: usize, seed: u64, stat: F) -> PermutationTest
where
    F: Fn(&[bool]) -> f64 + Sync,
{
    let tol = 1e-12 * observed.abs().max(1e-300);
    let exceed: usize = (0..n_perm as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = chain_rng(seed, k);
            let mut labels: Vec<bool> = (0..n_total).map(|i| i < n_a).collect();
            labels.shuffle(&mut rng);
            usize::from(stat(&labels) >= observed - tol)
        })
        .sum();
    PermutationTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_perm + 1) as f64,
        n_perm,
    }
}

struct Pooled {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Pooled {
    fn new(a: &Sample2, b: &Sample2) -> Self {
        let mut x = a.x.clone();
        x.extend_from_slice(&b.x);
        let mut y = a.y.clone();
        y.extend_from_slice(&b.y);
        Self { x, y }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    fn original_labels(&self, n_a: usize) -> Vec<bool> {
        (0..self.len()).map(|i| i < n_a).collect()
    }
}

/// Cramér energy statistic on pooled pairwise Euclidean distances, labels
/// marking membership in the first sample.
struct Energy {
    /// Upper-triangle distances, row-major.
    dist: Vec<f64>,
    n: usize,
    total: f64,
}

impl Energy {
    fn new(p: &Pooled) -> Self {
        let n = p.len();
        let mut dist = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                dist.push((p.x[i] - p.x[j]).hypot(p.y[i] - p.y[j]));
            }
        }
        let total = dist.iter().sum();
        Self { dist, n, total }
    }

    fn statistic(&self, labels: &[bool]) -> f64 {
        let (mut saa, mut sbb) = (0.0, 0.0);
        let mut k = 0;
        for i in 0..self.n {
            let li = labels[i];
            let row = &self.dist[k..k + self.n - i - 1];
            k += self.n - i - 1;
            let (mut same_a, mut same_b) = (0.0, 0.0);
            for (d, &lj) in row.iter().zip(&labels[i + 1..]) {
                if lj == li {
                    if li {
                        same_a += d;
                    } else {
                        same_b += d;
                    }
                }
            }
            saa += same_a;
            sbb += same_b;
        }
        let sab = self.total - saa - sbb;
        let na = labels.iter().filter(|&&l| l).count() as f64;
        let nb = self.n as f64 - na;
        // nm/(n+m) · [2/(nm) Σ|a−b| − 1/n² Σ|a−a'| − 1/m² Σ|b−b'|] with ordered-pair sums
        na * nb / (na + nb) * (2.0 * sab / (na * nb) - 2.0 * saa / (na * na) - 2.0 * sbb / (nb * nb))
    }
}

/// Two-sample Cramér test with the Euclidean energy kernel. Permutations
/// relabel the pooled sample keeping both sample sizes.
pub fn cramer_test(a: &Sample2, b: &Sample2, n_perm: usize, seed: u64) -> Result<PermutationTest> {
    check_two_sample(a, b, n_perm)?;
    let pooled = Pooled::new(a, b);
    let energy = Energy::new(&pooled);
    let observed = energy.statistic(&pooled.original_labels(a.len()));
    Ok(permutation_p(observed, a.len(), pooled.len(), n_perm, seed, |l| {
        energy.statistic(l)
    }))
}

/// Binary indexed tree over ranks for dominance counting.
struct Fenwick(Vec<u32>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `i`.
    fn below(&self, i: usize) -> u32 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Fasano–Franceschini statistic. Points are given by pooled x-order and
/// y-ranks; ties are broken by position so each coordinate is a strict order.
struct Quadrants {
    /// Pooled indices sorted by x.
    by_x: Vec<usize>,
    /// y-rank of each pooled index.
    y_rank: Vec<usize>,
}

impl Quadrants {
    fn new(p: &Pooled) -> Self {
        let n = p.len();
        let mut by_x: Vec<usize> = (0..n).collect();
        by_x.sort_by(|&i, &j| p.x[i].total_cmp(&p.x[j]).then(i.cmp(&j)));
        let mut by_y: Vec<usize> = (0..n).collect();
        by_y.sort_by(|&i, &j| p.y[i].total_cmp(&p.y[j]).then(i.cmp(&j)));
        let mut y_rank = vec![0; n];
        for (r, &i) in by_y.iter().enumerate() {
            y_rank[i] = r;
        }
        Self { by_x, y_rank }
    }

    /// For each origin, the largest quadrant-fraction gap between the two
    /// samples; the statistic averages the maxima over origins drawn from
    /// each sample.
    fn statistic(&self, labels: &[bool]) -> f64 {
        let n = labels.len();
        let na = labels.iter().filter(|&&l| l).count();
        let nb = n - na;
        let (fa, fb) = (na as f64, nb as f64);
        let mut tree_a = Fenwick::new(n);
        let mut tree_b = Fenwick::new(n);
        // y-rank prefix counts per sample: points with y below a rank
        let mut y_below_a = vec![0u32; n + 1];
        let mut y_below_b = vec![0u32; n + 1];
        for i in 0..n {
            let r = self.y_rank[i];
            if labels[i] {
                y_below_a[r + 1] += 1;
            } else {
                y_below_b[r + 1] += 1;
            }
        }
        for r in 0..n {
            y_below_a[r + 1] += y_below_a[r];
            y_below_b[r + 1] += y_below_b[r];
        }
        let (mut d_a, mut d_b) = (0.0f64, 0.0f64);
        let (mut left_a, mut left_b) = (0u32, 0u32);
        for &i in &self.by_x {
            let r = self.y_rank[i];
            // counts strictly left of the origin (already inserted)
            let quads = |tree: &Fenwick, left: u32, y_below: &[u32], total: u32, own: bool| -> [u32; 4] {
                let ll = tree.below(r);
                let lu = left - ll;
                let below = y_below[r];
                let rl = below - ll;
                let ru = total + ll - left - below - u32::from(own);
                [ll, lu, rl, ru]
            };
            let qa = quads(&tree_a, left_a, &y_below_a, na as u32, labels[i]);
            let qb = quads(&tree_b, left_b, &y_below_b, nb as u32, !labels[i]);
            let gap = qa
                .iter()
                .zip(&qb)
                .map(|(&ca, &cb)| (ca as f64 / fa - cb as f64 / fb).abs())
                .fold(0.0, f64::max);
            if labels[i] {
                d_a = d_a.max(gap);
                tree_a.add(r);
                left_a += 1;
            } else {
                d_b = d_b.max(gap);
                tree_b.add(r);
                left_b += 1;
            }
        }
        0.5 * (d_a + d_b)
    }
}

/// Two-sample Fasano–Franceschini test with a permutation p-value.
pub fn ff_test(a: &Sample2, b: &Sample2, n_perm: usize, seed: u64) -> Result<PermutationTest> {
    check_two_sample(a, b, n_perm)?;
    let pooled = Pooled::new(a, b);
    let quads = Quadrants::new(&pooled);
    let observed = quads.statistic(&pooled.original_labels(a.len()));
    Ok(permutation_p(observed, a.len(), pooled.len(), n_perm, seed, |l| {
        quads.statistic(l)
    }))
}

/// Mean, median and standard deviation of a set of p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueSummary {
    pub mean: f64,
    pub median: f64,
    /// NaN with a single replicate.
    pub sd: f64,
}

impl PValueSummary {
    pub fn of(ps: &[f64]) -> Self {
        Self {
            mean: stats::mean(ps),
            median: stats::median(ps),
            sd: stats::sd(ps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofTable {
    pub cramer: Vec<f64>,
    pub ff: Vec<f64>,
    pub cramer_summary: PValueSummary,
    pub ff_summary: PValueSummary,
}

impl GofTable {
    /// CSV with one row per test: test,mean,median,sd.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,mean,median,sd\n");
        for (name, s) in [("cramer", &self.cramer_summary), ("fasano-franceschini", &self.ff_summary)] {
            out.push_str(&format!("{name},{:?},{:?},{:?}\n", s.mean, s.median, s.sd));
        }
        out
    }
}

/// For each replicate, simulates one pair per observation from the fitted
/// copula at θ̂(xᵢ) and tests the simulated sample against the observed
/// pseudo-sample with both tests.
pub fn gof_harness(
    theta_hat: &[f64],
    observed: &Sample2,
    model: &CopulaModel,
    replicates: usize,
    n_perm: usize,
    seed: u64,
) -> Result<GofTable> {
    if theta_hat.len() != observed.len() {
        return Err(Error::input(format!(
            "{} fitted parameters for {} observations",
            theta_hat.len(),
            observed.len()
        )));
    }
    if replicates == 0 {
        return Err(Error::input("need at least one replicate"));
    }
    for &t in theta_hat {
        model.check_theta(t)?;
    }
    let rows: Vec<Result<(f64, f64)>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = chain_rng(seed, 2 * r);
            let mut x = Vec::with_capacity(theta_hat.len());
            let mut y = Vec::with_capacity(theta_hat.len());
            for &t in theta_hat {
                let (a, b) = model.sample_pair(t, &mut rng)?;
                x.push(a);
                y.push(b);
            }
            let sim = Sample2::new(x, y)?;
            let perm_seed = seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(2 * r + 1));
            let c = cramer_test(observed, &sim, n_perm, perm_seed)?;
            let f = ff_test(observed, &sim, n_perm, perm_seed.rotate_left(17))?;
            Ok((c.p_value, f.p_value))
        })
        .collect();
    let mut cramer = Vec::with_capacity(replicates);
    let mut ff = Vec::with_capacity(replicates);
    for r in rows {
        let (c, f) = r?;
        cramer.push(c);
        ff.push(f);
    }
    Ok(GofTable {
        cramer_summary: PValueSummary::of(&cramer),
        ff_summary: PValueSummary::of(&ff),
        cramer,
        ff,
    })
}

#[cfg(test)]
mod tests;
