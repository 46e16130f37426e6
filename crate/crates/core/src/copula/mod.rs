//! Bivariate copula families with their link functions, densities, CDFs,
//! Kendall's tau conversions and samplers.
//!
//! Each family's parameter θ is reached from an unconstrained real through a
//! fixed link:
//!
//! | family            | support        | link h(x)              |
//! |-------------------|----------------|------------------------|
//! | Gaussian, Student-t | ρ ∈ (-1, 1)  | (eˣ - 1)/(eˣ + 1)      |
//! | Clayton           | θ ∈ (0, ∞)     | eˣ                     |
//! | Gumbel            | θ ∈ [1, ∞)     | eˣ + 1                 |
//! | Frank             | θ ∈ ℝ \ {0}    | x                      |
//!
//! Frank at θ = 0 is accepted as the independence limit.

mod archimedean;
mod elliptical;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::average_ranks;


/// Default Student-t degrees of freedom.
pub const DEFAULT_DF: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    StudentT,
    Clayton,
    Gumbel,
    Frank,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Gaussian,
        Family::StudentT,
        Family::Clayton,
        Family::Gumbel,
        Family::Frank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::StudentT => "student-t",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Frank => "frank",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "student-t" | "student_t" | "studentt" | "t" => Ok(Family::StudentT),
            "clayton" => Ok(Family::Clayton),
            "gumbel" => Ok(Family::Gumbel),
            "frank" => Ok(Family::Frank),
            other => Err(Error::config(format!("unknown copula family '{other}'"))),
        }
    }
}

/// A copula family together with its fixed shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    family: Family,
    df: f64,
}

impl CopulaModel {
    /// Model with default shape parameters (Student-t uses [`DEFAULT_DF`]).
    pub fn new(family: Family) -> Self {
        Self {
            family,
            df: DEFAULT_DF,
        }
    }

    /// Model with explicit Student-t degrees of freedom; `df` must exceed 2.
    /// Ignored for the other families.
    pub fn with_df(family: Family, df: f64) -> Result<Self> {
        if family == Family::StudentT && !(df.is_finite() && df > 2.0) {
            return Err(Error::domain(format!(
                "student-t degrees of freedom must be finite and > 2, got {df}"
            )));
        }
        Ok(Self { family, df })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    /// Maps an unconstrained real into the family's parameter support.
    pub fn link(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::domain(format!("link argument must be finite, got {x}")));
        }
        Ok(self.link_unchecked(x))
    }

    /// Link without the finiteness check. Values that round onto an open
    /// boundary are pulled back inside by one ulp.
    #[inline]
    pub fn link_unchecked(&self, x: f64) -> f64 {
        match self.family {
            Family::Gaussian | Family::StudentT => {
                // (eˣ - 1)/(eˣ + 1) = tanh(x/2)
                let r = (0.5 * x).tanh();
                if r >= 1.0 {
                    f64::from_bits(1.0f64.to_bits() - 1)
                } else if r <= -1.0 {
                    -f64::from_bits(1.0f64.to_bits() - 1)
                } else {
                    r
                }
            }
            Family::Clayton => x.exp().max(f64::from_bits(1)),
            Family::Gumbel => x.exp() + 1.0,
            Family::Frank => x,
        }
    }

    /// Inverse of the link on the family's support.
    pub fn link_inverse(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self.family {
            Family::Gaussian | Family::StudentT => 2.0 * theta.atanh(),
            Family::Clayton => theta.ln(),
            Family::Gumbel => (theta - 1.0).ln(),
            Family::Frank => theta,
        })
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        let ok = theta.is_finite()
            && match self.family {
                Family::Gaussian | Family::StudentT => theta > -1.0 && theta < 1.0,
                Family::Clayton => theta > 0.0,
                Family::Gumbel => theta >= 1.0,
                Family::Frank => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "parameter {theta} outside the {} support",
                self.family
            )))
        }
    }

    fn check_open_unit(u1: f64, u2: f64) -> Result<()> {
        if u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0 {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "copula arguments must lie in (0,1)², got ({u1}, {u2})"
            )))
        }
    }

    /// log c(u1, u2 | θ).
    pub fn log_density(&self, u1: f64, u2: f64, theta: f64) -> Result<f64> {
        Self::check_open_unit(u1, u2)?;
        self.check_theta(theta)?;
        let prepared = Transformed::new(self, u1, u2);
        Ok(prepared.log_density(self, theta))
    }

    pub fn density(&self, u1: f64, u2: f64, theta: f64) -> Result<f64> {
        self.log_density(u1, u2, theta).map(f64::exp)
    }

    /// C(u1, u2 | θ) on the closed unit square.
    pub fn cdf(&self, u1: f64, u2: f64, theta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u1) || !(0.0..=1.0).contains(&u2) {
            return Err(Error::domain(format!(
                "copula arguments must lie in [0,1]², got ({u1}, {u2})"
            )));
        }
        self.check_theta(theta)?;
        if u1 == 0.0 || u2 == 0.0 {
            return Ok(0.0);
        }
        if u1 == 1.0 {
            return Ok(u2);
        }
        if u2 == 1.0 {
            return Ok(u1);
        }
        let c = match self.family {
            Family::Gaussian => {
                elliptical::bvn_cdf(elliptical::norm_ppf(u1), elliptical::norm_ppf(u2), theta)
            }
            Family::StudentT => elliptical::t_copula_cdf(u1, u2, theta, self.df),
            Family::Clayton => archimedean::clayton_cdf(u1, u2, theta),
            Family::Gumbel => archimedean::gumbel_cdf(u1, u2, theta),
            Family::Frank => archimedean::frank_cdf(u1, u2, theta),
        };
        // Fréchet-Hoeffding bounds
        Ok(c.clamp((u1 + u2 - 1.0).max(0.0), u1.min(u2)))
    }

    /// Kendall's tau of the copula at parameter θ.
    pub fn tau_from_theta(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self.family {
            Family::Gaussian | Family::StudentT => std::f64::consts::FRAC_2_PI * theta.asin(),
            Family::Clayton => theta / (theta + 2.0),
            Family::Gumbel => 1.0 - 1.0 / theta,
            Family::Frank => archimedean::frank_tau(theta),
        })
    }

    /// Range of Kendall's tau reachable by the family, as (lower, upper, lower_inclusive).
    pub fn tau_range(&self) -> (f64, f64, bool) {
        match self.family {
            Family::Gaussian | Family::StudentT | Family::Frank => (-1.0, 1.0, false),
            Family::Clayton => (0.0, 1.0, false),
            Family::Gumbel => (0.0, 1.0, true),
        }
    }

    pub fn tau_attainable(&self, tau: f64) -> bool {
        let (lo, hi, lo_incl) = self.tau_range();
        tau.is_finite() && tau < hi && (tau > lo || (lo_incl && tau == lo))
    }

    /// Parameter with Kendall's tau equal to `tau`.
    pub fn theta_from_tau(&self, tau: f64) -> Result<f64> {
        if !self.tau_attainable(tau) {
            return Err(Error::domain(format!(
                "Kendall's tau {tau} is not attainable by the {} family",
                self.family
            )));
        }
        Ok(match self.family {
            Family::Gaussian | Family::StudentT => (std::f64::consts::FRAC_PI_2 * tau).sin(),
            Family::Clayton => 2.0 * tau / (1.0 - tau),
            Family::Gumbel => 1.0 / (1.0 - tau),
            Family::Frank => frank_theta_from_tau(tau),
        })
    }

    /// One draw (u1, u2) ∈ (0,1)² from the copula at θ.
    pub fn sample_pair<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Result<(f64, f64)> {
        self.check_theta(theta)?;
        let (a, b) = match self.family {
            Family::Gaussian => elliptical::sample_gaussian(theta, rng),
            Family::StudentT => elliptical::sample_t(theta, self.df, rng),
            Family::Clayton => archimedean::clayton_sample(theta, rng),
            Family::Gumbel => archimedean::gumbel_sample(theta, rng),
            Family::Frank => archimedean::frank_sample(theta, rng),
        };
        Ok((clamp_open(a), clamp_open(b)))
    }

    /// Caches the margin transforms for repeated density evaluation.
    pub fn prepare(&self, u1: &[f64], u2: &[f64]) -> Result<PreparedPairs> {
        if u1.len() != u2.len() {
            return Err(Error::input(format!(
                "pseudo-observation columns differ in length ({} vs {})",
                u1.len(),
                u2.len()
            )));
        }
        let mut cells = Vec::with_capacity(u1.len());
        for (&a, &b) in u1.iter().zip(u2) {
            Self::check_open_unit(a, b)?;
            cells.push(Transformed::new(self, a, b));
        }
        Ok(PreparedPairs {
            model: *self,
            cells,
        })
    }
}

fn clamp_open(u: f64) -> f64 {
    const LO: f64 = f64::EPSILON * 0.5;
    u.clamp(LO, 1.0 - f64::EPSILON * 0.5)
}

/// Monotone bisection on the Frank tau map with bracket expansion.
fn frank_theta_from_tau(tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let sign = tau.signum();
    let target = tau.abs();
    let mut lo = 0.0;
    let mut hi = 1.0;
    while archimedean::frank_tau(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if archimedean::frank_tau(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    sign * 0.5 * (lo + hi)
}

/// Per-observation quantities the family densities are written in.
#[derive(Debug, Clone, Copy)]
enum Transformed {
    Elliptical { x: f64, y: f64 },
    StudentT { x: f64, y: f64, marg: f64, konst: f64 },
    Clayton { lu: f64, lv: f64 },
    Gumbel { lu: f64, lv: f64, lx: f64, ly: f64 },
    Frank { u: f64, v: f64 },
}

impl Transformed {
    fn new(model: &CopulaModel, u1: f64, u2: f64) -> Self {
        match model.family {
            Family::Gaussian => Transformed::Elliptical {
                x: elliptical::norm_ppf(u1),
                y: elliptical::norm_ppf(u2),
            },
            Family::StudentT => {
                let x = elliptical::t_ppf(u1, model.df);
                let y = elliptical::t_ppf(u2, model.df);
                Transformed::StudentT {
                    x,
                    y,
                    marg: elliptical::t_marginal_term(x, y, model.df),
                    konst: elliptical::t_log_const(model.df),
                }
            }
            Family::Clayton => Transformed::Clayton {
                lu: u1.ln(),
                lv: u2.ln(),
            },
            Family::Gumbel => {
                let lu = u1.ln();
                let lv = u2.ln();
                Transformed::Gumbel {
                    lu,
                    lv,
                    lx: (-lu).ln(),
                    ly: (-lv).ln(),
                }
            }
            Family::Frank => Transformed::Frank { u: u1, v: u2 },
        }
    }

    #[inline]
    fn log_density(&self, model: &CopulaModel, theta: f64) -> f64 {
        match *self {
            Transformed::Elliptical { x, y } => elliptical::gaussian_log_density(x, y, theta),
            Transformed::StudentT { x, y, marg, konst } => {
                elliptical::t_log_density(x, y, marg, theta, model.df, konst)
            }
            Transformed::Clayton { lu, lv } => archimedean::clayton_log_density(lu, lv, theta),
            Transformed::Gumbel { lu, lv, lx, ly } => {
                archimedean::gumbel_log_density(lu, lv, lx, ly, theta)
            }
            Transformed::Frank { u, v } => archimedean::frank_log_density(u, v, theta),
        }
    }
}

/// Pseudo-observations with cached margin transforms for one copula model.
#[derive(Debug, Clone)]
pub struct PreparedPairs {
    model: CopulaModel,
    cells: Vec<Transformed>,
}

impl PreparedPairs {
    pub fn model(&self) -> &CopulaModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// log c(u1ᵢ, u2ᵢ | h(η)). Invalid or non-finite values map to -∞.
    #[inline]
    pub fn log_density_at_link(&self, i: usize, eta: f64) -> f64 {
        if !eta.is_finite() {
            return f64::NEG_INFINITY;
        }
        let theta = self.model.link_unchecked(eta);
        let v = self.cells[i].log_density(&self.model, theta);
        if v.is_nan() || v == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

/// Paired pseudo-observations strictly inside the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSample {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

/// Rank transform uᵢⱼ = rᵢⱼ/(n+1) with average ranks for ties.
pub fn pseudo_observations(y1: &[f64], y2: &[f64]) -> Result<PseudoSample> {
    if y1.len() != y2.len() {
        return Err(Error::input(format!(
            "columns differ in length ({} vs {})",
            y1.len(),
            y2.len()
        )));
    }
    let n = y1.len();
    if n < 2 {
        return Err(Error::input(format!("need at least 2 observations, got {n}")));
    }
    if y1.iter().chain(y2).any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in raw data"));
    }
    let scale = (n + 1) as f64;
    let to_u = |ys: &[f64]| average_ranks(ys).into_iter().map(|r| r / scale).collect();
    Ok(PseudoSample {
        u1: to_u(y1),
        u2: to_u(y2),
    })
}

#[cfg(test)]
mod tests;
