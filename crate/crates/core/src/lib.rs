//! Copula-based conditional dependence modelling with Bayesian additive
//! regression trees fitted by reversible-jump MCMC.

pub mod cli;
pub mod copula;
pub mod diagnostics;
pub mod error;
pub mod quad;
pub mod sampler;
pub mod sim;
pub mod stats;
pub mod tree;

pub use copula::{CopulaModel, Family, PreparedPairs, PseudoSample};
pub use error::{Error, Result};
