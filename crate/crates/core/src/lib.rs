//! Distributionally robust Nash equilibrium seeking for multi-agent games in
//! which each agent hedges against distributional shift through a
//! Wasserstein-type penalty on deviations from its empirical data.
//!
//! Module map:
//! - [`game`]: data model and the penalized surrogate objective
//! - [`adversary`]: inner worst-case maximization
//! - [`vi`]: envelope pseudo-gradient, VI residual, monotonicity certificates
//! - [`solver`]: stochastic projected-gradient equilibrium seeking
//! - [`oracle`]: high-precision reference equilibria for the Cournot family
//! - [`evaluation`]: out-of-sample study harness
//! - [`config`], [`export`]: config files and CSV / key-value artifacts

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod game;
pub mod oracle;
pub mod rng;
pub mod solver;
pub mod vi;

pub use error::{Error, Result};
