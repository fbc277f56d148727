//! Bayesian time-varying-parameter VARs with stochastic volatility,
//! t-distributed errors and Normal-Gamma shrinkage, together with benchmark
//! models, density-forecast scoring and a portfolio backtest.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod linalg;
pub mod models;
pub mod portfolio;
pub mod shrinkage;
pub mod state_space;
pub mod validation;
pub mod volatility;

pub use error::{Error, Result};
