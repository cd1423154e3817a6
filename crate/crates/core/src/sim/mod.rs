//! Simulation lab: scenarios, the filter driver, metrics and Monte-Carlo
//! campaigns.

pub mod config;
pub mod filter;
pub mod metrics;
pub mod monte_carlo;
pub mod output;
pub mod scenario;
