//! Preferential attachment trees with vertex death.
pub mod analytics;
pub mod config;
pub mod ctbp_sim;
pub mod discrete_sim;
pub mod exact;
pub mod experiments;
pub mod kernel;
pub mod output;
pub mod rate_model;
pub mod series;
pub mod stats;
