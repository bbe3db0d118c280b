//! Experiment driver for the kinetic relaxation solvers: config parsing,
//! benchmark problem setup, and CSV emission.

pub mod config;
pub mod csvio;
pub mod run;
