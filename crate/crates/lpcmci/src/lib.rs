//! Causal discovery for time series with latent confounders (LPCMCI) plus
//! ground-truth oracles, simulation and benchmarking.

pub mod bench;
pub mod ci;
pub mod data;
pub mod discovery;
pub mod fci;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod svarfci;
