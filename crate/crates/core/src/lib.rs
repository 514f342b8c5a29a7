//! Design formulas and open-system simulation for qubit readout and reset
//! through a flux-tunable Purcell filter.

pub mod circuit_model;
pub mod device_config;
pub mod dynamics;
pub mod pulse_lib;
pub mod optimizer;
pub mod readout_sim;
pub mod reset_sim;
pub mod units;
