//! Simulation and verification toolkit for quenched limit theorems of random
//! interval-map systems.
//!
//! The pipeline runs from driving sequences and fiber maps
//! ([`random_system`]) through Ulam transfer operators ([`transfer`]) to
//! martingale-coboundary decompositions ([`decomposition`]), path processes
//! ([`processes`]) and Wasserstein rate estimation ([`wasserstein`]).
//! [`tower_sim`] simulates abstract random Young towers with prescribed
//! return-time tails. [`config`] and [`experiment`] back the `rdslab`
//! command-line tool.

pub mod error;
pub mod rng;
pub mod random_system;
pub mod transfer;
pub mod observable;
pub mod decomposition;
pub mod processes;
pub mod assignment;
pub mod wasserstein;
pub mod tower_sim;
pub mod io;
pub mod config;
pub mod invariants;
pub mod experiment;

pub use error::{Error, Result};

/// Crate version, stamped into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
