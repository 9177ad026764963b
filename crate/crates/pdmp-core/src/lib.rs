//! Exact simulation and verification toolkit for piecewise deterministic
//! Markov processes (PDMPs): velocity-jump dynamics, jump-mechanism algebra,
//! two equivalent event-loop constructions, synchronous couplings, and
//! invariant-measure diagnostics.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod coupling;
pub mod engine;
pub mod error;
pub mod mechanisms;
pub mod report;
pub mod rng;
pub mod samplers;
pub mod state_space;
pub mod stats;

pub use error::{PdmpError, Result};
