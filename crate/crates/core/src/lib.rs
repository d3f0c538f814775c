//! Max-min fair precoding for downlink multi-antenna rate-splitting multiple
//! access (RSMA) under finite-blocklength rate penalties.
//!
//! The crate is `no_std` (with `alloc`) and contains the full algorithmic
//! stack: the normal-approximation rate kernel, deterministic channel
//! sampling, SINR and rate evaluation, the Taylor restrictions used by the
//! successive convex approximation (SCA), assembly of the per-iteration conic
//! subproblems, and the strategy drivers (RSMA, cooperative RSMA with the
//! one-dimensional blocklength search, SDMA and NOMA).
//!
//! Conic subproblems are handed to an implementation of [`conic::ConicSolver`]
//! supplied by the caller, so the numerical backend can live in a `std` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod channel;
pub mod conic;
pub mod eval;
pub mod fbl;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod noma;
pub mod sca;
pub mod strategy;
pub mod subproblem;
pub mod taylor;

pub use num_complex::Complex64;

pub use crate::conic::{ConicProgram, ConicSolution, ConicSolver, ConicStatus, Cone};
pub use crate::model::{
    BlocklengthMode, ChannelSet, ConfigError, Solution, Strategy, SystemConfig,
};
pub use crate::strategy::{RunMode, StrategyRun};
