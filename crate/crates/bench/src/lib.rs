//! Conic backend, file formats and Monte-Carlo harness for `rsma-core`.

pub mod experiment;
pub mod io;
pub mod solver;

pub use solver::ClarabelSolver;
