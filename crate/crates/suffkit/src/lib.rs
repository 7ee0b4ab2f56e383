//! Decides information-ordering and sufficiency relations between
//! classical statistical models, quantum statistical models, and bipartite
//! quantum information structures, with machine-checkable certificates on
//! both the feasible and infeasible branches.

pub mod channels;
pub mod classical;
pub mod error;
pub mod frames;
pub mod gen;
pub mod linalg;
pub mod quantum;
pub mod solver;
pub mod structures;

pub use error::{Result, SuffError};
