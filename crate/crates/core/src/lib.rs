//! Exact and numerical transient analysis of the alternating-service
//! recursion `W[n+1] = max(0, B[n+1] - A[n] - W[n])`, with a Lindley
//! reference engine and a seeded Monte Carlo simulator used as oracle.

pub mod distributions;
pub mod error;
pub mod exp_exact;
pub mod gf_fixedpoint;
pub mod initial;
pub mod lindley_ref;
pub mod numeric;
pub mod output;
pub mod phase_markov;
pub mod sim;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use initial::InitialCondition;
