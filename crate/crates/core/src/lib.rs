//! Optimal no-transfer allocation of a common-value good among agents with
//! correlated private beliefs.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod first_best;
pub mod likelihood;
pub mod mechanisms;
pub mod optimizer;
pub mod quadrature;
pub mod rng;
pub mod social_sim;
pub mod verification;

pub use distributions::{BeliefDistribution, DistributionSpec, State};
pub use error::{Error, Result};
