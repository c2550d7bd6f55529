//! Smoothing for sets of trajectories by backward simulation over
//! multi-Bernoulli filtering densities.
//!
//! The crate is organized bottom-up: trajectory and density types, Gaussian
//! algebra, assignment solvers, a forward multi-Bernoulli filter, the backward
//! simulation smoother, scenario generation, metrics, an exhaustive discrete
//! oracle of the smoothing identities, and an experiment runner.

pub mod assignment;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod gaussian;
pub mod logmath;
pub mod metrics;
pub mod multitarget;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod smoother;
pub mod trajectory;

pub use error::{Error, Result};
