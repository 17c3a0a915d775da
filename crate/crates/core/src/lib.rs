//! Goal-reaching control for a unicycle robot: a tabular benchmark policy
//! trained with Q-learning or SARSA, a Lyapunov-like stabilizer that refines
//! it while preserving goal reaching, and a matched-goal evaluation harness.

pub mod artifact;
pub mod config;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod kinematics;
pub mod learner;
pub mod reward;
pub mod stabilizer;
pub mod statespace;

pub use error::{Error, Result};
