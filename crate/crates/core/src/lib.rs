//! Müntz-Szász networks: neural networks whose edges are learnable
//! fractional-power expansions, with the approximation-theory oracles,
//! MLP baselines and regression/PINN benchmarks used to evaluate them.

pub mod bench;
pub mod diffengine;
pub mod error;
pub mod network;
pub mod powbasis;
pub mod problems;
pub mod theory;
pub mod training;

pub use error::{MsnError, Result};
