//! Intercept estimation in sample-selection models via a rank transform of
//! the selection index and a locally linear fit at the upper boundary.

pub mod baselines;
pub mod data;
pub mod decompose;
pub mod dgp;
pub mod error;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod nuisance;
pub mod numerics;
pub mod probit;
pub mod snn;
pub mod transform;

pub use data::Dataset;
pub use error::{Error, Result};
