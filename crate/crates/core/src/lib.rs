//! Manufacturability assessment of parametric machining designs with
//! spline-based Kolmogorov-Arnold networks.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod interpret;
pub mod kan;
pub mod metrics;
pub mod prep;
pub mod rules;
pub mod schema;
pub mod spline;
pub mod trainer;

pub use error::{Error, Result};
