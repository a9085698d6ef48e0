//! Grouped network Granger causality.
//!
//! Estimates the adjacency matrices of a vector autoregression from panel
//! data with a group lasso penalty whose groups follow a known partition of
//! the variables. Includes the regular, adaptive and bi-level thresholded
//! estimators, order estimation, a group-sparse VAR simulator, tuning by
//! sample splitting, recovery metrics, and numerical diagnostics for the
//! design conditions behind selection and norm consistency.

pub mod error;
pub mod conditions;
pub mod diagnostics;
pub mod experiment;
pub mod grplasso;
pub mod linalg;
pub mod metrics;
pub mod ngc;
pub mod panel;
pub mod scalar;
pub mod selection;
pub mod varsim;

pub use error::{NgcError, Result};
pub use scalar::Real;

/// Double precision instances of the generic solver types.
pub type Design = grplasso::Design<f64>;
pub type GroupLassoProblem = grplasso::GroupLassoProblem<f64>;
pub type GroupLassoSolution = grplasso::GroupLassoSolution<f64>;
