//! Volatility modeling toolkit.
//!
//! GARCH(p,q) and EGARCH models fitted by Gaussian maximum likelihood, a
//! single-hidden-layer perceptron trained by backpropagation on squared
//! returns, a rolling one-step-ahead forecasting harness, and the accuracy
//! metrics used to compare the two model families.

pub mod ann;
pub mod diagnostics;
pub mod error;
pub mod forecaster;
pub mod garch;
pub mod metrics;
pub mod model_search;
pub mod optim;
pub mod simulator;
pub mod timeseries;

pub use error::{ErrorKind, Result, VolError};
