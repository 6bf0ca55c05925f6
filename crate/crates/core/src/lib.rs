//! Robust multi-sensor state estimation with Student's t filters.
//!
//! The crate provides
//!
//! * [`densities`]: Student's t, Gaussian and t-mixture densities,
//! * [`filter`]: the Student's t Kalman filter (StKF) and the Gaussian KF,
//! * [`fusion`]: arithmetic-average, covariance-intersection and
//!   augmented-measurement fusion of local posteriors,
//! * [`network`]: synchronous multi-sensor filtering rounds with optional
//!   consensus iterations,
//! * [`scenario`]: the outlier-contaminated tracking experiment and its RMSE
//!   evaluation,
//! * [`diagnostics`]: KL-divergence curves for judging the weight surrogates.

pub mod densities;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod fusion;
pub mod network;
pub mod scenario;
pub(crate) mod linalg;

pub use densities::{Gaussian, Moments, StudentT, WeightedTMix};
pub use error::{Error, Result};
pub use filter::{MeasurementModel, ProcessModel};
pub use scenario::{run_experiment, Method, RunReport, ScenarioConfig};
