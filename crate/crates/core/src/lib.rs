//! State estimation for linear discrete-time systems with Gaussian process
//! noise and Laplace measurement noise.
//!
//! Estimators:
//! - [`ensemble`]: average of Kalman filters, each conditioned on a sampled
//!   sequence of Rayleigh noise scales (approximates the conditional mean);
//! - [`kalman`]: the optimal linear estimator;
//! - [`map`]: batch maximum a posteriori (quadratic + ℓ1 program) and the
//!   closed-form window-of-one MAP filter for scalar measurements;
//! - [`particle`]: bootstrap particle filter with a Laplace likelihood.
//!
//! [`bench`] runs all of them on common Monte Carlo trajectories.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod ensemble;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod map;
pub mod model;
pub mod noise;
pub mod particle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{load_model, simulate, InitialState, LtvModel, Schedule, Trajectory};
