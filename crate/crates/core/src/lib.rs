//! Dynamics modeling networks: residual generative Markov models trained
//! with a multi-scale kernel MMD loss on observed state transitions.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: matrices, seeded randomness, a small MLP with exact
//!   gradients, and Adam.
//! - [`mmd`]: the multi-scale Gaussian-kernel MMD loss and its gradient.
//! - [`systems`]: pendulum, double pendulum, Gaussian-mixture MCMC and a
//!   rotating-image sequence used as ground truth.
//! - [`transitions`]: building source/target transition sets from
//!   trajectories or from time-labelled point clouds.
//! - [`model`]: the model itself, training, chain generation, Jacobians and
//!   checkpoints.
//! - [`benchmarks`]: EMD / MSE metrics and HMM / Kalman baselines.

pub mod error;
pub mod mmd;
pub mod numcore;
pub mod systems;

pub use error::{Error, Result};
pub mod knn;
pub mod transitions;
pub mod model;
pub mod benchmarks;
