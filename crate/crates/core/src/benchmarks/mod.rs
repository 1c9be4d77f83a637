//! Evaluation metrics and classical baselines.

mod cycle;
mod hmm;
mod kalman;
mod metrics;

pub use cycle::{latent_cycle_report, CycleReport};
pub use hmm::{hmm_fit, hmm_log_likelihood, hmm_sample, GaussianHmm, HmmFit};
pub use kalman::{kalman_fit_em, kalman_sample, KalmanFit, KalmanModel};
pub use metrics::{emd_1d, mse};
