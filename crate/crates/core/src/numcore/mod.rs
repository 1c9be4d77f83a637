//! Dense linear algebra, seeded randomness, a small differentiable MLP and Adam.

mod adam;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{dot, sq_dist, Matrix};
pub use mlp::{leaky_relu, Activation, Dense, MlpCache, Params, LEAKY_SLOPE};
pub use rng::Rng;
