//! Ground-truth data generators.

mod gmm;
mod pendulum;
mod rk4;
mod rotating;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub use gmm::{gmm_pdf, sample_gmm_metropolis, GmmComponent, GmmSpec};
pub use pendulum::{
    double_pendulum_energy, pendulum_energy, simulate_double_pendulum, simulate_pendulum,
    DoublePendulum, Pendulum,
};
pub use rk4::rk4_step;
pub use rotating::{generate_rotating_sequence, rotating_frame};

/// Time-ordered states, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Matrix,
    /// Seconds between rows; 0 for index-time data.
    pub dt: f64,
    pub meta: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn new(states: Matrix, dt: f64) -> Result<Self> {
        if states.rows() == 0 {
            return Err(Error::Config("a trajectory needs at least one state".into()));
        }
        if !states.is_finite() {
            return Err(Error::Numeric("trajectory contains non-finite states".into()));
        }
        Ok(Self {
            states,
            dt,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }
}
