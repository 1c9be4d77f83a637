//! Single and double pendulum, integrated in angle space and emitted as
//! Cartesian bob positions.

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::systems::{rk4_step, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct Pendulum {
    pub theta0: f64,
    pub omega0: f64,
    pub g: f64,
    pub length: f64,
    pub dt: f64,
    /// Number of emitted states, the initial one included.
    pub steps: usize,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            theta0: 1.0,
            omega0: 0.0,
            g: 9.81,
            length: 1.0,
            dt: 0.01,
            steps: 1000,
        }
    }
}

/// Mechanical energy per unit mass, `½L²ω² − gL cos θ`.
pub fn pendulum_energy(p: &Pendulum, theta: f64, omega: f64) -> f64 {
    0.5 * p.length * p.length * omega * omega - p.g * p.length * theta.cos()
}

fn validate(dt: f64, lengths: &[f64], steps: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Config(format!("lengths must be positive, got {lengths:?}")));
    }
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    Ok(())
}

/// Integrates `θ'' = −(g/L) sin θ` and returns rows `(L sin θ, −L cos θ)`.
pub fn simulate_pendulum(p: &Pendulum) -> Result<Trajectory> {
    validate(p.dt, &[p.length], p.steps)?;
    let k = p.g / p.length;
    let deriv = |s: &[f64]| vec![s[1], -k * s[0].sin()];
    let mut state = vec![p.theta0, p.omega0];
    let mut out = Matrix::zeros(p.steps, 2);
    for t in 0..p.steps {
        if t > 0 {
            state = rk4_step(deriv, &state, p.dt)?;
        }
        out.set(t, 0, p.length * state[0].sin());
        out.set(t, 1, -p.length * state[0].cos());
    }
    Ok(Trajectory::new(out, p.dt)?
        .with_meta("system", "pendulum")
        .with_meta("length", p.length))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoublePendulum {
    pub angles0: [f64; 2],
    pub omegas0: [f64; 2],
    pub masses: [f64; 2],
    pub lengths: [f64; 2],
    pub g: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Default for DoublePendulum {
    fn default() -> Self {
        Self {
            angles0: [2.0, 2.5],
            omegas0: [0.0, 0.0],
            masses: [1.0, 1.0],
            lengths: [1.0, 1.0],
            g: 9.81,
            dt: 0.005,
            steps: 1000,
        }
    }
}

impl DoublePendulum {
    /// Lagrangian equations of motion for state `[θ1, ω1, θ2, ω2]`.
    pub fn derivative(&self, s: &[f64]) -> Vec<f64> {
        let (t1, w1, t2, w2) = (s[0], s[1], s[2], s[3]);
        let [m1, m2] = self.masses;
        let [l1, l2] = self.lengths;
        let g = self.g;
        let delta = t1 - t2;
        let den = 2.0 * m1 + m2 - m2 * (2.0 * delta).cos();
        let a1 = (-g * (2.0 * m1 + m2) * t1.sin()
            - m2 * g * (t1 - 2.0 * t2).sin()
            - 2.0 * delta.sin() * m2 * (w2 * w2 * l2 + w1 * w1 * l1 * delta.cos()))
            / (l1 * den);
        let a2 = (2.0
            * delta.sin()
            * (w1 * w1 * l1 * (m1 + m2) + g * (m1 + m2) * t1.cos() + w2 * w2 * l2 * m2 * delta.cos()))
            / (l2 * den);
        vec![w1, a1, w2, a2]
    }

    /// Cartesian positions `(x1, y1, x2, y2)` of both bobs.
    pub fn positions(&self, s: &[f64]) -> [f64; 4] {
        let [l1, l2] = self.lengths;
        let x1 = l1 * s[0].sin();
        let y1 = -l1 * s[0].cos();
        [x1, y1, x1 + l2 * s[2].sin(), y1 - l2 * s[2].cos()]
    }

    /// Integrates in angle space, returning the raw `[θ1, ω1, θ2, ω2]` states.
    pub fn integrate(&self) -> Result<Vec<Vec<f64>>> {
        validate(self.dt, &self.lengths, self.steps)?;
        if self.masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Config(format!("masses must be positive, got {:?}", self.masses)));
        }
        let mut state = vec![self.angles0[0], self.omegas0[0], self.angles0[1], self.omegas0[1]];
        let mut out = Vec::with_capacity(self.steps);
        out.push(state.clone());
        for _ in 1..self.steps {
            state = rk4_step(|s| self.derivative(s), &state, self.dt)?;
            out.push(state.clone());
        }
        Ok(out)
    }
}

/// Total mechanical energy of a double-pendulum state `[θ1, ω1, θ2, ω2]`.
pub fn double_pendulum_energy(p: &DoublePendulum, s: &[f64]) -> f64 {
    let (t1, w1, t2, w2) = (s[0], s[1], s[2], s[3]);
    let [m1, m2] = p.masses;
    let [l1, l2] = p.lengths;
    let kinetic = 0.5 * m1 * l1 * l1 * w1 * w1
        + 0.5 * m2 * (l1 * l1 * w1 * w1 + l2 * l2 * w2 * w2 + 2.0 * l1 * l2 * w1 * w2 * (t1 - t2).cos());
    let potential = -(m1 + m2) * p.g * l1 * t1.cos() - m2 * p.g * l2 * t2.cos();
    kinetic + potential
}

/// Integrates the double pendulum and returns rows `(x1, y1, x2, y2)`.
pub fn simulate_double_pendulum(p: &DoublePendulum) -> Result<Trajectory> {
    let raw = p.integrate()?;
    let mut out = Matrix::zeros(raw.len(), 4);
    for (t, s) in raw.iter().enumerate() {
        out.row_mut(t).copy_from_slice(&p.positions(s));
    }
    Ok(Trajectory::new(out, p.dt)?
        .with_meta("system", "double_pendulum")
        .with_meta("length1", p.lengths[0])
        .with_meta("length2", p.lengths[1]))
}
