//! One-dimensional Gaussian-emission hidden Markov model fitted by
//! Baum-Welch with a rescaled forward-backward pass.

use log::warn;

use crate::error::{Error, Result};
use crate::numcore::Rng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Variance floor relative to the data variance.
const VAR_FLOOR: f64 = 1e-8;
/// Responsibility mass below which a state counts as degenerate.
const DEGENERATE_MASS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHmm {
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix, `transition[i][j] = P(j | i)`.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HmmFit {
    pub model: GaussianHmm,
    /// Log-likelihood of the data under the parameters entering each
    /// iteration.
    pub log_likelihood: Vec<f64>,
    /// Number of degenerate-state re-seeds performed.
    pub reseeds: usize,
}

impl GaussianHmm {
    pub fn n_states(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_states();
        if k == 0 || self.initial.len() != k || self.stds.len() != k || self.transition.len() != k {
            return Err(Error::Config("inconsistent HMM dimensions".into()));
        }
        let is_prob = |v: &[f64]| {
            v.len() == k && v.iter().all(|p| *p >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        if !is_prob(&self.initial) || !self.transition.iter().all(|r| is_prob(r)) {
            return Err(Error::Config("HMM rows must be probability vectors".into()));
        }
        if self.stds.iter().any(|s| !(*s > 0.0)) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("HMM emission stds must be positive".into()));
        }
        Ok(())
    }

    fn log_emission(&self, x: f64, j: usize) -> f64 {
        let z = (x - self.means[j]) / self.stds[j];
        -0.5 * z * z - self.stds[j].ln() - LN_SQRT_2PI
    }
}

struct Posterior {
    log_likelihood: f64,
    /// `gamma[t*k + j]`
    gamma: Vec<f64>,
    /// Expected transition counts summed over time.
    xi: Vec<Vec<f64>>,
}

fn forward_backward(model: &GaussianHmm, data: &[f64]) -> Posterior {
    let (n, k) = (data.len(), model.n_states());
    // emissions rescaled per time step by their maximum
    let mut b = vec![0.0; n * k];
    let mut shift = vec![0.0; n];
    for (t, &x) in data.iter().enumerate() {
        let row = &mut b[t * k..(t + 1) * k];
        for (j, v) in row.iter_mut().enumerate() {
            *v = model.log_emission(x, j);
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in row.iter_mut() {
            *v = (*v - m).exp();
        }
        shift[t] = m;
    }

    let mut alpha = vec![0.0; n * k];
    let mut scale = vec![0.0; n];
    let mut log_likelihood = 0.0;
    for t in 0..n {
        let mut c = 0.0;
        for j in 0..k {
            let prior = if t == 0 {
                model.initial[j]
            } else {
                (0..k).map(|i| alpha[(t - 1) * k + i] * model.transition[i][j]).sum()
            };
            let v = prior * b[t * k + j];
            alpha[t * k + j] = v;
            c += v;
        }
        for j in 0..k {
            alpha[t * k + j] /= c;
        }
        scale[t] = c;
        log_likelihood += c.ln() + shift[t];
    }

    let mut beta = vec![1.0; n * k];
    for t in (0..n.saturating_sub(1)).rev() {
        for i in 0..k {
            let s: f64 = (0..k)
                .map(|j| model.transition[i][j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j])
                .sum();
            beta[t * k + i] = s / scale[t + 1];
        }
    }

    let mut gamma = vec![0.0; n * k];
    for t in 0..n {
        let mut s = 0.0;
        for j in 0..k {
            let v = alpha[t * k + j] * beta[t * k + j];
            gamma[t * k + j] = v;
            s += v;
        }
        for j in 0..k {
            gamma[t * k + j] /= s;
        }
    }
    let mut xi = vec![vec![0.0; k]; k];
    for t in 0..n.saturating_sub(1) {
        for i in 0..k {
            let a = alpha[t * k + i] / scale[t + 1];
            for j in 0..k {
                xi[i][j] += a * model.transition[i][j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j];
            }
        }
    }
    Posterior {
        log_likelihood,
        gamma,
        xi,
    }
}

/// Log-likelihood of `data` under `model`.
pub fn hmm_log_likelihood(model: &GaussianHmm, data: &[f64]) -> Result<f64> {
    model.validate()?;
    if data.is_empty() {
        return Err(Error::Config("empty chain".into()));
    }
    Ok(forward_backward(model, data).log_likelihood)
}

fn mean_var(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    (mean, data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

/// Fits an `n_states` Gaussian HMM by Baum-Welch. Emission means start at
/// evenly spaced data quantiles; iteration stops early once the
/// log-likelihood gain drops below `1e-10` relative.
pub fn hmm_fit(data: &[f64], n_states: usize, n_iters: usize, seed: u64) -> Result<HmmFit> {
    if n_states == 0 {
        return Err(Error::Config("n_states must be at least 1".into()));
    }
    if data.len() < 10 * n_states {
        return Err(Error::Config(format!(
            "HMM fit needs at least {} observations, got {}",
            10 * n_states,
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("HMM data contains non-finite values".into()));
    }
    let k = n_states;
    let (_, var) = mean_var(data);
    let var_floor = VAR_FLOOR * var.max(1e-12);
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let means = (0..k)
        .map(|j| sorted[((j as f64 + 0.5) / k as f64 * sorted.len() as f64) as usize])
        .collect();
    let stay = if k == 1 { 1.0 } else { 0.5 };
    let transition = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { stay } else { (1.0 - stay) / (k - 1) as f64 })
                .collect()
        })
        .collect();
    let mut model = GaussianHmm {
        initial: vec![1.0 / k as f64; k],
        transition,
        means,
        stds: vec![var.sqrt().max(var_floor.sqrt()); k],
    };

    let mut rng = Rng::new(seed);
    let mut log_likelihood = Vec::with_capacity(n_iters);
    let mut reseeds = 0;
    for _ in 0..n_iters {
        let post = forward_backward(&model, data);
        if !post.log_likelihood.is_finite() {
            return Err(Error::Numeric("HMM log-likelihood is not finite".into()));
        }
        let prev = log_likelihood.last().copied();
        log_likelihood.push(post.log_likelihood);

        let n = data.len();
        model.initial = post.gamma[..k].to_vec();
        for i in 0..k {
            let row_sum: f64 = post.xi[i].iter().sum();
            if row_sum > 0.0 {
                model.transition[i] = post.xi[i].iter().map(|v| v / row_sum).collect();
            }
        }
        for j in 0..k {
            let mass: f64 = (0..n).map(|t| post.gamma[t * k + j]).sum();
            if mass < DEGENERATE_MASS {
                model.means[j] = data[rng.below(n)];
                model.stds[j] = var.sqrt().max(var_floor.sqrt());
                reseeds += 1;
                warn!("HMM state {j} lost all responsibility; re-seeded");
                continue;
            }
            let mean = (0..n).map(|t| post.gamma[t * k + j] * data[t]).sum::<f64>() / mass;
            let v = (0..n)
                .map(|t| post.gamma[t * k + j] * (data[t] - mean).powi(2))
                .sum::<f64>()
                / mass;
            model.means[j] = mean;
            model.stds[j] = v.max(var_floor).sqrt();
        }
        if let Some(p) = prev {
            if (post.log_likelihood - p).abs() <= 1e-10 * (1.0 + p.abs()) && reseeds == 0 {
                break;
            }
        }
    }
    Ok(HmmFit {
        model,
        log_likelihood,
        reseeds,
    })
}

/// Ancestral sampling of `n` observations.
pub fn hmm_sample(model: &GaussianHmm, n: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    let mut rng = Rng::new(seed);
    let mut state = rng.categorical(&model.initial);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        if t > 0 {
            state = rng.categorical(&model.transition[state]);
        }
        out.push(model.means[state] + model.stds[state] * rng.normal());
    }
    Ok(out)
}
