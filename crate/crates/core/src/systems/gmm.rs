//! 1-D Gaussian mixtures and a random-walk Metropolis-Hastings sampler.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};
use crate::systems::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmSpec {
    components: Vec<GmmComponent>,
}

impl GmmSpec {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if components.iter().any(|c| !(c.weight > 0.0) || !(c.std > 0.0) || !c.mean.is_finite()) {
            return Err(Error::Config(
                "mixture weights and stds must be positive, means finite".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    /// Three unit-variance modes at −4, 0, 4 weighted 0.3 / 0.4 / 0.3.
    pub fn three_mode() -> Self {
        Self::new(vec![
            GmmComponent { weight: 0.3, mean: -4.0, std: 1.0 },
            GmmComponent { weight: 0.4, mean: 0.0, std: 1.0 },
            GmmComponent { weight: 0.3, mean: 4.0, std: 1.0 },
        ])
        .expect("static spec is valid")
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mean).collect()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let z = (x - c.mean) / c.std;
                c.weight.ln() - 0.5 * z * z - c.std.ln() - 0.5 * (2.0 * PI).ln()
            })
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    /// Index of the component with the nearest mean.
    pub fn nearest_component(&self, x: f64) -> usize {
        let mut best = 0;
        for (i, c) in self.components.iter().enumerate() {
            if (x - c.mean).abs() < (x - self.components[best].mean).abs() {
                best = i;
            }
        }
        best
    }
}

pub fn gmm_pdf(spec: &GmmSpec, x: f64) -> f64 {
    spec.components
        .iter()
        .map(|c| {
            let z = (x - c.mean) / c.std;
            c.weight * (-0.5 * z * z).exp() / (c.std * (2.0 * PI).sqrt())
        })
        .sum()
}

/// Random-walk Metropolis-Hastings chain targeting the mixture. The chain
/// starts at the heaviest component's mean; the first `burn_in` states are
/// discarded and `n` consecutive states are returned in chain order.
pub fn sample_gmm_metropolis(
    spec: &GmmSpec,
    n: usize,
    proposal_std: f64,
    burn_in: usize,
    seed: u64,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if !(proposal_std > 0.0 && proposal_std.is_finite()) {
        return Err(Error::Config(format!(
            "proposal_std must be positive, got {proposal_std}"
        )));
    }
    let mut rng = Rng::new(seed);
    let start = spec
        .components
        .iter()
        .fold(spec.components[0], |best, c| if c.weight > best.weight { *c } else { best });
    let mut x = start.mean;
    let mut lp = spec.ln_pdf(x);
    let mut out = Vec::with_capacity(n);
    let mut accepted = 0usize;
    for i in 0..(burn_in + n) {
        let cand = x + proposal_std * rng.normal();
        let lc = spec.ln_pdf(cand);
        if rng.uniform().ln() < lc - lp {
            x = cand;
            lp = lc;
            if i >= burn_in {
                accepted += 1;
            }
        }
        if i >= burn_in {
            out.push(x);
        }
    }
    let rate = accepted as f64 / n as f64;
    Ok(Trajectory::new(Matrix::from_vec(n, 1, out)?, 0.0)?
        .with_meta("system", "gmm_mcmc")
        .with_meta("acceptance_rate", format!("{rate:.4}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> GmmSpec {
        GmmSpec::new(vec![GmmComponent { weight: 1.0, mean: 0.0, std: 1.0 }]).unwrap()
    }

    #[test]
    fn pdf_values() {
        assert!((gmm_pdf(&single(), 0.0) - 0.398_942_280_4).abs() < 1e-9);
        let sym = GmmSpec::new(vec![
            GmmComponent { weight: 0.5, mean: -2.0, std: 0.7 },
            GmmComponent { weight: 0.5, mean: 2.0, std: 0.7 },
        ])
        .unwrap();
        for x in [0.1, 1.3, 2.0, 5.5] {
            assert!((gmm_pdf(&sym, x) - gmm_pdf(&sym, -x)).abs() < 1e-15);
            assert!((gmm_pdf(&sym, x).ln() - sym.ln_pdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        // composite Simpson on [−50, 50]
        let spec = GmmSpec::three_mode();
        let n = 20_000;
        let (a, b) = (-50.0, 50.0);
        let h = (b - a) / n as f64;
        let mut acc = gmm_pdf(&spec, a) + gmm_pdf(&spec, b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * gmm_pdf(&spec, a + h * i as f64);
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn spec_validation() {
        assert!(GmmSpec::new(vec![]).is_err());
        assert!(GmmSpec::new(vec![GmmComponent { weight: 0.5, mean: 0.0, std: 1.0 }]).is_err());
        assert!(GmmSpec::new(vec![GmmComponent { weight: 1.0, mean: 0.0, std: 0.0 }]).is_err());
    }

    #[test]
    fn single_gaussian_moments() {
        let tr = sample_gmm_metropolis(&single(), 50_000, 1.0, 1000, 7).unwrap();
        let x = tr.states.data();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
    }

    #[test]
    fn zero_proposal_rejected() {
        assert!(sample_gmm_metropolis(&single(), 10, 0.0, 0, 1).is_err());
        assert!(sample_gmm_metropolis(&single(), 0, 1.0, 0, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = GmmSpec::three_mode();
        let a = sample_gmm_metropolis(&spec, 500, 2.0, 10, 3).unwrap();
        let b = sample_gmm_metropolis(&spec, 500, 2.0, 10, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn three_mode_occupancy() {
        let spec = GmmSpec::three_mode();
        let tr = sample_gmm_metropolis(&spec, 50_000, 2.5, 1000, 11).unwrap();
        let mut counts = [0usize; 3];
        for &x in tr.states.data() {
            counts[spec.nearest_component(x)] += 1;
        }
        for (c, comp) in counts.iter().zip(spec.components()) {
            let occ = *c as f64 / 50_000.0;
            assert!((occ - comp.weight).abs() < 0.03, "occupancy {occ} vs {}", comp.weight);
        }
    }

    #[test]
    fn detailed_balance_on_binned_chain() {
        let spec = GmmSpec::three_mode();
        let tr = sample_gmm_metropolis(&spec, 200_000, 2.5, 1000, 5).unwrap();
        let edges = [-6.0, -2.0, 2.0, 6.0];
        let bin = |x: f64| edges.iter().take_while(|&&e| x >= e).count();
        let mut counts = [[0f64; 5]; 5];
        let xs = tr.states.data();
        for w in xs.windows(2) {
            counts[bin(w[0])][bin(w[1])] += 1.0;
        }
        // reversibility: π_i P_ij = π_j P_ji, i.e. symmetric flow counts
        for i in 0..5 {
            for j in (i + 1)..5 {
                let (a, b) = (counts[i][j], counts[j][i]);
                let se = (a + b).sqrt().max(1.0);
                assert!((a - b).abs() <= 3.0 * se, "flow {i}->{j}: {a} vs {b}");
            }
        }
    }
}
