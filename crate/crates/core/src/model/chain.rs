//! Sampling chains from a trained model.

use std::thread;

use crate::error::{Error, Result};
use crate::model::{Architecture, DymonModel};
use crate::numcore::{Matrix, Rng};
use crate::systems::Trajectory;

/// A generated chain: the initial history followed by the generated states.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub trajectory: Trajectory,
    /// Set when generation stopped early on a non-finite state.
    pub truncated: bool,
}

impl Chain {
    /// Generated states only, without the initial history.
    pub fn generated(&self, order: usize) -> Matrix {
        let n = self.trajectory.len();
        let idx: Vec<usize> = (order.min(n)..n).collect();
        self.trajectory.states.select_rows(&idx)
    }
}

/// Generates `steps` states after `init` (`order` × `state_dim`, oldest
/// first). A non-finite state ends the chain early with `truncated` set.
pub fn generate_chain(model: &DymonModel, init: &Matrix, steps: usize, rng: &mut Rng) -> Result<Chain> {
    let mut rngs = [std::mem::replace(rng, Rng::new(0))];
    let out = run_lockstep(model, std::slice::from_ref(init), steps, &mut rngs);
    let [r] = rngs;
    *rng = r;
    Ok(out?.pop().expect("one chain"))
}

/// Generates one chain per initial history. Chain `i` draws its noise from
/// `Rng::new(seed).fork(i)`, so results do not depend on `threads`.
pub fn generate_chains(
    model: &DymonModel,
    inits: &[Matrix],
    steps: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<Chain>> {
    let mut root = Rng::new(seed);
    let mut rngs: Vec<Rng> = (0..inits.len() as u64).map(|i| root.fork(i)).collect();
    let threads = threads.clamp(1, inits.len().max(1));
    if threads == 1 {
        return run_lockstep(model, inits, steps, &mut rngs);
    }
    let chunk = inits.len().div_ceil(threads);
    thread::scope(|s| {
        let handles: Vec<_> = inits
            .chunks(chunk)
            .zip(rngs.chunks_mut(chunk))
            .map(|(ini, rs)| s.spawn(move || run_lockstep(model, ini, steps, rs)))
            .collect();
        let mut all = Vec::with_capacity(inits.len());
        for h in handles {
            let part = h
                .join()
                .map_err(|_| Error::Internal("chain worker panicked".into()))??;
            all.extend(part);
        }
        Ok(all)
    })
}

fn run_lockstep(model: &DymonModel, inits: &[Matrix], steps: usize, rngs: &mut [Rng]) -> Result<Vec<Chain>> {
    model.validate()?;
    let (k, d) = (model.order, model.state_dim);
    let n = inits.len();
    let mut histories = Matrix::zeros(n, k * d);
    let mut records = Vec::with_capacity(n);
    for (i, init) in inits.iter().enumerate() {
        if init.shape() != (k, d) {
            return Err(Error::dim("initial history", format!("({k}, {d})"), format!("{:?}", init.shape())));
        }
        if !init.is_finite() {
            return Err(Error::Numeric(format!("initial history {i} is not finite")));
        }
        histories.row_mut(i).copy_from_slice(&model.standardizer.standardize(init.data()));
        let mut rec = Matrix::zeros(0, 0);
        for row in init.iter_rows() {
            rec.push_row(row)?;
        }
        records.push(rec);
    }
    let mut truncated = vec![false; n];
    let mut active: Vec<usize> = (0..n).collect();

    for _ in 0..steps {
        if active.is_empty() {
            break;
        }
        let hist = histories.select_rows(&active);
        let mut eps = Matrix::zeros(active.len(), model.noise_dim);
        for (r, &i) in active.iter().enumerate() {
            for v in eps.row_mut(r) {
                *v = rngs[i].normal();
            }
        }
        let mut next = model.step_standardized(&hist, &eps)?;
        if model.architecture == Architecture::LatentDenoised {
            next = model.denoise_standardized(&next)?;
        }
        let mut still = Vec::with_capacity(active.len());
        for (r, &i) in active.iter().enumerate() {
            let s = next.row(r);
            let x = model.standardizer.destandardize(s);
            if x.iter().any(|v| !v.is_finite()) {
                truncated[i] = true;
                continue;
            }
            records[i].push_row(&x)?;
            let h = histories.row_mut(i);
            h.copy_within(d.., 0);
            h[(k - 1) * d..].copy_from_slice(s);
            still.push(i);
        }
        active = still;
    }

    records
        .into_iter()
        .zip(truncated)
        .map(|(states, truncated)| {
            Ok(Chain {
                trajectory: Trajectory::new(states, 0.0)?,
                truncated,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, Standardizer};

    fn model(arch: Architecture, noise: usize) -> DymonModel {
        let spec = if arch == Architecture::Ambient {
            ModelSpec::ambient(2, noise, vec![8])
        } else {
            ModelSpec::latent(arch, 2, noise, vec![8], 2, vec![6])
        };
        let st = Standardizer::new(vec![0.1, -0.2, 0.3], vec![1.5, 0.5, 2.0]).unwrap();
        DymonModel::new(&spec, 3, st, 11).unwrap()
    }

    fn init() -> Matrix {
        Matrix::from_rows(&[[0.0, 0.1, 0.2], [0.1, 0.2, 0.3]]).unwrap()
    }

    #[test]
    fn chain_layout_and_length() {
        let m = model(Architecture::Ambient, 2);
        let c = generate_chain(&m, &init(), 25, &mut Rng::new(3)).unwrap();
        assert!(!c.truncated);
        assert_eq!(c.trajectory.len(), 27);
        assert_eq!(c.trajectory.states.row(0), init().row(0));
        assert_eq!(c.generated(2).rows(), 25);
    }

    #[test]
    fn step_matches_forward() {
        let m = model(Architecture::Latent, 0);
        let c = generate_chain(&m, &init(), 1, &mut Rng::new(0)).unwrap();
        let direct = m.forward(&init(), &[]).unwrap();
        for (a, b) in c.trajectory.states.row(2).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_matches_single_and_threads() {
        for arch in [Architecture::Ambient, Architecture::Latent, Architecture::LatentDenoised] {
            let m = model(arch, 2);
            let inits: Vec<Matrix> = (0..5)
                .map(|i| {
                    let mut x = init();
                    x.scale(1.0 + i as f64 * 0.1);
                    x
                })
                .collect();
            let one = generate_chains(&m, &inits, 12, 9, 1).unwrap();
            let three = generate_chains(&m, &inits, 12, 9, 3).unwrap();
            assert_eq!(one, three);
            let mut root = Rng::new(9);
            for (i, c) in one.iter().enumerate() {
                let mut r = root.fork(i as u64);
                let single = generate_chain(&m, &inits[i], 12, &mut r).unwrap();
                assert_eq!(&single, c);
            }
        }
    }

    #[test]
    fn non_finite_truncates() {
        let mut m = model(Architecture::Ambient, 0);
        let last = m.transition.layers.len() - 1;
        m.transition.layers[last].bias[0] = f64::MAX;
        let c = generate_chain(&m, &init(), 10, &mut Rng::new(1)).unwrap();
        assert!(c.truncated);
        assert!(c.trajectory.len() < 12);
        assert!(c.trajectory.states.is_finite());
    }

    #[test]
    fn bad_init_rejected() {
        let m = model(Architecture::Ambient, 0);
        assert!(generate_chain(&m, &Matrix::zeros(1, 3), 3, &mut Rng::new(1)).is_err());
    }
}
