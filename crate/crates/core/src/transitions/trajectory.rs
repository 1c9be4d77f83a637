use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};
use crate::systems::Trajectory;
use crate::transitions::TransitionDataset;

/// Temporal offset between a source and its target, optionally jittered
/// uniformly over `mean ± jitter` per pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepSize {
    pub mean: usize,
    pub jitter: usize,
}

impl StepSize {
    pub fn fixed(step: usize) -> Self {
        Self { mean: step, jitter: 0 }
    }

    pub fn jittered(mean: usize, jitter: usize) -> Self {
        Self { mean, jitter }
    }
}

/// Pairs each history `(x_{t-(n-1)s}, …, x_t)` with the target `x_{t+s}`.
///
/// History spacing always uses the mean step; with jitter, the target offset
/// is drawn per pair and pairs whose target falls past the end are skipped.
pub fn transitions_from_trajectory(
    traj: &Trajectory,
    step: StepSize,
    order: usize,
    seed: u64,
) -> Result<TransitionDataset> {
    if order == 0 {
        return Err(Error::Config("order must be at least 1".into()));
    }
    if step.mean == 0 || step.jitter >= step.mean {
        return Err(Error::Config(format!(
            "step size must satisfy mean >= 1 and jitter < mean (got {} ± {})",
            step.mean, step.jitter
        )));
    }
    let t_len = traj.len();
    let min_len = order * step.mean + 1;
    if t_len < min_len {
        return Err(Error::Config(format!(
            "trajectory of length {t_len} is too short: order {order} with step {} needs at least {min_len} states",
            step.mean
        )));
    }
    let d = traj.dim();
    let mut rng = Rng::new(seed);
    let mut ds = TransitionDataset::new(order, d, format!("trajectory step={}±{} order={order}", step.mean, step.jitter))?;
    let first = (order - 1) * step.mean;
    for t in first..t_len {
        let s = if step.jitter == 0 {
            step.mean
        } else {
            rng.int_inclusive((step.mean - step.jitter) as i64, (step.mean + step.jitter) as i64)
                as usize
        };
        if t + s >= t_len {
            continue;
        }
        let idx: Vec<usize> = (0..order).map(|j| t - (order - 1 - j) * step.mean).collect();
        let history = traj.states.select_rows(&idx);
        let target = Matrix::row_vector(traj.states.row(t + s));
        ds.push(history, target)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Trajectory {
        Trajectory::new(
            Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn enumerates_pairs() {
        let ds = transitions_from_trajectory(&line(5), StepSize::fixed(1), 1, 0).unwrap();
        let pairs: Vec<(f64, f64)> = ds
            .groups
            .iter()
            .map(|g| (g.source()[0], g.targets.get(0, 0)))
            .collect();
        assert_eq!(pairs, vec![(0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0)]);
    }

    #[test]
    fn pair_count_is_length_minus_step() {
        let ds = transitions_from_trajectory(&line(400), StepSize::fixed(10), 1, 0).unwrap();
        assert_eq!(ds.len(), 390);
    }

    #[test]
    fn constant_trajectory_self_transitions() {
        let tr = Trajectory::new(Matrix::from_vec(20, 2, vec![1.5; 40]).unwrap(), 0.1).unwrap();
        let ds = transitions_from_trajectory(&tr, StepSize::fixed(3), 2, 0).unwrap();
        for g in &ds.groups {
            assert_eq!(g.source(), g.targets.row(0));
        }
    }

    #[test]
    fn higher_order_histories_are_oldest_first() {
        let ds = transitions_from_trajectory(&line(10), StepSize::fixed(2), 3, 0).unwrap();
        let g = &ds.groups[0];
        assert_eq!(g.history_flat(), &[0.0, 2.0, 4.0]);
        assert_eq!(g.targets.get(0, 0), 6.0);
        assert_eq!(ds.len(), 10 - 6);
    }

    #[test]
    fn jitter_stays_in_range() {
        let ds = transitions_from_trajectory(&line(300), StepSize::jittered(20, 5), 1, 9).unwrap();
        assert!(!ds.is_empty());
        let mut seen = std::collections::BTreeSet::new();
        for g in &ds.groups {
            let s = (g.targets.get(0, 0) - g.source()[0]) as i64;
            assert!((15..=25).contains(&s));
            seen.insert(s);
        }
        assert!(seen.len() > 5);
    }

    #[test]
    fn too_short_is_an_error() {
        let err = transitions_from_trajectory(&line(10), StepSize::fixed(5), 2, 0).unwrap_err();
        assert!(err.to_string().contains("at least 11"), "{err}");
        assert!(transitions_from_trajectory(&line(10), StepSize::fixed(0), 1, 0).is_err());
    }
}
