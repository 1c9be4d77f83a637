//! Transition datasets: source histories paired with sets of observed next
//! states, built from trajectories or from time-labelled point clouds.

mod diffusion;
mod trajectory;

use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::numcore::Matrix;

pub use diffusion::{directed_diffusion_transitions, smooth_time_labels, TimePointCloud};
pub use trajectory::{transitions_from_trajectory, StepSize};

/// One source history (oldest state first) and its observed targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionGroup {
    pub history: Matrix,
    pub targets: Matrix,
}

impl TransitionGroup {
    /// Most recent state of the history.
    pub fn source(&self) -> &[f64] {
        self.history.row(self.history.rows() - 1)
    }

    /// History flattened oldest to newest.
    pub fn history_flat(&self) -> &[f64] {
        self.history.data()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionDataset {
    order: usize,
    state_dim: usize,
    pub groups: Vec<TransitionGroup>,
    pub provenance: String,
}

impl TransitionDataset {
    pub fn new(order: usize, state_dim: usize, provenance: impl Into<String>) -> Result<Self> {
        if order == 0 || state_dim == 0 {
            return Err(Error::Config(format!(
                "order and state dimension must be positive (got {order}, {state_dim})"
            )));
        }
        Ok(Self {
            order,
            state_dim,
            groups: Vec::new(),
            provenance: provenance.into(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn push(&mut self, history: Matrix, targets: Matrix) -> Result<()> {
        if history.shape() != (self.order, self.state_dim) {
            return Err(Error::dim(
                "transition history",
                format!("({}, {})", self.order, self.state_dim),
                format!("{:?}", history.shape()),
            ));
        }
        if targets.cols() != self.state_dim || targets.rows() == 0 {
            return Err(Error::dim(
                "transition targets",
                format!("(>=1, {})", self.state_dim),
                format!("{:?}", targets.shape()),
            ));
        }
        self.groups.push(TransitionGroup { history, targets });
        Ok(())
    }

    /// Appends every group of `other`.
    pub fn extend(&mut self, other: TransitionDataset) -> Result<()> {
        if other.order != self.order || other.state_dim != self.state_dim {
            return Err(Error::dim(
                "merging transition datasets",
                format!("order {} dim {}", self.order, self.state_dim),
                format!("order {} dim {}", other.order, other.state_dim),
            ));
        }
        self.groups.extend(other.groups);
        Ok(())
    }

    /// Most recent history state of every group, one per row.
    pub fn sources(&self) -> Matrix {
        let mut m = Matrix::zeros(0, self.state_dim);
        for g in &self.groups {
            m.push_row(g.source()).expect("dims validated on push");
        }
        m
    }

    pub fn total_targets(&self) -> usize {
        self.groups.iter().map(|g| g.targets.rows()).sum()
    }

    pub fn mean_targets(&self) -> f64 {
        if self.groups.is_empty() {
            0.0
        } else {
            self.total_targets() as f64 / self.groups.len() as f64
        }
    }

    /// Every state that appears anywhere in the dataset, histories and targets.
    pub fn all_states(&self) -> Matrix {
        let parts: Vec<&Matrix> = self
            .groups
            .iter()
            .flat_map(|g| [&g.history, &g.targets])
            .collect();
        Matrix::vstack(&parts).unwrap_or_else(|_| Matrix::zeros(0, self.state_dim))
    }
}

/// Replaces each group's targets by the union of its own targets and those
/// of its `k` nearest groups (by most recent source state). Repeated targets
/// are kept.
pub fn augment_targets_with_neighbors(ds: &TransitionDataset, k: usize) -> TransitionDataset {
    if k == 0 || ds.groups.len() < 2 {
        return ds.clone();
    }
    let sources = ds.sources();
    let index = KnnIndex::new(&sources);
    let mut out = ds.clone();
    for (i, group) in out.groups.iter_mut().enumerate() {
        let mut parts = vec![&ds.groups[i].targets];
        for n in index.query(sources.row(i), k, Some(i)) {
            parts.push(&ds.groups[n.index].targets);
        }
        group.targets = Matrix::vstack(&parts).expect("same width");
    }
    out
}
