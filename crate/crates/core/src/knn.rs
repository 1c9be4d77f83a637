//! Exact k-nearest-neighbour queries for small, low-dimensional point sets.
//!
//! Points are sorted along the first coordinate and each query sweeps
//! outward from its insertion position, stopping once the first-coordinate
//! gap alone exceeds the current k-th best distance. Distance ties are
//! broken by ascending point index.

use crate::numcore::{sq_dist, Matrix};

pub struct KnnIndex<'a> {
    points: &'a Matrix,
    order: Vec<usize>,
    keys: Vec<f64>,
}

/// A neighbour: point index and squared Euclidean distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    #[inline]
    fn before(&self, other: &Neighbor) -> bool {
        self.dist2 < other.dist2 || (self.dist2 == other.dist2 && self.index < other.index)
    }
}

impl<'a> KnnIndex<'a> {
    pub fn new(points: &'a Matrix) -> Self {
        let mut order: Vec<usize> = (0..points.rows()).collect();
        if points.cols() > 0 {
            order.sort_by(|&a, &b| {
                points.get(a, 0).total_cmp(&points.get(b, 0)).then(a.cmp(&b))
            });
        }
        let keys = order
            .iter()
            .map(|&i| if points.cols() > 0 { points.get(i, 0) } else { 0.0 })
            .collect();
        Self { points, order, keys }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `k` nearest points to `query`, nearest first, optionally skipping
    /// one index (typically the query's own).
    pub fn query(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 || self.order.is_empty() {
            return best;
        }
        let q0 = query.first().copied().unwrap_or(0.0);
        let start = self.keys.partition_point(|&v| v < q0);
        let consider = |pos: usize, best: &mut Vec<Neighbor>| -> bool {
            let gap = self.keys[pos] - q0;
            if best.len() == k && gap * gap > best[k - 1].dist2 {
                return false;
            }
            let idx = self.order[pos];
            if Some(idx) == exclude {
                return true;
            }
            let cand = Neighbor {
                index: idx,
                dist2: sq_dist(self.points.row(idx), query),
            };
            if best.len() < k || cand.before(&best[k - 1]) {
                let at = best.partition_point(|n| n.before(&cand));
                best.insert(at, cand);
                best.truncate(k);
            }
            true
        };
        let mut right = start;
        while right < self.order.len() && consider(right, &mut best) {
            right += 1;
        }
        let mut left = start;
        while left > 0 && consider(left - 1, &mut best) {
            left -= 1;
        }
        best
    }
}
