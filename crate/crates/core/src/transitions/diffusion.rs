//! Directed transitions from an unordered point cloud carrying time labels:
//! each point moves to Gaussian-affinity neighbours whose smoothed label is
//! strictly later than its own.

use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::numcore::Matrix;
use crate::transitions::TransitionDataset;

/// Multiplicity resolution: a neighbour's weight is quantized to
/// `1 / QUANT_LEVELS` of the largest retained weight.
const QUANT_LEVELS: f64 = 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TimePointCloud {
    pub points: Matrix,
    pub time_labels: Vec<f64>,
}

impl TimePointCloud {
    pub fn new(points: Matrix, time_labels: Vec<f64>) -> Result<Self> {
        if points.rows() < 2 {
            return Err(Error::Config("a point cloud needs at least two points".into()));
        }
        if time_labels.len() != points.rows() {
            return Err(Error::dim("time labels", points.rows(), time_labels.len()));
        }
        if !points.is_finite() || time_labels.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("point cloud contains non-finite values".into()));
        }
        Ok(Self { points, time_labels })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

/// Replaces each label by the mean label over its `k` nearest points, itself
/// included.
pub fn smooth_time_labels(cloud: &TimePointCloud, k: usize) -> Result<Vec<f64>> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::Config(format!("smoothing k must be in [1, {n}), got {k}")));
    }
    let index = KnnIndex::new(&cloud.points);
    Ok((0..n)
        .map(|i| {
            let nb = index.query(cloud.points.row(i), k, None);
            nb.iter().map(|n| cloud.time_labels[n.index]).sum::<f64>() / nb.len() as f64
        })
        .collect())
}

/// Builds a first-order dataset whose targets for each point are its later
/// neighbours, repeated in proportion to `exp(−‖x − y‖² / σ²)`. Points with
/// no later neighbour are terminal and get no group.
pub fn directed_diffusion_transitions(
    cloud: &TimePointCloud,
    sigma: f64,
    k: usize,
    smoothing_k: usize,
) -> Result<TransitionDataset> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    if k == 0 {
        return Err(Error::Config("neighbour count k must be at least 1".into()));
    }
    let labels = smooth_time_labels(cloud, smoothing_k)?;
    let index = KnnIndex::new(&cloud.points);
    let d = cloud.points.cols();
    let mut ds = TransitionDataset::new(1, d, format!("directed diffusion sigma={sigma} k={k}"))?;
    for i in 0..cloud.len() {
        let x = cloud.points.row(i);
        let later: Vec<(usize, f64)> = index
            .query(x, k, Some(i))
            .into_iter()
            .filter(|n| labels[n.index] > labels[i])
            .map(|n| (n.index, (-n.dist2 / (sigma * sigma)).exp()))
            .collect();
        let w_max = later.iter().map(|p| p.1).fold(0.0, f64::max);
        if w_max <= 0.0 {
            continue;
        }
        let mut targets = Matrix::zeros(0, d);
        for (j, w) in later {
            let copies = (QUANT_LEVELS * w / w_max).round() as usize;
            for _ in 0..copies {
                targets.push_row(cloud.points.row(j))?;
            }
        }
        if targets.rows() > 0 {
            ds.push(Matrix::row_vector(x), targets)?;
        }
    }
    if ds.is_empty() {
        return Err(Error::Config(
            "no later neighbors: every point is terminal, the time labels carry no direction".into(),
        ));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_cloud(n: usize) -> TimePointCloud {
        TimePointCloud::new(
            Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(),
            (0..n).map(|i| i as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_labels_unchanged() {
        let mut c = line_cloud(10);
        c.time_labels = vec![3.0; 10];
        assert_eq!(smooth_time_labels(&c, 4).unwrap(), vec![3.0; 10]);
    }

    #[test]
    fn separated_clusters_keep_labels() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            pts.push([i as f64 * 0.1, 0.0]);
            labels.push(0.0);
            pts.push([100.0 + i as f64 * 0.1, 0.0]);
            labels.push(1.0);
        }
        let c = TimePointCloud::new(Matrix::from_rows(&pts).unwrap(), labels.clone()).unwrap();
        assert_eq!(smooth_time_labels(&c, 4).unwrap(), labels);
    }

    #[test]
    fn line_smoothing_pulls_boundaries_inward() {
        let s = smooth_time_labels(&line_cloud(6), 3).unwrap();
        // hand computation: ends average {0,1,2} and {3,4,5}
        assert_eq!(s, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(smooth_time_labels(&line_cloud(6), 6).is_err());
        assert!(smooth_time_labels(&line_cloud(6), 0).is_err());
    }

    #[test]
    fn line_transitions_point_rightward() {
        let ds = directed_diffusion_transitions(&line_cloud(12), 1.5, 2, 1).unwrap();
        assert_eq!(ds.len(), 11);
        for g in &ds.groups {
            for t in g.targets.iter_rows() {
                assert!(t[0] > g.source()[0]);
            }
        }
    }

    #[test]
    fn multiplicity_follows_affinity() {
        let ds = directed_diffusion_transitions(&line_cloud(12), 1.5, 4, 1).unwrap();
        let g = &ds.groups[0];
        let ones = g.targets.iter_rows().filter(|r| r[0] == 1.0).count();
        let twos = g.targets.iter_rows().filter(|r| r[0] == 2.0).count();
        assert_eq!(ones, 16);
        // exp(-4/2.25) / exp(-1/2.25) ≈ 0.264 → 4 of 16
        assert_eq!(twos, 4);
    }

    #[test]
    fn identical_labels_are_an_error() {
        let mut c = line_cloud(8);
        c.time_labels = vec![1.0; 8];
        let err = directed_diffusion_transitions(&c, 1.0, 3, 2).unwrap_err();
        assert!(err.to_string().contains("no later neighbors"));
    }

    /// A stem along the x-axis splitting into two branches; checked against
    /// a brute-force enumeration of neighbours and labels.
    #[test]
    fn branching_cloud_matches_brute_force() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            pts.push([i as f64, 0.0]);
            labels.push(i as f64);
        }
        for i in 1..=10 {
            pts.push([9.0 + i as f64 * 0.8, i as f64 * 0.6]);
            labels.push(9.0 + i as f64);
            pts.push([9.0 + i as f64 * 0.8, -(i as f64) * 0.6]);
            labels.push(9.0 + i as f64);
        }
        let cloud = TimePointCloud::new(Matrix::from_rows(&pts).unwrap(), labels.clone()).unwrap();
        let (sigma, k, sk) = (1.5, 4, 1);
        let ds = directed_diffusion_transitions(&cloud, sigma, k, sk).unwrap();

        let branch_of = |p: &[f64]| -> i32 {
            if p[0] <= 9.0 {
                0
            } else if p[1] > 0.0 {
                1
            } else {
                -1
            }
        };
        for g in &ds.groups {
            let src = g.source();
            let i = pts.iter().position(|p| p[0] == src[0] && p[1] == src[1]).unwrap();
            // brute force: k nearest others by (dist, index), later labels only
            let mut others: Vec<(f64, usize)> = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| ((pts[j][0] - src[0]).powi(2) + (pts[j][1] - src[1]).powi(2), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = others[..k]
                .iter()
                .filter(|(_, j)| labels[*j] > labels[i])
                .map(|p| p.1)
                .collect();
            let mut got: Vec<usize> = g
                .targets
                .iter_rows()
                .map(|t| pts.iter().position(|p| p[0] == t[0] && p[1] == t[1]).unwrap())
                .collect();
            got.sort();
            got.dedup();
            for j in &got {
                assert!(expected.contains(j));
            }
            // the nearest later neighbour always carries the full multiplicity
            assert!(got.contains(&expected[0]));
            let b = branch_of(src);
            if b != 0 {
                for t in g.targets.iter_rows() {
                    assert_eq!(branch_of(t), b, "branch point leaked into other branch");
                }
            }
        }
        // the last stem point sees both branches
        let last_stem = ds.groups.iter().find(|g| g.source() == [9.0, 0.0]).unwrap();
        let branches: std::collections::BTreeSet<i32> =
            last_stem.targets.iter_rows().map(branch_of).collect();
        assert!(branches.contains(&1) && branches.contains(&-1));
    }
}
