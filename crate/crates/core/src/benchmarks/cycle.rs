//! Diagnostic for whether a latent embedding traces a single closed loop.

use crate::knn::KnnIndex;
use crate::numcore::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct CycleReport {
    /// Mutual 2-NN graph is connected and every vertex has degree 2.
    pub is_single_cycle: bool,
    /// `degree_histogram[d]` counts vertices of degree `d` (0, 1 or 2).
    pub degree_histogram: [usize; 3],
    pub components: usize,
    /// Coefficient of variation of the distances to the centroid.
    pub residual: f64,
}

/// Builds the mutual 2-nearest-neighbour graph on the rows of `latent`
/// (an edge joins `i` and `j` when each is among the other's two nearest
/// points) and reports its cycle structure. Never fails; fewer than 16
/// points, or non-finite ones, are reported as not a cycle.
pub fn latent_cycle_report(latent: &Matrix) -> CycleReport {
    let n = latent.rows();
    let residual = circularity_residual(latent);
    if n < 16 || !latent.is_finite() {
        return CycleReport {
            is_single_cycle: false,
            degree_histogram: [n, 0, 0],
            components: n,
            residual,
        };
    }
    let index = KnnIndex::new(latent);
    let nn: Vec<[usize; 2]> = (0..n)
        .map(|i| {
            let q = index.query(latent.row(i), 2, Some(i));
            [q[0].index, q[1].index]
        })
        .collect();
    let mut adj = vec![Vec::with_capacity(2); n];
    for i in 0..n {
        for &j in &nn[i] {
            if i < j && nn[j].contains(&i) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut degree_histogram = [0; 3];
    for a in &adj {
        degree_histogram[a.len()] += 1;
    }

    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    CycleReport {
        is_single_cycle: components == 1 && degree_histogram[2] == n,
        degree_histogram,
        components,
        residual,
    }
}

fn circularity_residual(latent: &Matrix) -> f64 {
    if latent.rows() == 0 {
        return f64::NAN;
    }
    let centroid = latent.col_means();
    let r: Vec<f64> = latent
        .iter_rows()
        .map(|row| crate::numcore::sq_dist(row, &centroid).sqrt())
        .collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if mean > 0.0 {
        sd / mean
    } else {
        f64::NAN
    }
}
