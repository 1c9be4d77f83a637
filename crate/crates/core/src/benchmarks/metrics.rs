use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// 1-D earth mover's distance between two empirical samples.
///
/// With equal sizes this is the mean absolute difference of the sorted
/// samples. When sizes differ the larger sample is first subsampled without
/// replacement to the smaller size, using `seed`.
pub fn emd_1d(a: &[f64], b: &[f64], seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("emd_1d needs non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("emd_1d input contains non-finite values".into()));
    }
    let (mut x, mut y) = (a.to_vec(), b.to_vec());
    if x.len() != y.len() {
        let n = x.len().min(y.len());
        let larger = if x.len() > y.len() { &mut x } else { &mut y };
        let mut rng = Rng::new(seed);
        rng.shuffle(larger);
        larger.truncate(n);
    }
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64)
}

/// Mean of squared entrywise differences.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dim("mse operands", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    if a.data().is_empty() {
        return Err(Error::Config("mse of empty matrices".into()));
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}
