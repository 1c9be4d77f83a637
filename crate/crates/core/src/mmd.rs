//! Multi-scale Gaussian-kernel maximum mean discrepancy.
//!
//! The kernel is `k(x, y) = Σ_σ exp(−‖x − y‖² / σ)` over a set of bandwidths,
//! and the estimator is the biased (V-statistic) one:
//! `mean(K_XX) + mean(K_YY) − 2·mean(K_XY)`.

use crate::error::{Error, Result};
use crate::numcore::{sq_dist, Matrix};

/// `exp(-t)` is exactly zero in f64 for `t` above this.
const EXP_UNDERFLOW: f64 = 746.0;

/// Strictly increasing positive bandwidths.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthSet(Vec<f64>);

impl BandwidthSet {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::Config("bandwidth set is empty".into()));
        }
        if bandwidths.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::Config(format!(
                "bandwidths must be positive and finite: {bandwidths:?}"
            )));
        }
        if bandwidths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "bandwidths must be strictly increasing: {bandwidths:?}"
            )));
        }
        Ok(Self(bandwidths))
    }

    /// Log-evenly spaced from `lo` to `hi` inclusive.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.log10(), hi.log10());
        let step = (b - a) / (count - 1) as f64;
        Self::new((0..count).map(|i| 10f64.powf(a + step * i as f64)).collect())
    }

    pub fn single(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Summed kernel value and `Σ_σ exp(−r²/σ)/σ` (the derivative weight)
    /// for a squared distance.
    #[inline]
    pub(crate) fn eval(&self, r2: f64) -> (f64, f64) {
        let mut k = 0.0;
        let mut w = 0.0;
        for &s in self.0.iter().rev() {
            let t = r2 / s;
            if t > EXP_UNDERFLOW {
                break;
            }
            let e = (-t).exp();
            k += e;
            w += e / s;
        }
        (k, w)
    }

    #[inline]
    fn value(&self, r2: f64) -> f64 {
        self.eval(r2).0
    }
}

impl Default for BandwidthSet {
    /// 19 bandwidths from 1e-6 to 1e6, two thirds of a decade apart.
    fn default() -> Self {
        Self::log_spaced(1e-6, 1e6, 19).expect("static grid is valid")
    }
}

fn check(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::Config("MMD needs at least one sample per set".into()));
    }
    if x.cols() != y.cols() {
        return Err(Error::dim("mmd sample dimension", x.cols(), y.cols()));
    }
    Ok(())
}

pub fn multiscale_kernel_matrix(x: &Matrix, y: &Matrix, bw: &BandwidthSet) -> Result<Matrix> {
    if x.cols() != y.cols() {
        return Err(Error::dim("kernel matrix dimension", x.cols(), y.cols()));
    }
    let mut k = Matrix::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            k.set(i, j, bw.value(sq_dist(x.row(i), y.row(j))));
        }
    }
    Ok(k)
}

/// Mean of the kernel over all ordered pairs within one sample set.
pub fn within_mean(x: &Matrix, bw: &BandwidthSet) -> f64 {
    let n = x.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += bw.value(sq_dist(x.row(i), x.row(j)));
        }
    }
    // the diagonal contributes k(x, x) = |bw| per sample
    (2.0 * acc + n as f64 * bw.len() as f64) / (n * n) as f64
}

fn cross_mean(x: &Matrix, y: &Matrix, bw: &BandwidthSet) -> f64 {
    let mut acc = 0.0;
    for a in x.iter_rows() {
        for b in y.iter_rows() {
            acc += bw.value(sq_dist(a, b));
        }
    }
    acc / (x.rows() * y.rows()) as f64
}

/// Biased squared MMD between sample sets `x` and `y`.
pub fn mmd2(x: &Matrix, y: &Matrix, bw: &BandwidthSet) -> Result<f64> {
    check(x, y)?;
    Ok(within_mean(x, bw) + within_mean(y, bw) - 2.0 * cross_mean(x, y, bw))
}

/// Gradient of [`mmd2`] with respect to every entry of `y`.
pub fn mmd2_grad_wrt_y(x: &Matrix, y: &Matrix, bw: &BandwidthSet) -> Result<Matrix> {
    Ok(mmd2_with_grad(x, y, bw, None)?.1)
}

/// Loss and gradient with respect to `y` in one sweep. `xx_mean`, when
/// given, is a precomputed [`within_mean`] of `x` (constant during training).
pub fn mmd2_with_grad(
    x: &Matrix,
    y: &Matrix,
    bw: &BandwidthSet,
    xx_mean: Option<f64>,
) -> Result<(f64, Matrix)> {
    check(x, y)?;
    let (n, m, d) = (x.rows(), y.rows(), y.cols());
    let mut grad = Matrix::zeros(m, d);
    let xx = xx_mean.unwrap_or_else(|| within_mean(x, bw));

    let mut yy_acc = 0.0;
    let c_yy = -4.0 / (m * m) as f64;
    for a in 0..m {
        for b in (a + 1)..m {
            let (ya, yb) = (y.row(a), y.row(b));
            let (k, w) = bw.eval(sq_dist(ya, yb));
            yy_acc += k;
            if w != 0.0 {
                let s = c_yy * w;
                for c in 0..d {
                    let diff = s * (ya[c] - yb[c]);
                    grad.data_mut()[a * d + c] += diff;
                    grad.data_mut()[b * d + c] -= diff;
                }
            }
        }
    }
    let yy = (2.0 * yy_acc + m as f64 * bw.len() as f64) / (m * m) as f64;

    let mut xy_acc = 0.0;
    let c_xy = 4.0 / (n * m) as f64;
    for b in 0..m {
        let yb = y.row(b);
        for xa in x.iter_rows() {
            let (k, w) = bw.eval(sq_dist(xa, yb));
            xy_acc += k;
            if w != 0.0 {
                let s = c_xy * w;
                let g = grad.row_mut(b);
                for c in 0..d {
                    g[c] += s * (yb[c] - xa[c]);
                }
            }
        }
    }
    let xy = xy_acc / (n * m) as f64;
    Ok((xx + yy - 2.0 * xy, grad))
}
