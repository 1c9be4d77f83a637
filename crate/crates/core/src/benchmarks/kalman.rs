//! Linear-Gaussian state-space model fitted by EM (Kalman filter and RTS
//! smoother in the E-step, closed-form M-step).
//!
//! `x_{t+1} = A x_t + w`, `w ~ N(0, Q)`; `y_t = C x_t + offset + v`,
//! `v ~ N(0, R)`; `x_0 ~ N(μ0, P0)`. The offset is the data mean and is not
//! re-estimated.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Eigenvalue floor for covariance matrices.
const COV_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct KalmanModel {
    pub transition: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
    pub observation_cov: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    pub offset: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct KalmanFit {
    pub model: KalmanModel,
    /// Log-likelihood under the parameters entering each iteration.
    pub log_likelihood: Vec<f64>,
}

impl KalmanModel {
    pub fn latent_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }
}

/// Symmetrizes and clamps eigenvalues at [`COV_FLOOR`]. Warns when a
/// negative eigenvalue had to be lifted.
fn repair_cov(m: &DMatrix<f64>, what: &str) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&v| v >= COV_FLOOR) {
        return sym;
    }
    if eig.eigenvalues.iter().any(|&v| v < 0.0) {
        warn!("{what} lost positive semi-definiteness; clamping eigenvalues");
    }
    let clamped = eig.eigenvalues.map(|v| v.max(COV_FLOOR));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular matrix in Kalman EM".into()))
}

struct Smoothed {
    log_likelihood: f64,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    /// `Cov(x_{t+1}, x_t | y)` for `t = 0..T-1`.
    lag_covs: Vec<DMatrix<f64>>,
}

fn smooth(model: &KalmanModel, ys: &[DVector<f64>]) -> Result<Smoothed> {
    let (n, q) = (ys.len(), model.latent_dim());
    let (a, c, r) = (&model.transition, &model.observation, &model.observation_cov);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut pred_m = Vec::with_capacity(n);
    let mut pred_p = Vec::with_capacity(n);
    let mut filt_m: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut filt_p: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut ll = 0.0;
    for (t, y) in ys.iter().enumerate() {
        let (m, p) = if t == 0 {
            (model.initial_mean.clone(), model.initial_cov.clone())
        } else {
            (a * &filt_m[t - 1], a * &filt_p[t - 1] * a.transpose() + &model.process_cov)
        };
        let s = repair_cov(&(c * &p * c.transpose() + r), "innovation covariance");
        let chol = Cholesky::new(s.clone())
            .ok_or_else(|| Error::Numeric("innovation covariance is not positive definite".into()))?;
        let innov = y - c * &m;
        let sol = chol.solve(&innov);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        ll -= 0.5 * (innov.dot(&sol) + log_det + y.len() as f64 * ln_2pi);
        let gain = &p * c.transpose() * chol.inverse();
        let fm = &m + &gain * &innov;
        let fp = repair_cov(&((DMatrix::identity(q, q) - &gain * c) * &p), "filtered covariance");
        pred_m.push(m);
        pred_p.push(p);
        filt_m.push(fm);
        filt_p.push(fp);
    }

    let mut means = filt_m.clone();
    let mut covs = filt_p.clone();
    let mut lag_covs = vec![DMatrix::zeros(q, q); n.saturating_sub(1)];
    for t in (0..n.saturating_sub(1)).rev() {
        let j = &filt_p[t] * a.transpose() * inverse(&pred_p[t + 1])?;
        means[t] = &filt_m[t] + &j * (&means[t + 1] - &pred_m[t + 1]);
        covs[t] = repair_cov(
            &(&filt_p[t] + &j * (&covs[t + 1] - &pred_p[t + 1]) * j.transpose()),
            "smoothed covariance",
        );
        lag_covs[t] = &covs[t + 1] * j.transpose();
    }
    Ok(Smoothed {
        log_likelihood: ll,
        means,
        covs,
        lag_covs,
    })
}

/// Fits a model with a `latent_dim`-dimensional state to the rows of
/// `data` by `n_iters` EM iterations. Parameters start from identity
/// transition, observation and covariances (observation padded or
/// truncated when dimensions differ) and a zero initial mean.
pub fn kalman_fit_em(data: &Matrix, latent_dim: usize, n_iters: usize) -> Result<KalmanFit> {
    let (n, p) = data.shape();
    if n < 20 {
        return Err(Error::Config(format!("Kalman EM needs at least 20 observations, got {n}")));
    }
    if latent_dim == 0 || p == 0 {
        return Err(Error::Config("latent and observation dimensions must be positive".into()));
    }
    if !data.is_finite() {
        return Err(Error::Numeric("Kalman data contains non-finite values".into()));
    }
    let q = latent_dim;
    let offset = DVector::from_vec(data.col_means());
    let ys: Vec<DVector<f64>> = data
        .iter_rows()
        .map(|row| DVector::from_column_slice(row) - &offset)
        .collect();
    let mut model = KalmanModel {
        transition: DMatrix::identity(q, q),
        observation: DMatrix::identity(p, q),
        process_cov: DMatrix::identity(q, q),
        observation_cov: DMatrix::identity(p, p),
        initial_mean: DVector::zeros(q),
        initial_cov: DMatrix::identity(q, q),
        offset,
    };
    let mut log_likelihood = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let sm = smooth(&model, &ys)?;
        if !sm.log_likelihood.is_finite() {
            return Err(Error::Numeric("Kalman log-likelihood is not finite".into()));
        }
        log_likelihood.push(sm.log_likelihood);

        let exx: Vec<DMatrix<f64>> = sm
            .means
            .iter()
            .zip(&sm.covs)
            .map(|(m, c)| c + m * m.transpose())
            .collect();
        let mut s00 = DMatrix::zeros(q, q);
        let mut s11 = DMatrix::zeros(q, q);
        let mut s10 = DMatrix::zeros(q, q);
        for t in 0..n - 1 {
            s00 += &exx[t];
            s11 += &exx[t + 1];
            s10 += &sm.lag_covs[t] + &sm.means[t + 1] * sm.means[t].transpose();
        }
        let a = &s10 * inverse(&s00)?;
        let qn = (&s11 - &a * s10.transpose()) / (n - 1) as f64;

        let mut sxx = DMatrix::zeros(q, q);
        let mut syx = DMatrix::zeros(p, q);
        let mut syy = DMatrix::zeros(p, p);
        for t in 0..n {
            sxx += &exx[t];
            syx += &ys[t] * sm.means[t].transpose();
            syy += &ys[t] * ys[t].transpose();
        }
        let c = &syx * inverse(&sxx)?;
        let rn = (&syy - &c * syx.transpose()) / n as f64;

        model.transition = a;
        model.process_cov = repair_cov(&qn, "process covariance");
        model.observation = c;
        model.observation_cov = repair_cov(&rn, "observation covariance");
        model.initial_mean = sm.means[0].clone();
        model.initial_cov = repair_cov(&sm.covs[0], "initial covariance");
    }
    Ok(KalmanFit {
        model,
        log_likelihood,
    })
}

fn gaussian(chol_l: &DMatrix<f64>, rng: &mut Rng) -> DVector<f64> {
    let z = DVector::from_vec(rng.normal_vec(chol_l.nrows()));
    chol_l * z
}

fn cholesky_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(repair_cov(m, what))
        .map(|c| c.l())
        .ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))
}

/// Ancestral sample of `n` observations, one per row.
pub fn kalman_sample(model: &KalmanModel, n: usize, seed: u64) -> Result<Matrix> {
    let mut rng = Rng::new(seed);
    let l0 = cholesky_factor(&model.initial_cov, "initial covariance")?;
    let lq = cholesky_factor(&model.process_cov, "process covariance")?;
    let lr = cholesky_factor(&model.observation_cov, "observation covariance")?;
    let mut x = &model.initial_mean + gaussian(&l0, &mut rng);
    let mut out = Matrix::zeros(n, model.obs_dim());
    for t in 0..n {
        if t > 0 {
            x = &model.transition * &x + gaussian(&lq, &mut rng);
        }
        let y = &model.observation * &x + &model.offset + gaussian(&lr, &mut rng);
        out.row_mut(t).copy_from_slice(y.as_slice());
    }
    Ok(out)
}
