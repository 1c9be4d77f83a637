use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// How per-dimension scales are chosen when fitting a [`Standardizer`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScaleMode {
    /// Each dimension divided by its own standard deviation.
    #[default]
    PerDimension,
    /// One common scale (root-mean-square of the per-dimension standard
    /// deviations) for all dimensions; suited to image-like data where some
    /// coordinates barely vary.
    Shared,
}

/// Affine per-dimension z-scoring fitted on training states.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::dim("standardizer", mean.len(), scale.len()));
        }
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("standardizer scales must be positive and finite".into()));
        }
        Ok(Self { mean, scale })
    }

    pub fn fit(states: &Matrix, mode: ScaleMode) -> Result<Self> {
        if states.rows() == 0 {
            return Err(Error::Config("cannot fit a standardizer on zero states".into()));
        }
        let mean = states.col_means();
        let n = states.rows() as f64;
        let mut var = vec![0.0; states.cols()];
        for row in states.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let scale = match mode {
            ScaleMode::PerDimension => std
                .iter()
                .map(|&s| if s > 1e-12 { s } else { 1.0 })
                .collect(),
            ScaleMode::Shared => {
                let rms = (std.iter().map(|s| s * s).sum::<f64>() / std.len() as f64).sqrt();
                let s = if rms > 1e-12 { rms } else { 1.0 };
                vec![s; std.len()]
            }
        };
        Self::new(mean, scale)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = (v - self.mean[i % d]) / self.scale[i % d];
        }
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.forward_into(x, &mut out);
        out
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| v * self.scale[i % self.dim()] + self.mean[i % self.dim()])
            .collect()
    }

    /// Standardizes every row of a matrix whose width is a multiple of the
    /// state dimension (stacked histories).
    pub fn standardize_rows(&self, m: &Matrix) -> Matrix {
        let d = self.dim();
        let mut out = m.clone();
        for row in out.data_mut().chunks_exact_mut(d) {
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[i]) / self.scale[i];
            }
        }
        out
    }

    pub fn destandardize_rows(&self, m: &Matrix) -> Matrix {
        let d = self.dim();
        let mut out = m.clone();
        for row in out.data_mut().chunks_exact_mut(d) {
            for (i, v) in row.iter_mut().enumerate() {
                *v = *v * self.scale[i] + self.mean[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn round_trip() {
        let mut rng = Rng::new(1);
        let m = Matrix::from_vec(50, 3, rng.normal_vec(150)).unwrap();
        for mode in [ScaleMode::PerDimension, ScaleMode::Shared] {
            let s = Standardizer::fit(&m, mode).unwrap();
            for row in m.iter_rows() {
                let back = s.destandardize(&s.standardize(row));
                for (a, b) in back.iter().zip(row) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_dimension_gets_unit_scale() {
        let m = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&m, ScaleMode::PerDimension).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        let z = s.standardize_rows(&m);
        assert_eq!(z.data(), &[-1.0, 0.0, 1.0, 0.0]);
    }
}
