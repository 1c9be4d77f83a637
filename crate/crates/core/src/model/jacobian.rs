//! Jacobian of the learned velocity with respect to the most recent state.
//!
//! `J = ∂(x_next − x_last)/∂x_last` at zero noise, in original units. For
//! architecture 3 the re-encoding applied during sampling is included.

use crate::error::{Error, Result};
use crate::model::{concat_cols, Architecture, DymonModel};
use crate::numcore::Matrix;

/// Central-difference step in standardized units.
const FD_STEP: f64 = 1e-5;

fn check_history(model: &DymonModel, history: &Matrix) -> Result<Vec<f64>> {
    let (k, d) = (model.order, model.state_dim);
    if history.shape() != (k, d) && history.shape() != (1, k * d) {
        return Err(Error::dim(
            "history shape",
            format!("({k}, {d}) or (1, {})", k * d),
            format!("{:?}", history.shape()),
        ));
    }
    if !history.is_finite() {
        return Err(Error::Numeric("history is not finite".into()));
    }
    Ok(model.standardizer.standardize(history.data()))
}

fn to_original(model: &DymonModel, js: &Matrix) -> Matrix {
    let d = model.state_dim;
    let s = &model.standardizer.scale;
    let mut j = Matrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let delta = if a == b { 1.0 } else { 0.0 };
            j.set(a, b, s[a] * js.get(a, b) / s[b] - delta);
        }
    }
    j
}

/// Exact Jacobian by reverse-mode differentiation, one output per batch row.
pub fn jacobian(model: &DymonModel, history: &Matrix) -> Result<Matrix> {
    model.validate()?;
    let hs = check_history(model, history)?;
    let (k, d) = (model.order, model.state_dim);
    let seed = Matrix::identity(d);
    let eps = Matrix::zeros(d, model.noise_dim);
    let mut js = Matrix::zeros(d, d);

    if !model.architecture.uses_autoencoder() {
        let mut hist = Matrix::zeros(d, k * d);
        for r in 0..d {
            hist.row_mut(r).copy_from_slice(&hs);
        }
        let (_, cache) = model.transition.forward(&concat_cols(&hist, &eps))?;
        let (_, g) = model.transition.backward(&cache, &seed)?;
        for a in 0..d {
            for b in 0..d {
                let delta = if a == b { 1.0 } else { 0.0 };
                js.set(a, b, delta + g.get(a, (k - 1) * d + b));
            }
        }
        return Ok(to_original(model, &js));
    }

    let enc = model.encoder.as_ref().expect("validated");
    let dec = model.decoder.as_ref().expect("validated");
    let mut states = Matrix::zeros(d * k, d);
    for r in 0..d {
        for j in 0..k {
            states.row_mut(r * k + j).copy_from_slice(&hs[j * d..(j + 1) * d]);
        }
    }
    let (z, enc_cache) = enc.forward(&states)?;
    let l = z.cols();
    let zh = Matrix::from_vec(d, k * l, z.into_vec())?;
    let (mut zn, t_cache) = model.transition.forward(&concat_cols(&zh, &eps))?;
    let zlast = zh.cols_range((k - 1) * l, k * l);
    zn.add_assign(&zlast)?;
    let (y, dec_cache) = dec.forward(&zn)?;

    let mut grad = seed;
    if model.architecture == Architecture::LatentDenoised {
        let (z2, enc2) = enc.forward(&y)?;
        let (_, dec2) = dec.forward(&z2)?;
        let (_, gz2) = dec.backward(&dec2, &grad)?;
        grad = enc.backward(&enc2, &gz2)?.1;
    }
    let (_, g_zn) = dec.backward(&dec_cache, &grad)?;
    let (_, g_in) = model.transition.backward(&t_cache, &g_zn)?;
    let mut g_zh = g_in.cols_range(0, k * l);
    for r in 0..d {
        let row = g_zh.row_mut(r);
        for (a, b) in row[(k - 1) * l..].iter_mut().zip(g_zn.row(r)) {
            *a += b;
        }
    }
    let g_z = Matrix::from_vec(d * k, l, g_zh.into_vec())?;
    let (_, g_states) = enc.backward(&enc_cache, &g_z)?;
    for a in 0..d {
        js.row_mut(a).copy_from_slice(g_states.row(a * k + k - 1));
    }
    Ok(to_original(model, &js))
}

/// Central-difference Jacobian, for cross-checking [`jacobian`].
pub fn jacobian_fd(model: &DymonModel, history: &Matrix) -> Result<Matrix> {
    model.validate()?;
    let hs = check_history(model, history)?;
    let (k, d) = (model.order, model.state_dim);
    let mut probes = Matrix::zeros(2 * d, k * d);
    for b in 0..d {
        for (r, sign) in [(2 * b, 1.0), (2 * b + 1, -1.0)] {
            let row = probes.row_mut(r);
            row.copy_from_slice(&hs);
            row[(k - 1) * d + b] += sign * FD_STEP;
        }
    }
    let mut out = model.step_standardized(&probes, &Matrix::zeros(2 * d, model.noise_dim))?;
    if model.architecture == Architecture::LatentDenoised {
        out = model.denoise_standardized(&out)?;
    }
    let mut js = Matrix::zeros(d, d);
    for b in 0..d {
        for a in 0..d {
            js.set(a, b, (out.get(2 * b, a) - out.get(2 * b + 1, a)) / (2.0 * FD_STEP));
        }
    }
    Ok(to_original(model, &js))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, Standardizer};

    fn max_rel(a: &Matrix, b: &Matrix) -> f64 {
        let scale = b.data().iter().fold(1e-3_f64, |m, v| m.max(v.abs()));
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn exact_matches_finite_difference() {
        let st = Standardizer::new(vec![0.3, -0.1, 2.0], vec![0.7, 1.3, 2.5]).unwrap();
        let hist = Matrix::from_rows(&[[0.2, -0.4, 1.1], [0.5, 0.1, 2.9]]).unwrap();
        for (i, spec) in [
            ModelSpec::ambient(2, 1, vec![9, 7]),
            ModelSpec::latent(Architecture::Latent, 2, 1, vec![9], 2, vec![8]),
            ModelSpec::latent(Architecture::LatentDenoised, 2, 0, vec![9], 2, vec![8]),
        ]
        .iter()
        .enumerate()
        {
            let m = DymonModel::new(spec, 3, st.clone(), 20 + i as u64).unwrap();
            let exact = jacobian(&m, &hist).unwrap();
            let fd = jacobian_fd(&m, &hist).unwrap();
            assert!(max_rel(&exact, &fd) < 1e-4, "architecture {}", spec.architecture);
        }
    }

    #[test]
    fn zero_velocity_has_zero_jacobian() {
        let mut m = DymonModel::new(&ModelSpec::ambient(1, 0, vec![4]), 2, Standardizer::identity(2), 0).unwrap();
        m.transition = m.transition.zeros_like();
        let j = jacobian(&m, &Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert!(j.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_history() {
        let m = DymonModel::new(&ModelSpec::ambient(2, 0, vec![4]), 2, Standardizer::identity(2), 0).unwrap();
        assert!(jacobian(&m, &Matrix::zeros(1, 2)).is_err());
        assert!(jacobian(&m, &Matrix::zeros(1, 4)).is_ok());
    }
}
