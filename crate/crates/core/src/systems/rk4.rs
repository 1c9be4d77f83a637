use crate::error::{Error, Result};

/// One classical fourth-order Runge-Kutta step of `dx/dt = deriv(x)`.
pub fn rk4_step<F>(deriv: F, state: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("rk4 step needs dt > 0, got {dt}")));
    }
    let eval = |x: &[f64]| -> Result<Vec<f64>> {
        let d = deriv(x);
        if d.len() != x.len() {
            return Err(Error::dim("rk4 derivative", x.len(), d.len()));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite derivative in rk4 step".into()));
        }
        Ok(d)
    };
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> {
        state.iter().zip(k).map(|(s, k)| s + a * k).collect()
    };
    let k1 = eval(state)?;
    let k2 = eval(&axpy(0.5 * dt, &k1))?;
    let k3 = eval(&axpy(0.5 * dt, &k2))?;
    let k4 = eval(&axpy(dt, &k3))?;
    Ok(state
        .iter()
        .enumerate()
        .map(|(i, s)| s + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_derivative_keeps_state() {
        let s = rk4_step(|x| vec![0.0; x.len()], &[1.0, -2.0], 0.3).unwrap();
        assert_eq!(s, vec![1.0, -2.0]);
    }

    #[test]
    fn constant_derivative_is_exact() {
        let s = rk4_step(|_| vec![1.0], &[2.0], 0.25).unwrap();
        assert_eq!(s, vec![2.25]);
    }

    #[test]
    fn exponential_matches_taylor_expansion() {
        // RK4 on x' = x reproduces the Taylor series of e^h up to h⁴/24
        let h: f64 = 0.1;
        let expected = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let s = rk4_step(|x| x.to_vec(), &[1.0], h).unwrap();
        assert!((s[0] - expected).abs() < 1e-15);
        assert!((s[0] - 1.105_170_833).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(rk4_step(|x| x.to_vec(), &[1.0], 0.0).is_err());
        assert!(matches!(
            rk4_step(|_| vec![f64::NAN], &[1.0], 0.1),
            Err(Error::Numeric(_))
        ));
    }
}
