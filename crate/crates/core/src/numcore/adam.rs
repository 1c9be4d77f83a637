use crate::error::{Error, Result};
use crate::numcore::Params;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Params,
    v: Params,
    t: u64,
}

impl AdamState {
    pub fn new(params: &Params, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        if params.layer_sizes() != self.m.layer_sizes() || grads.layer_sizes() != self.m.layer_sizes()
        {
            return Err(Error::dim(
                "adam step",
                format!("{:?}", self.m.layer_sizes()),
                format!("{:?} / {:?}", params.layer_sizes(), grads.layer_sizes()),
            ));
        }
        for (i, g) in grads.layers.iter().enumerate() {
            if !(g.weight.is_finite() && g.bias.iter().all(|b| b.is_finite())) {
                return Err(Error::Numeric(format!("non-finite gradient in layer {i}")));
            }
        }
        self.t += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for (((pl, gl), ml), vl) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            update(
                pl.weight.data_mut(),
                gl.weight.data(),
                ml.weight.data_mut(),
                vl.weight.data_mut(),
            );
            update(&mut pl.bias, &gl.bias, &mut ml.bias, &mut vl.bias);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Matrix, Rng};

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut rng = Rng::new(0);
        let mut p = Params::init(&[3, 4, 2], &mut rng).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = p.zeros_like();
        for _ in 0..5 {
            st.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Params::zeros(&[1, 1]).unwrap();
        p.layers[0].weight.set(0, 0, 0.5);
        let mut g = p.zeros_like();
        g.layers[0].weight.set(0, 0, 3.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg);
        st.step(&mut p, &g).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε)
        let expected = 0.5 - 0.1 * 3.0 / (3.0 + 1e-8);
        assert!((p.layers[0].weight.get(0, 0) - expected).abs() < 1e-12);
        assert!((p.layers[0].weight.get(0, 0) - 0.4).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut p = Params::zeros(&[1, 2, 1]).unwrap();
        let mut g = p.zeros_like();
        g.layers[1].bias[0] = f64::NAN;
        let mut st = AdamState::new(&p, AdamConfig::default());
        let err = st.step(&mut p, &g).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn deterministic_runs() {
        let run = || {
            let mut rng = Rng::new(77);
            let mut p = Params::init(&[2, 5, 1], &mut rng).unwrap();
            let mut st = AdamState::new(&p, AdamConfig::default());
            for _ in 0..20 {
                let x = Matrix::from_vec(4, 2, rng.normal_vec(8)).unwrap();
                let (y, cache) = p.forward(&x).unwrap();
                let (g, _) = p.backward(&cache, &y).unwrap();
                st.step(&mut p, &g).unwrap();
            }
            p.to_flat()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
