//! Randomized invariants of the loss, the network gradients and the
//! learned-model Jacobian.

use dymon::mmd::{mmd2, mmd2_grad_wrt_y, BandwidthSet};
use dymon::model::{jacobian, jacobian_fd, Architecture, DymonModel, ModelSpec, Standardizer};
use dymon::numcore::{Matrix, Params, Rng};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..8, 1usize..8, 1usize..4).prop_flat_map(|(n, m, d)| (matrix(n, d), matrix(m, d)))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mmd_nonnegative_and_symmetric((x, y) in pair()) {
        let bw = BandwidthSet::default();
        let xy = mmd2(&x, &y, &bw).unwrap();
        prop_assert!(xy >= -1e-12);
        prop_assert!((xy - mmd2(&y, &x, &bw).unwrap()).abs() < 1e-10);
        prop_assert!(mmd2(&x, &x, &bw).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mmd_linear_in_bandwidth_set((x, y) in pair(), lo in -3.0f64..0.0, hi in 0.1f64..3.0) {
        let (a, b) = (10f64.powf(lo), 10f64.powf(hi));
        let both = mmd2(&x, &y, &BandwidthSet::new(vec![a, b]).unwrap()).unwrap();
        let sep = mmd2(&x, &y, &BandwidthSet::single(a).unwrap()).unwrap()
            + mmd2(&x, &y, &BandwidthSet::single(b).unwrap()).unwrap();
        prop_assert!((both - sep).abs() < 1e-10);
    }

    #[test]
    fn mmd_gradient_matches_finite_differences((x, y) in pair()) {
        // Bandwidths below the typical spacing of the random points make
        // the loss too sharp for a fixed finite-difference step.
        let bw = BandwidthSet::log_spaced(1e-1, 1e2, 7).unwrap();
        let g = mmd2_grad_wrt_y(&x, &y, &bw).unwrap();
        let h = 1e-5;
        for i in 0..y.data().len() {
            let mut yp = y.clone();
            yp.data_mut()[i] += h;
            let mut ym = y.clone();
            ym.data_mut()[i] -= h;
            let fd = (mmd2(&x, &yp, &bw).unwrap() - mmd2(&x, &ym, &bw).unwrap()) / (2.0 * h);
            prop_assert!(rel_err(g.data()[i], fd) < 1e-4, "entry {}: {} vs {}", i, g.data()[i], fd);
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences(seed in any::<u64>(), batch in 1usize..5) {
        let mut rng = Rng::new(seed);
        let p = Params::init(&[3, 7, 5, 2], &mut rng).unwrap();
        let x = Matrix::from_vec(batch, 3, rng.normal_vec(batch * 3)).unwrap();
        let seed_grad = Matrix::from_vec(batch, 2, rng.normal_vec(batch * 2)).unwrap();
        let loss = |p: &Params, x: &Matrix| -> f64 {
            let y = p.predict(x).unwrap();
            y.data().iter().zip(seed_grad.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = p.forward(&x).unwrap();
        let (gp, gx) = p.backward(&cache, &seed_grad).unwrap();
        let h = 1e-5;
        let flat = p.to_flat();
        let gflat = gp.to_flat();
        for i in 0..flat.len() {
            let mut q = p.clone();
            let mut f = flat.clone();
            f[i] += h;
            q.set_flat(&f).unwrap();
            let up = loss(&q, &x);
            f[i] -= 2.0 * h;
            q.set_flat(&f).unwrap();
            let fd = (up - loss(&q, &x)) / (2.0 * h);
            // entries sitting on a leaky-ReLU kink are not differentiable
            if (gflat[i] - fd).abs() > 1e-6 {
                prop_assert!(rel_err(gflat[i], fd) < 1e-4, "param {}: {} vs {}", i, gflat[i], fd);
            }
        }
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * h);
            if (gx.data()[i] - fd).abs() > 1e-6 {
                prop_assert!(rel_err(gx.data()[i], fd) < 1e-4);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(seed in any::<u64>(), arch in 1u8..=3, order in 1usize..3) {
        let mut rng = Rng::new(seed);
        let architecture = Architecture::from_tag(arch).unwrap();
        let spec = if architecture == Architecture::Ambient {
            ModelSpec::ambient(order, 1, vec![10, 6])
        } else {
            ModelSpec::latent(architecture, order, 1, vec![10], 2, vec![7])
        };
        let st = Standardizer::new(rng.normal_vec(3), vec![0.5, 1.0, 2.0]).unwrap();
        let model = DymonModel::new(&spec, 3, st, seed).unwrap();
        let hist = Matrix::from_vec(order, 3, rng.normal_vec(order * 3)).unwrap();
        let exact = jacobian(&model, &hist).unwrap();
        let fd = jacobian_fd(&model, &hist).unwrap();
        for (a, b) in exact.data().iter().zip(fd.data()) {
            if (a - b).abs() > 1e-6 {
                prop_assert!(rel_err(*a, *b) < 1e-4, "{} vs {}", a, b);
            }
        }
    }
}
