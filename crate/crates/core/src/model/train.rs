//! Minibatch training of the MMD objective.
//!
//! For every source group in a minibatch, `m` noise vectors are pushed
//! through the model to form a generated next-state set, which is compared
//! with the group's observed targets by the multi-scale MMD². The batch
//! loss is the mean over groups; autoencoder architectures add a squared
//! reconstruction error on the (corrupted) history states.

use std::time::Instant;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::mmd::{mmd2_with_grad, within_mean, BandwidthSet};
use crate::model::{concat_cols, DymonModel, ModelSpec, ScaleMode, Standardizer};
use crate::numcore::{AdamConfig, AdamState, Matrix, Params, Rng};
use crate::transitions::TransitionDataset;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Source groups per minibatch.
    pub batch_groups: usize,
    /// Caps the minibatches drawn per epoch; `None` sweeps every group.
    pub batches_per_epoch: Option<usize>,
    /// Minimum generated samples per group; the actual count is
    /// `max(m_generated, |Y_x|)`. Deterministic models use one sample since
    /// all copies coincide.
    pub m_generated: usize,
    /// Std of Gaussian corruption added to network inputs, standardized units.
    pub corruption_std: f64,
    pub adam: AdamConfig,
    /// Multiplicative learning-rate factor applied after each epoch.
    pub lr_decay: f64,
    pub bandwidths: BandwidthSet,
    pub scale_mode: ScaleMode,
    /// Weight of the autoencoder reconstruction term (architectures 2, 3).
    pub recon_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_groups: 64,
            batches_per_epoch: None,
            m_generated: 32,
            corruption_std: 0.05,
            adam: AdamConfig::default(),
            lr_decay: 1.0,
            bandwidths: BandwidthSet::default(),
            scale_mode: ScaleMode::PerDimension,
            recon_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_groups == 0 {
            return Err(Error::Config("batch_groups must be at least 1".into()));
        }
        if self.batches_per_epoch == Some(0) {
            return Err(Error::Config("batches_per_epoch must be at least 1".into()));
        }
        if self.m_generated < 2 {
            return Err(Error::Config(format!(
                "m_generated must be at least 2, got {}",
                self.m_generated
            )));
        }
        if !(self.corruption_std >= 0.0 && self.corruption_std.is_finite()) {
            return Err(Error::Config("corruption_std must be non-negative".into()));
        }
        if !(self.adam.learning_rate > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(
                "learning rate must be positive and lr_decay in (0, 1]".into(),
            ));
        }
        if !(self.recon_weight >= 0.0) {
            return Err(Error::Config("recon_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    /// Mean MMD² over the epoch's minibatches.
    pub mmd: Vec<f64>,
    /// Mean reconstruction error (zeros for architecture 1).
    pub recon: Vec<f64>,
    pub seconds: Vec<f64>,
    /// Groups skipped because they had no targets.
    pub skipped_groups: usize,
}

impl LossCurve {
    pub fn len(&self) -> usize {
        self.mmd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mmd.is_empty()
    }

    pub fn first(&self) -> Option<f64> {
        self.mmd.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.mmd.last().copied()
    }
}

/// A group prepared on standardized coordinates.
struct Prepared {
    history: Vec<f64>,
    targets: Matrix,
    targets_within: f64,
    m: usize,
}

struct Optimizers {
    transition: AdamState,
    encoder: Option<AdamState>,
    decoder: Option<AdamState>,
}

impl Optimizers {
    fn new(model: &DymonModel, cfg: AdamConfig) -> Self {
        Self {
            transition: AdamState::new(&model.transition, cfg),
            encoder: model.encoder.as_ref().map(|p| AdamState::new(p, cfg)),
            decoder: model.decoder.as_ref().map(|p| AdamState::new(p, cfg)),
        }
    }

    fn set_lr(&mut self, lr: f64) {
        self.transition.config.learning_rate = lr;
        for s in [&mut self.encoder, &mut self.decoder].into_iter().flatten() {
            s.config.learning_rate = lr;
        }
    }
}

struct BatchGrads {
    transition: Params,
    encoder: Option<Params>,
    decoder: Option<Params>,
    mmd: f64,
    recon: f64,
}

/// Trains a freshly initialized model on `dataset`.
pub fn train_dymon(
    dataset: &TransitionDataset,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<(DymonModel, LossCurve)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("transition dataset is empty".into()));
    }
    if dataset.order() != spec.order {
        return Err(Error::Config(format!(
            "dataset order {} does not match model order {}",
            dataset.order(),
            spec.order
        )));
    }
    let standardizer = Standardizer::fit(&dataset.all_states(), config.scale_mode)?;
    let model = DymonModel::new(spec, dataset.state_dim(), standardizer, config.seed)?;
    train_model(model, dataset, config)
}

/// Continues training an existing model (its standardizer is kept).
pub fn train_model(
    mut model: DymonModel,
    dataset: &TransitionDataset,
    config: &TrainConfig,
) -> Result<(DymonModel, LossCurve)> {
    config.validate()?;
    model.validate()?;
    if dataset.order() != model.order || dataset.state_dim() != model.state_dim {
        return Err(Error::dim(
            "dataset vs model",
            format!("order {} dim {}", model.order, model.state_dim),
            format!("order {} dim {}", dataset.order(), dataset.state_dim()),
        ));
    }
    let mut curve = LossCurve::default();
    let mut groups = Vec::with_capacity(dataset.len());
    for g in &dataset.groups {
        if g.targets.rows() == 0 {
            curve.skipped_groups += 1;
            continue;
        }
        let targets = model.standardizer.standardize_rows(&g.targets);
        let targets_within = within_mean(&targets, &config.bandwidths);
        let m = if model.is_deterministic() {
            1
        } else {
            config.m_generated.max(g.targets.rows())
        };
        groups.push(Prepared {
            history: model.standardizer.standardize(g.history_flat()),
            targets,
            targets_within,
            m,
        });
    }
    if curve.skipped_groups > 0 {
        warn!("skipped {} transition groups without targets", curve.skipped_groups);
    }
    if groups.is_empty() {
        return Err(Error::Config("no transition group has targets".into()));
    }

    let mut rng = Rng::new(config.seed ^ 0x5EED_7A11);
    let mut opt = Optimizers::new(&model, config.adam);
    let mut lr = config.adam.learning_rate;
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let per_epoch = groups.len().div_ceil(config.batch_groups);
    let batches = config.batches_per_epoch.map_or(per_epoch, |b| b.min(per_epoch).max(1));

    for epoch in 0..config.epochs {
        let started = Instant::now();
        rng.shuffle(&mut order);
        let (mut mmd_sum, mut recon_sum) = (0.0, 0.0);
        for b in 0..batches {
            let lo = b * config.batch_groups;
            let hi = (lo + config.batch_groups).min(order.len());
            let batch: Vec<&Prepared> = order[lo..hi].iter().map(|&i| &groups[i]).collect();
            let grads = if model.architecture.uses_autoencoder() {
                latent_batch(&model, &batch, config, &mut rng)?
            } else {
                ambient_batch(&model, &batch, config, &mut rng)?
            };
            if !grads.mmd.is_finite() || !grads.recon.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {b}"
                )));
            }
            mmd_sum += grads.mmd;
            recon_sum += grads.recon;
            apply(&mut model, &mut opt, grads).map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("{msg} at epoch {epoch}, batch {b}"))
                }
                other => other,
            })?;
        }
        curve.mmd.push(mmd_sum / batches as f64);
        curve.recon.push(recon_sum / batches as f64);
        curve.seconds.push(started.elapsed().as_secs_f64());
        debug!(
            "epoch {epoch}: mmd {:.6} recon {:.6}",
            curve.mmd[epoch], curve.recon[epoch]
        );
        if config.lr_decay < 1.0 {
            lr *= config.lr_decay;
            opt.set_lr(lr);
        }
    }
    Ok((model, curve))
}

fn apply(model: &mut DymonModel, opt: &mut Optimizers, grads: BatchGrads) -> Result<()> {
    opt.transition.step(&mut model.transition, &grads.transition)?;
    if let (Some(p), Some(s), Some(g)) = (model.encoder.as_mut(), opt.encoder.as_mut(), grads.encoder.as_ref()) {
        s.step(p, g)?;
    }
    if let (Some(p), Some(s), Some(g)) = (model.decoder.as_mut(), opt.decoder.as_mut(), grads.decoder.as_ref()) {
        s.step(p, g)?;
    }
    Ok(())
}

fn noise_matrix(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| std * rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// MMD loss and gradient for each group's slice of the generated rows.
fn group_mmd(
    generated: &Matrix,
    batch: &[&Prepared],
    bw: &BandwidthSet,
) -> Result<(f64, Matrix)> {
    let mut grad = Matrix::zeros(generated.rows(), generated.cols());
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut offset = 0;
    let idx: Vec<usize> = (0..generated.rows()).collect();
    for g in batch {
        let rows = &idx[offset..offset + g.m];
        let y = generated.select_rows(rows);
        let (l, gy) = mmd2_with_grad(&g.targets, &y, bw, Some(g.targets_within))?;
        loss += l * scale;
        for (j, &r) in rows.iter().enumerate() {
            for (dst, src) in grad.row_mut(r).iter_mut().zip(gy.row(j)) {
                *dst = src * scale;
            }
        }
        offset += g.m;
    }
    Ok((loss, grad))
}

fn ambient_batch(
    model: &DymonModel,
    batch: &[&Prepared],
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<BatchGrads> {
    let d = model.state_dim;
    let hist_w = model.order * d;
    let rows: usize = batch.iter().map(|g| g.m).sum();
    let mut input = Matrix::zeros(rows, hist_w + model.noise_dim);
    let mut last = Matrix::zeros(rows, d);
    let mut r = 0;
    for g in batch {
        for _ in 0..g.m {
            let row = input.row_mut(r);
            for (dst, &h) in row[..hist_w].iter_mut().zip(&g.history) {
                *dst = h + config.corruption_std * rng.normal();
            }
            for v in &mut row[hist_w..] {
                *v = rng.normal();
            }
            // the residual starts from the corrupted state, so training
            // also teaches a pull back toward the data
            let base = row[hist_w - d..hist_w].to_vec();
            last.row_mut(r).copy_from_slice(&base);
            r += 1;
        }
    }
    let (velocity, cache) = model.transition.forward(&input)?;
    let mut generated = velocity;
    generated.add_assign(&last)?;
    let (loss, grad) = group_mmd(&generated, batch, &config.bandwidths)?;
    let (transition, _) = model.transition.backward(&cache, &grad)?;
    Ok(BatchGrads {
        transition,
        encoder: None,
        decoder: None,
        mmd: loss,
        recon: 0.0,
    })
}

fn latent_batch(
    model: &DymonModel,
    batch: &[&Prepared],
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<BatchGrads> {
    let encoder = model.encoder.as_ref().expect("validated");
    let decoder = model.decoder.as_ref().expect("validated");
    let (d, k, nb) = (model.state_dim, model.order, batch.len());

    // encode every (corrupted) history state: (nb·k) × d
    let mut clean = Matrix::zeros(nb * k, d);
    for (i, g) in batch.iter().enumerate() {
        for j in 0..k {
            clean.row_mut(i * k + j).copy_from_slice(&g.history[j * d..(j + 1) * d]);
        }
    }
    let mut noisy = clean.clone();
    noisy.add_assign(&noise_matrix(nb * k, d, config.corruption_std, rng))?;
    let (z, enc_cache) = encoder.forward(&noisy)?;
    let l = z.cols();

    // transition input per generated row: flattened latent history + noise
    let rows: usize = batch.iter().map(|g| g.m).sum();
    let mut zin = Matrix::zeros(rows, k * l);
    let mut zlast = Matrix::zeros(rows, l);
    let mut owner = Vec::with_capacity(rows);
    let mut r = 0;
    for (i, g) in batch.iter().enumerate() {
        let zh: Vec<f64> = (0..k).flat_map(|j| z.row(i * k + j).to_vec()).collect();
        for _ in 0..g.m {
            zin.row_mut(r).copy_from_slice(&zh);
            zlast.row_mut(r).copy_from_slice(&zh[(k - 1) * l..]);
            owner.push(i);
            r += 1;
        }
    }
    let eps = noise_matrix(rows, model.noise_dim, 1.0, rng);
    let input = concat_cols(&zin, &eps);
    let (velocity, t_cache) = model.transition.forward(&input)?;
    let mut z_next = velocity;
    z_next.add_assign(&zlast)?;
    let (generated, dec_cache) = decoder.forward(&z_next)?;
    let (mmd, grad_gen) = group_mmd(&generated, batch, &config.bandwidths)?;

    let (mut g_dec, grad_znext) = decoder.backward(&dec_cache, &grad_gen)?;
    let (g_trans, grad_input) = model.transition.backward(&t_cache, &grad_znext)?;

    // route gradients back to the per-group latent histories
    let mut grad_z = Matrix::zeros(nb * k, l);
    for (row, &i) in owner.iter().enumerate() {
        let gi = grad_input.row(row);
        for j in 0..k {
            let dst = grad_z.row_mut(i * k + j);
            for (a, b) in dst.iter_mut().zip(&gi[j * l..(j + 1) * l]) {
                *a += b;
            }
        }
        let dst = grad_z.row_mut(i * k + k - 1);
        for (a, b) in dst.iter_mut().zip(grad_znext.row(row)) {
            *a += b;
        }
    }

    // reconstruction of the clean history states
    let (recon, rec_cache) = decoder.forward(&z)?;
    let diff = recon.sub(&clean)?;
    let count = diff.data().len() as f64;
    let recon_loss = diff.data().iter().map(|v| v * v).sum::<f64>() / count;
    let mut grad_recon = diff;
    grad_recon.scale(2.0 * config.recon_weight / count);
    let (g_dec_rec, grad_z_rec) = decoder.backward(&rec_cache, &grad_recon)?;
    g_dec.add_assign(&g_dec_rec)?;
    grad_z.add_assign(&grad_z_rec)?;

    let (g_enc, _) = encoder.backward(&enc_cache, &grad_z)?;
    Ok(BatchGrads {
        transition: g_trans,
        encoder: Some(g_enc),
        decoder: Some(g_dec),
        mmd,
        recon: recon_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn fixed_point_dataset() -> TransitionDataset {
        let mut ds = TransitionDataset::new(1, 1, "fixed").unwrap();
        ds.push(Matrix::from_rows(&[[0.0]]).unwrap(), Matrix::from_rows(&[[0.0]]).unwrap())
            .unwrap();
        ds
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.m_generated = 1;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            corruption_std: -0.1,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn order_mismatch_rejected() {
        let ds = fixed_point_dataset();
        let spec = ModelSpec::ambient(2, 0, vec![4]);
        assert!(train_dymon(&ds, &spec, &TrainConfig::default()).is_err());
        let empty = TransitionDataset::new(1, 1, "e").unwrap();
        let spec = ModelSpec::ambient(1, 0, vec![4]);
        assert!(train_dymon(&empty, &spec, &TrainConfig::default()).is_err());
    }

    #[test]
    fn learns_fixed_point() {
        let ds = fixed_point_dataset();
        let spec = ModelSpec::ambient(1, 0, vec![8, 8]);
        let cfg = TrainConfig {
            epochs: 400,
            batch_groups: 1,
            lr_decay: 0.99,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (model, curve) = train_dymon(&ds, &spec, &cfg).unwrap();
        assert_eq!(curve.len(), 400);
        let next = model.forward(&Matrix::from_rows(&[[0.0]]).unwrap(), &[]).unwrap();
        assert!(next[0].abs() < 1e-2, "{}", next[0]);
    }

    #[test]
    fn latent_training_reduces_loss() {
        let mut ds = TransitionDataset::new(1, 4, "circle").unwrap();
        let pt = |t: f64| [t.cos(), t.sin(), 0.5 * t.cos(), -0.5 * t.sin()];
        for i in 0..40 {
            let t = i as f64 * 0.15;
            ds.push(Matrix::from_rows(&[pt(t)]).unwrap(), Matrix::from_rows(&[pt(t + 0.15)]).unwrap())
                .unwrap();
        }
        let spec = ModelSpec::latent(Architecture::Latent, 1, 0, vec![16], 2, vec![16]);
        let cfg = TrainConfig {
            epochs: 60,
            batch_groups: 10,
            adam: AdamConfig {
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (_, curve) = train_dymon(&ds, &spec, &cfg).unwrap();
        assert!(curve.last().unwrap() < curve.first().unwrap());
        assert!(curve.recon.last().unwrap() < curve.recon.first().unwrap());
    }
}
