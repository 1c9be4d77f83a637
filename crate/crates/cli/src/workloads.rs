//! End-to-end experiment pipelines shared by the subcommands and the
//! acceptance suite.

use std::time::Instant;

use dymon::benchmarks::{
    emd_1d, hmm_fit, hmm_sample, kalman_fit_em, kalman_sample, latent_cycle_report, mse, CycleReport,
};
use dymon::mmd::BandwidthSet;
use dymon::model::{
    generate_chain, generate_chains, train_dymon, Architecture, DymonModel, LossCurve, ModelSpec, ScaleMode,
    TrainConfig,
};
use dymon::numcore::{AdamConfig, Matrix, Rng};
use dymon::systems::{
    generate_rotating_sequence, rotating_frame, sample_gmm_metropolis, simulate_double_pendulum, simulate_pendulum,
    DoublePendulum, GmmSpec, Pendulum, Trajectory,
};
use dymon::transitions::{augment_targets_with_neighbors, transitions_from_trajectory, StepSize};
use dymon::{Error, Result};

/// Mixture stationary-distribution comparison between DyMoN and the
/// HMM / Kalman baselines.
#[derive(Clone, Debug)]
pub struct GmmWorkload {
    pub spec: GmmSpec,
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub proposal_std: f64,
    pub burn_in: usize,
    /// Held-out and generated chains are thinned by this factor.
    pub thin: usize,
    pub neighbor_k: usize,
    pub hidden: Vec<usize>,
    pub noise_dim: usize,
    pub train: TrainConfig,
    /// Parallel generated chains; together they yield
    /// `heldout_samples / thin` samples.
    pub chains: usize,
    pub hmm_states: usize,
    pub hmm_iters: usize,
    pub kf_iters: usize,
    pub skip_hmm: bool,
    pub skip_kf: bool,
    pub threads: usize,
    pub seed: u64,
}

impl Default for GmmWorkload {
    fn default() -> Self {
        Self {
            spec: GmmSpec::three_mode(),
            train_samples: 50_000,
            heldout_samples: 50_000,
            proposal_std: 2.5,
            burn_in: 1_000,
            thin: 10,
            neighbor_k: 5,
            hidden: vec![64, 64, 64],
            noise_dim: 2,
            train: TrainConfig {
                epochs: 500,
                batch_groups: 64,
                batches_per_epoch: Some(20),
                m_generated: 32,
                adam: lr(3e-3),
                lr_decay: 0.992,
                // Bandwidths far below the squared jump size only see
                // near-coincident pairs; their spiky gradients stall training
                // on Metropolis kernels with many rejected (repeated) moves.
                bandwidths: BandwidthSet::log_spaced(1e-2, 1e2, 9).expect("static grid is valid"),
                ..TrainConfig::default()
            },
            chains: 10,
            hmm_states: 4,
            hmm_iters: 100,
            kf_iters: 30,
            skip_hmm: false,
            skip_kf: false,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodResult {
    pub name: &'static str,
    pub emd: f64,
    pub train_seconds: f64,
    pub sample_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct GmmComparison {
    pub rows: Vec<MethodResult>,
    pub heldout: Vec<f64>,
    pub dymon_samples: Vec<f64>,
    pub loss: LossCurve,
    pub model: DymonModel,
}

impl GmmComparison {
    pub fn get(&self, name: &str) -> Option<&MethodResult> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn thin(xs: &[f64], every: usize) -> Vec<f64> {
    xs.iter().step_by(every.max(1)).copied().collect()
}

pub fn run_gmm_comparison(w: &GmmWorkload) -> Result<GmmComparison> {
    let mut seeds = Rng::new(w.seed);
    let train_traj = sample_gmm_metropolis(&w.spec, w.train_samples, w.proposal_std, w.burn_in, seeds.fork(0).seed())?;
    let heldout_traj = sample_gmm_metropolis(&w.spec, w.heldout_samples, w.proposal_std, w.burn_in, seeds.fork(1).seed())?;
    let heldout = thin(heldout_traj.states.data(), w.thin);
    let n_out = heldout.len();
    let train_data = train_traj.states.data();

    // DyMoN
    let started = Instant::now();
    let pairs = transitions_from_trajectory(&train_traj, StepSize::fixed(1), 1, seeds.fork(2).seed())?;
    let ds = augment_targets_with_neighbors(&pairs, w.neighbor_k);
    let spec = ModelSpec::ambient(1, w.noise_dim, w.hidden.clone());
    let cfg = TrainConfig {
        seed: seeds.fork(3).seed(),
        ..w.train.clone()
    };
    let (model, loss) = train_dymon(&ds, &spec, &cfg)?;
    let dymon_train = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let chains = w.chains.max(1);
    let per_chain = n_out.div_ceil(chains);
    let mut pick = seeds.fork(4);
    let inits: Vec<Matrix> = (0..chains)
        .map(|_| Matrix::from_vec(1, 1, vec![train_data[pick.below(train_data.len())]]).expect("1x1"))
        .collect();
    let generated = generate_chains(&model, &inits, per_chain * w.thin, seeds.fork(5).seed(), w.threads)?;
    let mut dymon_samples = Vec::with_capacity(chains * per_chain);
    for c in &generated {
        let xs = c.generated(1);
        dymon_samples.extend(thin(xs.data(), w.thin));
    }
    dymon_samples.truncate(n_out);
    let dymon_sample = started.elapsed().as_secs_f64();
    let emd_seed = seeds.fork(6).seed();
    let mut rows = vec![MethodResult {
        name: "dymon",
        emd: emd_1d(&dymon_samples, &heldout, emd_seed)?,
        train_seconds: dymon_train,
        sample_seconds: dymon_sample,
    }];

    // HMM
    let (hmm_seed, hmm_sample_seed) = (seeds.fork(7).seed(), seeds.fork(8).seed());
    if !w.skip_hmm {
        let started = Instant::now();
        let hmm = hmm_fit(train_data, w.hmm_states, w.hmm_iters, hmm_seed)?;
        let hmm_train = started.elapsed().as_secs_f64();
        let started = Instant::now();
        let hmm_xs = thin(&hmm_sample(&hmm.model, n_out * w.thin, hmm_sample_seed)?, w.thin);
        rows.push(MethodResult {
            name: "hmm",
            emd: emd_1d(&hmm_xs, &heldout, emd_seed)?,
            train_seconds: hmm_train,
            sample_seconds: started.elapsed().as_secs_f64(),
        });
    }

    // Kalman
    let kf_seed = seeds.fork(9).seed();
    if !w.skip_kf {
        let started = Instant::now();
        let kf = kalman_fit_em(&train_traj.states, 1, w.kf_iters)?;
        let kf_train = started.elapsed().as_secs_f64();
        let started = Instant::now();
        let kf_xs = thin(kalman_sample(&kf.model, n_out * w.thin, kf_seed)?.data(), w.thin);
        rows.push(MethodResult {
            name: "kf",
            emd: emd_1d(&kf_xs, &heldout, emd_seed)?,
            train_seconds: kf_train,
            sample_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(GmmComparison {
        rows,
        heldout,
        dymon_samples,
        loss,
        model,
    })
}

fn lr(rate: f64) -> AdamConfig {
    AdamConfig {
        learning_rate: rate,
        ..AdamConfig::default()
    }
}

fn window(states: &Matrix, end: usize, order: usize) -> Matrix {
    states.select_rows(&((end + 1 - order)..=end).collect::<Vec<_>>())
}

/// Second-order deterministic model on Cartesian pendulum positions.
#[derive(Clone, Debug)]
pub struct PendulumWorkload {
    pub system: Pendulum,
    /// Leading states used for training; the rest are held out.
    pub train_states: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub rollout_steps: usize,
    pub seed: u64,
}

impl Default for PendulumWorkload {
    fn default() -> Self {
        Self {
            system: Pendulum {
                theta0: 1.0,
                dt: 0.05,
                steps: 4000,
                ..Pendulum::default()
            },
            train_states: 3000,
            hidden: vec![8, 16, 8],
            train: TrainConfig {
                epochs: 2000,
                batch_groups: 64,
                adam: lr(1e-2),
                lr_decay: 0.998,
                corruption_std: 0.0,
                ..TrainConfig::default()
            },
            rollout_steps: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PendulumResult {
    /// Held-out one-step coefficient of determination per coordinate.
    pub r2: Vec<f64>,
    /// Fraction of rollout states within 5% of the rod length.
    pub on_circle: f64,
    pub sign_changes: usize,
    pub rollout: Matrix,
    pub loss: LossCurve,
    pub model: DymonModel,
}

pub fn run_pendulum(w: &PendulumWorkload) -> Result<PendulumResult> {
    let traj = simulate_pendulum(&w.system)?;
    if w.train_states + 3 > traj.len() {
        return Err(Error::Config("pendulum workload needs held-out states after the training part".into()));
    }
    let order = 2;
    let train = Trajectory::new(traj.states.select_rows(&(0..w.train_states).collect::<Vec<_>>()), traj.dt)?;
    let ds = transitions_from_trajectory(&train, StepSize::fixed(1), order, w.seed)?;
    let spec = ModelSpec::ambient(order, 0, w.hidden.clone());
    let (model, loss) = train_dymon(&ds, &spec, &TrainConfig { seed: w.seed, ..w.train.clone() })?;

    // one-step prediction on every held-out history
    let d = traj.dim();
    let first = w.train_states + order - 1;
    let ends: Vec<usize> = (first..traj.len() - 1).collect();
    let mut hist = Matrix::zeros(0, order * d);
    for &e in &ends {
        hist.push_row(window(&traj.states, e, order).data())?;
    }
    let pred = model.forward_batch(&hist, &Matrix::zeros(ends.len(), 0))?;
    let truth = traj.states.select_rows(&ends.iter().map(|e| e + 1).collect::<Vec<_>>());
    let r2 = r_squared(&pred, &truth);

    let init = window(&traj.states, first, order);
    let chain = generate_chain(&model, &init, w.rollout_steps, &mut Rng::new(w.seed))?;
    let rollout = chain.generated(order);
    let l = w.system.length;
    let on = rollout
        .iter_rows()
        .filter(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - l).abs() <= 0.05 * l)
        .count();
    let xs: Vec<f64> = rollout.iter_rows().map(|p| p[0]).collect();
    Ok(PendulumResult {
        r2,
        on_circle: on as f64 / rollout.rows().max(1) as f64,
        sign_changes: sign_changes(&xs),
        rollout,
        loss,
        model,
    })
}

/// `1 − SS_res / SS_tot` for every column.
pub fn r_squared(pred: &Matrix, truth: &Matrix) -> Vec<f64> {
    let means = truth.col_means();
    (0..truth.cols())
        .map(|c| {
            let (mut res, mut tot) = (0.0, 0.0);
            for r in 0..truth.rows() {
                res += (pred.get(r, c) - truth.get(r, c)).powi(2);
                tot += (truth.get(r, c) - means[c]).powi(2);
            }
            1.0 - res / tot
        })
        .collect()
}

/// Strict sign flips in a sequence, zeros skipped.
pub fn sign_changes(xs: &[f64]) -> usize {
    let signs: Vec<bool> = xs.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Stochastic second-order model on the double pendulum; measures how far
/// nearly identical starts drift apart.
#[derive(Clone, Debug)]
pub struct DoublePendulumWorkload {
    pub system: DoublePendulum,
    pub step_size: usize,
    pub neighbor_k: usize,
    pub hidden: Vec<usize>,
    pub noise_dim: usize,
    pub train: TrainConfig,
    pub chains: usize,
    pub rollout_steps: usize,
    pub perturbation: f64,
    pub threads: usize,
    pub seed: u64,
}

impl Default for DoublePendulumWorkload {
    fn default() -> Self {
        Self {
            system: DoublePendulum {
                steps: 20_000,
                ..DoublePendulum::default()
            },
            step_size: 2,
            neighbor_k: 0,
            hidden: vec![64, 128, 64],
            noise_dim: 2,
            train: TrainConfig {
                epochs: 600,
                batch_groups: 64,
                batches_per_epoch: Some(20),
                m_generated: 16,
                corruption_std: 0.1,
                adam: lr(3e-3),
                lr_decay: 0.995,
                bandwidths: BandwidthSet::log_spaced(1e-4, 1e2, 10).expect("static grid is valid"),
                ..TrainConfig::default()
            },
            chains: 500,
            rollout_steps: 300,
            perturbation: 1e-3,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DoublePendulumResult {
    /// Across-chain standard deviation of the lower bob's x, per step.
    pub spread: Vec<f64>,
    /// Largest distance of either bob from the pivot over all chains.
    pub max_radius: f64,
    pub reach: f64,
    pub loss: LossCurve,
}

pub fn run_double_pendulum(w: &DoublePendulumWorkload) -> Result<DoublePendulumResult> {
    let traj = simulate_double_pendulum(&w.system)?;
    let order = 2;
    let pairs = transitions_from_trajectory(&traj, StepSize::fixed(w.step_size), order, w.seed)?;
    let ds = augment_targets_with_neighbors(&pairs, w.neighbor_k);
    let spec = ModelSpec::ambient(order, w.noise_dim, w.hidden.clone());
    let mut seeds = Rng::new(w.seed);
    let (model, loss) = train_dymon(&ds, &spec, &TrainConfig { seed: seeds.fork(0).seed(), ..w.train.clone() })?;

    // a shared history taken from the data, shifted per chain by one small
    // offset applied to every state (so the implied velocity is unchanged)
    let s = w.step_size;
    let base = traj.states.select_rows(&[traj.len() / 2, traj.len() / 2 + s]);
    let d = traj.dim();
    let mut jitter = seeds.fork(1);
    let inits: Vec<Matrix> = (0..w.chains)
        .map(|_| {
            let shift: Vec<f64> = (0..d).map(|_| w.perturbation * jitter.normal()).collect();
            let mut h = base.clone();
            for row in h.data_mut().chunks_exact_mut(d) {
                for (v, o) in row.iter_mut().zip(&shift) {
                    *v += o;
                }
            }
            h
        })
        .collect();
    let chains = generate_chains(&model, &inits, w.rollout_steps, seeds.fork(2).seed(), w.threads)?;
    if chains.iter().any(|c| c.truncated) {
        return Err(Error::Numeric("double pendulum rollout produced non-finite states".into()));
    }
    let mut spread = Vec::with_capacity(w.rollout_steps);
    let mut max_radius: f64 = 0.0;
    for t in 0..w.rollout_steps {
        let xs: Vec<f64> = chains.iter().map(|c| c.trajectory.states.get(order + t, 2)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        spread.push((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt());
        for c in &chains {
            let p = c.trajectory.states.row(order + t);
            max_radius = max_radius.max(p[0].hypot(p[1])).max(p[2].hypot(p[3]));
        }
    }
    Ok(DoublePendulumResult {
        spread,
        max_radius,
        reach: w.system.lengths[0] + w.system.lengths[1],
        loss,
    })
}

/// Latent-space model of the rotating glyph with a 3-unit bottleneck.
#[derive(Clone, Debug)]
pub struct RotatingWorkload {
    pub image_px: usize,
    pub frames: usize,
    pub step_size: usize,
    pub hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for RotatingWorkload {
    fn default() -> Self {
        Self {
            image_px: 16,
            frames: 400,
            step_size: 10,
            hidden: vec![32, 32],
            encoder_hidden: vec![64],
            latent_dim: 3,
            train: TrainConfig {
                epochs: 1500,
                batch_groups: 32,
                adam: lr(3e-3),
                lr_decay: 0.998,
                corruption_std: 0.0,
                scale_mode: ScaleMode::Shared,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RotatingResult {
    pub model_mse: f64,
    pub constant_mse: f64,
    pub cycle: CycleReport,
    /// Latent codes of every training frame.
    pub latents: Matrix,
    pub loss: LossCurve,
}

pub fn run_rotating(w: &RotatingWorkload) -> Result<RotatingResult> {
    let traj = generate_rotating_sequence(w.image_px, w.frames)?;
    let pairs = transitions_from_trajectory(&traj, StepSize::fixed(w.step_size), 1, w.seed)?;
    let spec = ModelSpec::latent(
        Architecture::Latent,
        1,
        0,
        w.hidden.clone(),
        w.latent_dim,
        w.encoder_hidden.clone(),
    );
    let (model, loss) = train_dymon(&pairs, &spec, &TrainConfig { seed: w.seed, ..w.train.clone() })?;

    // held out: frames rendered half-way between training angles
    let fine = 2 * w.frames;
    let d = w.image_px * w.image_px;
    let (mut src, mut dst) = (Vec::with_capacity(w.frames * d), Vec::with_capacity(w.frames * d));
    for i in 0..w.frames {
        let t = 2 * i + 1;
        src.extend(rotating_frame(w.image_px, fine, t));
        dst.extend(rotating_frame(w.image_px, fine, t + 2 * w.step_size));
    }
    let src = Matrix::from_vec(w.frames, d, src)?;
    let dst = Matrix::from_vec(w.frames, d, dst)?;
    let pred = model.forward_batch(&src, &Matrix::zeros(w.frames, 0))?;
    let latents = model.embed(&traj.states)?;
    Ok(RotatingResult {
        model_mse: mse(&pred, &dst)?,
        constant_mse: mse(&src, &dst)?,
        cycle: latent_cycle_report(&latents),
        latents,
        loss,
    })
}
