//! Subcommand implementations. Each returns a human-readable summary.

use std::fmt::Write as _;

use dymon::benchmarks::{emd_1d, latent_cycle_report, mse};
use dymon::mmd::BandwidthSet;
use dymon::model::{
    generate_chains, jacobian, jacobian_fd, load_model, save_model, train_dymon, Architecture, DymonModel,
    ModelSpec, ScaleMode, TrainConfig,
};
use dymon::numcore::{AdamConfig, Matrix, Rng};
use dymon::systems::{
    generate_rotating_sequence, rotating_frame, sample_gmm_metropolis, simulate_double_pendulum,
    simulate_pendulum, DoublePendulum, GmmComponent, GmmSpec, Pendulum, Trajectory,
};
use dymon::transitions::{
    augment_targets_with_neighbors, directed_diffusion_transitions, transitions_from_trajectory, StepSize,
    TimePointCloud,
};

use crate::config::Config;
use crate::csvio::{fmt_f64, read_states, read_trajectory, read_transitions, write_states, write_table, write_trajectory, write_transitions};
use crate::error::{CliError, CliResult};
use crate::workloads::{run_gmm_comparison, GmmWorkload};

pub const SYSTEMS: &[&str] = &["pendulum", "double_pendulum", "gmm_mcmc", "rotating"];

/// Worker threads for chain generation, from `DYMON_THREADS` (default 1).
pub fn thread_count() -> usize {
    std::env::var("DYMON_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(1)
}

fn gmm_spec(cfg: &Config) -> CliResult<GmmSpec> {
    let means: Option<Vec<f64>> = cfg.list("gmm_means")?;
    let Some(means) = means else {
        return Ok(GmmSpec::three_mode());
    };
    let k = means.len();
    let weights = cfg.list("gmm_weights")?.unwrap_or_else(|| vec![1.0 / k as f64; k]);
    let stds = cfg.list("gmm_stds")?.unwrap_or_else(|| vec![1.0; k]);
    if weights.len() != k || stds.len() != k {
        return Err(CliError::Config(format!(
            "gmm_weights, gmm_means and gmm_stds need the same length ({k})"
        )));
    }
    let comps = (0..k)
        .map(|i| GmmComponent {
            weight: weights[i],
            mean: means[i],
            std: stds[i],
        })
        .collect();
    Ok(GmmSpec::new(comps)?)
}

pub fn cmd_simulate(cfg: &Config) -> CliResult<String> {
    let system: String = cfg.require("system")?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let traj = match system.as_str() {
        "pendulum" => {
            let d = Pendulum::default();
            simulate_pendulum(&Pendulum {
                theta0: cfg.get_or("theta0", d.theta0)?,
                omega0: cfg.get_or("omega0", d.omega0)?,
                g: cfg.get_or("g", d.g)?,
                length: cfg.get_or("length", d.length)?,
                dt: cfg.get_or("dt", d.dt)?,
                steps: cfg.get_or("steps", d.steps)?,
            })?
        }
        "double_pendulum" => {
            let d = DoublePendulum::default();
            simulate_double_pendulum(&DoublePendulum {
                angles0: [cfg.get_or("theta1", d.angles0[0])?, cfg.get_or("theta2", d.angles0[1])?],
                omegas0: [cfg.get_or("omega1", d.omegas0[0])?, cfg.get_or("omega2", d.omegas0[1])?],
                masses: [cfg.get_or("mass1", d.masses[0])?, cfg.get_or("mass2", d.masses[1])?],
                lengths: [cfg.get_or("length1", d.lengths[0])?, cfg.get_or("length2", d.lengths[1])?],
                g: cfg.get_or("g", d.g)?,
                dt: cfg.get_or("dt", d.dt)?,
                steps: cfg.get_or("steps", d.steps)?,
            })?
        }
        "gmm_mcmc" => sample_gmm_metropolis(
            &gmm_spec(cfg)?,
            cfg.get_or("steps", 50_000)?,
            cfg.get_or("proposal_std", 2.5)?,
            cfg.get_or("burn_in", 1_000)?,
            seed,
        )?,
        "rotating" => {
            let px: usize = cfg.get_or("image_px", 16)?;
            let frames: usize = cfg.get_or("frames", 400)?;
            let steps: usize = cfg.get_or("steps", frames)?;
            // validates the geometry
            generate_rotating_sequence(px, frames.max(16))?;
            if steps == 0 {
                return Err(CliError::Config("steps must be at least 1".into()));
            }
            let mut data = Vec::with_capacity(steps * px * px);
            for t in 0..steps {
                data.extend(rotating_frame(px, frames, t));
            }
            Trajectory::new(Matrix::from_vec(steps, px * px, data)?, 0.0)?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown system {other:?}; valid options: {}",
                SYSTEMS.join(", ")
            )))
        }
    };
    write_trajectory(cfg.path("output")?, &traj)?;
    Ok(format!(
        "simulated {system}: {} states, {} dims, seed {seed}",
        traj.len(),
        traj.dim()
    ))
}

pub fn cmd_build_transitions(cfg: &Config) -> CliResult<String> {
    let input = cfg.path("input")?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let mode: String = cfg.get_or("mode", "trajectory".to_string())?;
    let ds = match mode.as_str() {
        "trajectory" => {
            let traj = read_trajectory(input)?;
            let step = StepSize::jittered(cfg.get_or("step_size", 1)?, cfg.get_or("step_jitter", 0)?);
            transitions_from_trajectory(&traj, step, cfg.get_or("order", 1)?, seed)?
        }
        "directed" => {
            let (times, states) = read_states(input)?;
            let cloud = TimePointCloud::new(states, times)?;
            directed_diffusion_transitions(
                &cloud,
                cfg.get_or("diffusion_sigma", 1.0)?,
                cfg.get_or("diffusion_k", 10)?,
                cfg.get_or("smoothing_k", 5)?,
            )?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown mode {other:?}; valid options: trajectory, directed"
            )))
        }
    };
    let k: usize = cfg.get_or("neighbor_k", 0)?;
    let ds = if k > 0 { augment_targets_with_neighbors(&ds, k) } else { ds };
    write_transitions(cfg.path("output")?, &ds)?;
    Ok(format!("{} groups, mean |Y_x| {:.3}", ds.len(), ds.mean_targets()))
}

/// Training hyperparameters from the config, with library defaults.
pub fn train_config(cfg: &Config) -> CliResult<TrainConfig> {
    let d = TrainConfig::default();
    let bandwidths = if cfg.contains("bandwidth_min") || cfg.contains("bandwidth_max") || cfg.contains("bandwidth_count") {
        BandwidthSet::log_spaced(
            cfg.get_or("bandwidth_min", 1e-6)?,
            cfg.get_or("bandwidth_max", 1e6)?,
            cfg.get_or("bandwidth_count", 19)?,
        )?
    } else {
        d.bandwidths.clone()
    };
    let scale_mode = match cfg.str("scale_mode").unwrap_or("per_dimension") {
        "per_dimension" => ScaleMode::PerDimension,
        "shared" => ScaleMode::Shared,
        other => {
            return Err(CliError::Config(format!(
                "unknown scale_mode {other:?}; valid options: per_dimension, shared"
            )))
        }
    };
    let tc = TrainConfig {
        epochs: cfg.get_or("epochs", d.epochs)?,
        batch_groups: cfg.get_or("batch_groups", d.batch_groups)?,
        batches_per_epoch: cfg.get("batches_per_epoch")?,
        m_generated: cfg.get_or("m_generated", d.m_generated)?,
        corruption_std: cfg.get_or("corruption_std", d.corruption_std)?,
        adam: AdamConfig {
            learning_rate: cfg.get_or("learning_rate", d.adam.learning_rate)?,
            ..d.adam
        },
        lr_decay: cfg.get_or("lr_decay", d.lr_decay)?,
        bandwidths,
        scale_mode,
        recon_weight: cfg.get_or("recon_weight", d.recon_weight)?,
        seed: cfg.get_or("seed", d.seed)?,
    };
    tc.validate()?;
    Ok(tc)
}

pub fn model_spec(cfg: &Config, order: usize) -> CliResult<ModelSpec> {
    let arch: Architecture = cfg.get_or("architecture", Architecture::Ambient)?;
    let hidden: Vec<usize> = cfg
        .list("hidden")?
        .ok_or_else(|| CliError::Config("missing required key \"hidden\"".into()))?;
    let noise_dim = cfg.get_or("noise_dim", 0)?;
    if arch.uses_autoencoder() {
        Ok(ModelSpec::latent(
            arch,
            order,
            noise_dim,
            hidden,
            cfg.require("latent_dim")?,
            cfg.list("encoder_hidden")?.unwrap_or_default(),
        ))
    } else {
        Ok(ModelSpec::ambient(order, noise_dim, hidden))
    }
}

pub fn cmd_train(cfg: &Config) -> CliResult<String> {
    let ds = read_transitions(cfg.path("input")?)?;
    if let Some(order) = cfg.get::<usize>("order")? {
        if order != ds.order() {
            return Err(CliError::Config(format!(
                "order = {order} but the transitions file has order {}",
                ds.order()
            )));
        }
    }
    let spec = model_spec(cfg, ds.order())?;
    let tc = train_config(cfg)?;
    let checkpoint = cfg.path("checkpoint")?;
    let (model, curve) = train_dymon(&ds, &spec, &tc)?;
    save_model(&model, checkpoint)?;
    let loss_path = match cfg.str("loss_output") {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let mut p = checkpoint.as_os_str().to_owned();
            p.push(".loss.csv");
            p.into()
        }
    };
    let rows: Vec<Vec<String>> = (0..curve.len())
        .map(|e| vec![e.to_string(), fmt_f64(curve.mmd[e]), fmt_f64(curve.recon[e])])
        .collect();
    write_table(&loss_path, &["epoch", "mmd_loss", "recon_loss"], &rows)?;
    Ok(format!(
        "trained {} epochs on {} groups; mmd loss {:.6} -> {:.6}",
        curve.len(),
        ds.len(),
        curve.first().unwrap_or(f64::NAN),
        curve.last().unwrap_or(f64::NAN)
    ))
}

/// Parses `a,b;c,d` into rows of `width` values.
fn parse_rows(text: &str, width: usize, key: &str) -> CliResult<Vec<Vec<f64>>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let vals = item
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?} as a number")))
                })
                .collect::<CliResult<Vec<f64>>>()?;
            if vals.len() != width {
                return Err(CliError::Config(format!(
                    "{key}: expected {width} values per entry, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        })
        .collect()
}

fn load(cfg: &Config) -> CliResult<DymonModel> {
    let path = cfg.path("checkpoint")?;
    if !path.exists() {
        return Err(CliError::Io(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(load_model(path)?)
}

pub fn cmd_generate(cfg: &Config) -> CliResult<String> {
    let model = load(cfg)?;
    let (k, d) = (model.order, model.state_dim);
    let steps: usize = cfg.require("steps")?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let n_chains: usize = cfg.get_or("chains", 1)?;
    let thin: usize = cfg.get_or("thin", 1)?;
    if n_chains == 0 || thin == 0 {
        return Err(CliError::Config("chains and thin must be at least 1".into()));
    }
    let inits: Vec<Matrix> = if let Some(text) = cfg.str("init") {
        // all states of one history, oldest first, separated by `;`
        let rows = parse_rows(text, d, "init")?;
        if rows.len() != k {
            return Err(CliError::Config(format!("init must list {k} states, got {}", rows.len())));
        }
        vec![Matrix::from_rows(&rows)?; n_chains]
    } else if cfg.contains("init_from") {
        let data = read_trajectory(cfg.path("init_from")?)?;
        if data.dim() != d || data.len() < k {
            return Err(CliError::Config(format!(
                "init_from needs at least {k} states of dimension {d}"
            )));
        }
        let mut rng = Rng::new(seed ^ 0x1417);
        (0..n_chains)
            .map(|_| {
                let start = rng.below(data.len() - k + 1);
                data.states.select_rows(&(start..start + k).collect::<Vec<_>>())
            })
            .collect()
    } else {
        return Err(CliError::Config("generate needs `init` or `init_from`".into()));
    };
    let chains = generate_chains(&model, &inits, steps, seed, thread_count())?;
    let mut out = Matrix::zeros(0, d);
    for (i, c) in chains.iter().enumerate() {
        if c.truncated {
            return Err(CliError::Numeric(format!(
                "chain {i} produced a non-finite state after {} steps",
                c.trajectory.len() - k
            )));
        }
        let gen = c.generated(k);
        for row in gen.iter_rows().step_by(thin) {
            out.push_row(row)?;
        }
    }
    let times: Vec<f64> = (0..out.rows()).map(|i| i as f64).collect();
    write_states(cfg.path("output")?, &times, &out)?;
    Ok(format!(
        "generated {} chain(s) of {steps} steps; wrote {} states",
        chains.len(),
        out.rows()
    ))
}

pub fn cmd_eval(cfg: &Config, assert_below: Option<f64>) -> CliResult<String> {
    let (_, x) = read_states(cfg.path("input")?)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let mut metrics: Vec<(String, f64)> = Vec::new();
    let mut primary = None;
    if cfg.contains("reference") {
        let (_, y) = read_states(cfg.path("reference")?)?;
        if x.cols() != y.cols() {
            return Err(CliError::Config(format!(
                "incompatible shapes: input has {} columns, reference {}",
                x.cols(),
                y.cols()
            )));
        }
        if x.cols() == 1 {
            let v = emd_1d(x.data(), y.data(), seed)?;
            metrics.push(("emd".into(), v));
            primary = Some(("emd", v));
        }
        if x.shape() == y.shape() {
            let v = mse(&x, &y)?;
            metrics.push(("mse".into(), v));
            primary = primary.or(Some(("mse", v)));
        }
        if primary.is_none() {
            return Err(CliError::Config(format!(
                "incompatible shapes {:?} and {:?}: EMD needs 1-D samples, MSE matched frames",
                x.shape(),
                y.shape()
            )));
        }
    }
    if x.cols() == 3 {
        let rep = latent_cycle_report(&x);
        metrics.push(("is_single_cycle".into(), if rep.is_single_cycle { 1.0 } else { 0.0 }));
        metrics.push(("components".into(), rep.components as f64));
        for (deg, count) in rep.degree_histogram.iter().enumerate() {
            metrics.push((format!("degree{deg}"), *count as f64));
        }
        metrics.push(("circularity_residual".into(), rep.residual));
    }
    if metrics.is_empty() {
        return Err(CliError::Config(
            "nothing to evaluate: give a reference file or a 3-column latent dump".into(),
        ));
    }
    let rows: Vec<Vec<String>> = metrics.iter().map(|(k, v)| vec![k.clone(), fmt_f64(*v)]).collect();
    write_table(cfg.path("output")?, &["metric", "value"], &rows)?;
    let mut summary = String::new();
    for (k, v) in &metrics {
        let _ = writeln!(summary, "{k} = {v:.6}");
    }
    if let Some(limit) = assert_below {
        let (name, v) = primary
            .ok_or_else(|| CliError::Config("--assert-below needs a reference to compute EMD or MSE".into()))?;
        if !(v < limit) {
            return Err(CliError::Assertion(format!("{name} = {v:.6} is not below {limit}")));
        }
    }
    Ok(summary.trim_end().to_string())
}

pub fn cmd_jacobian(cfg: &Config, finite_differences: bool) -> CliResult<String> {
    let model = load(cfg)?;
    let (k, d) = (model.order, model.state_dim);
    let queries: Vec<Matrix> = if let Some(text) = cfg.str("query") {
        parse_rows(text, k * d, "query")?
            .into_iter()
            .map(|r| Matrix::from_vec(k, d, r))
            .collect::<dymon::Result<_>>()?
    } else if cfg.contains("input") {
        let traj = read_trajectory(cfg.path("input")?)?;
        if traj.dim() != d {
            return Err(CliError::Config(format!(
                "query file has dimension {}, model expects {d}",
                traj.dim()
            )));
        }
        let stride: usize = cfg.get_or("query_stride", 1)?;
        if stride == 0 {
            return Err(CliError::Config("query_stride must be at least 1".into()));
        }
        (0..traj.len().saturating_sub(k - 1))
            .step_by(stride)
            .map(|s| traj.states.select_rows(&(s..s + k).collect::<Vec<_>>()))
            .collect()
    } else {
        return Err(CliError::Config("jacobian needs `query` or `input`".into()));
    };
    if queries.is_empty() {
        return Err(CliError::Config("no query points".into()));
    }
    let mut header = vec!["point".to_string(), "row".to_string()];
    header.extend((0..d).map(|c| format!("c{c}")));
    let mut rows = Vec::with_capacity(queries.len() * d);
    for (p, q) in queries.iter().enumerate() {
        let j = if finite_differences {
            jacobian_fd(&model, q)?
        } else {
            jacobian(&model, q)?
        };
        for r in 0..d {
            let mut rec = vec![p.to_string(), r.to_string()];
            rec.extend(j.row(r).iter().map(|v| fmt_f64(*v)));
            rows.push(rec);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(cfg.path("output")?, &header, &rows)?;
    Ok(format!(
        "wrote {} Jacobian(s) of size {d}x{d} ({})",
        queries.len(),
        if finite_differences { "finite differences" } else { "exact" }
    ))
}

/// Mixture-comparison workload from config keys (defaults otherwise).
pub fn gmm_workload(cfg: &Config) -> CliResult<GmmWorkload> {
    let d = GmmWorkload::default();
    let mut train = d.train.clone();
    let user = train_config(cfg)?;
    // only keys actually present override the workload defaults
    macro_rules! take {
        ($key:literal, $field:ident) => {
            if cfg.contains($key) {
                train.$field = user.$field.clone();
            }
        };
    }
    take!("epochs", epochs);
    take!("batch_groups", batch_groups);
    take!("batches_per_epoch", batches_per_epoch);
    take!("m_generated", m_generated);
    take!("corruption_std", corruption_std);
    take!("lr_decay", lr_decay);
    take!("scale_mode", scale_mode);
    if cfg.contains("learning_rate") {
        train.adam = user.adam;
    }
    if cfg.contains("bandwidth_min") || cfg.contains("bandwidth_max") || cfg.contains("bandwidth_count") {
        train.bandwidths = user.bandwidths.clone();
    }
    Ok(GmmWorkload {
        spec: gmm_spec(cfg)?,
        train_samples: cfg.get_or("train_samples", d.train_samples)?,
        heldout_samples: cfg.get_or("heldout_samples", d.heldout_samples)?,
        proposal_std: cfg.get_or("proposal_std", d.proposal_std)?,
        burn_in: cfg.get_or("burn_in", d.burn_in)?,
        thin: cfg.get_or("thin", d.thin)?,
        neighbor_k: cfg.get_or("neighbor_k", d.neighbor_k)?,
        hidden: cfg.list("hidden")?.unwrap_or(d.hidden),
        noise_dim: cfg.get_or("noise_dim", d.noise_dim)?,
        train,
        chains: cfg.get_or("chains", d.chains)?,
        hmm_states: cfg.get_or("hmm_states", d.hmm_states)?,
        hmm_iters: cfg.get_or("hmm_iters", d.hmm_iters)?,
        kf_iters: cfg.get_or("kf_iters", d.kf_iters)?,
        skip_hmm: false,
        skip_kf: false,
        threads: thread_count(),
        seed: cfg.get_or("seed", d.seed)?,
    })
}

pub fn cmd_compare_gmm(cfg: &Config, skip: &[String]) -> CliResult<String> {
    let mut w = gmm_workload(cfg)?;
    for s in skip {
        match s.as_str() {
            "kf" => w.skip_kf = true,
            "hmm" => w.skip_hmm = true,
            other => {
                return Err(CliError::Config(format!("--skip accepts hmm or kf, got {other:?}")))
            }
        }
    }
    let timings: bool = cfg.get_or("timings", true)?;
    let result = run_gmm_comparison(&w)?;
    let time = |v: f64| fmt_f64(if timings { v } else { 0.0 });
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| vec![r.name.to_string(), fmt_f64(r.emd), time(r.train_seconds), time(r.sample_seconds)])
        .collect();
    write_table(cfg.path("output")?, &["method", "emd", "train_seconds", "sample_seconds"], &rows)?;
    let mut summary = String::from("method  emd       train_s   sample_s");
    for r in &result.rows {
        let _ = write!(
            summary,
            "\n{:<7} {:<9.4} {:<9.2} {:.2}",
            r.name, r.emd, r.train_seconds, r.sample_seconds
        );
    }
    Ok(summary)
}
