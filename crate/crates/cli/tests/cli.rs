use std::path::Path;
use std::process::{Command, Output};

use dymon::model::{save_model, DymonModel, ModelSpec, Standardizer};

fn dymon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dymon"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn dymon")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dymon(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32) -> String {
    let out = dymon(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn set(pairs: &[&str]) -> Vec<String> {
    pairs.iter().flat_map(|p| ["--set".to_string(), p.to_string()]).collect()
}

fn run(dir: &Path, cmd: &str, pairs: &[&str]) -> String {
    let mut args = vec![cmd.to_string()];
    args.extend(set(pairs));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(dir, &refs)
}

fn run_fail(dir: &Path, cmd: &str, pairs: &[&str], code: i32) -> String {
    let mut args = vec![cmd.to_string()];
    args.extend(set(pairs));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    fails(dir, &refs, code)
}

fn metric(csv: &str, name: &str) -> f64 {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{name},")))
        .unwrap_or_else(|| panic!("metric {name} missing in {csv}"))
        .parse()
        .unwrap()
}

#[test]
fn simulate_pendulum_rows_and_determinism() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("sim.cfg");
    std::fs::write(&cfg, "# pendulum\nsystem = pendulum\nsteps = 1000\noutput = a.csv\n").unwrap();
    let summary = ok(d.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(summary.contains("1000 states"), "{summary}");
    ok(d.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--set", "output=b.csv"]);
    let a = read(d.path(), "a.csv");
    assert_eq!(a.lines().count(), 1001);
    assert!(a.lines().all(|l| l.split(',').count() == 3));
    assert_eq!(a, read(d.path(), "b.csv"));
}

#[test]
fn every_system_simulates() {
    let d = tempfile::tempdir().unwrap();
    for (sys, cols) in [("double_pendulum", 5), ("gmm_mcmc", 2), ("rotating", 257)] {
        run(d.path(), "simulate", &[&format!("system={sys}"), "steps=50", "frames=50", "output=o.csv"]);
        let text = read(d.path(), "o.csv");
        assert_eq!(text.lines().next().unwrap().split(',').count(), cols, "{sys}");
    }
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let msg = run_fail(d.path(), "simulate", &["system=teapot", "output=o.csv"], 2);
    assert!(msg.contains("pendulum, double_pendulum, gmm_mcmc, rotating"), "{msg}");
    let cfg = d.path().join("bad.cfg");
    std::fs::write(&cfg, "system = pendulum\n\ncolour = blue\n").unwrap();
    let msg = fails(d.path(), &["simulate", "--config", cfg.to_str().unwrap()], 2);
    assert!(msg.contains("line 3"), "{msg}");
    fails(d.path(), &["no-such-command"], 2);
}

#[test]
fn missing_files_exit_3() {
    let d = tempfile::tempdir().unwrap();
    run_fail(d.path(), "build-transitions", &["input=absent.csv", "output=t.csv"], 3);
    run_fail(d.path(), "generate", &["checkpoint=absent.txt", "steps=3", "init=0", "output=g.csv"], 3);
}

#[test]
fn transitions_counts_and_modes() {
    let d = tempfile::tempdir().unwrap();
    run(d.path(), "simulate", &["system=pendulum", "steps=400", "output=traj.csv"]);
    assert_eq!(read(d.path(), "traj.csv").lines().count(), 401);
    let s = run(d.path(), "build-transitions", &["input=traj.csv", "step_size=10", "output=t.csv"]);
    assert!(s.starts_with("390 groups"), "{s}");
    let text = read(d.path(), "t.csv");
    let groups: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(groups.len(), 390);

    // no augmentation: exactly one target per group
    run(d.path(), "build-transitions", &["input=traj.csv", "neighbor_k=0", "output=raw.csv"]);
    let raw = read(d.path(), "raw.csv");
    let targets = raw.lines().filter(|l| l.split(',').nth(1) == Some("target")).count();
    assert_eq!(targets, 399);

    // a point cloud whose labels are all equal has no direction
    std::fs::write(
        d.path().join("cloud.csv"),
        "t,x0\n1,0\n1,1\n1,2\n1,3\n1,4\n1,5\n",
    )
    .unwrap();
    let msg = run_fail(
        d.path(),
        "build-transitions",
        &["mode=directed", "input=cloud.csv", "diffusion_k=2", "smoothing_k=2", "output=d.csv"],
        2,
    );
    assert!(msg.contains("no later neighbors"), "{msg}");
}

fn trained_gmm(dir: &Path) {
    run(dir, "simulate", &["system=gmm_mcmc", "steps=800", "seed=2", "output=traj.csv"]);
    run(dir, "build-transitions", &["input=traj.csv", "neighbor_k=3", "output=t.csv"]);
    run(
        dir,
        "train",
        &["input=t.csv", "hidden=16,16", "noise_dim=1", "epochs=20", "learning_rate=0.003", "checkpoint=m.txt", "loss_output=loss.csv"],
    );
}

#[test]
fn train_generate_eval_pipeline() {
    let d = tempfile::tempdir().unwrap();
    trained_gmm(d.path());
    let loss = read(d.path(), "loss.csv");
    let vals: Vec<f64> = loss.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(vals.len(), 20);
    assert!(vals.last().unwrap() < vals.first().unwrap());

    run(d.path(), "generate", &["checkpoint=m.txt", "init=0.5", "steps=1000", "seed=1", "output=g1.csv"]);
    run(d.path(), "generate", &["checkpoint=m.txt", "init=0.5", "steps=1000", "seed=2", "output=g2.csv"]);
    let g1 = read(d.path(), "g1.csv");
    assert_eq!(g1.lines().count(), 1001);
    assert!(g1.lines().all(|l| l.split(',').count() == 2));
    assert_ne!(g1, read(d.path(), "g2.csv"));

    run(d.path(), "eval", &["input=g1.csv", "reference=g1.csv", "output=e.csv"]);
    let e = read(d.path(), "e.csv");
    assert_eq!(metric(&e, "emd"), 0.0);
    assert_eq!(metric(&e, "mse"), 0.0);

    let mut args = vec!["eval".to_string(), "--assert-below".into(), "0.0001".into()];
    args.extend(set(&["input=g1.csv", "reference=g2.csv", "output=e2.csv"]));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    fails(d.path(), &refs, 5);
    let mut args = vec!["eval".to_string(), "--assert-below".into(), "1000".into()];
    args.extend(set(&["input=g1.csv", "reference=g2.csv", "output=e2.csv"]));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(d.path(), &refs);

    run(d.path(), "simulate", &["system=pendulum", "steps=20", "output=p.csv"]);
    run_fail(d.path(), "eval", &["input=g1.csv", "reference=p.csv", "output=e3.csv"], 2);
}

#[test]
fn train_validation_errors() {
    let d = tempfile::tempdir().unwrap();
    run(d.path(), "simulate", &["system=gmm_mcmc", "steps=200", "output=traj.csv"]);
    run(d.path(), "build-transitions", &["input=traj.csv", "output=t.csv"]);
    run_fail(d.path(), "train", &["input=t.csv", "hidden=4", "epochs=0", "checkpoint=m.txt"], 2);
    run_fail(d.path(), "train", &["input=t.csv", "hidden=4", "order=2", "checkpoint=m.txt"], 2);
    assert!(!d.path().join("m.txt").exists());
}

#[test]
fn deterministic_generation_is_repeatable() {
    let d = tempfile::tempdir().unwrap();
    run(d.path(), "simulate", &["system=pendulum", "steps=300", "output=traj.csv"]);
    run(d.path(), "build-transitions", &["input=traj.csv", "order=2", "output=t.csv"]);
    run(d.path(), "train", &["input=t.csv", "hidden=8,16,8", "order=2", "epochs=5", "checkpoint=m.txt"]);
    let init = ["init=0.84,-0.54;0.83,-0.55"];
    for out in ["a.csv", "b.csv"] {
        run(d.path(), "generate", &["checkpoint=m.txt", init[0], "steps=50", &format!("output={out}")]);
    }
    assert_eq!(read(d.path(), "a.csv"), read(d.path(), "b.csv"));
}

#[test]
fn jacobian_exact_matches_fd_and_zero_model() {
    let d = tempfile::tempdir().unwrap();
    trained_gmm(d.path());
    let q = "query=-4;-1;0.3;2.5";
    run(d.path(), "jacobian", &["checkpoint=m.txt", q, "output=j.csv"]);
    ok(d.path(), &["jacobian", "--method", "fd", "--set", "checkpoint=m.txt", "--set", q, "--set", "output=jfd.csv"]);
    let parse = |name: &str| -> Vec<f64> {
        read(d.path(), name).lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect()
    };
    let (a, b) = (parse("j.csv"), parse("jfd.csv"));
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-4 * y.abs().max(1e-2), "{x} vs {y}");
    }

    // a model whose weights are all zero has zero velocity everywhere
    let st = Standardizer::new(vec![0.5, -1.0], vec![2.0, 0.5]).unwrap();
    let mut m = DymonModel::new(&ModelSpec::ambient(1, 0, vec![5]), 2, st, 3).unwrap();
    let zeros = vec![0.0; m.transition.to_flat().len()];
    m.transition.set_flat(&zeros).unwrap();
    save_model(&m, d.path().join("zero.txt")).unwrap();
    run(d.path(), "jacobian", &["checkpoint=zero.txt", "query=1,2;-3,0.5", "output=z.csv"]);
    let z = read(d.path(), "z.csv");
    assert_eq!(z.lines().count(), 5);
    for line in z.lines().skip(1) {
        for v in line.split(',').skip(2) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn compare_gmm_skip_and_reproducibility() {
    let d = tempfile::tempdir().unwrap();
    let small = [
        "train_samples=3000", "heldout_samples=3000", "epochs=2", "batches_per_epoch=2", "hmm_iters=5", "timings=false",
    ];
    let mut args: Vec<String> = vec!["compare-gmm".into(), "--skip".into(), "kf".into()];
    args.extend(set(&small));
    args.extend(set(&["output=a.csv"]));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(d.path(), &refs);
    let a = read(d.path(), "a.csv");
    assert!(a.starts_with("method,emd,train_seconds,sample_seconds\n"));
    let methods: Vec<&str> = a.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["dymon", "hmm"]);

    let last = refs.len() - 1;
    let mut again = refs.clone();
    again[last] = "output=b.csv";
    ok(d.path(), &again);
    assert_eq!(a, read(d.path(), "b.csv"));
}
