//! CSV formats for trajectories, transition sets and result tables.
//!
//! Floats are written with 17 significant digits, which reproduces every
//! `f64` exactly on read.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dymon::numcore::Matrix;
use dymon::systems::Trajectory;
use dymon::transitions::TransitionDataset;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn open(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> CliResult<()> {
    w.flush()?;
    Ok(())
}

fn state_header(first: &[&str], d: usize) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|i| format!("x{i}")))
        .collect()
}

fn parse_cell(path: &Path, row: usize, col: &str, cell: &str) -> CliResult<f64> {
    cell.trim().parse().map_err(|_| {
        CliError::Config(format!(
            "{}: row {row}, column {col}: cannot parse {cell:?} as a number",
            path.display()
        ))
    })
}

fn check_header(path: &Path, header: &csv::StringRecord, first: &[&str]) -> CliResult<usize> {
    let ok = header.len() > first.len()
        && first.iter().zip(header.iter()).all(|(a, b)| *a == b)
        && header.iter().skip(first.len()).enumerate().all(|(i, h)| h == format!("x{i}"));
    if !ok {
        return Err(CliError::Config(format!(
            "{}: header must be {},x0,x1,...; got {:?}",
            path.display(),
            first.join(","),
            header.iter().collect::<Vec<_>>()
        )));
    }
    Ok(header.len() - first.len())
}

/// Columns `t,x0..x{d-1}`; `t = i·dt`, or the row index when `dt = 0`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let times: Vec<f64> = (0..traj.len())
        .map(|i| if traj.dt > 0.0 { i as f64 * traj.dt } else { i as f64 })
        .collect();
    write_states(path, &times, &traj.states)
}

/// Trajectory-format CSV with explicit time labels.
pub fn write_states(path: &Path, times: &[f64], states: &Matrix) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_record(state_header(&["t"], states.cols()))?;
    for (t, row) in times.iter().zip(states.iter_rows()) {
        let mut rec = vec![fmt_f64(*t)];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// States and their `t` column.
pub fn read_states(path: &Path) -> CliResult<(Vec<f64>, Matrix)> {
    let mut r = open(path)?;
    let d = check_header(path, r.headers()?, &["t"])?;
    let mut times = Vec::new();
    let mut states = Matrix::zeros(0, d);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != d + 1 {
            return Err(CliError::Config(format!(
                "{}: row {row} has {} fields, expected {}",
                path.display(),
                rec.len(),
                d + 1
            )));
        }
        times.push(parse_cell(path, row, "t", &rec[0])?);
        let vals = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, cell)| parse_cell(path, row, &format!("x{c}"), cell))
            .collect::<CliResult<Vec<f64>>>()?;
        states.push_row(&vals)?;
    }
    if times.is_empty() {
        return Err(CliError::Config(format!("{}: no data rows", path.display())));
    }
    Ok((times, states))
}

pub fn read_trajectory(path: &Path) -> CliResult<Trajectory> {
    let (times, states) = read_states(path)?;
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    Trajectory::new(states, dt.max(0.0)).map_err(CliError::from)
}

/// Columns `group_id,role,x0..`; each group lists its history rows
/// (`history0` oldest) followed by its targets.
pub fn write_transitions(path: &Path, ds: &TransitionDataset) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_record(state_header(&["group_id", "role"], ds.state_dim()))?;
    for (g, group) in ds.groups.iter().enumerate() {
        for (i, row) in group.history.iter_rows().enumerate() {
            let mut rec = vec![g.to_string(), format!("history{i}")];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        for row in group.targets.iter_rows() {
            let mut rec = vec![g.to_string(), "target".to_string()];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
    }
    finish(w)
}

pub fn read_transitions(path: &Path) -> CliResult<TransitionDataset> {
    let mut r = open(path)?;
    let d = check_header(path, r.headers()?, &["group_id", "role"])?;
    // (group id, history rows, target rows)
    let mut groups: Vec<(String, Matrix, Matrix)> = Vec::new();
    let mut order: Option<usize> = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |msg: String| CliError::Config(format!("{}: row {row}: {msg}", path.display()));
        if rec.len() != d + 2 {
            return Err(bad(format!("has {} fields, expected {}", rec.len(), d + 2)));
        }
        let vals = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(c, cell)| parse_cell(path, row, &format!("x{c}"), cell))
            .collect::<CliResult<Vec<f64>>>()?;
        let id = &rec[0];
        let role = &rec[1];
        if groups.last().is_none_or(|g| g.0 != id) {
            if groups.iter().any(|g| g.0 == id) {
                return Err(bad(format!("group {id} is not contiguous")));
            }
            groups.push((id.to_string(), Matrix::zeros(0, d), Matrix::zeros(0, d)));
        }
        let g = groups.last_mut().expect("pushed above");
        if role == "target" {
            g.2.push_row(&vals)?;
        } else if let Some(idx) = role.strip_prefix("history").and_then(|s| s.parse::<usize>().ok()) {
            if idx != g.1.rows() || g.2.rows() > 0 {
                return Err(bad(format!("role {role} out of sequence")));
            }
            g.1.push_row(&vals)?;
        } else {
            return Err(bad(format!("unknown role {role:?}")));
        }
    }
    let mut ds: Option<TransitionDataset> = None;
    for (id, history, targets) in groups {
        let k = history.rows();
        if *order.get_or_insert(k) != k || k == 0 {
            return Err(CliError::Config(format!(
                "{}: group {id} has {k} history rows, expected {}",
                path.display(),
                order.unwrap_or(0)
            )));
        }
        let set = ds.get_or_insert(TransitionDataset::new(k, d, path.display().to_string())?);
        set.push(history, targets)
            .map_err(|e| CliError::Config(format!("{}: group {id}: {e}", path.display())))?;
    }
    ds.ok_or_else(|| CliError::Config(format!("{}: no transition groups", path.display())))
}

/// A small table with a header row; cells are written verbatim.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    finish(w)
}
