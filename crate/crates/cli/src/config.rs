//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Every key any subcommand understands.
pub const KNOWN_KEYS: &[&str] = &[
    // paths and shared
    "input", "output", "reference", "checkpoint", "loss_output", "seed", "timings",
    // simulation
    "system", "steps", "dt", "theta0", "omega0", "g", "length",
    "theta1", "theta2", "omega1", "omega2", "mass1", "mass2", "length1", "length2",
    "gmm_weights", "gmm_means", "gmm_stds", "proposal_std", "burn_in",
    "image_px", "frames",
    // transitions
    "mode", "step_size", "step_jitter", "order", "neighbor_k",
    "diffusion_sigma", "diffusion_k", "smoothing_k",
    // model and training
    "architecture", "hidden", "noise_dim", "latent_dim", "encoder_hidden",
    "epochs", "batch_groups", "batches_per_epoch", "m_generated", "corruption_std",
    "learning_rate", "lr_decay", "bandwidth_min", "bandwidth_max", "bandwidth_count",
    "scale_mode", "recon_weight",
    // generation, evaluation, analysis
    "init", "init_from", "chains", "thin", "query", "query_stride",
    // mixture comparison
    "train_samples", "heldout_samples", "hmm_states", "hmm_iters", "kf_iters",
];

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {line}: expected `key = value`, got {content:?}")))?;
            cfg.insert(key.trim(), value.trim(), line)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn insert(&mut self, key: &str, value: &str, line: usize) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!("line {line}: unknown key {key:?}")));
        }
        if let Some(prev) = self.entries.get(key) {
            if line > 0 && prev.line > 0 {
                return Err(CliError::Config(format!(
                    "line {line}: key {key:?} already set on line {}",
                    prev.line
                )));
            }
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
        Ok(())
    }

    /// Command-line override in `key=value` form; replaces any file value.
    pub fn set(&mut self, assignment: &str) -> CliResult<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!("override: unknown key {key:?}")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    fn location(&self, key: &str) -> String {
        match self.entries.get(key) {
            Some(e) if e.line > 0 => format!("line {}: ", e.line),
            _ => String::new(),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                CliError::Config(format!("{}invalid value {v:?} for {key}", self.location(key)))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T> {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key {key:?}")))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        let Some(v) = self.str(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| {
                    CliError::Config(format!("{}invalid list item {s:?} for {key}", self.location(key)))
                })
            })
            .collect::<CliResult<Vec<T>>>()
            .map(Some)
    }

    pub fn path(&self, key: &str) -> CliResult<&Path> {
        self.str(key)
            .map(Path::new)
            .ok_or_else(|| CliError::Config(format!("missing required key {key:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let cfg = Config::parse("# header\nseed = 7\nhidden = 8, 16,8  # inline\n\nsystem=pendulum\n").unwrap();
        assert_eq!(cfg.require::<u64>("seed").unwrap(), 7);
        assert_eq!(cfg.list::<usize>("hidden").unwrap().unwrap(), vec![8, 16, 8]);
        assert_eq!(cfg.str("system"), Some("pendulum"));
        assert_eq!(cfg.get_or("epochs", 3usize).unwrap(), 3);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = Config::parse("seed = 1\n\nbogus = 2\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn bad_value_and_duplicates() {
        let cfg = Config::parse("epochs = many\n").unwrap();
        assert!(cfg.get::<usize>("epochs").unwrap_err().to_string().contains("line 1"));
        assert!(Config::parse("seed = 1\nseed = 2\n").is_err());
        assert!(Config::parse("just words\n").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let mut cfg = Config::parse("seed = 1\n").unwrap();
        cfg.set("seed=5").unwrap();
        assert_eq!(cfg.require::<u64>("seed").unwrap(), 5);
        assert!(cfg.set("nope=1").is_err());
    }
}
