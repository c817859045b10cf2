//! Experiment configuration: TOML files, dotted-path overrides, validation.
//!
//! A config file has four sections, all optional — omitted keys take the
//! benchmark defaults:
//!
//! ```toml
//! [env]
//! kind = "deep_sea"        # or "binary_tree"
//! size = 10                # Deep Sea N or tree depth L
//! stochastic = false
//!
//! [agent]                  # any TduConfig field
//! beta = 1.0
//! prior_scale = 3.0
//!
//! [run]
//! variant = "tdu"          # tdu | bdqn | qu | q_ucb | qex | cts | tdu_bandit
//! seeds = [0, 1, 2, 3, 4]
//! episodes = 0             # 0 = min(2^size, budget_ceiling)
//! budget_ceiling = 100000
//! stop_on_solve = true
//! output_dir = "out"
//! workers = 0              # 0 = one per core
//!
//! [sweep]                  # grid axes; empty = just the base setting
//! sizes = [6, 8, 10]
//! betas = [0.0, 1.0]
//! lambdas = [3.0]
//! variants = ["tdu", "bdqn"]
//! ```
//!
//! Command-line overrides are `section.key=value` with TOML-typed values,
//! e.g. `--set agent.beta=5` or `--set run.seeds=[0,1]`. Unknown keys are
//! rejected. A relative `output_dir` is resolved against the
//! `TDU_OUTPUT_ROOT` environment variable when it is set.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agents::{TduConfig, Variant};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    DeepSea,
    BinaryTree,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::DeepSea => "deep_sea",
            EnvKind::BinaryTree => "binary_tree",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Deep Sea grid size N or Binary Tree depth L.
    pub size: usize,
    /// Deep Sea only: invert executed moves with probability 1/N.
    pub stochastic: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            kind: EnvKind::DeepSea,
            size: 10,
            stochastic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variant: String,
    pub seeds: Vec<u64>,
    /// Episode budget; 0 means `min(2^size, budget_ceiling)`.
    pub episodes: u64,
    pub budget_ceiling: u64,
    /// End a run early once the solve threshold is crossed.
    pub stop_on_solve: bool,
    pub output_dir: PathBuf,
    /// Worker threads for sweeps; 0 uses one per core. Pool size never
    /// changes results, only wall-clock time.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: "tdu".to_string(),
            seeds: vec![0, 1, 2, 3, 4],
            episodes: 0,
            budget_ceiling: 100_000,
            stop_on_solve: true,
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

/// Grid axes for sweeps. An empty axis means "use the base config value".
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: TduConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// Episode budget for a given problem size.
    pub fn budget_for(&self, size: usize) -> u64 {
        if self.run.episodes > 0 {
            return self.run.episodes;
        }
        let pow = if size >= 63 { u64::MAX } else { 1u64 << size };
        pow.min(self.run.budget_ceiling)
    }

    /// Output directory, resolved against `TDU_OUTPUT_ROOT` if relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if self.run.output_dir.is_absolute() {
            return self.run.output_dir.clone();
        }
        match std::env::var_os("TDU_OUTPUT_ROOT") {
            Some(root) => PathBuf::from(root).join(&self.run.output_dir),
            None => self.run.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.size < 2 {
            return Err(Error::config("env.size must be at least 2"));
        }
        if self.env.stochastic && self.env.kind != EnvKind::DeepSea {
            return Err(Error::config("only deep_sea has a stochastic variant"));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::config("run.seeds must not be empty"));
        }
        if self.run.budget_ceiling == 0 {
            return Err(Error::config("run.budget_ceiling must be at least 1"));
        }
        for v in std::iter::once(&self.run.variant).chain(self.sweep.variants.iter()) {
            v.parse::<Variant>()
                .map_err(|e| Error::config(e.to_string()))?;
        }
        for &s in &self.sweep.sizes {
            if s < 2 {
                return Err(Error::config("sweep.sizes entries must be at least 2"));
            }
        }
        self.agent
            .validate(1)
            .map_err(|e| Error::config(e.to_string()))?;
        Ok(())
    }
}

/// Parse a config from TOML text plus `section.key=value` overrides.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::config(format!("config parse error: {e}")))?;
    for ov in overrides {
        apply_override(&mut table, ov)?;
    }
    let cfg: ExperimentConfig = table.try_into().map_err(|e| Error::config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Load a config file (or defaults if `path` is `None`) and apply overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{spec}' is not key=value")))?;
    let parsed: toml::Value = format!("v = {value}")
        .parse::<toml::Table>()
        .map_err(|e| Error::config(format!("override value '{value}': {e}")))?
        .remove("v")
        .expect("just inserted");
    let mut segments = path.trim().split('.').peekable();
    let mut cur = table;
    loop {
        let seg = segments
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::config(format!("override '{spec}' has an empty key")))?;
        if segments.peek().is_none() {
            cur.insert(seg.to_string(), parsed);
            return Ok(());
        }
        cur = cur
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override '{spec}' descends into a non-table")))?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_benchmark_defaults() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg.agent.discount, 0.99);
        assert_eq!(cfg.agent.batch_size, 32);
        assert_eq!(cfg.agent.ensemble_total(), 20);
        assert_eq!(cfg.agent.learning_rate, 0.001);
        assert_eq!(cfg.agent.replay_capacity, 10_000);
        assert_eq!(cfg.agent.mask_prob, 1.0);
        assert_eq!(cfg.agent.target_update_period, 4);
        assert_eq!(cfg.agent.beta, 1.0);
        assert_eq!(cfg.agent.prior_scale, 3.0);
        assert_eq!(cfg.env.kind, EnvKind::DeepSea);
    }

    #[test]
    fn file_values_and_overrides_merge() {
        let text = "[agent]\nbeta = 0.5\n[env]\nsize = 6\n";
        let cfg = parse_config(text, &["agent.beta=5".to_string()]).unwrap();
        assert_eq!(cfg.agent.beta, 5.0);
        assert_eq!(cfg.env.size, 6);
        let cfg = parse_config(text, &["run.seeds=[1, 2]".to_string()]).unwrap();
        assert_eq!(cfg.run.seeds, vec![1, 2]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("[agent]\nbetaa = 1.0\n", &[]).is_err());
        assert!(parse_config("", &["agent.nope=1".to_string()]).is_err());
        assert!(parse_config("[nonsense]\nx = 1\n", &[]).is_err());
    }

    #[test]
    fn malformed_overrides_rejected() {
        assert!(parse_config("", &["agent.beta".to_string()]).is_err());
        assert!(parse_config("", &["agent.beta=".to_string()]).is_err());
        assert!(parse_config("", &["=3".to_string()]).is_err());
    }

    #[test]
    fn validation_catches_bad_settings() {
        assert!(parse_config("[env]\nsize = 1\n", &[]).is_err());
        assert!(parse_config("[run]\nvariant = \"nope\"\n", &[]).is_err());
        assert!(parse_config("[run]\nseeds = []\n", &[]).is_err());
        assert!(parse_config("[env]\nkind = \"binary_tree\"\nstochastic = true\n", &[]).is_err());
        assert!(parse_config("[agent]\ndiscount = 1.5\n", &[]).is_err());
    }

    #[test]
    fn budget_is_two_to_the_n_capped() {
        let cfg = parse_config("[env]\nsize = 6\n", &[]).unwrap();
        assert_eq!(cfg.budget_for(6), 64);
        assert_eq!(cfg.budget_for(30), 100_000);
        let cfg = parse_config("[run]\nepisodes = 17\n", &[]).unwrap();
        assert_eq!(cfg.budget_for(6), 17);
    }
}
