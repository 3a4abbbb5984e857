use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcmarg::harness::{BackendKind, McmcConfig};
use pcmarg::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub avg_edges: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    /// Backend names: `pc`, `dp_full` or `dp_restricted(k)`.
    pub backends: Vec<String>,
    pub train: TrainConfig,
    pub mcmc: McmcConfig,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 8,
            avg_edges: 2.0,
            n_train: 100,
            n_test: 1000,
            seeds: vec![0],
            backends: vec!["dp_full".into(), "pc".into()],
            train: TrainConfig::scaled(),
            mcmc: McmcConfig::default(),
            out: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            bail!("d must be positive");
        }
        if self.n_train < 2 || self.n_test < 2 {
            bail!("n_train and n_test must be at least 2");
        }
        if self.seeds.is_empty() {
            bail!("no seeds configured");
        }
        self.backend_kinds()?;
        self.train.validate()?;
        self.mcmc.validate()?;
        Ok(())
    }

    pub fn backend_kinds(&self) -> Result<Vec<BackendKind>> {
        self.backends
            .iter()
            .map(|b| b.parse::<BackendKind>().map_err(Into::into))
            .collect()
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed-{seed}"))
    }
}
