//! Experiment specification: JSON file plus command-line overrides, with
//! the flags winning. Seeds fully determine every random stream, so a
//! replayed spec reproduces its outputs byte for byte.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spg_core::ensemble::EnsembleParams;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Gen,
    Dyn,
    Bp,
    Musweep,
    Maxsum,
    Decimate,
    Mirror,
    MirrorValidate,
    Enumerate,
    Quenched,
    FigureData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynAlgo {
    Greedy,
    Br,
    Brb,
    Gbr,
    Ad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignOpt {
    Max,
    Min,
}

/// Per-task options. One flat bag; tasks read what they need and unknown
/// JSON keys are rejected outright.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskOptions {
    pub algo: Option<DynAlgo>,
    pub gamma: Option<f64>,
    pub gamma_grid: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub steps: Option<usize>,
    pub burn_in: Option<usize>,
    pub mu: Option<f64>,
    pub mu_from: Option<f64>,
    pub mu_to: Option<f64>,
    pub mu_step: Option<f64>,
    pub both_directions: Option<bool>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
    pub max_iter: Option<usize>,
    pub sign: Option<SignOpt>,
    pub rho: Option<f64>,
    pub restarts: Option<usize>,
    pub samples: Option<usize>,
    pub exhaustive: Option<bool>,
    pub budget: Option<f64>,
    /// Fraction of the per-instance value bound that counts as a "good"
    /// equilibrium in figure data.
    pub good_threshold: Option<f64>,
    /// figure-data: which curve family to emit.
    pub kind: Option<String>,
    /// figure-data: directory holding the task outputs to digest.
    pub input: Option<PathBuf>,
    /// Histogram bins for figure data.
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub task: Task,
    #[serde(default)]
    pub ensemble: Option<EnsembleParams>,
    #[serde(default)]
    pub instance_file: Option<PathBuf>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub options: TaskOptions,
}

fn default_instances() -> usize {
    1
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading spec {}", path.display()))?;
        let spec: ExperimentSpec = serde_json::from_str(&text).context("parsing spec JSON")?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task != Task::FigureData && self.ensemble.is_none() && self.instance_file.is_none()
        {
            bail!("either an ensemble or an instance file must be given");
        }
        if let Some(e) = &self.ensemble {
            e.validate().map_err(|err| anyhow::anyhow!("{err}"))?;
        }
        if self.instances == 0 {
            bail!("instance count must be positive");
        }
        Ok(())
    }
}
