use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{ConfigSampler, PoolParams};
use crate::runners::{load_matrix, ChargeMode, FailurePolicy, MatrixSource, ProcessSource, RuntimeSource};
use crate::scheduler::Budget;
use crate::tester::CapSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Backend {
    /// Simulated runs against a runtime matrix CSV.
    Matrix { path: PathBuf },
    /// Real runs: one command template per configuration, instances are the
    /// files of a directory.
    Command {
        templates: Vec<String>,
        instances: PathBuf,
        #[serde(default)]
        failure_policy: FailurePolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub sample_constant: f64,
    pub max_levels: u32,
    /// Command printing one configuration per call; without it levels are
    /// sampled from the backend's configurations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl PoolConfig {
    pub fn sampler(&self) -> ConfigSampler {
        match &self.generator {
            Some(command) => ConfigSampler::Generator {
                command: command.clone(),
            },
            None => ConfigSampler::FinitePool,
        }
    }
}

/// Everything needed to start, and later resume, a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub backend: Backend,
    pub kappa0: f64,
    pub multiplier: f64,
    pub seed: u64,
    /// Charged seconds for the matrix backend, wall-clock seconds otherwise.
    pub budget_seconds: f64,
    /// Defaults to `checkpoint.json` in the output directory.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    #[serde(default)]
    pub charge_mode: ChargeMode,
    #[serde(default)]
    pub max_cap: Option<f64>,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolConfig>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        if !(self.budget_seconds > 0.0) || self.budget_seconds.is_nan() {
            return Err(Error::invalid(
                "budget_seconds",
                format!("must be positive (got {})", self.budget_seconds),
            ));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::invalid("checkpoint_every", "must be at least 1"));
        }
        match &self.backend {
            Backend::Command { templates, .. } => {
                if self.charge_mode == ChargeMode::Resuming {
                    return Err(Error::invalid(
                        "charge_mode",
                        "real runs cannot resume; use non-resuming",
                    ));
                }
                if templates.is_empty() && self.pool.as_ref().is_none_or(|p| p.generator.is_none()) {
                    return Err(Error::invalid("command", "at least one --command is required"));
                }
            }
            Backend::Matrix { .. } => {
                if self.pool.as_ref().is_some_and(|p| p.generator.is_some()) {
                    return Err(Error::invalid("generator", "a generator needs the command backend"));
                }
            }
        }
        if let Some(p) = &self.pool {
            self.pool_params(p).validate()?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<CapSchedule> {
        CapSchedule::new(self.kappa0, self.multiplier, self.max_cap)
    }

    pub fn pool_params(&self, pool: &PoolConfig) -> PoolParams {
        PoolParams {
            schedule: CapSchedule {
                kappa0: self.kappa0,
                multiplier: self.multiplier,
                max_cap: self.max_cap,
            },
            seed: self.seed,
            sample_constant: pool.sample_constant,
            max_levels: pool.max_levels,
        }
    }

    pub fn budget(&self) -> Budget {
        match self.backend {
            Backend::Matrix { .. } => Budget::Virtual(self.budget_seconds),
            Backend::Command { .. } => Budget::WallClock(self.budget_seconds),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output.join("checkpoint.json"))
    }

    pub fn events_path(&self) -> PathBuf {
        self.output.join("events.jsonl")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output.join("report.json")
    }

    /// Makes input paths absolute so that a checkpoint can be resumed from
    /// another working directory.
    pub fn absolutize(&mut self) -> Result<()> {
        match &mut self.backend {
            Backend::Matrix { path } => *path = absolute(path)?,
            Backend::Command { instances, .. } => *instances = absolute(instances)?,
        }
        self.output = std::path::absolute(&self.output)?;
        if let Some(c) = &mut self.checkpoint {
            *c = std::path::absolute(&*c)?;
        }
        Ok(())
    }

    pub fn open_source(&self) -> Result<Box<dyn RuntimeSource>> {
        Ok(match &self.backend {
            Backend::Matrix { path } => Box::new(MatrixSource::new(load_matrix(path, self.kappa0)?, self.charge_mode)),
            Backend::Command {
                templates,
                instances,
                failure_policy,
            } => Box::new(ProcessSource::from_instance_dir(
                templates.clone(),
                instances,
                *failure_policy,
            )?),
        })
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| Error::at_path(path, e))
}
