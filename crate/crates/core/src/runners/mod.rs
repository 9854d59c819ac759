//! Execution backends and the per-tester instance stream.

mod matrix;
mod process;
mod stream;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SourceError;

pub use matrix::{load_matrix, run_simulated, MatrixSource, RuntimeMatrix};
pub use process::{expand_template, run_process, FailurePolicy, ProcessSource};
pub use stream::{derive_seed, InstanceDraw, InstanceStream};

/// How a rerun at a larger cap is billed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChargeMode {
    /// Every attempt starts from scratch and pays its full capped runtime.
    #[default]
    NonResuming,
    /// An attempt continues the previous one and pays only the increment.
    Resuming,
}

impl fmt::Display for ChargeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChargeMode::NonResuming => "non-resuming",
            ChargeMode::Resuming => "resuming",
        })
    }
}

impl FromStr for ChargeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "non-resuming" => Ok(ChargeMode::NonResuming),
            "resuming" => Ok(ChargeMode::Resuming),
            other => Err(format!("unknown charge mode {other:?}")),
        }
    }
}

/// Outcome of a single capped run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// `min(R(i, j), cap)` in seconds.
    pub measured: f64,
    pub completed: bool,
    /// Time billed for this attempt, in seconds.
    pub charged: f64,
    /// The target exited with a nonzero status.
    pub failed: bool,
}

/// Answers "run configuration `i` on instance `j` with cap `θ`".
pub trait RuntimeSource {
    fn num_configs(&self) -> usize;

    /// Size of the instance pool the streams draw from.
    fn num_instances(&self) -> usize;

    fn config_label(&self, config: usize) -> String {
        config.to_string()
    }

    /// Simulated sources are budgeted in charged seconds, real ones in wall
    /// clock.
    fn is_simulated(&self) -> bool {
        false
    }

    /// `prev_cap` is the cap of the previous attempt on this instance, or 0.
    fn run(&mut self, config: usize, instance: InstanceDraw, cap: f64, prev_cap: f64)
        -> Result<RunResult, SourceError>;

    /// Registers a new configuration described by `spec`.
    fn add_config(&mut self, _spec: &str) -> Result<usize, SourceError> {
        Err(SourceError::Unsupported("adding configurations"))
    }
}

impl<S: RuntimeSource + ?Sized> RuntimeSource for &mut S {
    fn num_configs(&self) -> usize {
        (**self).num_configs()
    }

    fn num_instances(&self) -> usize {
        (**self).num_instances()
    }

    fn config_label(&self, config: usize) -> String {
        (**self).config_label(config)
    }

    fn is_simulated(&self) -> bool {
        (**self).is_simulated()
    }

    fn run(
        &mut self,
        config: usize,
        instance: InstanceDraw,
        cap: f64,
        prev_cap: f64,
    ) -> Result<RunResult, SourceError> {
        (**self).run(config, instance, cap, prev_cap)
    }

    fn add_config(&mut self, spec: &str) -> Result<usize, SourceError> {
        (**self).add_config(spec)
    }
}

/// View of a source restricted to a subset of its configurations; local
/// index `i` maps to `configs[i]`.
pub struct Subset<'a, S: ?Sized> {
    inner: &'a mut S,
    configs: &'a [usize],
}

impl<'a, S: RuntimeSource + ?Sized> Subset<'a, S> {
    pub fn new(inner: &'a mut S, configs: &'a [usize]) -> Self {
        Self { inner, configs }
    }
}

impl<S: RuntimeSource + ?Sized> RuntimeSource for Subset<'_, S> {
    fn num_configs(&self) -> usize {
        self.configs.len()
    }

    fn num_instances(&self) -> usize {
        self.inner.num_instances()
    }

    fn config_label(&self, config: usize) -> String {
        match self.configs.get(config) {
            Some(&c) => self.inner.config_label(c),
            None => config.to_string(),
        }
    }

    fn is_simulated(&self) -> bool {
        self.inner.is_simulated()
    }

    fn run(
        &mut self,
        config: usize,
        instance: InstanceDraw,
        cap: f64,
        prev_cap: f64,
    ) -> Result<RunResult, SourceError> {
        let global = *self.configs.get(config).ok_or(SourceError::UnknownConfig(config))?;
        self.inner.run(global, instance, cap, prev_cap)
    }
}
