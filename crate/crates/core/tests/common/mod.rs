//! Synthetic runtime sources shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use spc_core::error::SourceError;
use spc_core::runners::{derive_seed, ChargeMode, InstanceDraw, RunResult, RuntimeSource};

#[derive(Debug, Clone, Copy)]
pub enum Dist {
    Const(f64),
    /// `floor + Exp`, with the given overall mean.
    Exp {
        floor: f64,
        mean: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl Dist {
    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Const(v) => v,
            Dist::Exp { mean, .. } => mean,
            Dist::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Const(v) => v,
            Dist::Exp { floor, mean } => floor + Exp::new(1.0 / (mean - floor)).unwrap().sample(rng),
            Dist::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).unwrap().sample(rng),
        }
    }
}

/// Infinite instance distribution: the runtime of configuration `i` on a
/// draw is a pure function of the draw's seed and `i`.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub dists: Vec<Dist>,
    pub mode: ChargeMode,
}

impl SyntheticSource {
    pub fn new(dists: Vec<Dist>) -> Self {
        Self {
            dists,
            mode: ChargeMode::NonResuming,
        }
    }

    pub fn runtime(&self, config: usize, instance: InstanceDraw) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(instance.seed, config as u64));
        self.dists[config].sample(&mut rng)
    }
}

impl RuntimeSource for SyntheticSource {
    fn num_configs(&self) -> usize {
        self.dists.len()
    }

    fn num_instances(&self) -> usize {
        1 << 30
    }

    fn is_simulated(&self) -> bool {
        true
    }

    fn run(
        &mut self,
        config: usize,
        instance: InstanceDraw,
        cap: f64,
        prev_cap: f64,
    ) -> Result<RunResult, SourceError> {
        let truth = self.runtime(config, instance);
        let measured = truth.min(cap);
        let charged = match self.mode {
            ChargeMode::NonResuming => measured,
            ChargeMode::Resuming => measured - truth.min(prev_cap),
        };
        Ok(RunResult {
            measured,
            completed: truth <= cap,
            charged,
            failed: false,
        })
    }
}
