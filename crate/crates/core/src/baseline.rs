//! Fixed-queue uniform doubling baseline.
//!
//! Every configuration runs a fixed number of fresh instances at `κ₀`, then
//! all of them again on new instances at `2κ₀`, and so on. This is the
//! simplified procrastination scheme whose cost is the yardstick for the
//! adaptive scheduler; the real procedure's queue grows with the number of
//! active instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runners::{derive_seed, run_simulated, ChargeMode, InstanceStream, RuntimeMatrix};

/// `⌈12 · ε⁻² · ln(3 · β · n / ζ)⌉`, the queue length that guarantee needs.
pub fn sp_queue_size(epsilon: f64, zeta: f64, n: u64, beta_levels: u64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", format!("must be positive (got {epsilon})")));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::invalid("zeta", format!("must be in (0, 1) (got {zeta})")));
    }
    if n == 0 || beta_levels == 0 {
        return Err(Error::invalid("n", "configuration and level counts must be positive"));
    }
    let size = (12.0 / (epsilon * epsilon) * (3.0 * beta_levels as f64 * n as f64 / zeta).ln()).ceil();
    Ok(size.max(1.0) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub queue_size: u64,
    pub kappa0: f64,
    pub multiplier: f64,
    /// Stop before any run that would start at or beyond this charge.
    pub budget: Option<f64>,
    /// Highest cap level to run; the default stops once every run of a
    /// level completes.
    pub max_levels: Option<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineLevel {
    pub cap_s: f64,
    /// Charge accumulated before the first run at this cap.
    pub charged_before_s: f64,
    pub charged_s: f64,
    pub runs: Vec<u64>,
    pub completed: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub queue_size: u64,
    pub charged_total_s: f64,
    pub budget_exhausted: bool,
    pub levels: Vec<BaselineLevel>,
    /// Most completions at the deepest level reached; ties go to the lower
    /// index.
    pub winner: usize,
}

impl BaselineReport {
    /// Charge spent before the first run at `cap`, if that cap was reached.
    pub fn charged_before(&self, cap: f64) -> Option<f64> {
        self.levels.iter().find(|l| l.cap_s == cap).map(|l| l.charged_before_s)
    }
}

pub fn run_baseline(matrix: &RuntimeMatrix, params: &BaselineParams) -> Result<BaselineReport> {
    if params.queue_size == 0 {
        return Err(Error::invalid("queue_size", "must be at least 1"));
    }
    if !(params.kappa0 > 0.0) || !(params.multiplier > 1.0) {
        return Err(Error::invalid(
            "kappa0",
            "kappa0 must be positive and the multiplier above 1",
        ));
    }
    let n = matrix.n_configs();
    let mut streams = (0..n)
        .map(|i| InstanceStream::new(matrix.n_instances(), derive_seed(params.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut levels = Vec::new();
    let mut total = 0.0;
    let mut exhausted = false;
    let mut cap = params.kappa0;
    'levels: for level in 0.. {
        if params.max_levels.is_some_and(|m| level >= m) {
            break;
        }
        let mut entry = BaselineLevel {
            cap_s: cap,
            charged_before_s: total,
            charged_s: 0.0,
            runs: vec![0; n],
            completed: vec![0; n],
        };
        let mut all_done = true;
        for (config, stream) in streams.iter_mut().enumerate() {
            for _ in 0..params.queue_size {
                if params.budget.is_some_and(|b| total >= b) {
                    exhausted = true;
                    levels.push(entry);
                    break 'levels;
                }
                let draw = stream.next_instance();
                let run = run_simulated(matrix, config, draw.index, cap, 0.0, ChargeMode::NonResuming)?;
                total += run.charged;
                entry.charged_s += run.charged;
                entry.runs[config] += 1;
                if run.completed {
                    entry.completed[config] += 1;
                } else {
                    all_done = false;
                }
            }
        }
        levels.push(entry);
        if all_done && params.max_levels.is_none() {
            break;
        }
        cap *= params.multiplier;
    }
    let winner = levels
        .iter()
        .rev()
        .find(|l| l.runs.iter().all(|&r| r == params.queue_size))
        .or(levels.first())
        .map(|l| {
            let mut best = 0;
            for i in 1..n {
                if l.completed[i] > l.completed[best] {
                    best = i;
                }
            }
            best
        })
        .unwrap_or(0);
    Ok(BaselineReport {
        queue_size: params.queue_size,
        charged_total_s: total,
        budget_exhausted: exhausted,
        levels,
        winner,
    })
}
