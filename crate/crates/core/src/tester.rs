//! Configuration tester: one configuration's instance stream, pending-run
//! queue, captime doubling and observation table.
//!
//! Each step either activates the next instance of the stream at the current
//! captime `θ` (when fewer than `q` runs are pending) or reruns the head of
//! the pending queue at its recorded cap, which becomes the new `θ`. A run
//! that hits its cap goes to the back of the queue with the cap multiplied
//! by `m`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcb::{epsilon_unchecked, EmpiricalCdf, LevelProfile, MAX_EPSILON, MIN_ITERATION};
use crate::runners::{InstanceDraw, InstanceStream, RuntimeSource};
use crate::sample::SortedSample;

/// Captime parameters shared by every tester of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapSchedule {
    /// Minimum possible runtime `κ₀` and the first captime.
    pub kappa0: f64,
    /// Captime multiplier `m` applied after a timeout.
    pub multiplier: f64,
    /// Never-exceed cap `κ̄`; runs censored there count as complete.
    pub max_cap: Option<f64>,
}

impl CapSchedule {
    pub fn new(kappa0: f64, multiplier: f64, max_cap: Option<f64>) -> Result<Self> {
        let s = Self {
            kappa0,
            multiplier,
            max_cap,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            return Err(Error::invalid(
                "kappa0",
                format!("must be positive (got {})", self.kappa0),
            ));
        }
        if !(self.multiplier > 1.0 && self.multiplier.is_finite()) {
            return Err(Error::invalid(
                "multiplier",
                format!("must exceed 1 (got {})", self.multiplier),
            ));
        }
        if let Some(cap) = self.max_cap {
            if !(cap >= self.kappa0 && cap.is_finite()) {
                return Err(Error::invalid(
                    "max_cap",
                    format!("must be at least kappa0 (got {cap})"),
                ));
            }
        }
        Ok(())
    }

    fn next_cap(&self, cap: f64) -> f64 {
        let next = cap * self.multiplier;
        match self.max_cap {
            Some(limit) => next.min(limit),
            None => next,
        }
    }
}

/// `q(r, t) = ⌈25 · log2(t · log2 r)⌉` with `t, r` clamped to at least 2 and
/// the inner logarithm to at least 1. Before any instance is active the
/// queue target is 1.
pub fn target_queue_size(r: u64, t: u64) -> u64 {
    if r == 0 {
        return 1;
    }
    let t = t.max(2) as f64;
    let inner = (r.max(2) as f64).log2().max(1.0);
    ((25.0 * (t * inner).log2()).ceil() as u64).max(1)
}

/// Latest censored measurement of one active instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedObservation {
    /// 1-based position `ℓ` in the tester's stream.
    pub instance_ordinal: u64,
    pub instance: InstanceDraw,
    /// `min(R(i, j), cap_used)`.
    pub capped_value: f64,
    pub completed: bool,
    pub cap_used: f64,
    pub attempts: u32,
    /// Total charge across all attempts on this instance.
    pub charged: f64,
    pub last_charge: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingRun {
    pub instance_ordinal: u64,
    pub next_cap: f64,
}

/// What one [`TesterState::execute_step`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub instance_ordinal: u64,
    pub instance: InstanceDraw,
    pub cap: f64,
    pub measured: f64,
    pub completed: bool,
    pub charged: f64,
    pub failed: bool,
    /// A new instance was drawn from the stream.
    pub activated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TesterDoc", try_from = "TesterDoc")]
pub struct TesterState {
    config: usize,
    schedule: CapSchedule,
    r: u64,
    theta: f64,
    q: u64,
    max_q: u64,
    queue: VecDeque<PendingRun>,
    observations: Vec<CappedObservation>,
    cumulative_charged: f64,
    stream: InstanceStream,
    last_step: u64,
    // Derived from `observations`.
    sample: SortedSample,
    profile: Option<LevelProfile>,
    capped_mean: f64,
}

impl TesterState {
    pub fn initialize(config: usize, schedule: CapSchedule, stream: InstanceStream) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            config,
            schedule,
            r: 0,
            theta: schedule.kappa0,
            q: 1,
            max_q: 1,
            queue: VecDeque::new(),
            observations: Vec::new(),
            cumulative_charged: 0.0,
            stream,
            last_step: 0,
            sample: SortedSample::new(),
            profile: None,
            capped_mean: 0.0,
        })
    }

    /// One step of the tester at (already incremented) iteration `t`.
    ///
    /// The run happens before any state changes, so a backend failure
    /// leaves the tester untouched.
    pub fn execute_step<S: RuntimeSource + ?Sized>(&mut self, t: u64, source: &mut S) -> Result<StepOutcome> {
        let activate = (self.queue.len() as u64) < self.q;
        let (ordinal, instance, cap, prev_cap) = if activate {
            let ordinal = self.r + 1;
            (ordinal, self.stream.draw(ordinal), self.theta, 0.0)
        } else {
            let head = self.queue.front().expect("queue is at least q >= 1 long");
            let obs = &self.observations[(head.instance_ordinal - 1) as usize];
            (head.instance_ordinal, obs.instance, head.next_cap, obs.cap_used)
        };

        let run = source
            .run(self.config, instance, cap, prev_cap)
            .map_err(|source| Error::Step {
                config: self.config,
                instance: ordinal,
                cap,
                source,
            })?;

        if activate {
            self.r += 1;
            let drawn = self.stream.next_instance();
            debug_assert_eq!(drawn, instance);
        } else {
            self.queue.pop_front();
            self.theta = cap;
        }

        let mut completed = run.completed;
        let mut measured = run.measured.min(cap);
        if !completed && self.schedule.max_cap.is_some_and(|limit| cap >= limit) {
            // Censoring at κ̄ is the definition of R(i) = R_κ̄(i).
            completed = true;
            measured = cap;
        }
        if !completed {
            self.queue.push_back(PendingRun {
                instance_ordinal: ordinal,
                next_cap: self.schedule.next_cap(cap),
            });
        }

        let old_value = if activate {
            self.observations.push(CappedObservation {
                instance_ordinal: ordinal,
                instance,
                capped_value: measured,
                completed,
                cap_used: cap,
                attempts: 1,
                charged: run.charged,
                last_charge: run.charged,
                failed: run.failed,
            });
            None
        } else {
            let obs = &mut self.observations[(ordinal - 1) as usize];
            let old = obs.capped_value;
            obs.capped_value = measured;
            obs.completed = completed;
            obs.cap_used = cap;
            obs.attempts += 1;
            obs.charged += run.charged;
            obs.last_charge = run.charged;
            obs.failed = run.failed;
            Some(old)
        };
        self.cumulative_charged += run.charged;
        self.q = target_queue_size(self.r, t);
        self.max_q = self.max_q.max(self.q);
        self.last_step = t;
        self.replace_sorted(old_value, measured);
        self.refresh_derived();

        Ok(StepOutcome {
            instance_ordinal: ordinal,
            instance,
            cap,
            measured,
            completed,
            charged: run.charged,
            failed: run.failed,
            activated: activate,
        })
    }

    fn replace_sorted(&mut self, old: Option<f64>, new: f64) {
        if let Some(old) = old {
            let removed = self.sample.remove(old);
            debug_assert!(removed);
        }
        self.sample.insert(new);
    }

    /// Level 1 has the smallest `ε`; while it exceeds the cutoff the bound is
    /// the floor.
    fn is_floored(&self, t: u64) -> bool {
        self.r == 0 || epsilon_unchecked(1, self.r, t.max(MIN_ITERATION)) > MAX_EPSILON
    }

    fn refresh_derived(&mut self) {
        // `ε` only grows with `t`, so a tester floored now stays floored
        // until its next step and needs no profile.
        self.profile = (!self.is_floored(self.last_step)).then(|| self.sample.profile(self.last_step));
        self.capped_mean = if self.sample.is_empty() {
            0.0
        } else {
            self.sample.total() / self.sample.len() as f64
        };
    }

    /// Lower confidence bound at iteration `t`; `κ₀` while nothing is active.
    pub fn get_lcb(&self, t: u64) -> f64 {
        let kappa0 = self.schedule.kappa0;
        if self.is_floored(t) {
            return kappa0;
        }
        match &self.profile {
            Some(p) if t >= self.last_step => p.bound(t, kappa0),
            _ => self.sample.profile(t).bound(t, kappa0),
        }
    }

    /// `r`, the number of active instances.
    pub fn get_num_active(&self) -> u64 {
        self.r
    }

    pub fn config(&self) -> usize {
        self.config
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Current queue target `q`.
    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn queue(&self) -> &VecDeque<PendingRun> {
        &self.queue
    }

    pub fn observations(&self) -> &[CappedObservation] {
        &self.observations
    }

    pub fn cumulative_charged(&self) -> f64 {
        self.cumulative_charged
    }

    pub fn schedule(&self) -> &CapSchedule {
        &self.schedule
    }

    pub fn stream(&self) -> &InstanceStream {
        &self.stream
    }

    /// Empirical mean of the latest capped values, or `None` when `r = 0`.
    pub fn capped_mean(&self) -> Option<f64> {
        (self.r > 0).then_some(self.capped_mean)
    }

    /// Empirical CDF of the latest capped values of the active instances.
    pub fn empirical_cdf(&self) -> Option<EmpiricalCdf> {
        (self.r > 0).then(|| EmpiricalCdf::new(self.sample.to_vec()).expect("values are validated"))
    }

    /// Checks the structural invariants of the tester; returns a description
    /// of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        // (1) exactly the first r stream instances are active
        if self.observations.len() as u64 != self.r {
            return Err(format!("{} observations for r = {}", self.observations.len(), self.r));
        }
        if self.stream.cursor() != self.r {
            return Err(format!("stream cursor {} != r {}", self.stream.cursor(), self.r));
        }
        for (i, o) in self.observations.iter().enumerate() {
            if o.instance_ordinal != i as u64 + 1 {
                return Err(format!("observation {i} has ordinal {}", o.instance_ordinal));
            }
            if !(o.capped_value >= 0.0 && o.capped_value <= o.cap_used) {
                return Err(format!(
                    "ordinal {}: value {} above cap {}",
                    i + 1,
                    o.capped_value,
                    o.cap_used
                ));
            }
            if o.cap_used > self.schedule.multiplier * self.theta {
                return Err(format!(
                    "ordinal {}: cap {} exceeds m·θ = {}",
                    i + 1,
                    o.cap_used,
                    self.schedule.multiplier * self.theta
                ));
            }
        }
        // (2) pending runs never exceed the queue target
        if self.queue.len() as u64 > self.max_q {
            return Err(format!("{} pending runs, q = {}", self.queue.len(), self.max_q));
        }
        // (3) caps are non-decreasing and within one multiplier of the head
        if let (Some(head), Some(tail)) = (self.queue.front(), self.queue.back()) {
            if tail.next_cap > self.schedule.multiplier * head.next_cap {
                return Err(format!("tail cap {} exceeds m·head {}", tail.next_cap, head.next_cap));
            }
            if head.next_cap < self.theta {
                return Err(format!("head cap {} below θ {}", head.next_cap, self.theta));
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut prev = 0.0;
        for p in &self.queue {
            if p.next_cap < prev {
                return Err("queue caps decrease from head to tail".into());
            }
            prev = p.next_cap;
            if !seen.insert(p.instance_ordinal) {
                return Err(format!("ordinal {} queued twice", p.instance_ordinal));
            }
            match self.observations.get((p.instance_ordinal as usize).wrapping_sub(1)) {
                Some(o) if !o.completed => {}
                _ => return Err(format!("queued ordinal {} is not pending", p.instance_ordinal)),
            }
        }
        let pending = self.observations.iter().filter(|o| !o.completed).count();
        if pending != self.queue.len() {
            return Err(format!("{pending} pending observations, {} queued", self.queue.len()));
        }
        Ok(())
    }
}

/// Serialized form of a tester; derived fields are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct TesterDoc {
    config: usize,
    schedule: CapSchedule,
    r: u64,
    theta: f64,
    q: u64,
    max_q: u64,
    queue: VecDeque<PendingRun>,
    observations: Vec<CappedObservation>,
    cumulative_charged: f64,
    stream: InstanceStream,
    last_step: u64,
    #[serde(default)]
    sample_layout: Vec<usize>,
}

impl From<TesterState> for TesterDoc {
    fn from(s: TesterState) -> Self {
        Self {
            config: s.config,
            schedule: s.schedule,
            r: s.r,
            theta: s.theta,
            q: s.q,
            max_q: s.max_q,
            queue: s.queue,
            observations: s.observations,
            cumulative_charged: s.cumulative_charged,
            stream: s.stream,
            last_step: s.last_step,
            sample_layout: s.sample.layout(),
        }
    }
}

impl TryFrom<TesterDoc> for TesterState {
    type Error = Error;

    fn try_from(d: TesterDoc) -> Result<Self> {
        d.schedule.validate()?;
        let mut sorted: Vec<f64> = d.observations.iter().map(|o| o.capped_value).collect();
        sorted.sort_by(f64::total_cmp);
        let mut s = Self {
            config: d.config,
            schedule: d.schedule,
            r: d.r,
            theta: d.theta,
            q: d.q,
            max_q: d.max_q,
            queue: d.queue,
            observations: d.observations,
            cumulative_charged: d.cumulative_charged,
            stream: d.stream,
            last_step: d.last_step,
            sample: SortedSample::from_sorted(&sorted, Some(&d.sample_layout)),
            profile: None,
            capped_mean: 0.0,
        };
        s.refresh_derived();
        s.check_invariants().map_err(Error::Checkpoint)?;
        Ok(s)
    }
}
