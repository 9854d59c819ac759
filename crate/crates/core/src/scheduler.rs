//! The anytime loop: pick the tester with the smallest lower confidence
//! bound, advance it by one step, repeat.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificate::{certify_delta, Certificate};
use crate::error::{Error, Result};
use crate::eventlog::EventRecord;
use crate::runners::{derive_seed, InstanceStream, RuntimeSource};
use crate::tester::{CapSchedule, TesterState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    t: u64,
    seed: u64,
    schedule: CapSchedule,
    /// Round-robin pointer for breaking ties in the selection.
    rr_next: usize,
    charged_total: f64,
    /// Wall-clock seconds consumed under a wall-clock budget.
    #[serde(default)]
    wall_elapsed: f64,
    testers: Vec<TesterState>,
}

/// When [`SchedulerState::run_until`] stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "seconds", rename_all = "kebab-case")]
pub enum Budget {
    /// Charged seconds reported by the source.
    Virtual(f64),
    WallClock(f64),
}

impl Budget {
    pub fn seconds(&self) -> f64 {
        match *self {
            Budget::Virtual(s) | Budget::WallClock(s) => s,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub budget: Option<Budget>,
    /// Stop once `t` reaches this value.
    pub stop_at_t: Option<u64>,
    /// Call [`RunObserver::on_checkpoint`] whenever `t` is a multiple.
    pub checkpoint_every: Option<u64>,
    pub interrupt: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Budget,
    StepLimit,
    Interrupted,
}

/// Hooks called from inside [`SchedulerState::run_until`].
pub trait RunObserver {
    fn on_event(&mut self, _event: &EventRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &SchedulerState) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

/// Collects every event in memory.
impl RunObserver for Vec<EventRecord> {
    fn on_event(&mut self, event: &EventRecord) -> Result<()> {
        self.push(*event);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: usize,
    pub label: String,
    pub r: u64,
    pub lcb_s: f64,
    pub capped_mean_s: Option<f64>,
    pub charged_s: f64,
    pub theta_s: f64,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub t: u64,
    pub charged_total_s: f64,
    pub stop: StopReason,
    pub winner: usize,
    pub winner_label: String,
    pub configs: Vec<ConfigSummary>,
}

impl SchedulerState {
    /// One tester per configuration; tester `i` draws its instance stream
    /// from a seed derived from `(seed, i)`.
    pub fn new(n_configs: usize, n_instances: usize, schedule: CapSchedule, seed: u64) -> Result<Self> {
        if n_configs == 0 {
            return Err(Error::invalid("configs", "at least one configuration is required"));
        }
        let testers = (0..n_configs)
            .map(|i| {
                let stream = InstanceStream::new(n_instances, derive_seed(seed, i as u64))?;
                TesterState::initialize(i, schedule, stream)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            t: 0,
            seed,
            schedule,
            rr_next: 0,
            charged_total: 0.0,
            wall_elapsed: 0.0,
            testers,
        })
    }

    /// Sized from the source.
    pub fn for_source(source: &dyn RuntimeSource, schedule: CapSchedule, seed: u64) -> Result<Self> {
        Self::new(source.num_configs(), source.num_instances(), schedule, seed)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn schedule(&self) -> &CapSchedule {
        &self.schedule
    }

    pub fn charged_total(&self) -> f64 {
        self.charged_total
    }

    pub fn testers(&self) -> &[TesterState] {
        &self.testers
    }

    /// Tester with the smallest bound at the current `t`. Exact ties go to
    /// the first tied index at or after the round-robin pointer.
    pub fn select_next(&self) -> usize {
        let n = self.testers.len();
        let floor = self.schedule.kappa0;
        let mut best = self.rr_next % n;
        let mut best_lcb = f64::INFINITY;
        for off in 0..n {
            let i = (self.rr_next + off) % n;
            let lcb = self.testers[i].get_lcb(self.t);
            if lcb < best_lcb {
                best = i;
                best_lcb = lcb;
                // Nothing is ever below the floor.
                if lcb <= floor {
                    break;
                }
            }
        }
        best
    }

    /// Selects a tester, increments `t` and runs one tester step. A failed
    /// run leaves the state unchanged.
    pub fn step<S: RuntimeSource + ?Sized>(&mut self, source: &mut S) -> Result<EventRecord> {
        let i = self.select_next();
        let lcb = self.testers[i].get_lcb(self.t);
        let t = self.t + 1;
        let out = self.testers[i].execute_step(t, source)?;
        self.t = t;
        self.rr_next = (i + 1) % self.testers.len();
        self.charged_total += out.charged;
        let tester = &self.testers[i];
        Ok(EventRecord {
            t,
            config: i,
            instance: out.instance_ordinal,
            cap_s: out.cap,
            measured_s: out.measured,
            completed: out.completed,
            lcb_s: lcb,
            r: tester.get_num_active(),
            q: tester.q(),
            charged_total_s: self.charged_total,
            charged_s: out.charged,
            failed: out.failed,
        })
    }

    /// Steps until the budget, step limit or interrupt flag says stop.
    pub fn run_until<S: RuntimeSource + ?Sized>(
        &mut self,
        source: &mut S,
        options: &RunOptions,
        observer: &mut dyn RunObserver,
    ) -> Result<RunReport> {
        if let Some(b) = options.budget {
            if !(b.seconds() > 0.0) {
                return Err(Error::invalid(
                    "budget",
                    format!("must be positive (got {})", b.seconds()),
                ));
            }
        }
        let start = Instant::now();
        let wall_before = self.wall_elapsed;
        let stop = loop {
            if options.stop_at_t.is_some_and(|s| self.t >= s) {
                break StopReason::StepLimit;
            }
            if options.interrupt.as_ref().is_some_and(|f| f.load(Ordering::SeqCst)) {
                break StopReason::Interrupted;
            }
            match options.budget {
                Some(Budget::Virtual(b)) if self.charged_total >= b => break StopReason::Budget,
                Some(Budget::WallClock(b)) if self.wall_elapsed >= b => break StopReason::Budget,
                _ => {}
            }
            let event = self.step(source)?;
            if matches!(options.budget, Some(Budget::WallClock(_))) {
                self.wall_elapsed = wall_before + start.elapsed().as_secs_f64();
            }
            observer.on_event(&event)?;
            if options.checkpoint_every.is_some_and(|k| k > 0 && self.t % k == 0) {
                observer.on_checkpoint(self)?;
            }
        };
        Ok(self.report(source, stop))
    }

    /// Configuration with the most active instances; ties go to the smaller
    /// capped mean, then the lower index.
    pub fn current_winner(&self) -> usize {
        let mut best = 0;
        for (i, tester) in self.testers.iter().enumerate().skip(1) {
            let b = &self.testers[best];
            let (r, rb) = (tester.get_num_active(), b.get_num_active());
            let better = r > rb
                || (r == rb
                    && r > 0
                    && tester.capped_mean().unwrap_or(f64::INFINITY) < b.capped_mean().unwrap_or(f64::INFINITY));
            if better {
                best = i;
            }
        }
        best
    }

    /// `(ε, δ)` certificate for the current winner.
    pub fn certificate(&self, epsilon: f64, lambda: f64) -> Result<Option<Certificate>> {
        let winner = &self.testers[self.current_winner()];
        certify_delta(winner.get_num_active(), self.t, epsilon, lambda)
    }

    pub fn report<S: RuntimeSource + ?Sized>(&self, source: &S, stop: StopReason) -> RunReport {
        let winner = self.current_winner();
        RunReport {
            t: self.t,
            charged_total_s: self.charged_total,
            stop,
            winner,
            winner_label: source.config_label(winner),
            configs: self
                .testers
                .iter()
                .enumerate()
                .map(|(i, tester)| ConfigSummary {
                    config: i,
                    label: source.config_label(i),
                    r: tester.get_num_active(),
                    lcb_s: tester.get_lcb(self.t),
                    capped_mean_s: tester.capped_mean(),
                    charged_s: tester.cumulative_charged(),
                    theta_s: tester.theta(),
                    pending: tester.queue().len(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runners::{ChargeMode, MatrixSource, RuntimeMatrix};

    fn source(rows: Vec<Vec<f64>>, kappa0: f64) -> MatrixSource {
        let n = rows.len();
        let w = rows[0].len();
        let m = RuntimeMatrix::new(
            (0..n).map(|i| format!("c{i}")).collect(),
            (0..w).map(|j| format!("i{j}")).collect(),
            rows,
            kappa0,
        )
        .unwrap();
        MatrixSource::new(m, ChargeMode::NonResuming)
    }

    fn schedule(kappa0: f64) -> CapSchedule {
        CapSchedule::new(kappa0, 2.0, None).unwrap()
    }

    #[test]
    fn fresh_testers_alternate() {
        let mut src = source(vec![vec![10.0], vec![10.0]], 1.0);
        let mut s = SchedulerState::for_source(&src, schedule(1.0), 0).unwrap();
        let picks: Vec<usize> = (0..6).map(|_| s.step(&mut src).unwrap().config).collect();
        assert_eq!(picks, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn smallest_bound_is_selected() {
        // 200 completed 5 s and 7 s runs give bounds well above the floor.
        let mut src = source(vec![vec![5.0], vec![7.0]], 1.0);
        let mut s = SchedulerState::for_source(&src, schedule(1.0), 0).unwrap();
        s.run_until(
            &mut src,
            &RunOptions {
                stop_at_t: Some(4_000),
                ..Default::default()
            },
            &mut (),
        )
        .unwrap();
        let (a, b) = (s.testers[0].get_lcb(s.t), s.testers[1].get_lcb(s.t));
        assert!(a > 1.0 && b > 1.0, "{a} {b}");
        assert_eq!(s.select_next(), if a <= b { 0 } else { 1 });
    }

    #[test]
    fn tiny_budget_still_reports() {
        let mut src = source(vec![vec![0.5, 0.7], vec![0.9, 0.2]], 0.1);
        let mut s = SchedulerState::for_source(&src, schedule(0.1), 3).unwrap();
        let report = s
            .run_until(
                &mut src,
                &RunOptions {
                    budget: Some(Budget::Virtual(0.001)),
                    ..Default::default()
                },
                &mut (),
            )
            .unwrap();
        assert_eq!(report.stop, StopReason::Budget);
        assert!(report.winner < 2);
        assert_eq!(report.configs.len(), 2);
    }

    #[test]
    fn winner_tie_breaks() {
        let src = source(vec![vec![1.0]; 3], 1.0);
        let s = SchedulerState::for_source(&src, schedule(1.0), 0).unwrap();
        assert_eq!(s.current_winner(), 0);
    }

    #[test]
    fn winner_has_most_active_instances() {
        let mut src = source(vec![vec![1.0]; 3], 1.0);
        let mut s = SchedulerState::for_source(&src, schedule(1.0), 0).unwrap();
        let counts = [5, 9, 2];
        for (i, &c) in counts.iter().enumerate() {
            for step in 0..c {
                s.testers[i].execute_step(step + 1, &mut src).unwrap();
            }
        }
        assert_eq!(s.current_winner(), 1);
    }

    #[test]
    fn charged_total_matches_event_sum() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..10).map(|j| 0.01 * (1.0 + ((i * 7 + j * 3) % 11) as f64)).collect())
            .collect();
        let mut src = source(rows, 0.01);
        let mut s = SchedulerState::for_source(&src, schedule(0.01), 9).unwrap();
        let mut events = Vec::new();
        s.run_until(
            &mut src,
            &RunOptions {
                stop_at_t: Some(2_000),
                ..Default::default()
            },
            &mut events,
        )
        .unwrap();
        let mut sum = 0.0;
        for e in &events {
            sum += e.charged_s;
            assert_eq!(sum, e.charged_total_s);
        }
        assert_eq!(sum, s.charged_total());
        let per_tester: f64 = s.testers.iter().map(|t| t.cumulative_charged()).sum();
        assert!((per_tester - sum).abs() < 1e-9 * sum);
    }

    #[test]
    fn interrupt_flag_stops_the_loop() {
        let mut src = source(vec![vec![1.0]], 1.0);
        let mut s = SchedulerState::for_source(&src, schedule(1.0), 0).unwrap();
        let flag = Arc::new(AtomicBool::new(true));
        let report = s
            .run_until(
                &mut src,
                &RunOptions {
                    interrupt: Some(flag),
                    ..Default::default()
                },
                &mut (),
            )
            .unwrap();
        assert_eq!(report.stop, StopReason::Interrupted);
        assert_eq!(report.t, 0);
    }
}
