//! Quantile pool: independent runs over samples of growing size.
//!
//! Level `k` runs the scheduler on `⌈c · k · 2^k⌉` configurations drawn from
//! the pool, which makes it likely to contain one of the fastest `2^-k`
//! fraction. Levels share virtual time in proportion to `1/k²` through a
//! deficit counter: after every step each active level is credited its
//! weighted share of the charge and the level that ran pays the full charge.
//! The next level starts once the deepest one has spent `κ₀` per sampled
//! configuration.

use std::collections::{HashMap, HashSet};
use std::process::{Command, Stdio};
use std::sync::atomic::Ordering;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SourceError};
use crate::eventlog::EventRecord;
use crate::runners::{derive_seed, RuntimeSource, Subset};
use crate::scheduler::{Budget, RunOptions, SchedulerState, StopReason};
use crate::tester::CapSchedule;

/// Stream used for drawing a level's sample, distinct from the per-config
/// instance streams of the level's scheduler.
const SAMPLE_STREAM: u64 = u64::MAX;

/// Where a level's configurations come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConfigSampler {
    /// Uniform over the source's existing configurations.
    FinitePool,
    /// Each draw runs `command` (with `{seed}` substituted) and registers its
    /// trimmed standard output as a new configuration.
    Generator { command: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    pub schedule: CapSchedule,
    pub seed: u64,
    /// `c` in the level size `⌈c · k · 2^k⌉`.
    pub sample_constant: f64,
    pub max_levels: u32,
}

impl PoolParams {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.sample_constant > 0.0 && self.sample_constant.is_finite()) {
            return Err(Error::invalid(
                "sample_constant",
                format!("must be positive (got {})", self.sample_constant),
            ));
        }
        if !(1..=40).contains(&self.max_levels) {
            return Err(Error::invalid(
                "max_levels",
                format!("must be in 1..=40 (got {})", self.max_levels),
            ));
        }
        Ok(())
    }
}

/// `⌈c · k · 2^k⌉`.
pub fn level_size(k: u32, c: f64) -> usize {
    (c * f64::from(k) * 2f64.powi(k as i32)).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    pub k: u32,
    /// Global indices of the sampled configurations; the scheduler sees
    /// local index `i` as `configs[i]`.
    pub configs: Vec<usize>,
    pub scheduler: SchedulerState,
    pub deficit: f64,
}

impl LevelState {
    pub fn weight(&self) -> f64 {
        1.0 / f64::from(self.k * self.k)
    }

    pub fn charged(&self) -> f64 {
        self.scheduler.charged_total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEvent {
    pub level: u32,
    pub global_config: usize,
    #[serde(flatten)]
    pub event: EventRecord,
}

pub trait PoolObserver {
    fn on_event(&mut self, _event: &PoolEvent) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &PoolState) -> Result<()> {
        Ok(())
    }
}

impl PoolObserver for () {}

impl PoolObserver for Vec<PoolEvent> {
    fn on_event(&mut self, event: &PoolEvent) -> Result<()> {
        self.push(event.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub k: u32,
    pub size: usize,
    pub t: u64,
    pub charged_s: f64,
    pub share: f64,
    pub winner: usize,
    pub winner_label: String,
    pub winner_r: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub steps: u64,
    pub total_charged_s: f64,
    pub stop: StopReason,
    pub levels: Vec<LevelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    params: PoolParams,
    sampler: ConfigSampler,
    levels: Vec<LevelState>,
    steps: u64,
    total_charged: f64,
    #[serde(default)]
    wall_elapsed: f64,
    /// Configurations registered by the generator, in registration order.
    #[serde(default)]
    generated: Vec<String>,
}

impl PoolState {
    /// Creates the pool and activates level 1.
    pub fn new<S: RuntimeSource + ?Sized>(params: PoolParams, sampler: ConfigSampler, source: &mut S) -> Result<Self> {
        params.validate()?;
        if sampler == ConfigSampler::FinitePool && source.num_configs() == 0 {
            return Err(Error::invalid("configs", "the configuration pool is empty"));
        }
        let mut pool = Self {
            params,
            sampler,
            levels: Vec::new(),
            steps: 0,
            total_charged: 0.0,
            wall_elapsed: 0.0,
            generated: Vec::new(),
        };
        pool.activate_level(source)?;
        Ok(pool)
    }

    pub fn params(&self) -> &PoolParams {
        &self.params
    }

    pub fn levels(&self) -> &[LevelState] {
        &self.levels
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn total_charged(&self) -> f64 {
        self.total_charged
    }

    /// Generator output registered so far; re-register these in order to
    /// rebuild a source for a restored pool.
    pub fn generated(&self) -> &[String] {
        &self.generated
    }

    /// Activates the next level and returns it.
    pub fn activate_level<S: RuntimeSource + ?Sized>(&mut self, source: &mut S) -> Result<&LevelState> {
        let k = self.levels.len() as u32 + 1;
        if k > self.params.max_levels {
            return Err(Error::invalid("max_levels", format!("level {k} exceeds the limit")));
        }
        let level_seed = derive_seed(self.params.seed, u64::from(k));
        let count = level_size(k, self.params.sample_constant);
        let configs = match &self.sampler {
            ConfigSampler::FinitePool => sample_finite(source.num_configs(), count, level_seed),
            ConfigSampler::Generator { command } => {
                let command = command.clone();
                self.sample_generated(&command, count, level_seed, source)?
            }
        };
        let scheduler = SchedulerState::new(configs.len(), source.num_instances(), self.params.schedule, level_seed)?;
        self.levels.push(LevelState {
            k,
            configs,
            scheduler,
            deficit: 0.0,
        });
        Ok(self.levels.last().expect("just pushed"))
    }

    fn sample_generated<S: RuntimeSource + ?Sized>(
        &mut self,
        command: &str,
        count: usize,
        level_seed: u64,
        source: &mut S,
    ) -> Result<Vec<usize>> {
        let mut known: HashMap<String, usize> = HashMap::new();
        let base = source.num_configs() - self.generated.len();
        for (i, spec) in self.generated.iter().enumerate() {
            known.insert(spec.clone(), base + i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(level_seed, SAMPLE_STREAM));
        let mut chosen = Vec::with_capacity(count);
        let mut seen = HashSet::new();
        let mut attempts = 0;
        while chosen.len() < count && attempts < 20 * count {
            attempts += 1;
            let spec = run_generator(command, rng.random())?;
            let global = match known.get(&spec) {
                Some(&g) => g,
                None => {
                    let g = source.add_config(&spec)?;
                    self.generated.push(spec.clone());
                    known.insert(spec, g);
                    g
                }
            };
            if seen.insert(global) {
                chosen.push(global);
            }
        }
        if chosen.len() < count {
            log::warn!(
                "generator produced {} distinct configurations, wanted {count}",
                chosen.len()
            );
        }
        Ok(chosen)
    }

    /// Runs one step of the level with the largest deficit.
    pub fn pool_step<S: RuntimeSource + ?Sized>(&mut self, source: &mut S) -> Result<PoolEvent> {
        let mut idx = 0;
        for (i, level) in self.levels.iter().enumerate().skip(1) {
            if level.deficit > self.levels[idx].deficit {
                idx = i;
            }
        }
        let LevelState {
            k, configs, scheduler, ..
        } = &mut self.levels[idx];
        let k = *k;
        let event = scheduler.step(&mut Subset::new(source, configs))?;
        let global_config = configs[event.config];

        let charge = event.charged_s;
        let total_weight: f64 = self.levels.iter().map(LevelState::weight).sum();
        for level in &mut self.levels {
            level.deficit += charge * level.weight() / total_weight;
        }
        self.levels[idx].deficit -= charge;
        self.total_charged += charge;
        self.steps += 1;

        let deepest = self.levels.last().expect("level 1 is always active");
        if (self.levels.len() as u32) < self.params.max_levels
            && deepest.charged() >= self.params.schedule.kappa0 * deepest.configs.len() as f64
        {
            self.activate_level(source)?;
        }
        Ok(PoolEvent {
            level: k,
            global_config,
            event,
        })
    }

    /// `options.stop_at_t` limits the number of pool steps.
    pub fn run_until<S: RuntimeSource + ?Sized>(
        &mut self,
        source: &mut S,
        options: &RunOptions,
        observer: &mut dyn PoolObserver,
    ) -> Result<PoolReport> {
        let start = Instant::now();
        let wall_before = self.wall_elapsed;
        let stop = loop {
            if options.stop_at_t.is_some_and(|s| self.steps >= s) {
                break StopReason::StepLimit;
            }
            if options.interrupt.as_ref().is_some_and(|f| f.load(Ordering::SeqCst)) {
                break StopReason::Interrupted;
            }
            match options.budget {
                Some(Budget::Virtual(b)) if self.total_charged >= b => break StopReason::Budget,
                Some(Budget::WallClock(b)) if self.wall_elapsed >= b => break StopReason::Budget,
                _ => {}
            }
            let event = self.pool_step(source)?;
            if matches!(options.budget, Some(Budget::WallClock(_))) {
                self.wall_elapsed = wall_before + start.elapsed().as_secs_f64();
            }
            observer.on_event(&event)?;
            if options.checkpoint_every.is_some_and(|k| k > 0 && self.steps % k == 0) {
                observer.on_checkpoint(self)?;
            }
        };
        Ok(self.report(source, stop))
    }

    /// Winner of level `k`, as a global configuration index.
    pub fn pool_winner(&self, k: u32) -> Result<usize> {
        let level = k
            .checked_sub(1)
            .and_then(|i| self.levels.get(i as usize))
            .ok_or(Error::InactiveLevel(k))?;
        Ok(level.configs[level.scheduler.current_winner()])
    }

    pub fn report<S: RuntimeSource + ?Sized>(&self, source: &S, stop: StopReason) -> PoolReport {
        PoolReport {
            steps: self.steps,
            total_charged_s: self.total_charged,
            stop,
            levels: self
                .levels
                .iter()
                .map(|level| {
                    let local = level.scheduler.current_winner();
                    let winner = level.configs[local];
                    LevelSummary {
                        k: level.k,
                        size: level.configs.len(),
                        t: level.scheduler.t(),
                        charged_s: level.charged(),
                        share: if self.total_charged > 0.0 {
                            level.charged() / self.total_charged
                        } else {
                            0.0
                        },
                        winner,
                        winner_label: source.config_label(winner),
                        winner_r: level.scheduler.testers()[local].get_num_active(),
                    }
                })
                .collect(),
        }
    }
}

/// `count` distinct indices below `size`, drawn uniformly with replacement
/// and skipping repeats; the whole pool when `count >= size`.
pub fn sample_finite(size: usize, count: usize, level_seed: u64) -> Vec<usize> {
    if count >= size {
        return (0..size).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(level_seed, SAMPLE_STREAM));
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.random_range(0..size);
        if seen.insert(i) {
            out.push(i);
        }
    }
    out
}

fn run_generator(command: &str, seed: u64) -> Result<String, SourceError> {
    let words =
        shell_words::split(command).map_err(|e| SourceError::Generator(format!("cannot parse {command:?}: {e}")))?;
    let seed = seed.to_string();
    let argv: Vec<String> = words.iter().map(|w| w.replace("{seed}", &seed)).collect();
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| SourceError::Generator("empty generator command".into()))?;
    let output = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stderr(Stdio::inherit())
        .output()
        .map_err(|source| SourceError::Spawn {
            command: argv.join(" "),
            source,
        })?;
    if !output.status.success() {
        return Err(SourceError::Generator(format!(
            "`{}` exited with {}",
            argv.join(" "),
            output.status
        )));
    }
    let spec = String::from_utf8_lossy(&output.stdout).trim().to_owned();
    if spec.is_empty() {
        return Err(SourceError::Generator(format!("`{}` printed nothing", argv.join(" "))));
    }
    Ok(spec)
}
