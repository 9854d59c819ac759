//! A run on disk: event log, periodic and final checkpoints, report.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, EngineState};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eventlog::{EventRecord, EventWriter};
use crate::pool::{PoolEvent, PoolObserver, PoolReport, PoolState};
use crate::runners::RuntimeSource;
use crate::scheduler::{RunObserver, RunOptions, RunReport, SchedulerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SessionReport {
    Spc(RunReport),
    Pool(PoolReport),
}

pub struct Session {
    config: RunConfig,
    engine: EngineState,
    source: Box<dyn RuntimeSource>,
    events: EventWriter,
}

impl Session {
    /// Fresh run; truncates any previous event log in the output directory.
    pub fn start(mut config: RunConfig) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(&config.output)?;
        config.absolutize()?;
        let mut source = config.open_source()?;
        let engine = match &config.pool {
            Some(pool) => {
                let params = config.pool_params(pool);
                EngineState::Pool(PoolState::new(params, pool.sampler(), source.as_mut())?)
            }
            None => EngineState::Spc(SchedulerState::for_source(
                source.as_ref(),
                config.schedule()?,
                config.seed,
            )?),
        };
        let events = EventWriter::create(config.events_path())?;
        Ok(Self {
            config,
            engine,
            source,
            events,
        })
    }

    /// Continues from a checkpoint. Log lines written after the checkpoint
    /// are discarded so that the log matches the restored state.
    pub fn resume(path: &Path, budget_seconds: Option<f64>) -> Result<Self> {
        let ck = checkpoint::load(path)?;
        let mut config = ck
            .run
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no run configuration".into()))?;
        if let Some(b) = budget_seconds {
            config.budget_seconds = b;
        }
        config.checkpoint = Some(path.to_path_buf());
        config.validate()?;
        let mut source = config.open_source()?;
        if let EngineState::Pool(pool) = &ck.engine {
            for spec in pool.generated() {
                source.add_config(spec)?;
            }
        }
        let events = EventWriter::resume(config.events_path(), ck.engine.steps())?;
        Ok(Self {
            config,
            engine: ck.engine,
            source,
            events,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn engine(&self) -> &EngineState {
        &self.engine
    }

    /// Runs until the budget is spent, `stop_at` steps have been taken or
    /// `interrupt` is raised. A final checkpoint is written on every exit,
    /// including a failed run.
    pub fn run(&mut self, interrupt: Option<Arc<AtomicBool>>, stop_at: Option<u64>) -> Result<SessionReport> {
        let options = RunOptions {
            budget: Some(self.config.budget()),
            stop_at_t: stop_at,
            checkpoint_every: self.config.checkpoint_every,
            interrupt,
        };
        let mut sink = Sink {
            events: &mut self.events,
            checkpoint: self.config.checkpoint_path(),
            config: &self.config,
        };
        let result = match &mut self.engine {
            EngineState::Spc(s) => s
                .run_until(self.source.as_mut(), &options, &mut sink)
                .map(SessionReport::Spc),
            EngineState::Pool(p) => p
                .run_until(self.source.as_mut(), &options, &mut sink)
                .map(SessionReport::Pool),
        };
        let saved = sink.finish(&self.engine);
        let report = result?;
        saved?;
        fs::write(self.config.report_path(), serde_json::to_string_pretty(&report)? + "\n")?;
        Ok(report)
    }
}

struct Sink<'a> {
    events: &'a mut EventWriter,
    checkpoint: PathBuf,
    config: &'a RunConfig,
}

impl Sink<'_> {
    fn save(&mut self, text: String) -> Result<()> {
        // The log must cover every step in the checkpoint.
        self.events.flush()?;
        checkpoint::save_text(&self.checkpoint, &text)
    }

    fn finish(mut self, engine: &EngineState) -> Result<()> {
        let text = match engine {
            EngineState::Spc(s) => checkpoint::snapshot_scheduler(s, Some(self.config))?,
            EngineState::Pool(p) => checkpoint::snapshot_pool(p, Some(self.config))?,
        };
        self.save(text)
    }
}

impl RunObserver for Sink<'_> {
    fn on_event(&mut self, event: &EventRecord) -> Result<()> {
        self.events.write(event)
    }

    fn on_checkpoint(&mut self, state: &SchedulerState) -> Result<()> {
        let text = checkpoint::snapshot_scheduler(state, Some(self.config))?;
        self.save(text)
    }
}

impl PoolObserver for Sink<'_> {
    fn on_event(&mut self, event: &PoolEvent) -> Result<()> {
        self.events.write(event)
    }

    fn on_checkpoint(&mut self, state: &PoolState) -> Result<()> {
        let text = checkpoint::snapshot_pool(state, Some(self.config))?;
        self.save(text)
    }
}
