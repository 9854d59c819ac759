//! Versioned JSON checkpoint of a run.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pool::PoolState;
use crate::scheduler::SchedulerState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineState {
    Spc(SchedulerState),
    Pool(PoolState),
}

impl EngineState {
    /// Steps taken so far; equals the number of event-log lines.
    pub fn steps(&self) -> u64 {
        match self {
            EngineState::Spc(s) => s.t(),
            EngineState::Pool(p) => p.steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
    pub engine: EngineState,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum EngineRef<'a> {
    Spc(&'a SchedulerState),
    Pool(&'a PoolState),
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<&'a RunConfig>,
    engine: EngineRef<'a>,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
}

pub fn snapshot_scheduler(state: &SchedulerState, run: Option<&RunConfig>) -> Result<String> {
    encode(EngineRef::Spc(state), run)
}

pub fn snapshot_pool(state: &PoolState, run: Option<&RunConfig>) -> Result<String> {
    encode(EngineRef::Pool(state), run)
}

fn encode(engine: EngineRef<'_>, run: Option<&RunConfig>) -> Result<String> {
    Ok(serde_json::to_string(&CheckpointRef {
        version: CHECKPOINT_VERSION,
        run,
        engine,
    })?)
}

pub fn snapshot(checkpoint: &Checkpoint) -> Result<String> {
    let engine = match &checkpoint.engine {
        EngineState::Spc(s) => EngineRef::Spc(s),
        EngineState::Pool(p) => EngineRef::Pool(p),
    };
    encode(engine, checkpoint.run.as_ref())
}

pub fn restore(text: &str) -> Result<Checkpoint> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Writes through a temporary file and a rename, so an interrupted write
/// never leaves a truncated checkpoint behind.
pub fn save_text(path: &Path, text: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    restore(&fs::read_to_string(path)?)
}
