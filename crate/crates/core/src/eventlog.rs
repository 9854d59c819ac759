//! One JSON object per scheduler step.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Iteration after the increment; the first step is `t = 1`.
    pub t: u64,
    pub config: usize,
    /// Ordinal `ℓ` in the configuration's instance stream.
    pub instance: u64,
    pub cap_s: f64,
    pub measured_s: f64,
    pub completed: bool,
    /// Bound that won the selection, evaluated before the increment.
    pub lcb_s: f64,
    /// Active instances of `config` after the step.
    pub r: u64,
    /// Queue target of `config` after the step.
    pub q: u64,
    pub charged_total_s: f64,
    pub charged_s: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

/// Buffered JSONL writer.
pub struct EventWriter<W: Write = BufWriter<File>> {
    out: W,
    written: u64,
}

impl EventWriter {
    /// Creates (or truncates) `path`.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }

    /// Keeps the first `keep` lines of `path` and appends after them.
    pub fn resume(path: impl AsRef<Path>, keep: u64) -> Result<Self> {
        let path = path.as_ref();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let len = prefix_len(&mut file, keep)?;
        file.set_len(len)?;
        file.seek(SeekFrom::Start(len))?;
        let mut w = Self::new(BufWriter::new(file));
        w.written = keep;
        Ok(w)
    }
}

/// Byte length of the first `lines` lines; errors if the file is shorter.
fn prefix_len<R: Read>(reader: R, lines: u64) -> Result<u64> {
    let mut reader = BufReader::new(reader);
    let mut len = 0u64;
    let mut buf = Vec::new();
    for line in 0..lines {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 || buf.last() != Some(&b'\n') {
            return Err(Error::EventLog {
                line: line as usize + 1,
                message: format!("log ends before the {lines} lines covered by the checkpoint"),
            });
        }
        len += n as u64;
    }
    Ok(len)
}

impl<W: Write> EventWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, written: 0 }
    }

    pub fn write(&mut self, record: &impl Serialize) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    /// Lines in the log, including any kept on resume.
    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a JSONL log. Blank lines are skipped.
pub fn read_events<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::EventLog {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_event_file<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    read_events(File::open(path)?)
}
