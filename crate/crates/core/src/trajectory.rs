//! Incumbent over charged time, rebuilt from an event log.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::EventRecord;

#[derive(Debug, Clone, Default)]
struct ConfigTrace {
    /// Latest capped value per instance ordinal.
    latest: Vec<f64>,
    sorted: Vec<f64>,
}

impl ConfigTrace {
    fn record(&mut self, ordinal: u64, value: f64) -> Result<()> {
        let idx = (ordinal as usize)
            .checked_sub(1)
            .ok_or_else(|| Error::Domain("instance ordinals start at 1".into()))?;
        if idx < self.latest.len() {
            let old = self.latest[idx];
            let pos = self.sorted.partition_point(|v| *v < old);
            self.sorted.remove(pos);
            self.latest[idx] = value;
        } else if idx == self.latest.len() {
            self.latest.push(value);
        } else {
            return Err(Error::Domain(format!("instance {ordinal} activated out of order")));
        }
        let pos = self.sorted.partition_point(|v| *v <= value);
        self.sorted.insert(pos, value);
        Ok(())
    }

    fn r(&self) -> u64 {
        self.latest.len() as u64
    }

    /// Summed in ascending order, like the tester.
    fn capped_mean(&self) -> Option<f64> {
        (!self.sorted.is_empty()).then(|| self.sorted.iter().sum::<f64>() / self.sorted.len() as f64)
    }
}

/// Replays events and answers "who is the incumbent now".
#[derive(Debug, Clone, Default)]
pub struct IncumbentTracker {
    configs: Vec<ConfigTrace>,
    t: u64,
    charged: f64,
}

impl IncumbentTracker {
    pub fn apply(&mut self, event: &EventRecord) -> Result<()> {
        if event.config >= self.configs.len() {
            self.configs.resize_with(event.config + 1, ConfigTrace::default);
        }
        self.configs[event.config].record(event.instance, event.measured_s)?;
        self.t = event.t;
        self.charged = event.charged_total_s;
        Ok(())
    }

    /// Most active instances, then smaller capped mean, then lower index.
    pub fn incumbent(&self) -> usize {
        let mut best = 0;
        for i in 1..self.configs.len() {
            let (c, b) = (&self.configs[i], &self.configs[best]);
            let better = c.r() > b.r()
                || (c.r() == b.r()
                    && c.r() > 0
                    && c.capped_mean().unwrap_or(f64::INFINITY) < b.capped_mean().unwrap_or(f64::INFINITY));
            if better {
                best = i;
            }
        }
        best
    }

    fn row(&self, charged_s: f64) -> TrajectoryRow {
        let incumbent = self.incumbent();
        let trace = self.configs.get(incumbent);
        TrajectoryRow {
            charged_s,
            t: self.t,
            incumbent,
            r: trace.map_or(0, ConfigTrace::r),
            capped_mean_s: trace.and_then(ConfigTrace::capped_mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub charged_s: f64,
    /// Last iteration at or below the grid point.
    pub t: u64,
    pub incumbent: usize,
    pub r: u64,
    pub capped_mean_s: Option<f64>,
}

/// Incumbent after the last event whose cumulative charge is at most each
/// grid point. The grid must be ascending.
pub fn trajectory(events: &[EventRecord], grid: &[f64]) -> Result<Vec<TrajectoryRow>> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("grid", "grid points must be ascending"));
    }
    let mut tracker = IncumbentTracker::default();
    let mut next = 0;
    let mut rows = Vec::with_capacity(grid.len());
    for &g in grid {
        while next < events.len() && events[next].charged_total_s <= g {
            tracker.apply(&events[next])?;
            next += 1;
        }
        rows.push(tracker.row(g));
    }
    Ok(rows)
}

/// `count` points `start · factor^i`.
pub fn geometric_grid(start: f64, factor: f64, count: usize) -> Result<Vec<f64>> {
    if !(start > 0.0) || !(factor > 1.0) {
        return Err(Error::invalid("grid", "start must be positive and factor above 1"));
    }
    Ok((0..count).map(|i| start * factor.powi(i as i32)).collect())
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["charged_s", "t", "incumbent", "r", "capped_mean_s"])
        .map_err(err)?;
    for row in rows {
        w.write_record([
            row.charged_s.to_string(),
            row.t.to_string(),
            row.incumbent.to_string(),
            row.r.to_string(),
            row.capped_mean_s.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}
