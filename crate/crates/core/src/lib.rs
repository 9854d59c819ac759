//! Anytime algorithm configuration with censored runtime observations.
//!
//! Each candidate configuration gets a [`tester::TesterState`] that runs it
//! on a stream of random instances under doubling captimes and keeps the
//! latest capped runtime of every instance it has started. The
//! [`scheduler::SchedulerState`] repeatedly advances the tester whose lower
//! confidence bound on mean runtime is smallest, and at any moment returns
//! the configuration with the most active instances. After a run,
//! [`certificate::certify_delta`] turns that instance count into an
//! `(ε, δ)` guarantee.
//!
//! ```
//! use spc_core::runners::{ChargeMode, MatrixSource, RuntimeMatrix};
//! use spc_core::scheduler::{Budget, RunOptions, SchedulerState};
//! use spc_core::tester::CapSchedule;
//!
//! let matrix = RuntimeMatrix::from_csv("config_id,a\nfast,0.1\nslow,1.0\n".as_bytes(), 0.001)?;
//! let mut source = MatrixSource::new(matrix, ChargeMode::NonResuming);
//! let schedule = CapSchedule::new(0.001, 2.0, None)?;
//! let mut state = SchedulerState::for_source(&source, schedule, 0)?;
//! let options = RunOptions { budget: Some(Budget::Virtual(200.0)), ..Default::default() };
//! let report = state.run_until(&mut source, &options, &mut ())?;
//! assert_eq!(report.winner_label, "fast");
//! # Ok::<(), spc_core::error::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baseline;
pub mod certificate;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eventlog;
pub mod lcb;
pub mod pool;
pub mod runners;
pub mod sample;
pub mod scheduler;
pub mod session;
pub mod tester;
pub mod trajectory;

pub use error::{Error, Result};
