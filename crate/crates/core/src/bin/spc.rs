use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spc_core::analysis::analyze_eps_delta;
use spc_core::baseline::{run_baseline, sp_queue_size, BaselineParams};
use spc_core::certificate::certify_delta;
use spc_core::checkpoint::{self, EngineState};
use spc_core::config::{Backend, PoolConfig, RunConfig};
use spc_core::eventlog::{read_event_file, EventRecord};
use spc_core::runners::{load_matrix, ChargeMode, FailurePolicy};
use spc_core::scheduler::StopReason;
use spc_core::session::{Session, SessionReport};
use spc_core::trajectory::{geometric_grid, trajectory, write_trajectory_csv};
use spc_core::{Error, Result};

/// Exit status when no certificate exists at the requested parameters.
const EXIT_NO_CERTIFICATE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "spc",
    version,
    about = "Anytime algorithm configuration with confidence bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search a set of configurations.
    Run(RunArgs),
    /// Continue a run from its checkpoint.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Replace the stored budget, e.g. to extend a finished run.
        #[arg(long = "budget-seconds")]
        budget_seconds: Option<f64>,
    },
    /// Incumbent over charged time, as CSV.
    Trajectory {
        /// Event log written by `run`.
        #[arg(long)]
        events: PathBuf,
        /// Explicit grid of charged seconds, comma separated; may be empty.
        #[arg(long, conflicts_with_all = ["grid_start", "grid_count"])]
        grid: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        grid_start: f64,
        #[arg(long, default_value_t = 2.0)]
        grid_factor: f64,
        #[arg(long, default_value_t = 20)]
        grid_count: usize,
        /// CSV path; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// (ε, δ) certificate for the winner of a checkpointed run.
    Certificate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Pool level to certify; defaults to the deepest.
        #[arg(long)]
        level: Option<u32>,
    },
    /// Fraction of (ε, δ)-optimal configurations in a runtime matrix.
    Analyze {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        kappa0: f64,
        #[arg(long = "max-cap")]
        max_cap: Option<f64>,
        /// CDF as CSV; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write per-configuration θ* and ε_min as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fixed-queue doubling baseline on a runtime matrix.
    Baseline {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        kappa0: f64,
        #[arg(long, default_value_t = 2.0)]
        multiplier: f64,
        /// Runs per configuration and cap; derived from --epsilon, --zeta
        /// and --beta-levels when omitted.
        #[arg(long)]
        queue_size: Option<u64>,
        #[arg(long, requires_all = ["zeta", "beta_levels"])]
        epsilon: Option<f64>,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        beta_levels: Option<u64>,
        #[arg(long = "budget-seconds")]
        budget_seconds: Option<f64>,
        #[arg(long)]
        max_levels: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Quantile pool: parallel searches over samples of growing size.
    Pool {
        #[command(flatten)]
        run: RunArgs,
        /// `c` in the level size ⌈c·k·2^k⌉.
        #[arg(long, default_value_t = 1.0)]
        sample_constant: f64,
        #[arg(long, default_value_t = 8)]
        max_levels: u32,
        /// Command printing one configuration template per call; `{seed}`
        /// is substituted.
        #[arg(long)]
        generator: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChargeModeArg {
    NonResuming,
    Resuming,
}

#[derive(Clone, Copy, ValueEnum)]
enum FailureArg {
    Completed,
    Timeout,
}

#[derive(Args)]
struct RunArgs {
    /// Runtime matrix CSV (simulated backend).
    #[arg(long, conflicts_with_all = ["command", "instances"])]
    matrix: Option<PathBuf>,
    /// Command template, one per configuration; placeholders {instance},
    /// {seed} and {cutoff}.
    #[arg(long, requires = "instances")]
    command: Vec<String>,
    /// Directory of instance files (real backend).
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long)]
    kappa0: f64,
    #[arg(long, default_value_t = 2.0)]
    multiplier: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "budget-seconds")]
    budget_seconds: f64,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<u64>,
    #[arg(long = "charge-mode", value_enum, default_value = "non-resuming")]
    charge_mode: ChargeModeArg,
    #[arg(long = "max-cap")]
    max_cap: Option<f64>,
    /// Output directory for events.jsonl, report.json and the checkpoint.
    #[arg(long, default_value = "spc-out")]
    output: PathBuf,
    /// How a nonzero exit before the cap is recorded.
    #[arg(long = "failure-policy", value_enum, default_value = "completed")]
    failure_policy: FailureArg,
}

impl RunArgs {
    fn into_config(self, pool: Option<PoolConfig>) -> Result<RunConfig> {
        let backend = match (self.matrix, self.instances) {
            (Some(path), _) => Backend::Matrix { path },
            (None, Some(instances)) => Backend::Command {
                templates: self.command,
                instances,
                failure_policy: match self.failure_policy {
                    FailureArg::Completed => FailurePolicy::Completed,
                    FailureArg::Timeout => FailurePolicy::Timeout,
                },
            },
            (None, None) => {
                return Err(Error::InvalidParameter {
                    name: "backend",
                    reason: "pass --matrix, or --command with --instances".into(),
                })
            }
        };
        Ok(RunConfig {
            backend,
            kappa0: self.kappa0,
            multiplier: self.multiplier,
            seed: self.seed,
            budget_seconds: self.budget_seconds,
            checkpoint: self.checkpoint,
            checkpoint_every: self.checkpoint_every,
            charge_mode: match self.charge_mode {
                ChargeModeArg::NonResuming => ChargeMode::NonResuming,
                ChargeModeArg::Resuming => ChargeMode::Resuming,
            },
            max_cap: self.max_cap,
            output: self.output,
            pool,
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run(args) => run_session(Session::start(args.into_config(None)?)?),
        Cmd::Pool {
            run,
            sample_constant,
            max_levels,
            generator,
        } => {
            let pool = PoolConfig {
                sample_constant,
                max_levels,
                generator,
            };
            run_session(Session::start(run.into_config(Some(pool))?)?)
        }
        Cmd::Resume {
            checkpoint,
            budget_seconds,
        } => run_session(Session::resume(&checkpoint, budget_seconds)?),
        Cmd::Trajectory {
            events,
            grid,
            grid_start,
            grid_factor,
            grid_count,
            output,
        } => {
            let events: Vec<EventRecord> = read_event_file(&events)?;
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => geometric_grid(grid_start, grid_factor, grid_count)?,
            };
            let rows = trajectory(&events, &grid)?;
            with_output(output.as_deref(), |w| write_trajectory_csv(&rows, w))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Certificate {
            checkpoint,
            epsilon,
            lambda,
            level,
        } => certificate(&checkpoint, epsilon, lambda, level),
        Cmd::Analyze {
            matrix,
            delta,
            kappa0,
            max_cap,
            output,
            json,
        } => {
            let m = load_matrix(&matrix, kappa0)?;
            let analysis = analyze_eps_delta(&m, &delta, max_cap)?;
            if let Some(path) = json {
                fs::write(path, serde_json::to_string_pretty(&analysis)? + "\n")?;
            }
            with_output(output.as_deref(), |w| analysis.write_cdf_csv(w))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Baseline {
            matrix,
            kappa0,
            multiplier,
            queue_size,
            epsilon,
            zeta,
            beta_levels,
            budget_seconds,
            max_levels,
            seed,
            output,
        } => {
            let m = load_matrix(&matrix, kappa0)?;
            let queue_size = match (queue_size, epsilon) {
                (Some(q), _) => q,
                (None, Some(e)) => sp_queue_size(
                    e,
                    zeta.unwrap_or_default(),
                    m.n_configs() as u64,
                    beta_levels.unwrap_or_default(),
                )?,
                (None, None) => {
                    return Err(Error::InvalidParameter {
                        name: "queue_size",
                        reason: "pass --queue-size or --epsilon/--zeta/--beta-levels".into(),
                    })
                }
            };
            let params = BaselineParams {
                queue_size,
                kappa0,
                multiplier,
                budget: budget_seconds,
                max_levels,
                seed,
            };
            let report = run_baseline(&m, &params)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            with_output(output.as_deref(), |w| Ok(w.write_all(text.as_bytes())?))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_session(mut session: Session) -> Result<ExitCode> {
    let flag = Arc::new(AtomicBool::new(false));
    let handler_flag = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || handler_flag.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install the interrupt handler: {e}");
    }
    let report = session.run(Some(flag.clone()), None)?;
    let config = session.config();
    let stop = match &report {
        SessionReport::Spc(r) => {
            println!(
                "winner {} ({}) after t = {}, {:.6} s charged",
                r.winner, r.winner_label, r.t, r.charged_total_s
            );
            r.stop
        }
        SessionReport::Pool(p) => {
            for l in &p.levels {
                println!(
                    "level {} ({} configs): winner {} ({}), r = {}, {:.6} s charged",
                    l.k, l.size, l.winner, l.winner_label, l.winner_r, l.charged_s
                );
            }
            p.stop
        }
    };
    println!("report: {}", config.report_path().display());
    println!("events: {}", config.events_path().display());
    println!("checkpoint: {}", config.checkpoint_path().display());
    if stop == StopReason::Interrupted {
        eprintln!(
            "interrupted; continue with `spc resume --checkpoint {}`",
            config.checkpoint_path().display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn certificate(path: &Path, epsilon: f64, lambda: f64, level: Option<u32>) -> Result<ExitCode> {
    let ck = checkpoint::load(path)?;
    let (r, t) = match &ck.engine {
        EngineState::Spc(s) => {
            let w = s.current_winner();
            (s.testers()[w].get_num_active(), s.t())
        }
        EngineState::Pool(p) => {
            let k = level.unwrap_or(p.levels().len() as u32);
            let lvl = k
                .checked_sub(1)
                .and_then(|i| p.levels().get(i as usize))
                .ok_or(Error::InactiveLevel(k))?;
            let w = lvl.scheduler.current_winner();
            (lvl.scheduler.testers()[w].get_num_active(), lvl.scheduler.t())
        }
    };
    match certify_delta(r, t, epsilon, lambda)? {
        Some(c) => {
            println!("{}", serde_json::to_string_pretty(&c)?);
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("no certificate at these parameters (r = {r}, t = {t}, epsilon = {epsilon}, lambda = {lambda})");
            Ok(ExitCode::from(EXIT_NO_CERTIFICATE))
        }
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|e| Error::InvalidParameter {
                name: "grid",
                reason: format!("{s:?}: {e}"),
            })
        })
        .collect()
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = io::BufWriter::new(fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}
