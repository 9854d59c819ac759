//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`; pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 3 5`.

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{Dist, SyntheticSource};
use spc_core::analysis::analyze_eps_delta;
use spc_core::baseline::{run_baseline, BaselineParams};
use spc_core::certificate::certify_delta;
use spc_core::config::{Backend, PoolConfig, RunConfig};
use spc_core::lcb::{beta, epsilon, lcb, EmpiricalCdf};
use spc_core::pool::{ConfigSampler, PoolParams, PoolState};
use spc_core::runners::{derive_seed, ChargeMode, MatrixSource, RuntimeMatrix, RuntimeSource, Subset};
use spc_core::scheduler::SchedulerState;
use spc_core::session::Session;
use spc_core::tester::CapSchedule;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "two-configuration golden trace",
        limit: Duration::from_secs(1),
        run: golden_trace,
    },
    Criterion {
        id: 2,
        name: "LCB soundness",
        limit: Duration::from_secs(60),
        run: lcb_soundness,
    },
    Criterion {
        id: 3,
        name: "accounting invariants",
        limit: Duration::from_secs(300),
        run: accounting_invariants,
    },
    Criterion {
        id: 4,
        name: "winner quality",
        limit: Duration::from_secs(600),
        run: winner_quality,
    },
    Criterion {
        id: 5,
        name: "certificate correctness",
        limit: Duration::from_secs(10),
        run: certificates,
    },
    Criterion {
        id: 6,
        name: "interrupt and resume determinism",
        limit: Duration::from_secs(120),
        run: resume_determinism,
    },
    Criterion {
        id: 7,
        name: "quantile pool",
        limit: Duration::from_secs(900),
        run: quantile_pool,
    },
    Criterion {
        id: 8,
        name: "(eps, delta) analysis",
        limit: Duration::from_secs(1),
        run: eps_delta_analysis,
    },
];

fn main() -> ExitCode {
    let wanted: HashSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} ({}; {:.2?} of {:?}{})",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed,
            c.limit,
            if in_time { "" } else { ", over time" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn matrix(rows: Vec<Vec<f64>>, kappa0: f64) -> RuntimeMatrix {
    let configs = (0..rows.len()).map(|i| format!("c{i}")).collect();
    let instances = (0..rows[0].len()).map(|j| format!("i{j}")).collect();
    RuntimeMatrix::new(configs, instances, rows, kappa0).unwrap()
}

/// Constant 100 ms and 1000 ms configurations, in milliseconds so that every
/// charge is an exact integer.
fn golden_trace() -> Outcome {
    let m = matrix(vec![vec![100.0], vec![1000.0]], 1.0);
    let mut source = MatrixSource::new(m.clone(), ChargeMode::NonResuming);
    let mut state = SchedulerState::for_source(&source, CapSchedule::new(1.0, 2.0, None).unwrap(), 0).unwrap();

    let mut max_queue = 0;
    let mut reached: [Option<(u64, f64)>; 2] = [None, None];
    let mut charged_before = 0.0;
    for _ in 0..5000 {
        let e = state.step(&mut source).unwrap();
        for t in state.testers() {
            max_queue = max_queue.max(t.q()).max(t.queue().len() as u64);
        }
        if e.cap_s >= 128.0 && reached[e.config].is_none() {
            reached[e.config] = Some((e.t, charged_before));
        }
        charged_before = e.charged_total_s;
    }
    let (Some(a), Some(b)) = (reached[0], reached[1]) else {
        return Outcome::new(
            false,
            format!("cap 128 ms not attempted by both configurations: {reached:?}"),
        );
    };
    let spc_time = a.1.max(b.1);
    let spc_iter = a.0.max(b.0);

    let report = run_baseline(
        &m,
        &BaselineParams {
            queue_size: 7500,
            kappa0: 1.0,
            multiplier: 2.0,
            budget: None,
            max_levels: Some(8),
            seed: 0,
        },
    )
    .unwrap();
    let baseline_time = report.charged_before(128.0);
    let ratio = baseline_time.unwrap_or(f64::NAN) / spc_time;

    let pass = max_queue <= 400
        && spc_iter <= 5000
        && spc_time <= 101_600.0
        && baseline_time == Some(1_905_000.0)
        && ratio >= 15.0;
    Outcome::new(
        pass,
        format!(
            "max queue {max_queue}, cap 128 ms by t = {spc_iter} after {spc_time} ms, baseline {baseline_time:?} ms, ratio {ratio:.2}"
        ),
    )
}

fn lcb_soundness() -> Outcome {
    let dists = [
        ("exponential", Dist::Exp { floor: 0.0, mean: 1.0 }),
        ("lognormal", Dist::LogNormal { mu: 0.0, sigma: 1.0 }),
    ];
    let trials = 1000;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, dist) in dists {
        for r in [100usize, 1_000, 10_000] {
            let mut rng = ChaCha8Rng::seed_from_u64(r as u64 ^ 0x5eed);
            let mut above = 0;
            for _ in 0..trials {
                let values: Vec<f64> = (0..r).map(|_| dist.sample(&mut rng)).collect();
                let cdf = EmpiricalCdf::new(values).unwrap();
                if lcb(&cdf, 100, 1e-9).bound > dist.mean() {
                    above += 1;
                }
            }
            let frac = above as f64 / trials as f64;
            worst = worst.max(frac);
            parts.push(format!("{name} r={r}: {frac}"));
        }
    }
    Outcome::new(
        worst <= 0.05,
        format!("worst violation rate {worst}; {}", parts.join(", ")),
    )
}

/// Independent evaluation of `β(p, r, t)`.
fn oracle_beta(p: f64, r: u64, t: u64) -> f64 {
    let k = ((1.0 / p).log2().floor() as u32).max(1);
    let t = t.max(2) as f64;
    let eps = (9.0 * 2f64.powi(k as i32) * (k as f64 * t).ln() / r as f64).sqrt();
    if eps <= 0.5 {
        p / (1.0 + eps)
    } else {
        0.0
    }
}

fn accounting_invariants() -> Outcome {
    let kappa0 = 0.01;
    let mut violations = Vec::new();
    let mut checks = 0u64;
    let mut beta_checks = 0u64;
    for run in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(run);
        let n = rng.random_range(2..=6);
        let width = rng.random_range(1..=30);
        let rows = (0..n)
            .map(|_| {
                (0..width)
                    .map(|_| kappa0 * 2f64.powf(rng.random_range(0.0..10.0)))
                    .collect()
            })
            .collect();
        let mut source = MatrixSource::new(matrix(rows, kappa0), ChargeMode::NonResuming);
        let schedule = CapSchedule::new(kappa0, 2.0, None).unwrap();
        let mut state = SchedulerState::for_source(&source, schedule, rng.random()).unwrap();
        let steps = rng.random_range(2_000..25_000);
        for _ in 0..steps {
            let e = state.step(&mut source).unwrap();
            let t = state.t();
            for (i, tester) in state.testers().iter().enumerate() {
                let l = tester.get_lcb(t);
                if l > kappa0 {
                    checks += 1;
                    let bound = 9.0 * tester.get_num_active() as f64 * l;
                    if tester.cumulative_charged() > bound {
                        violations.push(format!(
                            "run {run} t {t} config {i}: charged {} > 9rL = {bound}",
                            tester.cumulative_charged()
                        ));
                    }
                }
            }
            let tester = &state.testers()[e.config];
            if let Err(msg) = tester.check_invariants() {
                violations.push(format!("run {run} t {t} config {}: {msg}", e.config));
            }
            let r = tester.get_num_active();
            for p in [1.0, 0.75, 0.5, 0.3, 0.2, 0.1, 0.01, 1.0 / r as f64] {
                let b = beta(p, r, t).unwrap();
                if (b - oracle_beta(p, r, t)).abs() > 1e-12 * p {
                    violations.push(format!("beta({p}, {r}, {t}) = {b}, expected {}", oracle_beta(p, r, t)));
                }
                let k = ((1.0 / p).log2().floor() as u32).max(1);
                if epsilon(k, r, t.max(2)).unwrap() <= 0.5 {
                    beta_checks += 1;
                    if b < 2.0 / 3.0 * p {
                        violations.push(format!("beta({p}, {r}, {t}) = {b} < 2p/3"));
                    }
                }
            }
        }
    }
    let detail = format!(
        "{checks} charge checks, {beta_checks} beta checks, {} violations{}",
        violations.len(),
        violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
    );
    Outcome::new(violations.is_empty() && beta_checks > 0, detail)
}

/// `ε⁻² δ⁻¹ ln(t ln(1/δ))`.
fn b_curve(t: u64, eps: f64, delta: f64) -> f64 {
    (t as f64 * (1.0 / delta).ln()).ln() / (eps * eps * delta)
}

/// Largest power of two not above `x`.
fn floor_pow2(x: u64) -> u64 {
    1 << x.ilog2()
}

fn winner_quality() -> Outcome {
    let kappa0 = 0.01;
    let budget = 5000.0;
    // Every suboptimal exponential configuration is (ε, δ)-suboptimal for
    // δ = 1/4 and any ε below floor + (1 - δ)(mean - floor) - 1.
    let delta = 0.25;
    let mut correct = 0;
    let mut growth_checks = 0;
    let mut growth_violations = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let best = rng.random_range(0..100);
        let dists: Vec<Dist> = (0..100)
            .map(|i| Dist::Exp {
                floor: kappa0,
                mean: if i == best { 1.0 } else { rng.random_range(2.0..10.0) },
            })
            .collect();
        let mut source = SyntheticSource::new(dists.clone());
        let schedule = CapSchedule::new(kappa0, 2.0, None).unwrap();
        let mut state = SchedulerState::for_source(&source, schedule, seed).unwrap();
        let mut checkpoints: Vec<(u64, Vec<u64>)> = Vec::new();
        while state.charged_total() < budget {
            state.step(&mut source).unwrap();
            if state.t().is_power_of_two() {
                checkpoints.push((state.t(), state.testers().iter().map(|t| t.get_num_active()).collect()));
            }
        }
        if state.current_winner() == best {
            correct += 1;
        }
        let end = state.t();
        checkpoints.push((end, state.testers().iter().map(|t| t.get_num_active()).collect()));
        let anchor_t = floor_pow2(end / 4);
        let anchor = checkpoints.iter().position(|(t, _)| *t == anchor_t).unwrap();
        for (i, d) in dists.iter().enumerate().filter(|&(i, _)| i != best) {
            let Dist::Exp { floor, mean } = *d else { unreachable!() };
            let eps = floor + (1.0 - delta) * (mean - floor) - 1.0;
            let (t0, r0) = (checkpoints[anchor].0, checkpoints[anchor].1[i] as f64);
            for (t, rs) in &checkpoints[anchor + 1..] {
                growth_checks += 1;
                let allowed = 3.0 * r0 * b_curve(*t, eps, delta) / b_curve(t0, eps, delta);
                if rs[i] as f64 > allowed {
                    growth_violations.push(format!("seed {seed} config {i}: r {} at t {t} > {allowed:.1}", rs[i]));
                }
            }
        }
    }
    Outcome::new(
        correct >= 95 && growth_violations.is_empty(),
        format!(
            "optimal winner in {correct}/100 seeds; {growth_checks} growth checks, {} above 3x the curve{}",
            growth_violations.len(),
            growth_violations
                .first()
                .map(|v| format!("; first: {v}"))
                .unwrap_or_default()
        ),
    )
}

/// Independent form of the certificate condition.
fn oracle_holds(r: u64, t: u64, eps: f64, lambda: f64, delta: f64) -> bool {
    let t = t.max(2) as f64;
    let inner = (1.0 / delta).log2().max(1.0);
    eps * eps * delta >= 72.0 * lambda * (t * inner).log2() / r as f64
}

fn certificates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut problems = Vec::new();
    let mut certified = 0;
    for _ in 0..1000 {
        let r = 10f64.powf(rng.random_range(2.0..12.0)) as u64;
        let t = r.saturating_mul(rng.random_range(1..50));
        let eps = rng.random_range(0.01..2.0);
        let lambda = rng.random_range(1.0..5.0);
        match certify_delta(r, t, eps, lambda).unwrap() {
            Some(c) => {
                certified += 1;
                let d = c.delta;
                if !oracle_holds(r, t, eps, lambda, d) {
                    problems.push(format!("δ = {d} fails at r={r} t={t} ε={eps} λ={lambda}"));
                }
                if oracle_holds(r, t, eps, lambda, d * (1.0 - 1e-9)) {
                    problems.push(format!("δ = {d} not tight at r={r} t={t} ε={eps} λ={lambda}"));
                }
                if oracle_holds(r, t, eps, lambda, d / 1.001) {
                    problems.push(format!("δ/1.001 holds at r={r} t={t} ε={eps} λ={lambda}"));
                }
            }
            None => {
                if oracle_holds(r, t, eps, lambda, 0.5) {
                    problems.push(format!("no certificate although δ = 0.5 holds at r={r} t={t}"));
                }
            }
        }
    }
    let worked = certify_delta(1_000_000, 1_000_000, 0.5, 1.0).unwrap().map(|c| c.delta);
    let bracket = !oracle_holds(1_000_000, 1_000_000, 0.5, 1.0, 0.005)
        && oracle_holds(1_000_000, 1_000_000, 0.5, 1.0, 0.01)
        && worked.is_some_and(|d| d > 0.005 && d <= 0.01);
    Outcome::new(
        problems.is_empty() && bracket && certified >= 500,
        format!(
            "{certified}/1000 certified, {} problems, worked example δ = {worked:?}{}",
            problems.len(),
            problems.first().map(|p| format!("; first: {p}")).unwrap_or_default()
        ),
    )
}

fn write_matrix_csv(path: &std::path::Path, rng: &mut ChaCha8Rng, configs: usize, instances: usize) {
    let mut text = String::from("config_id");
    for j in 0..instances {
        text += &format!(",i{j}");
    }
    text.push('\n');
    for i in 0..configs {
        text += &format!("c{i}");
        let scale = 10f64.powf(rng.random_range(-1.5..0.5));
        for _ in 0..instances {
            text += &format!(",{:.4}", (scale * rng.random_range(0.2..2.0)).max(0.01));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn run_config(matrix: &std::path::Path, output: &std::path::Path, seed: u64, pool: bool) -> RunConfig {
    RunConfig {
        backend: Backend::Matrix {
            path: matrix.to_path_buf(),
        },
        kappa0: 0.01,
        multiplier: 2.0,
        seed,
        budget_seconds: if pool { 60.0 } else { 150.0 },
        checkpoint: None,
        checkpoint_every: Some(997),
        charge_mode: if seed % 2 == 0 {
            ChargeMode::NonResuming
        } else {
            ChargeMode::Resuming
        },
        max_cap: None,
        output: output.to_path_buf(),
        pool: pool.then_some(PoolConfig {
            sample_constant: 1.0,
            max_levels: 4,
            generator: None,
        }),
    }
}

fn session_steps(session: &Session) -> u64 {
    session.engine().steps()
}

/// Full runs against runs stopped at one or two random step boundaries and
/// resumed from the checkpoint.
fn resume_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut identical = 0;
    let mut trials = 0;
    let mut notes = Vec::new();
    let mut lengths = Vec::new();
    let scenarios = [(0u64, false), (1, false), (2, true), (3, true), (4, false)];
    for (n, &(seed, pool)) in scenarios.iter().enumerate() {
        let matrix = dir.path().join(format!("m{n}.csv"));
        write_matrix_csv(&matrix, &mut rng, 12, 40);
        let reference = dir.path().join(format!("ref{n}"));
        let mut full = Session::start(run_config(&matrix, &reference, seed, pool)).unwrap();
        full.run(None, None).unwrap();
        let total = session_steps(&full);
        lengths.push(total);
        let want = std::fs::read(reference.join("events.jsonl")).unwrap();

        for trial in 0..10 {
            trials += 1;
            let out = dir.path().join(format!("run{n}-{trial}"));
            let mut stops = vec![rng.random_range(1..total)];
            if trial % 3 == 0 {
                stops.push(rng.random_range(stops[0]..total));
            }
            let mut session = Session::start(run_config(&matrix, &out, seed, pool)).unwrap();
            session.run(None, Some(stops[0])).unwrap();
            let checkpoint = session.config().checkpoint_path();
            drop(session);
            for &stop in &stops[1..] {
                Session::resume(&checkpoint, None)
                    .unwrap()
                    .run(None, Some(stop))
                    .unwrap();
            }
            Session::resume(&checkpoint, None).unwrap().run(None, None).unwrap();
            let got = std::fs::read(out.join("events.jsonl")).unwrap();
            if got == want {
                identical += 1;
            } else {
                notes.push(format!("scenario {n} stops {stops:?}"));
            }
        }
    }
    Outcome::new(
        identical == trials,
        format!(
            "{identical}/{trials} resumed logs byte-identical, run lengths {lengths:?}{}",
            if notes.is_empty() {
                String::new()
            } else {
                format!(", differing: {}", notes.join("; "))
            }
        ),
    )
}

/// 10 000 configurations, 1% of them fast.
fn fast_pool(seed: u64) -> Vec<Dist> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..10_000)
        .map(|_| {
            let mean = if rng.random_bool(0.01) {
                rng.random_range(0.3..0.6)
            } else {
                rng.random_range(50.0..200.0)
            };
            Dist::Exp { floor: 0.01, mean }
        })
        .collect()
}

fn pool_params(seed: u64, c: f64, max_levels: u32) -> PoolParams {
    PoolParams {
        schedule: CapSchedule::new(0.01, 2.0, None).unwrap(),
        seed,
        sample_constant: c,
        max_levels,
    }
}

fn quantile_pool() -> Outcome {
    // Charge shares after 10^4 virtual seconds.
    let dists = fast_pool(0);
    let mut source = SyntheticSource::new(dists.clone());
    let mut pool = PoolState::new(pool_params(0, 1.0, 7), ConfigSampler::FinitePool, &mut source).unwrap();
    while pool.total_charged() < 1e4 {
        pool.pool_step(&mut source).unwrap();
    }
    let norm: f64 = pool.levels().iter().map(|l| 1.0 / f64::from(l.k * l.k)).sum();
    let worst_share = pool
        .levels()
        .iter()
        .map(|l| {
            let want = 1.0 / f64::from(l.k * l.k) / norm;
            (l.charged() / pool.total_charged() - want).abs() / want
        })
        .fold(0.0, f64::max);
    let shares_ok = pool.levels().len() == 7 && worst_share <= 0.05;

    // One level against a standalone scheduler on the same sample.
    let mut source = SyntheticSource::new(dists.clone());
    let mut single = PoolState::new(pool_params(11, 8.0, 1), ConfigSampler::FinitePool, &mut source).unwrap();
    let configs = single.levels()[0].configs.clone();
    let mut standalone_source = SyntheticSource::new(dists.clone());
    let mut standalone = SchedulerState::new(
        configs.len(),
        standalone_source.num_instances(),
        pool_params(11, 8.0, 1).schedule,
        derive_seed(11, 1),
    )
    .unwrap();
    let mut same_log = true;
    for _ in 0..20_000 {
        let a = single.pool_step(&mut source).unwrap();
        let b = standalone
            .step(&mut Subset::new(&mut standalone_source, &configs))
            .unwrap();
        let (la, lb) = (
            serde_json::to_string(&a.event).unwrap(),
            serde_json::to_string(&b).unwrap(),
        );
        if la != lb || a.global_config != configs[b.config] {
            same_log = false;
            break;
        }
    }

    // Level 7 winner against the true top 2%.
    let mut good = 0;
    for seed in 0..100 {
        let dists = fast_pool(seed);
        let mut means: Vec<f64> = dists.iter().map(Dist::mean).collect();
        means.sort_by(f64::total_cmp);
        let threshold = means[means.len() / 50 - 1];
        let mut source = SyntheticSource::new(dists.clone());
        let mut pool = PoolState::new(pool_params(seed, 1.0, 7), ConfigSampler::FinitePool, &mut source).unwrap();
        while pool.total_charged() < 5e5 {
            pool.pool_step(&mut source).unwrap();
        }
        if dists[pool.pool_winner(7).unwrap()].mean() <= threshold {
            good += 1;
        }
    }

    Outcome::new(
        shares_ok && same_log && good >= 90,
        format!(
            "{} levels, worst share error {:.2}%, single-level log {}, level 7 top-2% in {good}/100",
            pool.levels().len(),
            100.0 * worst_share,
            if same_log { "identical" } else { "differs" }
        ),
    )
}

fn eps_delta_analysis() -> Outcome {
    let example = matrix(vec![vec![100.0], vec![1000.0]], 1.0);
    let a = analyze_eps_delta(&example, &[0.1], None).unwrap();
    let example_ok = a.deltas[0].eps_min == [0.0, 9.0];
    let flat = matrix(vec![vec![0.7; 4]; 5], 0.01);
    let b = analyze_eps_delta(&flat, &[0.1, 0.5], None).unwrap();
    let flat_ok = b.deltas.iter().all(|d| d.eps_min.iter().all(|&e| e == 0.0));
    Outcome::new(
        example_ok && flat_ok,
        format!(
            "two-configuration eps_min {:?}, identical matrix all zero: {flat_ok}",
            a.deltas[0].eps_min
        ),
    )
}
