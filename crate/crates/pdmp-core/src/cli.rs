//! `pdmp-kit` command-line front end.
//!
//! Every subcommand takes `--config <path>` plus optional `--out`, `--seed`
//! (overrides the config seed) and `--threads`. Exit codes: 0 success,
//! 1 configuration error, 2 suspected explosion, 3 rate-bound violation,
//! 4 statistical failure.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{
    bias_sweep, gaussian_candidate, invariance_test, BiasSweepReport, TestFunction,
};
use crate::config::{RunConfig, SamplerConfig};
use crate::coupling::{verify_tv_bound, CoupledCharacteristics, GBound};
use crate::engine::{
    replica_seed, simulate, Characteristics, EngineConfig, RecordMode, TrajectoryStatus,
};
use crate::error::{PdmpError, Result};
use crate::mechanisms::{minimal_mechanism, total_mechanism};
use crate::report::{fmt_float, write_csv, write_grid_csv, write_trajectory_csv, write_tv_report_csv};
use crate::rng::RngStreams;
use crate::samplers::{build_bps, build_zigzag, initial_state, BpsVariant};
use crate::stats::ks_two_sample;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_EXPLOSION: i32 = 2;
pub const EXIT_RATE_BOUND: i32 = 3;
pub const EXIT_STATISTICAL: i32 = 4;

#[derive(Parser)]
#[command(name = "pdmp-kit", version, about = "Simulate and verify PDMP samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and export its skeleton (and grid, if configured).
    Simulate(CommonArgs),
    /// Couple two variants of a sampler and verify the decoupling bound.
    Couple(CommonArgs),
    /// Test whether a candidate product measure is invariant.
    CheckInvariance(CommonArgs),
    /// Sweep truncation caps and report empirical bias against the bound proxy.
    BiasSweep(CommonArgs),
    /// Distributional equivalence checks across constructions and mechanism forms.
    Equivalence(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the INI run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV reports (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the worker thread pool (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (common, body): (&CommonArgs, fn(&RunConfig, &Path) -> Result<i32>) =
        match &cli.command {
            Command::Simulate(a) => (a, cmd_simulate),
            Command::Couple(a) => (a, cmd_couple),
            Command::CheckInvariance(a) => (a, cmd_check_invariance),
            Command::BiasSweep(a) => (a, cmd_bias_sweep),
            Command::Equivalence(a) => (a, cmd_equivalence),
        };
    match setup(common).and_then(|cfg| body(&cfg, &common.out)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PdmpError::RateBoundViolated { .. } => EXIT_RATE_BOUND,
                _ => EXIT_CONFIG,
            }
        }
    }
}

fn setup(common: &CommonArgs) -> Result<RunConfig> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(PdmpError::Config("--threads must be at least 1".into()));
        }
        // Ignore the error: the global pool can only be configured once,
        // which only matters in-process for tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&common.out)?;
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.engine.seed = seed;
    }
    Ok(cfg)
}

fn build_characteristics(sampler: &SamplerConfig) -> Characteristics {
    match sampler {
        SamplerConfig::Bps(spec) => build_bps(spec),
        SamplerConfig::ZigZag(spec) => build_zigzag(spec),
    }
}

fn default_init(cfg: &RunConfig) -> crate::state_space::PhaseState {
    let mut rng = RngStreams::new(cfg.engine.seed).stream(u64::MAX);
    initial_state(&cfg.sampler.velocity_space(), &mut rng)
}

fn status_exit(status: TrajectoryStatus) -> i32 {
    match status {
        TrajectoryStatus::Completed => EXIT_OK,
        TrajectoryStatus::ExplosionSuspected => EXIT_EXPLOSION,
        TrajectoryStatus::RateBoundViolated => EXIT_RATE_BOUND,
    }
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let ch = build_characteristics(&cfg.sampler);
    let init = default_init(cfg);
    let start = Instant::now();
    let traj = simulate(&ch, &init, &cfg.engine);
    let wall = start.elapsed().as_secs_f64();

    write_trajectory_csv(&out.join("trajectory.csv"), &traj)?;
    if matches!(cfg.engine.record, RecordMode::SkeletonPlusGrid(_)) {
        write_grid_csv(&out.join("grid.csv"), &traj)?;
    }

    let phantoms = traj.events.iter().filter(|e| e.phantom).count();
    let total = traj.events.len();
    println!(
        "events={total} true_jumps={} phantoms={phantoms} t_end={:.6} wall={wall:.3}s rate={:.3e} events/s status={:?}",
        total - phantoms,
        traj.t_end,
        total as f64 / wall.max(1e-12),
        traj.status,
    );
    Ok(status_exit(traj.status))
}

fn cmd_couple(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let spec = match &cfg.sampler {
        SamplerConfig::Bps(spec) => spec,
        SamplerConfig::ZigZag(_) => {
            return Err(PdmpError::Config("couple requires a bps sampler".into()))
        }
    };
    if cfg.experiment.t_grid.is_empty() {
        return Err(PdmpError::Config("couple requires a nonempty t_grid".into()));
    }
    let t_max = cfg.experiment.t_grid.iter().cloned().fold(0.0, f64::max);
    if t_max > cfg.engine.t_end {
        return Err(PdmpError::Config("t_grid exceeds t_end".into()));
    }

    let g = match (cfg.experiment.g_bound, spec.variant) {
        (Some(g), _) => g,
        (None, BpsVariant::Smoothed(eps)) => crate::coupling::smoothing_dominator(eps),
        (None, BpsVariant::Exact) => 0.0,
        (None, BpsVariant::Truncated(_)) => {
            return Err(PdmpError::Config(
                "truncated variant needs an explicit g_bound".into(),
            ))
        }
    };
    let exact_spec = spec.clone().with_variant(BpsVariant::Exact);
    let m1 = total_mechanism(&build_bps(&exact_spec).mechanisms)?;
    let m2 = total_mechanism(&build_bps(spec).mechanisms)?;
    let g_bound: GBound = Arc::new(move |_| g);
    let cc = CoupledCharacteristics::new(crate::state_space::Flow::FreeTransport, m1, m2, g_bound);

    let init = default_init(cfg);
    let report = verify_tv_bound(
        &cc,
        &init,
        &cfg.experiment.t_grid,
        cfg.experiment.n_runs,
        &cfg.engine,
    );
    write_tv_report_csv(&out.join("couple.csv"), &report.rows)?;
    for row in &report.rows {
        println!(
            "t={:.4} p_decouple={:.5} bound={:.5} {}",
            row.t,
            row.p_decouple,
            row.bound,
            if row.pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "marginal KS p1={:.4} p2={:.4} {}",
        report.marginal_p[0],
        report.marginal_p[1],
        if report.marginal_pass { "PASS" } else { "FAIL" }
    );
    Ok(if report.pass() { EXIT_OK } else { EXIT_STATISTICAL })
}

fn battery(d: usize) -> Vec<TestFunction> {
    if d == 1 {
        TestFunction::standard_battery_1d()
    } else {
        vec![
            TestFunction::coordinate_x(0, d),
            TestFunction::coordinate_x_squared(0, d),
            TestFunction::coordinate_y(0, d),
            TestFunction::coordinate_xy(0, d),
            TestFunction::smooth_bump(3.0),
        ]
    }
}

fn cmd_check_invariance(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let ch = build_characteristics(&cfg.sampler);
    let d = cfg.sampler.potential().dim();
    let candidate = gaussian_candidate(
        d,
        cfg.experiment.candidate_sigma,
        cfg.sampler.velocity_space(),
    );
    let fs = battery(d);
    let report = invariance_test(&ch, candidate, &fs, cfg.experiment.n_samples, cfg.engine.seed)?;

    let rows: Vec<Vec<String>> = report
        .lines
        .iter()
        .map(|l| {
            vec![
                l.name.clone(),
                fmt_float(l.estimate.mean),
                fmt_float(l.estimate.stderr),
                fmt_float(l.z),
                (l.pass as u8).to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("invariance.csv"), "function,mean,stderr,z,pass", &rows)?;
    for l in &report.lines {
        println!(
            "{}: mean={:+.3e} z={:+.2} {}",
            l.name,
            l.estimate.mean,
            l.z,
            if l.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_STATISTICAL })
}

fn bias_sweep_pass(report: &BiasSweepReport) -> bool {
    let proxies: Vec<f64> = report.rows.iter().map(|r| r.bound_proxy).collect();
    let decreasing = proxies.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let last_unbiased = report.rows.last().map_or(false, |r| {
        r.biases
            .iter()
            .zip(&r.bias_stderrs)
            .all(|(b, se)| b.abs() <= 4.0 * se)
    });
    decreasing && last_unbiased
}

fn cmd_bias_sweep(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let spec = match &cfg.sampler {
        SamplerConfig::Bps(spec) => spec,
        SamplerConfig::ZigZag(_) => {
            return Err(PdmpError::Config("bias-sweep requires a bps sampler".into()))
        }
    };
    let caps = &cfg.experiment.caps;
    if caps.is_empty() {
        return Err(PdmpError::Config("bias-sweep requires a nonempty caps list".into()));
    }
    if !caps.windows(2).all(|w| w[0] < w[1]) {
        return Err(PdmpError::Config("caps must be strictly increasing".into()));
    }
    let d = spec.potential.dim();
    let fs = vec![
        TestFunction::coordinate_x(0, d),
        TestFunction::coordinate_x_squared(0, d),
    ];
    let base = spec.clone().with_variant(BpsVariant::Exact);
    let report = bias_sweep(
        &base,
        caps,
        &fs,
        cfg.engine.t_end,
        cfg.experiment.n_replicas,
        cfg.engine.seed,
    )?;

    let mut rows = Vec::new();
    for r in &report.rows {
        for (i, name) in report.function_names.iter().enumerate() {
            rows.push(vec![
                fmt_float(r.cap),
                name.clone(),
                fmt_float(r.estimates[i].mean),
                fmt_float(r.estimates[i].stderr),
                fmt_float(r.biases[i]),
                fmt_float(r.bias_stderrs[i]),
                fmt_float(r.bound_proxy),
            ]);
        }
        println!(
            "cap={:.3}: bound_proxy={:.4e} max|bias|={:.3e}",
            r.cap,
            r.bound_proxy,
            r.biases.iter().fold(0.0f64, |a, b| a.max(b.abs())),
        );
    }
    write_csv(
        &out.join("bias_sweep.csv"),
        "cap,function,mean,stderr,bias,bias_stderr,bound_proxy",
        &rows,
    )?;
    Ok(if bias_sweep_pass(&report) { EXIT_OK } else { EXIT_STATISTICAL })
}

/// Per-replica summary statistics for one arm of an equivalence comparison.
struct Batch {
    first_jump: Vec<f64>,
    x_at_t: Vec<f64>,
    n_events: Vec<f64>,
}

fn run_batch(
    ch: &Characteristics,
    space: &crate::state_space::VelocitySpace,
    cfg: &EngineConfig,
    t_marginal: f64,
    n_runs: usize,
    arm_seed: u64,
) -> Batch {
    let l = ch.mechanisms.len();
    let rows: Vec<(f64, f64, f64)> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let rep_seed = replica_seed(arm_seed, l, r);
            let mut init_rng = RngStreams::new(rep_seed).stream(u64::MAX);
            let init = initial_state(space, &mut init_rng);
            let mut c = cfg.clone();
            c.seed = rep_seed;
            let traj = simulate(ch, &init, &c);
            let first = traj
                .events
                .iter()
                .find(|e| !e.phantom)
                .map_or(f64::INFINITY, |e| e.time);
            let x = traj.state_at(ch.flow, t_marginal).x[0];
            let n = traj.events.iter().filter(|e| !e.phantom).count() as f64;
            (first, x, n)
        })
        .collect();
    Batch {
        first_jump: rows.iter().map(|r| r.0).collect(),
        x_at_t: rows.iter().map(|r| r.1).collect(),
        n_events: rows.iter().map(|r| r.2).collect(),
    }
}

fn ks_line(name: &str, a: &[f64], b: &[f64]) -> (Vec<String>, bool) {
    let (d, p) = ks_two_sample(a, b);
    let pass = p > 0.01;
    println!("{name}: D={d:.4} p={p:.4} {}", if pass { "PASS" } else { "FAIL" });
    (
        vec![
            name.to_string(),
            fmt_float(d),
            fmt_float(p),
            (pass as u8).to_string(),
        ],
        pass,
    )
}

fn cmd_equivalence(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let ch = build_characteristics(&cfg.sampler);
    let space = cfg.sampler.velocity_space();
    let t = cfg.experiment.t_marginal;
    if t > cfg.engine.t_end {
        return Err(PdmpError::Config("t_marginal exceeds t_end".into()));
    }
    let n = cfg.experiment.n_runs;
    let streams = RngStreams::new(cfg.engine.seed);
    let arm = |tag: u64| streams.subseed(1000 + tag);

    // constructions: same mechanism list, C1 vs C2 clock bookkeeping
    let c1_cfg = cfg.engine.clone().with_construction(crate::engine::Construction::C1);
    let c2_cfg = cfg.engine.clone().with_construction(crate::engine::Construction::C2);
    let b1 = run_batch(&ch, &space, &c1_cfg, t, n, arm(0));
    let b2 = run_batch(&ch, &space, &c2_cfg, t, n, arm(1));

    // mechanism forms: the list vs its total vs its minimal merge
    let total = Characteristics {
        flow: ch.flow,
        mechanisms: vec![total_mechanism(&ch.mechanisms)?],
    };
    let minimal = Characteristics {
        flow: ch.flow,
        mechanisms: vec![minimal_mechanism(&ch.mechanisms)?],
    };
    let bt = run_batch(&total, &space, &cfg.engine, t, n, arm(2));
    let bm = run_batch(&minimal, &space, &cfg.engine, t, n, arm(3));

    let checks = [
        ks_line("c1_vs_c2_first_jump", &b1.first_jump, &b2.first_jump),
        ks_line("c1_vs_c2_x_marginal", &b1.x_at_t, &b2.x_at_t),
        ks_line("c1_vs_c2_event_count", &b1.n_events, &b2.n_events),
        ks_line("list_vs_total_x_marginal", &b1.x_at_t, &bt.x_at_t),
        ks_line("list_vs_minimal_x_marginal", &b1.x_at_t, &bm.x_at_t),
        ks_line("total_vs_minimal_x_marginal", &bt.x_at_t, &bm.x_at_t),
    ];
    let rows: Vec<Vec<String>> = checks.iter().map(|(row, _)| row.clone()).collect();
    let pass = checks.iter().all(|(_, p)| *p);
    write_csv(&out.join("equivalence.csv"), "test,d,p,pass", &rows)?;
    Ok(if pass { EXIT_OK } else { EXIT_STATISTICAL })
}
