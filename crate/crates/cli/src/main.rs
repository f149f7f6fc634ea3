use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use heatctl::config::RunConfig;
use heatctl::gains::{verify_gains, GainMargins, GainSet};
use heatctl::halanay::{solve_decay_rate, RateSpec};
use heatctl::lmi::search::{max_feasible_r, min_feasible_n, sweep_n, sweep_r, MaxRResult, MinNResult, NCheck};
use heatctl::lmi::{FamilyRegistry, FeasibilityStatus, DELTA_FLOOR};
use heatctl::reproduce::{self, ReproduceOptions};
use heatctl::sdp::OracleRegistry;
use heatctl::sim::{fit_decay_rate, fmt17, simulate, SimEvent};
use heatctl::{Error, Result};

/// Observer-based delayed boundary control of the heat equation.
#[derive(Parser)]
#[command(name = "heatctl", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration, used when --config is absent.
    #[arg(long, global = true, default_value = "example")]
    preset: String,
    /// LMI family (overrides the config).
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=4))]
    theorem: Option<u8>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Relative margin for strict LMIs (overrides the config).
    #[arg(long, global = true)]
    strictness: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Modal data: eigenvalues, input and output coefficients, tail norms.
    Modal,
    /// Controller and observer gains with their certificates.
    Design,
    /// Feasibility of one LMI instance at the configured N.
    Check {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Feasibility for every N up to N_max, plus the minimal one.
    SweepN {
        /// Stop at the first feasible N instead of sweeping the range.
        #[arg(long)]
        min: bool,
    },
    /// Feasibility over the r grid at the configured N, plus r_max.
    SweepR {
        /// Search the largest feasible r and its minimal N instead.
        #[arg(long)]
        max: bool,
    },
    /// Closed-loop simulation; trace CSV to --out, summary JSON to stdout.
    Simulate,
    /// Recompute a reference table next to the published values.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        table: u8,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Solver(_) => 3,
        Error::Io(_) | Error::Internal(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(&cli.preset)?,
    };
    if let Some(s) = cli.strictness {
        cfg.solver.strictness = s;
    }
    if let Some(t) = cli.theorem {
        cfg.search.theorem = t;
    }
    cfg.validate()?;
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    Ok(cfg)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

fn run(cli: &Cli) -> Result<u8> {
    if let Command::Reproduce { table } = cli.command {
        let opts = ReproduceOptions {
            jobs: cli.jobs,
            strictness: cli.strictness.unwrap_or(heatctl::lmi::DEFAULT_STRICTNESS),
            ..ReproduceOptions::default()
        };
        if !(opts.strictness >= 0.0) {
            return Err(Error::Validation("strictness must be nonnegative".into()));
        }
        let rows = reproduce::reproduce(table, &opts)?;
        reproduce::write_csv(&rows, sink(cli.out.as_deref())?)?;
        return Ok(0);
    }
    let cfg = load(cli)?;
    let oracles = OracleRegistry::with_defaults();
    let families = FamilyRegistry::with_defaults();
    match &cli.command {
        Command::Modal => modal(&cfg, cli),
        Command::Design => design(&cfg, &oracles, cli),
        Command::Check { n } => {
            let probe = cfg.probe(None, &oracles, &families)?;
            let check = probe.check(n.unwrap_or(cfg.search.n))?;
            emit_json(&check, cli.out.as_deref())?;
            Ok(if check.status == FeasibilityStatus::SolverFailure { 3 } else { 0 })
        }
        Command::SweepN { min } => {
            let probe = cfg.probe(None, &oracles, &families)?;
            let lo = probe.gains.n0 + 1;
            let result = if *min {
                let strategy = heatctl::lmi::search::SearchRegistry::with_defaults().min_n(&cfg.search.min_n)?;
                min_feasible_n(&probe, cfg.search.n_max, strategy.as_ref(), cli.jobs)?
            } else {
                let checks = sweep_n(&probe, lo, cfg.search.n_max, cli.jobs)?;
                let n = checks.iter().find(|c| c.is_feasible()).map(|c| c.n);
                MinNResult { n, checks }
            };
            write_checks(&result.checks, cli.out.as_deref())?;
            eprintln!("minimal N: {}", result.n.map_or("none".to_string(), |n| n.to_string()));
            Ok(0)
        }
        Command::SweepR { max } => {
            let probe = cfg.probe(None, &oracles, &families)?;
            let grid = cfg.r_values()?;
            if *max {
                let reg = heatctl::lmi::search::SearchRegistry::with_defaults();
                let res: MaxRResult = max_feasible_r(
                    &probe,
                    &grid,
                    cfg.search.n_max,
                    reg.max_r(&cfg.search.max_r)?.as_ref(),
                    reg.min_n(&cfg.search.min_n)?.as_ref(),
                    cli.jobs,
                )?;
                write_checks(&res.r_checks, cli.out.as_deref())?;
                eprintln!(
                    "r_max: {} N: {}",
                    res.r.map_or("none".to_string(), |r| r.to_string()),
                    res.n.map_or("none".to_string(), |n| n.to_string())
                );
            } else {
                let checks = sweep_r(&probe, &grid, cfg.search.n, cli.jobs)?;
                write_checks(&checks, cli.out.as_deref())?;
            }
            Ok(0)
        }
        Command::Simulate => simulate_cmd(&cfg, &oracles, cli),
        Command::Reproduce { .. } => unreachable!("handled above"),
    }
}

fn write_checks(checks: &[NCheck], out: Option<&Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(["theorem", "r", "n", "status", "delta0", "t", "margin", "iterations"]).map_err(csv_error)?;
    for c in checks {
        let status = serde_json::to_value(c.status)?;
        w.write_record([
            c.report.meta.theorem.clone(),
            c.r.to_string(),
            c.n.to_string(),
            status.as_str().unwrap_or_default().to_string(),
            c.delta0.map_or(String::new(), |d| d.to_string()),
            c.report.diagnostics.t.to_string(),
            c.report.margin.map_or(String::new(), |m| m.to_string()),
            c.report.diagnostics.iterations.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ModalSummary {
    q: f64,
    truncation: usize,
    n0: usize,
    lambdas: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    c_norm_sq: f64,
    /// `‖c‖²_N` for N = 0..=M.
    tail_norm_sq: Vec<f64>,
}

fn modal(cfg: &RunConfig, cli: &Cli) -> Result<u8> {
    let model = cfg.sim_model()?;
    let tail = (0..=model.truncation).map(|n| model.tail_norm_sq(n)).collect::<Result<Vec<_>>>()?;
    let summary = ModalSummary {
        q: model.q,
        truncation: model.truncation,
        n0: cfg.n0()?,
        lambdas: model.lambdas.clone(),
        b: model.b.clone(),
        c: model.c.clone(),
        c_norm_sq: model.c_norm_sq,
        tail_norm_sq: tail,
    };
    emit_json(&summary, cli.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct DesignSummary {
    gains: GainSet,
    margins: GainMargins,
    passed: bool,
}

fn design(cfg: &RunConfig, oracles: &OracleRegistry, cli: &Cli) -> Result<u8> {
    let model = cfg.lmi_model()?;
    let gains = cfg.gains(&model, oracles)?;
    let margins = verify_gains(&gains, &model)?;
    let passed = margins.passed();
    emit_json(&DesignSummary { gains, margins, passed }, cli.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct SimSummary {
    controller: String,
    n: usize,
    truncation: usize,
    r: f64,
    step: f64,
    horizon: f64,
    diverged: bool,
    divergence_time: Option<f64>,
    completed: bool,
    fit_window: (f64, f64),
    fitted_rate: Option<f64>,
    /// Halanay rate for the configured `δ₀`, `δ₁ = δ₀ − δ` and largest delay.
    predicted_rate: Option<f64>,
    final_norm_z: Option<f64>,
    final_norm_err: Option<f64>,
    events: Vec<SimEvent>,
}

fn simulate_cmd(cfg: &RunConfig, oracles: &OracleRegistry, cli: &Cli) -> Result<u8> {
    let sim_cfg = cfg.sim_config(oracles)?;
    let trace = simulate(&sim_cfg)?;
    if let Some(path) = &cli.out {
        trace.write_csv(BufWriter::new(File::create(path)?))?;
    }
    let window = cfg.sim.window();
    let fitted_rate = fit_decay_rate(&trace, window).ok();
    let delta = cfg.design.delta.max(DELTA_FLOOR);
    let predicted_rate = RateSpec::new(cfg.design.delta0, cfg.design.delta0 - delta, cfg.delays.max_lag())
        .and_then(|s| solve_decay_rate(&s))
        .ok();
    let summary = SimSummary {
        controller: sim_cfg.controller.clone(),
        n: sim_cfg.n,
        truncation: sim_cfg.model.truncation,
        r: sim_cfg.delays.r,
        step: sim_cfg.step,
        horizon: sim_cfg.horizon,
        diverged: trace.diverged(),
        divergence_time: trace.divergence_time(),
        completed: trace.completed(),
        fit_window: window,
        fitted_rate,
        predicted_rate,
        final_norm_z: trace.norm_z.last().copied(),
        final_norm_err: trace.norm_err.last().copied(),
        events: trace.events.clone(),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    println!("{text}");
    if let Some(path) = &cli.out {
        let mut p = path.clone().into_os_string();
        p.push(".summary.json");
        std::fs::write(PathBuf::from(p), format!("{text}\n"))?;
    }
    log::info!("final |z| = {}", trace.norm_z.last().map_or("-".to_string(), |v| fmt17(*v)));
    Ok(0)
}
