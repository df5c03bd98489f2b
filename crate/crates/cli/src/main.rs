//! `xlqos`: batch front end for the rate table, CTMC solves, simulation and sweeps.
//!
//! Every verb reads a scenario file (built-in defaults when `--scenario` is
//! omitted), applies `--set key=value` overrides, validates, and writes CSV to
//! `--out` or stdout. Failures print one JSON line on stderr and exit with 1 for
//! invalid input or 2 for runtime errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use xlqos::ctmc;
use xlqos::des::{self, SimConfig};
use xlqos::phy;
use xlqos::scenario::{parse_override, Scenario};
use xlqos::{amc, ScenarioError};

#[derive(Debug, Parser)]
#[command(name = "xlqos", version, about = "Cross-layer QoS analysis for OFDMA cells")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// Scenario file (`key = value` lines).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Scenario override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Simulated events, warmup included.
    #[arg(long, global = true)]
    events: Option<u64>,

    /// Probability treated as zero by `amc-range`.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Raw data rate and spectrum efficiency of every MCS and cyclic prefix.
    Rates,
    /// Stationary QoS of the scenario's cell.
    Solve {
        /// Also write every state and its probability.
        #[arg(long)]
        states: Option<PathBuf>,
    },
    /// Discrete-event estimate with 95% half-widths.
    Simulate,
    /// QoS over the load grid for every MCS in the set.
    LoadSweep {
        /// Rescheduling metrics (utilization and fairness before and after).
        #[arg(long)]
        schedule_out: Option<PathBuf>,
    },
    /// QoS over the E_b/N_0 grid for every MCS in the set.
    Ebn0Sweep,
    /// E_b/N_0 window with zero blocking, dropping and outage per MCS.
    AmcRange,
    /// Analytic metrics against the simulated confidence intervals.
    Compare,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn validation(e: impl std::fmt::Display) -> Self {
        Failure::Validation(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<xlqos::CtmcError> for Failure {
    fn from(e: xlqos::CtmcError) -> Self {
        match e {
            xlqos::CtmcError::InvalidConfig(_) => Failure::validation(e),
            _ => Failure::runtime(e),
        }
    }
}

impl From<xlqos::DesError> for Failure {
    fn from(e: xlqos::DesError) -> Self {
        match e {
            xlqos::DesError::InvalidConfig(_) | xlqos::DesError::InvalidCell(_) => Failure::validation(e),
            _ => Failure::runtime(e),
        }
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario, Failure> {
    let text = match &cli.scenario {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario {}", path.display()))
            .map_err(|e| Failure::validation(format!("{e:#}")))?,
        None => String::new(),
    };
    let mut overrides = cli
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, ScenarioError>>()
        .map_err(Failure::validation)?;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(events) = cli.events {
        overrides.push(("events".into(), events.to_string()));
    }
    if let Some(eps) = cli.epsilon {
        overrides.push(("epsilon".into(), eps.to_string()));
    }
    Scenario::parse(&text, &overrides).map_err(Failure::validation)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(|e| Failure::runtime(format!("{e:#}")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(path, text),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(Failure::runtime),
    }
}

fn sim_config(s: &Scenario) -> Result<SimConfig, Failure> {
    let seed = s
        .seed
        .ok_or_else(|| Failure::validation("a seed is required (scenario `seed` or --seed)"))?;
    Ok(SimConfig {
        seed,
        horizon_events: s.events,
        warmup_events: s.warmup(),
        traffic: s.traffic,
        cell: s.cell.clone(),
        alpha: s.alpha,
        batches: s.batches,
    })
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let s = load_scenario(cli)?;
    let out = cli.out.as_deref();
    let mcs_label = s.mcs.to_string();
    let lambda = s.traffic.nominal_rate();
    match &cli.verb {
        Verb::Rates => emit(out, &phy::rate_table_csv(&phy::rate_table(&s.phy))),
        Verb::Solve { states } => {
            let a = ctmc::analyze(&s.cell, &s.traffic, &s.analysis)?;
            if let Some(path) = states {
                write_file(path, &ctmc::state_dump_csv(&a.space, &a.stationary.pi))?;
            }
            let csv = format!(
                "{}\n{}\n",
                ctmc::QOS_CSV_HEADER,
                ctmc::qos_csv_row(lambda, &mcs_label, &a.report)
            );
            emit(out, &csv)
        }
        Verb::Simulate => {
            let sim = des::run(&sim_config(&s)?)?;
            let csv = format!(
                "{}\n{}\n",
                des::sim_csv_header(),
                des::sim_csv_row(lambda, &mcs_label, &sim)
            );
            emit(out, &csv)
        }
        Verb::LoadSweep { schedule_out } => {
            let points = amc::load_sweep(&s.load_sweep_spec())?;
            if let Some(path) = schedule_out {
                write_file(path, &amc::schedule_csv(&points))?;
            }
            emit(out, &amc::load_sweep_csv(&points))
        }
        Verb::Ebn0Sweep => {
            let result = amc::sweep(&s.sweep_spec())?;
            emit(out, &amc::ebn0_sweep_csv(&result))
        }
        Verb::AmcRange => {
            let result = amc::sweep(&s.sweep_spec())?;
            emit(out, &amc::range_csv(&amc::operating_range(&result, s.epsilon)))
        }
        Verb::Compare => {
            let cfg = sim_config(&s)?;
            let a = ctmc::analyze(&s.cell, &s.traffic, &s.analysis)?;
            let sim = des::run(&cfg)?;
            let rows = des::compare_with_ctmc(&sim, &a.report)?;
            emit(out, &des::compare_csv(&rows))
        }
    }
}

fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("validation", e.to_string().trim());
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            report("validation", &m);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            report("runtime", &m);
            ExitCode::from(2)
        }
    }
}
