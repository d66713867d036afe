use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use swarmgoal::sim::{
    compare_fixed_t_with, emit_outputs, run_simulation_with, sweep_csv, sweep_h_with, SimOptions,
};
use swarmgoal::worldmodel::{load_scenario_file, parse_horizon};
use swarmgoal::{Error, ScenarioConfig};

#[derive(Parser)]
#[command(name = "swarmgoal", version, about = "Energy-optimal goal assignment for double-integrator swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Directory for output files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Write the sampled trace CSV.
    #[arg(long, overrides_with = "no_trace")]
    trace: bool,
    #[arg(long)]
    no_trace: bool,
    /// Override the scenario's scan step.
    #[arg(long)]
    dt_scan: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trace, events, metrics and trajectories.
    Run(Common),
    /// One run per sensing distance; writes sweep.csv.
    Sweep {
        /// Comma-separated sensing distances; `inf` for unlimited.
        #[arg(long = "h", value_delimiter = ',', value_parser = parse_horizon, required = true)]
        h: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Optimal arrival times against a fixed arrival time; writes compare.json.
    Compare {
        #[arg(long = "fixed-t")]
        fixed_t: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Parse and validate a scenario.
    Validate {
        scenario: PathBuf,
    },
}

fn load(c: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = load_scenario_file(&c.scenario)?;
    if let Some(dt) = c.dt_scan {
        cfg.params.dt_scan = dt;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn write(c: &Common, name: &str, body: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(&c.out_dir)
        .with_context(|| format!("creating {}", c.out_dir.display()))?;
    let path = c.out_dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let opts = SimOptions::default();
    match cli.command {
        Command::Validate { scenario } => {
            let cfg = load_scenario_file(&scenario)?;
            println!(
                "ok: {} agents, {} goals, h = {}",
                cfg.agents.len(),
                cfg.goals.len(),
                cfg.params.h
            );
            Ok(true)
        }
        Command::Run(c) => {
            let cfg = load(&c)?;
            let run = run_simulation_with(&cfg, &opts)?;
            emit_outputs(&run, &c.out_dir, c.trace || !c.no_trace)?;
            println!("{}", serde_json::to_string_pretty(&run.metrics)?);
            for f in &run.failures {
                eprintln!("repair failure: agent {} at t={}: {}", f.agent, f.t, f.reason);
            }
            Ok(run.metrics.converged)
        }
        Command::Sweep { h, common } => {
            let cfg = load(&common)?;
            let rows = sweep_h_with(&cfg, &h, &opts)?;
            let csv = sweep_csv(&rows);
            write(&common, "sweep.csv", &csv)?;
            print!("{csv}");
            Ok(rows.iter().all(|r| r.error.is_none()))
        }
        Command::Compare { fixed_t, common } => {
            let cfg = load(&common)?;
            let cmp = compare_fixed_t_with(&cfg, fixed_t, &opts)?;
            write(&common, "compare.json", &(serde_json::to_string_pretty(&cmp)? + "\n"))?;
            print!("{}", cmp.to_table());
            println!("reduction: {:.3}%", cmp.reduction_percent);
            if !cmp.all_pairs_dominated {
                eprintln!("warning: some pair has E*(t*) > E(T)");
            }
            Ok(cmp.optimized.converged && cmp.fixed.converged)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<Error>() {
                Some(Error::Validation(_) | Error::Parse(_)) => 2,
                Some(Error::ProtocolViolation { .. }) => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
