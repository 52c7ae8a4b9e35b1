use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use mpepc::cost::CostMode;
use mpepc::landscape::{landscape, Rank};
use mpepc::report::{metrics, render_svg, trace_csv, AgentMetrics, Figure, SCHEMA_VERSION};
use mpepc::scenarios::{builtin, BuiltinParams, Defaults, ScenarioConfig, BUILTINS};
use mpepc::simulator::{run, with_mode, Outcome, SimOptions};
use serde::Serialize;

const EXIT_NOT_REACHED: u8 = 1;
const EXIT_LOAD: u8 = 2;
const EXIT_ARTIFACT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mpepc",
    version,
    about = "Run, compare and inspect MPEPC navigation scenarios"
)]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, env = "MPEPC_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file, or `builtin:NAME`.
    scenario: String,
    /// Builtin parameter as `key=value` (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write metrics (exit 0 iff every agent reaches its goal).
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Cost mode applied to every agent: `ds` or `mpepc`.
        #[arg(long)]
        mode: Option<CostMode>,
        /// Write an SVG of the map, paths and obstacle tracks.
        #[arg(long)]
        svg: bool,
        /// Write one trace CSV per agent.
        #[arg(long)]
        csv: bool,
        /// Also draw evaluated candidate trajectories (implies --svg).
        #[arg(long)]
        diag: bool,
    },
    /// Run both cost modes over several seeds and tabulate outcomes.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Rank one agent's candidate trajectories at a frozen moment.
    Landscape {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        agent: String,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, default_value = "cost")]
        rank: Rank,
        #[arg(long, default_value_t = 50)]
        top: usize,
    },
    /// List builtin scenarios and their parameters.
    ListBuiltins,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Load(anyhow::Error),
    Artifact(anyhow::Error),
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (code, err) = match self {
            Failure::Load(e) => (EXIT_LOAD, e),
            Failure::Artifact(e) => (EXIT_ARTIFACT, e),
        };
        eprintln!("error: {err:#}");
        ExitCode::from(code)
    }
}

fn load(args: &ScenarioArgs, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut scenario = if let Some(name) = args.scenario.strip_prefix("builtin:") {
        let params: BuiltinParams = args
            .params
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| anyhow!("parameter `{kv}` is not KEY=VALUE"))
            })
            .collect::<anyhow::Result<_>>()
            .map_err(Failure::Load)?;
        builtin(name, &params).map_err(|e| Failure::Load(e.into()))?
    } else {
        if !args.params.is_empty() {
            return Err(Failure::Load(anyhow!(
                "--param only applies to builtin scenarios"
            )));
        }
        ScenarioConfig::load(&args.scenario)
            .with_context(|| format!("loading {}", args.scenario))
            .map_err(Failure::Load)?
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn write(path: &Path, contents: &str) -> Result<PathBuf, Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Artifact)?;
    Ok(path.to_path_buf())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Artifact)
}

#[derive(Serialize)]
struct RunReport {
    schema_version: u32,
    scenario: String,
    modes: Vec<String>,
    seed: u64,
    agents: Vec<AgentMetrics>,
    contacts: usize,
    parameters: Defaults,
    wall_clock_seconds: f64,
    artifacts: Vec<PathBuf>,
}

fn cmd_run(
    cli: &Cli,
    args: &ScenarioArgs,
    mode: Option<CostMode>,
    svg: bool,
    csv: bool,
    diag: bool,
) -> Result<ExitCode, Failure> {
    let mut scenario = load(args, cli.seed)?;
    if let Some(mode) = mode {
        scenario = with_mode(&scenario, mode);
        scenario.defaults.cost.mode = mode;
    }
    let options = SimOptions {
        fan_stride: if diag { 5 } else { 0 },
        ..SimOptions::default()
    };
    let started = Instant::now();
    let result = run(&scenario, &options).map_err(|e| Failure::Load(e.into()))?;
    let wall = started.elapsed().as_secs_f64();

    create_dir(&cli.out)?;
    let mut artifacts = Vec::new();
    if csv {
        for (a, trace) in scenario.agents.iter().zip(&result.traces) {
            artifacts.push(write(
                &cli.out.join(format!("trace_{}.csv", a.id)),
                &trace_csv(trace),
            )?);
        }
    }
    if svg || diag {
        let grid = scenario
            .map
            .to_grid()
            .map_err(|e| Failure::Load(e.into()))?;
        let figure = Figure::from_result(&scenario, &result);
        artifacts.push(write(
            &cli.out.join("run.svg"),
            &render_svg(&grid, &figure),
        )?);
    }
    let m = metrics(&scenario, &result);
    let mut modes: Vec<String> = m.agents.iter().map(|a| a.mode.clone()).collect();
    modes.dedup();
    let metrics_path = cli.out.join("metrics.json");
    artifacts.push(metrics_path.clone());
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        scenario: m.scenario,
        modes,
        seed: m.seed,
        agents: m.agents,
        contacts: m.contacts,
        parameters: scenario.defaults.clone(),
        wall_clock_seconds: wall,
        artifacts,
    };
    let json = serde_json::to_string_pretty(&report).expect("report is serialisable");
    write(&metrics_path, &(json + "\n"))?;

    for a in &report.agents {
        eprintln!("{}: {}", a.id, a.outcome.as_str());
    }
    Ok(if result.all_reached() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NOT_REACHED)
    })
}

const COMPARE_HEADER: &str = "mode,runs,agents,success_rate,deadlock_rate,collision_rate,timeout_rate,mean_time_to_goal,mean_min_clearance";

fn cmd_compare(cli: &Cli, args: &ScenarioArgs, seeds: u64) -> Result<ExitCode, Failure> {
    let base = load(args, cli.seed)?;
    let mut table = String::from(COMPARE_HEADER);
    table.push('\n');
    for mode in [CostMode::DsMpepc, CostMode::BaselineMpepc] {
        let mut outcomes = Vec::new();
        let mut times = Vec::new();
        let mut clearances = Vec::new();
        for k in 0..seeds {
            let mut scenario = with_mode(&base, mode);
            scenario.seed = base.seed.wrapping_add(k);
            let result =
                run(&scenario, &SimOptions::default()).map_err(|e| Failure::Load(e.into()))?;
            for a in &result.agents {
                outcomes.push(a.outcome);
                times.extend(a.time_to_goal);
                clearances.extend(a.min_clearance);
            }
        }
        let n = outcomes.len().max(1) as f64;
        let rate = |o: Outcome| outcomes.iter().filter(|&&x| x == o).count() as f64 / n;
        let mean = |v: &[f64]| {
            if v.is_empty() {
                String::new()
            } else {
                format!("{:.4}", v.iter().sum::<f64>() / v.len() as f64)
            }
        };
        table.push_str(&format!(
            "{},{seeds},{},{:.4},{:.4},{:.4},{:.4},{},{}\n",
            mode.as_str(),
            outcomes.len(),
            rate(Outcome::Reached),
            rate(Outcome::Deadlocked),
            rate(Outcome::Collided),
            rate(Outcome::Timeout),
            mean(&times),
            mean(&clearances),
        ));
    }
    create_dir(&cli.out)?;
    write(&cli.out.join("compare.csv"), &table)?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_landscape(
    cli: &Cli,
    args: &ScenarioArgs,
    agent: &str,
    t: f64,
    rank: Rank,
    top: usize,
) -> Result<ExitCode, Failure> {
    let scenario = load(args, cli.seed)?;
    let l = landscape(&scenario, agent, t, rank, top).map_err(|e| Failure::Load(e.into()))?;
    let grid = scenario
        .map
        .to_grid()
        .map_err(|e| Failure::Load(e.into()))?;
    create_dir(&cli.out)?;
    write(
        &cli.out.join("landscape.svg"),
        &render_svg(&grid, &l.figure(&scenario)),
    )?;
    write(&cli.out.join("landscape.csv"), &l.to_csv())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            scenario,
            mode,
            svg,
            csv,
            diag,
        } => cmd_run(&cli, scenario, *mode, *svg, *csv, *diag),
        Command::Compare { scenario, seeds } => cmd_compare(&cli, scenario, *seeds),
        Command::Landscape {
            scenario,
            agent,
            t,
            rank,
            top,
        } => cmd_landscape(&cli, scenario, agent, *t, *rank, *top),
        Command::ListBuiltins => {
            for b in BUILTINS {
                println!(
                    "{:16} {} [params: {}]",
                    b.name,
                    b.description,
                    b.params.join(", ")
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    outcome.unwrap_or_else(Failure::exit)
}
