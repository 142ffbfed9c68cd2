#![allow(clippy::neg_cmp_op_on_partial_ord)]
mod config;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use ibmdp::dataset::Dataset;
use ibmdp::exec::Execution;
use ibmdp::experiments::{solve, sweep, toy_suite, Solution, Summary};
use ibmdp::obs_mdp::ObservationMdp;
use ibmdp::solvers::SolverKind;
use ibmdp::trees::{DecisionTree, TreeNames};
use ibmdp::{Error, Result};

use config::{RunArgs, RunConfig};

/// Decision-tree induction by solving an MDP over feature bounds.
#[derive(Debug, Parser)]
#[command(name = "ibmdp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one IBMDP and write the report, tree and summary.
    Solve(RunArgs),
    /// Solve once per zeta of --zeta-grid and write the trade-off table.
    Sweep(RunArgs),
    /// Run a solver on all seven toy tasks.
    ToySuite(RunArgs),
    /// Write the normalized dataset and its normalization parameters.
    Dataset(RunArgs),
    /// Write the observation set and the Observation-MDP as JSON.
    Dump(RunArgs),
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Io { .. } => 4,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => run(&args, true, cmd_solve),
        Command::Sweep(args) => run(&args, true, cmd_sweep),
        Command::ToySuite(args) => run(&args, false, cmd_toy_suite),
        Command::Dataset(args) => run(&args, true, cmd_dataset),
        Command::Dump(args) => run(&args, true, cmd_dump),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(args: &RunArgs, require_source: bool, command: fn(&RunConfig) -> Result<()>) -> Result<()> {
    let config = RunConfig::resolve(args, require_source)?;
    fs::create_dir_all(&config.out).map_err(|e| Error::Io {
        path: config.out.clone(),
        source: e,
    })?;
    command(&config)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io { path, source: e })
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write_tree(dir: &Path, stem: &str, tree: &DecisionTree, names: &TreeNames) -> Result<()> {
    write(dir, &format!("{stem}.dot"), &tree.to_dot(names))?;
    write(dir, &format!("{stem}.json"), &(tree.to_json()? + "\n"))?;
    write(dir, &format!("{stem}.txt"), &tree.to_ascii(names))
}

#[derive(Serialize)]
struct SolveSummary {
    #[serde(flatten)]
    summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<f64>,
}

fn solution_summary(solution: &Solution, timing: bool) -> SolveSummary {
    SolveSummary {
        summary: solution.summary(),
        wall_time_ms: timing.then_some(solution.report.wall_time.as_secs_f64() * 1e3),
    }
}

fn cmd_solve(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    let ibmdp = config.ibmdp_config(&dataset)?;
    let solution = solve(&dataset, &ibmdp, &config.spec)?;
    let dir = &config.out;
    write(dir, "report.csv", &solution.report.to_csv(solution.j_star))?;
    write_tree(dir, "tree", &solution.report.tree, &TreeNames::from_dataset(&dataset))?;
    write(dir, "summary.json", &json(&solution_summary(&solution, config.timing))?)?;
    print_result(&solution, &dataset);
    Ok(())
}

fn print_result(solution: &Solution, dataset: &Dataset) {
    let r = &solution.report;
    emit(&format!(
        "{} zeta={} J={} accuracy={:.4} depth={} nodes={}\n",
        r.solver,
        solution.config.zeta,
        r.j.map(|j| format!("{j:.6}")).unwrap_or_else(|| "n/a".into()),
        solution.accuracy,
        r.tree.depth(),
        r.tree.node_count()
    ));
    emit(&r.tree.to_ascii(&TreeNames::from_dataset(dataset)));
}

#[derive(Serialize)]
struct SweepSummary {
    monotone: bool,
    failures: Vec<SweepFailure>,
    solves: Vec<SolveSummary>,
}

#[derive(Serialize)]
struct SweepFailure {
    zeta: f64,
    error: String,
}

fn cmd_sweep(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    let ibmdp = config.ibmdp_config(&dataset)?;
    let grid = config.zeta_grid.clone().unwrap_or_else(|| vec![config.zeta]);
    let result = sweep(&dataset, &ibmdp, &grid, &config.spec, Execution::default())?;
    let dir = &config.out;
    write(dir, "tradeoff.csv", &result.to_csv(config.timing))?;
    let trees = dir.join("trees");
    fs::create_dir_all(&trees).map_err(|e| Error::Io {
        path: trees.clone(),
        source: e,
    })?;
    let names = TreeNames::from_dataset(&dataset);
    for s in &result.solutions {
        write_tree(&trees, &format!("zeta_{}", s.config.zeta), &s.report.tree, &names)?;
    }
    let summary = SweepSummary {
        monotone: result.monotone,
        failures: result
            .failures
            .iter()
            .map(|(zeta, error)| SweepFailure {
                zeta: *zeta,
                error: error.clone(),
            })
            .collect(),
        solves: result
            .solutions
            .iter()
            .map(|s| solution_summary(s, config.timing))
            .collect(),
    };
    write(dir, "summary.json", &json(&summary)?)?;
    emit(&result.to_csv(false));
    if !result.failures.is_empty() {
        return Err(Error::Numeric(format!(
            "{} of {} solves failed; partial results written",
            result.failures.len(),
            grid.len()
        )));
    }
    if !result.monotone {
        let message = "J is not non-decreasing in zeta";
        if config.spec.kind == SolverKind::ValueIteration {
            return Err(Error::Numeric(message.into()));
        }
        eprintln!("warning: {message} (expected only for exact solvers)");
    }
    Ok(())
}

fn cmd_toy_suite(config: &RunConfig) -> Result<()> {
    let report = toy_suite(&config.spec, config.seeds, Execution::default())?;
    let dir = &config.out;
    write(dir, "toy_suite.csv", &report.tasks_csv())?;
    write(dir, "curve.csv", &report.curve_csv())?;
    write(dir, "summary.json", &json(&report)?)?;
    emit(&report.tasks_csv());
    Ok(())
}

fn cmd_dataset(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    let path = config.out.join("dataset.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    dataset.write_csv(file)?;
    if dataset.ranges().is_some() {
        write(
            &config.out,
            "normalization.json",
            &(dataset.normalization_json()? + "\n"),
        )?;
    }
    emit(&format!(
        "{} rows, {} features, {} classes\n",
        dataset.len(),
        dataset.feature_count(),
        dataset.class_count()
    ));
    Ok(())
}

fn cmd_dump(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    let ibmdp = config.ibmdp_config(&dataset)?;
    let mdp = ObservationMdp::build(&dataset, &ibmdp)?;
    write(
        &config.out,
        "observations.json",
        &(mdp.observations().to_json()? + "\n"),
    )?;
    write(&config.out, "mdp.json", &(mdp.to_json()? + "\n"))?;
    emit(&format!(
        "{} observations, {} actions\n",
        mdp.observation_count(),
        mdp.action_count()
    ));
    Ok(())
}
