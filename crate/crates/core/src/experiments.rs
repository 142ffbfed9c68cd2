//! Solver dispatch, ζ-sweeps and the toy-suite runner.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::dataset::{toy_task, Dataset, TOY_TASK_COUNT};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ibmdp::IbmdpConfig;
use crate::obs_mdp::ObservationMdp;
use crate::solvers::{
    ascend, brute_force_best_tree, noisy_ablation, optimal_step_size, solve_value_iteration, theorem1_bound,
    value_iteration, AdvantageNoise, AscentOptions, SolveReport, SolverKind, DEFAULT_ENUMERATION_CAP,
};
use crate::trees::{greedy_baseline, tree_policy, GreedyOptions, SplitCriterion, ThresholdMode};

pub const DEFAULT_ZETA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_P: u32 = 1;
pub const DEFAULT_TOY_DEPTH: u32 = 2;
pub const DEFAULT_DATA_DEPTH: u32 = 3;
pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_ERPI_STEP: f64 = 1.0;
pub const DEFAULT_PG_STEP: f64 = 1.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// The step size minimizing the ERPI bound for the configured `K`.
    Theorem1,
}

impl StepSize {
    pub fn resolve(self, config: &IbmdpConfig, iterations: usize) -> f64 {
        match self {
            StepSize::Fixed(a) => a,
            StepSize::Theorem1 => optimal_step_size(config, iterations),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub kind: SolverKind,
    pub iterations: usize,
    pub step_size: StepSize,
    pub tolerance: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub threshold_mode: Option<ThresholdMode>,
    pub criterion: SplitCriterion,
}

impl SolverSpec {
    pub fn new(kind: SolverKind) -> Self {
        SolverSpec {
            kind,
            iterations: DEFAULT_ITERATIONS,
            step_size: StepSize::Fixed(match kind {
                SolverKind::PolicyGradient => DEFAULT_PG_STEP,
                _ => DEFAULT_ERPI_STEP,
            }),
            tolerance: DEFAULT_TOLERANCE,
            noise_sigma: 0.0,
            seed: 0,
            threshold_mode: None,
            criterion: SplitCriterion::Gini,
        }
    }
}

/// A finished solve with the quantities reported for it.
#[derive(Debug, Clone)]
pub struct Solution {
    pub config: IbmdpConfig,
    pub report: SolveReport,
    pub accuracy: f64,
    /// Optimal return, when an MDP was built.
    pub j_star: Option<f64>,
}

impl Solution {
    pub fn summary(&self) -> Summary {
        Summary {
            solver: self.report.solver,
            zeta: self.config.zeta,
            gamma: self.config.gamma,
            p: self.config.p,
            max_igas: self.config.max_igas,
            j: self.report.j,
            j_star: self.j_star,
            best_stochastic_j: self.report.stochastic_j,
            accuracy: self.accuracy,
            depth: self.report.tree.depth(),
            nodes: self.report.tree.node_count(),
            bound_at_k: self.report.bound_at_k,
            iterations: self.report.records.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub solver: SolverKind,
    pub zeta: f64,
    pub gamma: f64,
    pub p: u32,
    pub max_igas: u32,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    #[serde(rename = "J_star")]
    pub j_star: Option<f64>,
    #[serde(rename = "best_stochastic_J")]
    pub best_stochastic_j: Option<f64>,
    pub accuracy: f64,
    pub depth: usize,
    pub nodes: usize,
    pub bound_at_k: Option<f64>,
    pub iterations: usize,
}

pub fn solve(dataset: &Dataset, config: &IbmdpConfig, spec: &SolverSpec) -> Result<Solution> {
    config.check_dataset(dataset)?;
    if spec.kind == SolverKind::Greedy {
        return solve_greedy(dataset, config, spec);
    }
    let mdp = ObservationMdp::build(dataset, config)?;
    let (report, j_star) = match spec.kind {
        SolverKind::ValueIteration => {
            let report = solve_value_iteration(&mdp, spec.tolerance)?;
            let j = report.j;
            (report, j)
        }
        kind => {
            let options = AscentOptions {
                step_size: spec.step_size.resolve(config, spec.iterations),
                iterations: spec.iterations,
                noise: (spec.noise_sigma > 0.0).then_some(AdvantageNoise {
                    sigma: spec.noise_sigma,
                    seed: spec.seed,
                }),
            };
            let report = ascend(&mdp, kind, &options)?;
            let j_star = value_iteration(&mdp, spec.tolerance)?.j;
            (report, Some(j_star))
        }
    };
    let accuracy = report.tree.accuracy(dataset)?;
    Ok(Solution {
        config: *config,
        report,
        accuracy,
        j_star,
    })
}

fn solve_greedy(dataset: &Dataset, config: &IbmdpConfig, spec: &SolverSpec) -> Result<Solution> {
    let start = Instant::now();
    let mode = spec.threshold_mode.unwrap_or(ThresholdMode::IbmdpGrid { p: config.p });
    let tree = greedy_baseline(
        dataset,
        &GreedyOptions {
            max_depth: config.max_igas as usize,
            mode,
            criterion: spec.criterion,
        },
    )?;
    let accuracy = tree.accuracy(dataset)?;
    // Only trees on the IBMDP grid have a return in the MDP.
    let omega = crate::ibmdp::enumerate_observations(config, dataset)?;
    let (deterministic, j) = match tree_policy(&tree, &omega) {
        Ok(policy) => {
            let mdp = ObservationMdp::from_observations(omega);
            let j = mdp.evaluate(&policy.to_probabilities(mdp.action_count()))?.return_j;
            (Some(policy), Some(j))
        }
        Err(Error::NotEmbeddable(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(Solution {
        config: *config,
        report: SolveReport {
            solver: SolverKind::Greedy,
            records: Vec::new(),
            stochastic: None,
            stochastic_j: None,
            deterministic,
            j,
            tree,
            bound_at_k: None,
            wall_time: start.elapsed(),
        },
        accuracy,
        j_star: None,
    })
}

/// One row of a ζ-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRecord {
    pub zeta: f64,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub accuracy: f64,
    pub depth: usize,
    pub nodes: usize,
    pub solver: SolverKind,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Successful solves, ascending in ζ.
    pub records: Vec<TradeoffRecord>,
    pub solutions: Vec<Solution>,
    /// `(ζ, message)` for every failed solve.
    pub failures: Vec<(f64, String)>,
    /// Whether `J` is non-decreasing in ζ over the successful solves.
    pub monotone: bool,
}

impl SweepResult {
    /// `zeta,J,accuracy,depth,nodes,solver[,wall_time_ms]`.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from("zeta,J,accuracy,depth,nodes,solver");
        out.push_str(if with_timing { ",wall_time_ms\n" } else { "\n" });
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.zeta,
                r.j.map(|j| j.to_string()).unwrap_or_default(),
                r.accuracy,
                r.depth,
                r.nodes,
                r.solver
            ));
            if with_timing {
                out.push_str(&format!(",{:.3}", r.wall_time.as_secs_f64() * 1e3));
            }
            out.push('\n');
        }
        out
    }
}

/// `a:b:step` inclusive of `b` up to rounding.
pub fn parse_zeta_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::InvalidConfig(format!("zeta grid '{text}' is not a:b:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    // Round to 12 decimals so 0.1-style steps print cleanly.
    Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// Solves once per ζ (concurrently under [`Execution::Parallel`]) and
/// gathers the results in ascending ζ order.
pub fn sweep(
    dataset: &Dataset,
    base: &IbmdpConfig,
    zetas: &[f64],
    spec: &SolverSpec,
    exec: Execution,
) -> Result<SweepResult> {
    if zetas.is_empty() {
        return Err(Error::InvalidConfig("the zeta grid is empty".into()));
    }
    let mut grid = zetas.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &z in &grid {
        base.with_zeta(z).validate()?;
    }
    let outcomes = exec.map_slice(&grid, |&z| solve(dataset, &base.with_zeta(z), spec));
    let mut records = Vec::new();
    let mut solutions = Vec::new();
    let mut failures = Vec::new();
    for (&z, outcome) in grid.iter().zip(outcomes) {
        match outcome {
            Ok(s) => {
                records.push(TradeoffRecord {
                    zeta: z,
                    j: s.report.j,
                    accuracy: s.accuracy,
                    depth: s.report.tree.depth(),
                    nodes: s.report.tree.node_count(),
                    solver: s.report.solver,
                    wall_time: s.report.wall_time,
                });
                solutions.push(s);
            }
            Err(e) => failures.push((z, e.to_string())),
        }
    }
    let js: Vec<f64> = records.iter().filter_map(|r| r.j).collect();
    let monotone = js.windows(2).all(|w| w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
    Ok(SweepResult {
        records,
        solutions,
        failures,
        monotone,
    })
}

/// Per-task outcome of the toy suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyTaskResult {
    pub task: usize,
    /// Mean final `J(π_K)` across seeds for ascent solvers, otherwise the
    /// solver's return.
    pub final_j: f64,
    pub best_j: f64,
    pub j_star: f64,
    pub brute_force_j: Option<f64>,
    pub accuracy: f64,
    pub depth: usize,
    /// Mean normalized `J(π_k)` per iteration (empty for non-iterative solvers).
    pub normalized_curve: Vec<f64>,
    pub max_bound_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToySuiteReport {
    pub solver: SolverKind,
    pub seeds: usize,
    pub tasks: Vec<ToyTaskResult>,
    /// Mean of the per-task normalized curves.
    pub normalized_curve: Vec<f64>,
}

impl ToySuiteReport {
    /// `task,final_J,best_J,J_star,brute_force_J,accuracy,depth`.
    pub fn tasks_csv(&self) -> String {
        let mut out = String::from("task,final_J,best_J,J_star,brute_force_J,accuracy,depth\n");
        for t in &self.tasks {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t.task,
                t.final_j,
                t.best_j,
                t.j_star,
                t.brute_force_j.map(|j| j.to_string()).unwrap_or_default(),
                t.accuracy,
                t.depth
            ));
        }
        out
    }

    /// `iteration,normalized_J` of the aggregated curve.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("iteration,normalized_J\n");
        for (k, v) in self.normalized_curve.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, v));
        }
        out
    }
}

/// The toy-suite IBMDP configuration for `dataset`.
pub fn toy_config(dataset: &Dataset) -> Result<IbmdpConfig> {
    IbmdpConfig::new(dataset, DEFAULT_ZETA, DEFAULT_GAMMA, DEFAULT_P, DEFAULT_TOY_DEPTH)
}

/// Runs `spec` on all toy tasks. Ascent solvers use `seeds` noisy runs when
/// `spec.noise_sigma > 0` (seeds `spec.seed..spec.seed + seeds`) and a
/// single exact run otherwise.
pub fn toy_suite(spec: &SolverSpec, seeds: usize, exec: Execution) -> Result<ToySuiteReport> {
    let tasks = exec.map_range(TOY_TASK_COUNT, |i| toy_task_result(i, spec, seeds));
    let tasks = tasks.into_iter().collect::<Result<Vec<_>>>()?;
    let len = tasks.iter().map(|t| t.normalized_curve.len()).max().unwrap_or(0);
    let normalized_curve = (0..len)
        .map(|k| tasks.iter().map(|t| t.normalized_curve[k]).sum::<f64>() / tasks.len() as f64)
        .collect();
    Ok(ToySuiteReport {
        solver: spec.kind,
        seeds: if spec.noise_sigma > 0.0 { seeds } else { 1 },
        tasks,
        normalized_curve,
    })
}

fn toy_task_result(task: usize, spec: &SolverSpec, seeds: usize) -> Result<ToyTaskResult> {
    let data = toy_task(task)?;
    let config = toy_config(&data)?;
    let mdp = ObservationMdp::build(&data, &config)?;
    let vi = value_iteration(&mdp, spec.tolerance)?;
    let j_star = vi.j;
    let brute = brute_force_best_tree(&data, &config, DEFAULT_ENUMERATION_CAP)?.j;
    let j_uniform = mdp.evaluate_policy(&mdp.uniform_policy())?.return_j;
    let normalize = |j: f64| (j - j_uniform) / (j_star - j_uniform);
    match spec.kind {
        SolverKind::ValueIteration | SolverKind::Greedy => {
            let s = solve(&data, &config, spec)?;
            let j = s.report.j.unwrap_or(f64::NAN);
            Ok(ToyTaskResult {
                task,
                final_j: j,
                best_j: j,
                j_star,
                brute_force_j: Some(brute),
                accuracy: s.accuracy,
                depth: s.report.tree.depth(),
                normalized_curve: Vec::new(),
                max_bound_violation: None,
            })
        }
        kind => {
            let step = spec.step_size.resolve(&config, spec.iterations);
            if spec.noise_sigma > 0.0 && seeds >= 2 {
                let seed_list: Vec<u64> = (0..seeds as u64).map(|s| spec.seed + s).collect();
                let summary = noisy_ablation(
                    &mdp,
                    kind,
                    step,
                    spec.noise_sigma,
                    &seed_list,
                    spec.iterations,
                    Execution::Sequential,
                )?;
                let best_j = summary.mean_j.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(ToyTaskResult {
                    task,
                    final_j: summary.final_mean(),
                    best_j,
                    j_star,
                    brute_force_j: Some(brute),
                    accuracy: f64::NAN,
                    depth: 0,
                    normalized_curve: summary.mean_j.iter().map(|&j| normalize(j)).collect(),
                    max_bound_violation: None,
                })
            } else {
                let report = ascend(
                    &mdp,
                    kind,
                    &AscentOptions {
                        step_size: step,
                        iterations: spec.iterations,
                        noise: (spec.noise_sigma > 0.0).then_some(AdvantageNoise {
                            sigma: spec.noise_sigma,
                            seed: spec.seed,
                        }),
                    },
                )?;
                let violation = (kind == SolverKind::Erpi).then(|| {
                    report
                        .records
                        .iter()
                        .map(|r| (j_star - r.best_j) - theorem1_bound(&config, r.iteration))
                        .fold(f64::NEG_INFINITY, f64::max)
                });
                Ok(ToyTaskResult {
                    task,
                    final_j: report.records.last().map(|r| r.j).unwrap_or(f64::NAN),
                    best_j: report.best_j().unwrap_or(f64::NAN),
                    j_star,
                    brute_force_j: Some(brute),
                    accuracy: report.tree.accuracy(&data)?,
                    depth: report.tree.depth(),
                    normalized_curve: report.records.iter().map(|r| normalize(r.j)).collect(),
                    max_bound_violation: violation,
                })
            }
        }
    }
}
