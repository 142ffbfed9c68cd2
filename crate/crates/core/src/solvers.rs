//! Solvers for the Observation-IBMDP: value iteration, entropy-regularized
//! policy iteration (ERPI), exact tabular policy gradient, the noisy-advantage
//! ablation, and an exhaustive tree enumerator used as an oracle.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ibmdp::{apply_iga, majority, ratio_to_f64, split_threshold, Action, IbmdpConfig, Observation};
use crate::obs_mdp::{EvaluationResult, ObservationMdp};
use crate::policy::{argmax_first, DeterministicPolicy, TabularPolicy};
use crate::trees::{CycleStats, DecisionTree};

/// Q-values closer than this to the row maximum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Slack allowed when checking that determinization does not lose return.
const DETERMINIZATION_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[serde(rename = "vi")]
    ValueIteration,
    Erpi,
    #[serde(rename = "pg")]
    PolicyGradient,
    Greedy,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::ValueIteration => "vi",
            SolverKind::Erpi => "erpi",
            SolverKind::PolicyGradient => "pg",
            SolverKind::Greedy => "greedy",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vi" | "value_iteration" | "value-iteration" => Ok(SolverKind::ValueIteration),
            "erpi" => Ok(SolverKind::Erpi),
            "pg" | "policy_gradient" | "policy-gradient" => Ok(SolverKind::PolicyGradient),
            "greedy" | "cart" => Ok(SolverKind::Greedy),
            other => Err(Error::InvalidConfig(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub j: f64,
    pub best_j: f64,
    pub bound: Option<f64>,
    pub update_sup_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub records: Vec<IterationRecord>,
    /// Best stochastic iterate, for the iterative solvers.
    pub stochastic: Option<TabularPolicy>,
    pub stochastic_j: Option<f64>,
    pub deterministic: Option<DeterministicPolicy>,
    /// Return of the deterministic policy (the tree), when it lives in the MDP.
    pub j: Option<f64>,
    pub tree: DecisionTree,
    pub bound_at_k: Option<f64>,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn best_j(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_j)
    }

    /// `iteration,J,best_J,bound,update_sup_norm,normalized_J`.
    ///
    /// `normalized_J = (J - J_uniform) / (J* - J_uniform)` with `J_uniform`
    /// the first (uniform) iterate of an ascent solver; the column is empty
    /// for other solvers, without `j_star`, or when the denominator vanishes.
    pub fn to_csv(&self, j_star: Option<f64>) -> String {
        let mut out = String::from("iteration,J,best_J,bound,update_sup_norm,normalized_J\n");
        let ascent = matches!(self.solver, SolverKind::Erpi | SolverKind::PolicyGradient);
        let j0 = self.records.first().map(|r| r.j).filter(|_| ascent);
        for r in &self.records {
            let normalized = match (j_star, j0) {
                (Some(star), Some(j0)) if (star - j0).abs() > 1e-12 => format!("{}", (r.j - j0) / (star - j0)),
                _ => String::new(),
            };
            let bound = r.bound.map(|b| b.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.j, r.best_j, bound, r.update_sup_norm, normalized
            ));
        }
        out
    }
}

/// `√(2 ln|A'|) (R_max - R_min) / (2 √((1-γ)³ k))`.
pub fn theorem1_bound(config: &IbmdpConfig, k: usize) -> f64 {
    let na = config.actions().len() as f64;
    let span = config.r_max() - config.r_min();
    (2.0 * na.ln()).sqrt() * span / (2.0 * ((1.0 - config.gamma).powi(3) * k as f64).sqrt())
}

/// Step size minimizing the ERPI bound after `k` iterations.
pub fn optimal_step_size(config: &IbmdpConfig, k: usize) -> f64 {
    let na = config.actions().len() as f64;
    let span = config.r_max() - config.r_min();
    (8.0 * na.ln() * (1.0 - config.gamma)).sqrt() / (span * (k as f64).sqrt())
}

/// Optimal values together with the greedy policy and its exact return.
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub policy: DeterministicPolicy,
    pub residual: f64,
    /// Exact return of `policy`.
    pub j: f64,
    pub sweeps: usize,
    pub root_trace: Vec<f64>,
}

/// Optimal values of the Observation-IBMDP to Bellman residual `tolerance`.
///
/// Every non-root value is a function of the root value alone, so one
/// backward sweep computes `V(o)` and its slope in `V(root)` exactly. The
/// root value is then updated by a Newton step on `x = F(x)`, which for this
/// convex, piecewise-linear `F` terminates after finitely many sweeps (it is
/// policy iteration restricted to the root). Greedy ties go to base actions
/// first, then ascending action index.
pub fn value_iteration(mdp: &ObservationMdp, tolerance: f64) -> Result<ValueIterationResult> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let n = mdp.observation_count();
    let na = mdp.action_count();
    let gamma = mdp.config().gamma;
    let mut v = vec![0.0; n];
    let mut slope = vec![0.0; n];
    let mut q = vec![0.0; n * na];
    let mut x = 0.0;
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let max_sweeps = 10_000;
    loop {
        sweeps += 1;
        for o in (0..n).rev() {
            let mut best = f64::NEG_INFINITY;
            let mut best_slope = 0.0;
            for a in 0..na {
                if !mdp.is_legal(o, a) {
                    continue;
                }
                let (mut value, mut s) = (mdp.reward(o, a), 0.0);
                for &(next, prob) in mdp.transitions(o, a) {
                    if next == 0 {
                        value += gamma * prob * x;
                        s += gamma * prob;
                    } else {
                        value += gamma * prob * v[next];
                        s += gamma * prob * slope[next];
                    }
                }
                q[o * na + a] = value;
                if value > best {
                    best = value;
                    best_slope = s;
                }
            }
            v[o] = best;
            slope[o] = best_slope;
        }
        trace.push(v[0]);
        let gap = (v[0] - x).abs();
        if gap <= tolerance * 1e-3 || sweeps >= max_sweeps {
            break;
        }
        let next = (v[0] - slope[0] * x) / (1.0 - slope[0]);
        if next == x {
            break;
        }
        x = next;
    }
    // V now satisfies every non-root equation exactly for V(root) = x; reset
    // the root entry so the residual below reflects the root equation.
    let policy = DeterministicPolicy::new(
        (0..n)
            .map(|o| argmax_first(&q[o * na..(o + 1) * na], mdp.legal_row(o), TIE_TOLERANCE))
            .collect(),
    );
    let mut values = v.clone();
    values[0] = x;
    let probs = policy.to_probabilities(na);
    let residual = mdp.bellman_optimality_residual(&values);
    if residual > tolerance {
        return Err(Error::Numeric(format!(
            "value iteration stopped after {sweeps} sweeps with residual {residual:e}"
        )));
    }
    let j = mdp.evaluate(&probs)?.return_j;
    Ok(ValueIterationResult {
        v: values,
        q,
        policy,
        residual,
        j,
        sweeps,
        root_trace: trace,
    })
}

/// Deterministic greedy policy with respect to `advantage`.
pub fn determinize(mdp: &ObservationMdp, advantage: &[f64]) -> DeterministicPolicy {
    let na = mdp.action_count();
    DeterministicPolicy::new(
        (0..mdp.observation_count())
            .map(|o| argmax_first(&advantage[o * na..(o + 1) * na], mdp.legal_row(o), TIE_TOLERANCE))
            .collect(),
    )
}

/// Exact gradient of `J(π_θ)` w.r.t. the logits:
/// `p^π(o) / (1-γ) · π(a|o) · A^π(o, a)`.
pub fn exact_gradient(mdp: &ObservationMdp, policy: &TabularPolicy) -> Result<(Vec<f64>, EvaluationResult)> {
    let eval = mdp.evaluate_policy(policy)?;
    let probs = policy.probabilities();
    let g = gradient_from(mdp, &eval, probs.values(), &eval.advantage);
    Ok((g, eval))
}

fn gradient_from(mdp: &ObservationMdp, eval: &EvaluationResult, probs: &[f64], advantage: &[f64]) -> Vec<f64> {
    let na = mdp.action_count();
    let scale = 1.0 / (1.0 - mdp.config().gamma);
    advantage
        .iter()
        .zip(probs)
        .enumerate()
        .map(|(i, (&a, &pi))| scale * eval.state_distribution[i / na] * pi * a)
        .collect()
}

/// Gaussian perturbation of the advantage before each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageNoise {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub step_size: f64,
    pub iterations: usize,
    pub noise: Option<AdvantageNoise>,
}

/// Entropy-regularized policy iteration: `θ ← θ + α A^{π_θ}` from uniform.
pub fn erpi(mdp: &ObservationMdp, alpha: f64, iterations: usize) -> Result<SolveReport> {
    ascend(
        mdp,
        SolverKind::Erpi,
        &AscentOptions {
            step_size: alpha,
            iterations,
            noise: None,
        },
    )
}

/// Exact tabular policy gradient ascent from uniform.
pub fn policy_gradient(mdp: &ObservationMdp, learning_rate: f64, iterations: usize) -> Result<SolveReport> {
    ascend(
        mdp,
        SolverKind::PolicyGradient,
        &AscentOptions {
            step_size: learning_rate,
            iterations,
            noise: None,
        },
    )
}

/// Shared loop of ERPI and policy gradient. `J(π_k)` is recorded before the
/// `k`-th update and is always exact; noise only touches the update.
pub fn ascend(mdp: &ObservationMdp, kind: SolverKind, options: &AscentOptions) -> Result<SolveReport> {
    let direction_is_gradient = match kind {
        SolverKind::Erpi => false,
        SolverKind::PolicyGradient => true,
        other => return Err(Error::InvalidConfig(format!("{other} is not an ascent solver"))),
    };
    if !(options.step_size > 0.0) || !options.step_size.is_finite() {
        return Err(Error::InvalidConfig("step size must be positive".into()));
    }
    if options.iterations == 0 {
        return Err(Error::InvalidConfig("at least one iteration is required".into()));
    }
    let start = Instant::now();
    let config = *mdp.config();
    let mut noise = match options.noise {
        Some(n) if n.sigma < 0.0 || !n.sigma.is_finite() => {
            return Err(Error::InvalidConfig("noise sigma must be non-negative".into()))
        }
        Some(n) if n.sigma > 0.0 => Some((
            Normal::new(0.0, n.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            ChaCha8Rng::seed_from_u64(n.seed),
        )),
        _ => None,
    };
    let mut policy = mdp.uniform_policy();
    let mut records = Vec::with_capacity(options.iterations);
    let mut best: Option<(f64, TabularPolicy, EvaluationResult)> = None;
    for k in 1..=options.iterations {
        let eval = mdp.evaluate_policy(&policy)?;
        let j = eval.return_j;
        if !j.is_finite() {
            return Err(Error::Numeric(format!("non-finite return at iteration {k}")));
        }
        if best.as_ref().is_none_or(|(b, _, _)| j > *b) {
            best = Some((j, policy.clone(), eval.clone()));
        }
        let mut advantage = eval.advantage.clone();
        if let Some((dist, rng)) = noise.as_mut() {
            for (a, &legal) in advantage.iter_mut().zip(mdp.legal_mask()) {
                if legal {
                    *a += dist.sample(rng);
                }
            }
        }
        let direction = if direction_is_gradient {
            let probs = policy.probabilities();
            gradient_from(mdp, &eval, probs.values(), &advantage)
        } else {
            advantage
        };
        let sup = policy.ascend(&direction, options.step_size);
        records.push(IterationRecord {
            iteration: k,
            j,
            best_j: best.as_ref().map(|b| b.0).unwrap_or(j),
            bound: (kind == SolverKind::Erpi).then(|| theorem1_bound(&config, k)),
            update_sup_norm: sup,
        });
    }
    let (best_j, best_policy, best_eval) = best.expect("at least one iteration");
    let deterministic = determinize(mdp, &best_eval.advantage);
    let j_det = mdp
        .evaluate(&deterministic.to_probabilities(mdp.action_count()))?
        .return_j;
    if j_det < best_j - DETERMINIZATION_SLACK * (1.0 + best_j.abs()) {
        return Err(Error::Numeric(format!(
            "determinization lost return: {j_det} < {best_j}"
        )));
    }
    let tree = crate::ibmdp::extract_tree(&deterministic, mdp.observations())?;
    Ok(SolveReport {
        solver: kind,
        records,
        stochastic: Some(best_policy),
        stochastic_j: Some(best_j),
        deterministic: Some(deterministic),
        j: Some(j_det),
        tree,
        bound_at_k: (kind == SolverKind::Erpi).then(|| theorem1_bound(&config, options.iterations)),
        wall_time: start.elapsed(),
    })
}

/// Value iteration wrapped as a [`SolveReport`]; one record per sweep.
pub fn solve_value_iteration(mdp: &ObservationMdp, tolerance: f64) -> Result<SolveReport> {
    let start = Instant::now();
    let vi = value_iteration(mdp, tolerance)?;
    let mut best = f64::NEG_INFINITY;
    let mut previous = 0.0;
    let records = vi
        .root_trace
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            best = best.max(j);
            let r = IterationRecord {
                iteration: i + 1,
                j,
                best_j: best,
                bound: None,
                update_sup_norm: (j - previous).abs(),
            };
            previous = j;
            r
        })
        .collect();
    let tree = crate::ibmdp::extract_tree(&vi.policy, mdp.observations())?;
    Ok(SolveReport {
        solver: SolverKind::ValueIteration,
        records,
        stochastic: None,
        stochastic_j: None,
        deterministic: Some(vi.policy),
        j: Some(vi.j),
        tree,
        bound_at_k: None,
        wall_time: start.elapsed(),
    })
}

/// Per-iteration mean and standard deviation of `J(π_k)` across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationSummary {
    pub solver: SolverKind,
    pub sigma: f64,
    pub seeds: Vec<u64>,
    pub mean_j: Vec<f64>,
    pub std_j: Vec<f64>,
    pub final_j: Vec<f64>,
}

impl AblationSummary {
    pub fn final_mean(&self) -> f64 {
        self.final_j.iter().sum::<f64>() / self.final_j.len() as f64
    }
}

/// Runs the ascent solver once per seed with Gaussian advantage noise.
pub fn noisy_ablation(
    mdp: &ObservationMdp,
    kind: SolverKind,
    step_size: f64,
    sigma: f64,
    seeds: &[u64],
    iterations: usize,
    exec: Execution,
) -> Result<AblationSummary> {
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig("the ablation needs at least two seeds".into()));
    }
    let runs = exec.map_slice(seeds, |&seed| {
        ascend(
            mdp,
            kind,
            &AscentOptions {
                step_size,
                iterations,
                noise: Some(AdvantageNoise { sigma, seed }),
            },
        )
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    let mut mean_j = vec![0.0; iterations];
    let mut std_j = vec![0.0; iterations];
    for k in 0..iterations {
        let js: Vec<f64> = runs.iter().map(|r| r.records[k].j).collect();
        let mean = js.iter().sum::<f64>() / n;
        mean_j[k] = mean;
        std_j[k] = (js.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    }
    Ok(AblationSummary {
        solver: kind,
        sigma,
        seeds: seeds.to_vec(),
        mean_j,
        std_j,
        final_j: runs.iter().map(|r| r.records[iterations - 1].j).collect(),
    })
}

/// A tree from the exhaustive enumeration and its return decomposition.
#[derive(Debug, Clone)]
pub struct EnumeratedTree {
    pub tree: DecisionTree,
    pub stats: CycleStats,
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub tree: DecisionTree,
    pub j: f64,
    pub trees_enumerated: usize,
}

#[derive(Debug)]
enum Fragment {
    Leaf(usize),
    Split(usize, f64, Arc<Fragment>, Arc<Fragment>),
}

impl Fragment {
    fn to_tree(&self) -> DecisionTree {
        match self {
            Fragment::Leaf(c) => DecisionTree::leaf(*c),
            Fragment::Split(f, t, lo, hi) => DecisionTree::split(*f, *t, lo.to_tree(), hi.to_tree()),
        }
    }
}

/// Default cap on the number of trees [`enumerate_trees`] will build.
pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

/// Every tree of depth at most `M` whose tests are IBMDP-reachable
/// thresholds, with the return of each as an affine function of `ζ`.
///
/// Works directly on bounds and data points, independently of the
/// Observation-MDP. A branch without data carries no return, so it is
/// represented by a single leaf predicting the parent's majority class.
pub fn enumerate_trees(dataset: &Dataset, config: &IbmdpConfig, cap: u128) -> Result<Vec<EnumeratedTree>> {
    config.check_dataset(dataset)?;
    let members: Vec<u32> = (0..dataset.len() as u32).collect();
    let root = Observation::root(dataset.feature_count());
    let count = count_trees(dataset, config, &root, &members, 0, cap);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let fragments = fragments_at(dataset, config, &root, &members, 0);
    Ok(fragments
        .into_iter()
        .map(|(frag, stats)| EnumeratedTree {
            tree: frag.to_tree(),
            stats,
        })
        .collect())
}

fn split_members(dataset: &Dataset, members: &[u32], feature: usize, threshold: f64) -> (Vec<u32>, Vec<u32>) {
    members
        .iter()
        .partition(|&&m| dataset.row(m as usize)[feature] <= threshold)
}

fn count_trees(
    dataset: &Dataset,
    config: &IbmdpConfig,
    obs: &Observation,
    members: &[u32],
    depth: u32,
    cap: u128,
) -> u128 {
    if members.is_empty() {
        return 1;
    }
    let mut total = config.class_count as u128;
    if depth == config.max_igas {
        return total;
    }
    for feature in 0..config.feature_count {
        for h in 1..=config.p {
            let action = Action::Iga {
                feature,
                fraction_index: h,
            };
            let t = ratio_to_f64(&split_threshold(obs, action, config.p).expect("IGA"));
            let (lo, hi) = split_members(dataset, members, feature, t);
            let lo_obs = apply_iga(obs, action, config.p, true).expect("IGA");
            let hi_obs = apply_iga(obs, action, config.p, false).expect("IGA");
            let a = count_trees(dataset, config, &lo_obs, &lo, depth + 1, cap);
            let b = count_trees(dataset, config, &hi_obs, &hi, depth + 1, cap);
            total = total.saturating_add(a.saturating_mul(b));
            if total > cap {
                return total;
            }
        }
    }
    total
}

fn fragments_at(
    dataset: &Dataset,
    config: &IbmdpConfig,
    obs: &Observation,
    members: &[u32],
    depth: u32,
) -> Vec<(Arc<Fragment>, CycleStats)> {
    let n = dataset.len() as f64;
    let counts = dataset.class_counts_of(members);
    let weight = members.len() as f64 / n;
    let mut out: Vec<(Arc<Fragment>, CycleStats)> = (0..config.class_count)
        .map(|c| {
            let reward = if members.is_empty() {
                0.0
            } else {
                2.0 * counts[c] as f64 / members.len() as f64 - 1.0
            };
            (
                Arc::new(Fragment::Leaf(c)),
                CycleStats::leaf(weight, reward, depth, config.gamma),
            )
        })
        .collect();
    if depth == config.max_igas {
        return out;
    }
    for feature in 0..config.feature_count {
        for h in 1..=config.p {
            let action = Action::Iga {
                feature,
                fraction_index: h,
            };
            let t = ratio_to_f64(&split_threshold(obs, action, config.p).expect("IGA"));
            let (lo, hi) = split_members(dataset, members, feature, t);
            let side = |part: &[u32], goes_low: bool| {
                if part.is_empty() {
                    vec![(Arc::new(Fragment::Leaf(majority(&counts))), CycleStats::default())]
                } else {
                    let child = apply_iga(obs, action, config.p, goes_low).expect("IGA");
                    fragments_at(dataset, config, &child, part, depth + 1)
                }
            };
            let lows = side(&lo, true);
            let highs = side(&hi, false);
            for (lf, ls) in &lows {
                for (hf, hs) in &highs {
                    // Leaf terms already carry the IGA rewards of their path.
                    out.push((Arc::new(Fragment::Split(feature, t, lf.clone(), hf.clone())), *ls + *hs));
                }
            }
        }
    }
    out
}

/// Exhaustive optimum over depth-`≤ M` trees, ties to the first enumerated
/// (leaves before splits, features and fractions ascending).
pub fn brute_force_best_tree(dataset: &Dataset, config: &IbmdpConfig, cap: u128) -> Result<BruteForceResult> {
    let trees = enumerate_trees(dataset, config, cap)?;
    let trees_enumerated = trees.len();
    let mut best: Option<(f64, DecisionTree)> = None;
    for t in trees {
        let j = t.stats.j(config.zeta);
        if best.as_ref().is_none_or(|(b, _)| j > *b + 1e-12) {
            best = Some((j, t.tree));
        }
    }
    let (j, tree) = best.expect("at least one leaf");
    Ok(BruteForceResult {
        tree,
        j,
        trees_enumerated,
    })
}
