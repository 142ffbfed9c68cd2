//! The Observation-IBMDP: a fully observable finite MDP over feature bounds
//! whose rewards and transitions average the IBMDP's over the data points
//! inside each observation.
//!
//! Every IGA leads one level deeper and every base action returns to the
//! root, so for a fixed policy the value of each observation is affine in the
//! root value, `V(o) = a(o) + b(o) V(root)`. One backward pass over the
//! breadth-first order yields `a` and `b`, and the root equation closes the
//! system; the discounted occupancy is obtained the same way with a forward
//! pass. Dense LU and fixed-point solvers are kept for cross-checking.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ibmdp::{enumerate_observations, ActionSpace, IbmdpConfig, ObservationSet};
use crate::policy::{ActionProbabilities, TabularPolicy};

const ROW_SUM_TOLERANCE: f64 = 1e-9;
const FIXED_POINT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ObservationMdp {
    config: IbmdpConfig,
    omega: ObservationSet,
    actions: ActionSpace,
    reward: Vec<f64>,
    transitions: Vec<Vec<(usize, f64)>>,
    legal: Vec<bool>,
}

/// How policy-evaluation linear systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Exact back-substitution exploiting the depth structure.
    #[default]
    Structured,
    /// Dense LU factorization of `I - γ P_π`.
    Dense,
    /// Repeated Bellman sweeps until the residual drops below 1e-10.
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    action_count: usize,
    pub v: Vec<f64>,
    /// Row-major `|Ω| × |A'|`; masked entries hold the one-step lookahead
    /// through the root but never carry probability.
    pub q: Vec<f64>,
    pub advantage: Vec<f64>,
    /// `J = V(root)`.
    pub return_j: f64,
    /// Normalized discounted occupancy `p^π(o)`.
    pub state_distribution: Vec<f64>,
}

impl EvaluationResult {
    pub fn q(&self, o: usize, a: usize) -> f64 {
        self.q[o * self.action_count + a]
    }

    pub fn advantage(&self, o: usize, a: usize) -> f64 {
        self.advantage[o * self.action_count + a]
    }

    pub fn advantage_row(&self, o: usize) -> &[f64] {
        &self.advantage[o * self.action_count..(o + 1) * self.action_count]
    }
}

impl ObservationMdp {
    pub fn build(dataset: &Dataset, config: &IbmdpConfig) -> Result<Self> {
        let omega = enumerate_observations(config, dataset)?;
        Ok(Self::from_observations(omega))
    }

    pub fn from_observations(omega: ObservationSet) -> Self {
        let config = *omega.config();
        let actions = config.actions();
        let na = actions.len();
        let n = omega.len();
        let mut reward = vec![config.zeta; n * na];
        let mut transitions = vec![Vec::new(); n * na];
        let mut legal = vec![false; n * na];
        for (o, node) in omega.nodes().iter().enumerate() {
            let total = node.count();
            for c in 0..actions.class_count {
                reward[o * na + c] = 2.0 * node.class_counts[c] as f64 / total as f64 - 1.0;
                transitions[o * na + c] = vec![(ObservationSet::ROOT, 1.0)];
                legal[o * na + c] = true;
            }
            for (j, out) in node.outcomes.iter().enumerate() {
                let a = actions.class_count + j;
                let mut succ = Vec::with_capacity(2);
                if let Some(low) = out.low {
                    succ.push((low, out.low_count as f64 / total as f64));
                }
                if let Some(high) = out.high {
                    succ.push((high, out.high_count as f64 / total as f64));
                }
                transitions[o * na + a] = succ;
                legal[o * na + a] = true;
            }
        }
        ObservationMdp {
            config,
            omega,
            actions,
            reward,
            transitions,
            legal,
        }
    }

    pub fn config(&self) -> &IbmdpConfig {
        &self.config
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.omega
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn observation_count(&self) -> usize {
        self.omega.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn reward(&self, o: usize, a: usize) -> f64 {
        self.reward[o * self.actions.len() + a]
    }

    pub fn transitions(&self, o: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[o * self.actions.len() + a]
    }

    pub fn is_legal(&self, o: usize, a: usize) -> bool {
        self.legal[o * self.actions.len() + a]
    }

    pub fn legal_mask(&self) -> &[bool] {
        &self.legal
    }

    pub fn legal_row(&self, o: usize) -> &[bool] {
        let na = self.actions.len();
        &self.legal[o * na..(o + 1) * na]
    }

    pub fn uniform_policy(&self) -> TabularPolicy {
        TabularPolicy::uniform(self.action_count(), self.legal.clone())
    }

    fn check_probabilities(&self, probs: &ActionProbabilities) -> Result<()> {
        if probs.action_count() != self.action_count() || probs.observation_count() != self.observation_count() {
            return Err(Error::InvalidPolicy(format!(
                "policy shape {}x{} does not match MDP {}x{}",
                probs.observation_count(),
                probs.action_count(),
                self.observation_count(),
                self.action_count()
            )));
        }
        for o in 0..self.observation_count() {
            let row = probs.row(o);
            let mut sum = 0.0;
            for (a, &p) in row.iter().enumerate() {
                if !(p >= 0.0) {
                    return Err(Error::InvalidPolicy(format!("negative probability at ({o}, {a})")));
                }
                if p > 0.0 && !self.is_legal(o, a) {
                    return Err(Error::InvalidPolicy(format!(
                        "probability {p} on masked action {} at observation {o}",
                        self.actions.action(a)
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidPolicy(format!("row {o} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// `Σ_a π(a|o) Σ_o' T(o, a, o') x(o')` for all `o`.
    fn expected_next(&self, probs: &ActionProbabilities, x: &[f64]) -> Vec<f64> {
        (0..self.observation_count())
            .map(|o| {
                probs
                    .row(o)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| p * self.transitions(o, a).iter().map(|&(s, t)| t * x[s]).sum::<f64>())
                    .sum()
            })
            .collect()
    }

    fn policy_reward(&self, probs: &ActionProbabilities) -> Vec<f64> {
        (0..self.observation_count())
            .map(|o| {
                probs
                    .row(o)
                    .iter()
                    .enumerate()
                    .map(|(a, &p)| if p > 0.0 { p * self.reward(o, a) } else { 0.0 })
                    .sum()
            })
            .collect()
    }

    /// Sup-norm of `R_π + γ P_π V - V`.
    pub fn bellman_residual(&self, probs: &ActionProbabilities, v: &[f64]) -> f64 {
        let next = self.expected_next(probs, v);
        self.policy_reward(probs)
            .iter()
            .zip(&next)
            .zip(v)
            .map(|((r, n), v)| (r + self.config.gamma * n - v).abs())
            .fold(0.0, f64::max)
    }

    /// Sup-norm of `max_a [R(o, a) + γ Σ T(o, a, o') V(o')] - V(o)`.
    pub fn bellman_optimality_residual(&self, v: &[f64]) -> f64 {
        let gamma = self.config.gamma;
        (0..self.observation_count())
            .map(|o| {
                let best = (0..self.action_count())
                    .filter(|&a| self.is_legal(o, a))
                    .map(|a| {
                        self.reward(o, a) + gamma * self.transitions(o, a).iter().map(|&(s, t)| t * v[s]).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                (best - v[o]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn evaluate_policy(&self, policy: &TabularPolicy) -> Result<EvaluationResult> {
        self.evaluate(&policy.probabilities())
    }

    pub fn evaluate(&self, probs: &ActionProbabilities) -> Result<EvaluationResult> {
        self.evaluate_with(probs, LinearSolver::Structured)
    }

    pub fn evaluate_with(&self, probs: &ActionProbabilities, solver: LinearSolver) -> Result<EvaluationResult> {
        self.check_probabilities(probs)?;
        let (v, occupancy) = match solver {
            LinearSolver::Structured => (self.values_structured(probs), self.occupancy_structured(probs)),
            LinearSolver::Dense => self.solve_dense(probs)?,
            LinearSolver::FixedPoint => self.solve_fixed_point(probs)?,
        };
        Ok(self.assemble(probs, v, occupancy))
    }

    fn assemble(&self, probs: &ActionProbabilities, v: Vec<f64>, state_distribution: Vec<f64>) -> EvaluationResult {
        let na = self.action_count();
        let gamma = self.config.gamma;
        let mut q = vec![0.0; self.observation_count() * na];
        let mut advantage = vec![0.0; q.len()];
        for o in 0..self.observation_count() {
            for a in 0..na {
                let next = if self.is_legal(o, a) {
                    self.transitions(o, a).iter().map(|&(s, t)| t * v[s]).sum::<f64>()
                } else {
                    v[ObservationSet::ROOT]
                };
                q[o * na + a] = self.reward(o, a) + gamma * next;
            }
            // Take V as the policy average of Q so advantages average to
            // zero under π up to rounding.
            let vo: f64 = probs
                .row(o)
                .iter()
                .zip(&q[o * na..(o + 1) * na])
                .map(|(p, q)| p * q)
                .sum();
            for a in 0..na {
                advantage[o * na + a] = q[o * na + a] - vo;
            }
        }
        EvaluationResult {
            action_count: na,
            return_j: v[ObservationSet::ROOT],
            v,
            q,
            advantage,
            state_distribution,
        }
    }

    fn values_structured(&self, probs: &ActionProbabilities) -> Vec<f64> {
        let n = self.observation_count();
        let gamma = self.config.gamma;
        let classes = self.actions.class_count;
        let mut offset = vec![0.0; n];
        let mut slope = vec![0.0; n];
        for o in (0..n).rev() {
            let (mut a_o, mut b_o) = (0.0, 0.0);
            for (a, &p) in probs.row(o).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let r = self.reward(o, a);
                if a < classes {
                    a_o += p * r;
                    b_o += p * gamma;
                } else {
                    let (mut sa, mut sb) = (0.0, 0.0);
                    for &(s, t) in self.transitions(o, a) {
                        sa += t * offset[s];
                        sb += t * slope[s];
                    }
                    a_o += p * (r + gamma * sa);
                    b_o += p * gamma * sb;
                }
            }
            offset[o] = a_o;
            slope[o] = b_o;
        }
        let root = ObservationSet::ROOT;
        let v_root = offset[root] / (1.0 - slope[root]);
        (0..n)
            .map(|o| {
                if o == root {
                    v_root
                } else {
                    offset[o] + slope[o] * v_root
                }
            })
            .collect()
    }

    fn occupancy_structured(&self, probs: &ActionProbabilities) -> Vec<f64> {
        let n = self.observation_count();
        let gamma = self.config.gamma;
        let classes = self.actions.class_count;
        let mut mass = vec![0.0; n];
        mass[ObservationSet::ROOT] = 1.0;
        let mut reset_flow = 0.0;
        for o in 0..n {
            let m = mass[o];
            if m == 0.0 {
                continue;
            }
            for (a, &p) in probs.row(o).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                if a < classes {
                    reset_flow += m * p;
                } else {
                    for &(s, t) in self.transitions(o, a) {
                        mass[s] += gamma * m * p * t;
                    }
                }
            }
        }
        let root_mass = (1.0 - gamma) / (1.0 - gamma * reset_flow);
        mass.iter_mut().for_each(|m| *m *= root_mass);
        mass
    }

    fn policy_matrix(&self, probs: &ActionProbabilities) -> DMatrix<f64> {
        let n = self.observation_count();
        let mut p = DMatrix::zeros(n, n);
        for o in 0..n {
            for (a, &pa) in probs.row(o).iter().enumerate() {
                if pa > 0.0 {
                    for &(s, t) in self.transitions(o, a) {
                        p[(o, s)] += pa * t;
                    }
                }
            }
        }
        p
    }

    fn solve_dense(&self, probs: &ActionProbabilities) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.observation_count();
        let gamma = self.config.gamma;
        let p = self.policy_matrix(probs);
        let eye = DMatrix::<f64>::identity(n, n);
        let system = &eye - &p * gamma;
        let r = DVector::from_vec(self.policy_reward(probs));
        let v = system
            .clone()
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Numeric("singular value system".into()))?;
        let mut e = DVector::zeros(n);
        e[ObservationSet::ROOT] = 1.0 - gamma;
        let occ = system
            .transpose()
            .lu()
            .solve(&e)
            .ok_or_else(|| Error::Numeric("singular occupancy system".into()))?;
        Ok((v.iter().copied().collect(), occ.iter().copied().collect()))
    }

    fn solve_fixed_point(&self, probs: &ActionProbabilities) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.observation_count();
        let gamma = self.config.gamma;
        let r = self.policy_reward(probs);
        let max_sweeps = sweep_budget(gamma);
        let mut v = vec![0.0; n];
        let mut converged = false;
        for _ in 0..max_sweeps {
            let next = self.expected_next(probs, &v);
            let mut residual: f64 = 0.0;
            for o in 0..n {
                let new = r[o] + gamma * next[o];
                residual = residual.max((new - v[o]).abs());
                v[o] = new;
            }
            if residual <= FIXED_POINT_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numeric("value sweeps did not converge".into()));
        }

        // p = (1 - γ) e_root + γ P_πᵀ p
        let mut occ = vec![0.0; n];
        occ[ObservationSet::ROOT] = 1.0 - gamma;
        for sweep in 0..=max_sweeps {
            let mut next = vec![0.0; n];
            next[ObservationSet::ROOT] = 1.0 - gamma;
            for o in 0..n {
                for (a, &pa) in probs.row(o).iter().enumerate() {
                    if pa > 0.0 {
                        for &(s, t) in self.transitions(o, a) {
                            next[s] += gamma * occ[o] * pa * t;
                        }
                    }
                }
            }
            let residual = next.iter().zip(&occ).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            occ = next;
            if residual <= FIXED_POINT_TOLERANCE * (1.0 - gamma) {
                return Ok((v, occ));
            }
            if sweep == max_sweeps {
                break;
            }
        }
        Err(Error::Numeric("occupancy sweeps did not converge".into()))
    }

    /// JSON dump: actions, observations, rewards and sparse transitions.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Edge {
            observation: usize,
            action: usize,
            successors: Vec<(usize, f64)>,
        }
        #[derive(Serialize)]
        struct Dump {
            gamma: f64,
            zeta: f64,
            p: u32,
            max_igas: u32,
            root: usize,
            actions: Vec<String>,
            observations: serde_json::Value,
            rewards: Vec<Vec<f64>>,
            legal: Vec<Vec<bool>>,
            transitions: Vec<Edge>,
        }
        let na = self.action_count();
        let dump = Dump {
            gamma: self.config.gamma,
            zeta: self.config.zeta,
            p: self.config.p,
            max_igas: self.config.max_igas,
            root: ObservationSet::ROOT,
            actions: self.actions.iter().map(|a| a.to_string()).collect(),
            observations: serde_json::from_str(&self.omega.to_json()?)?,
            rewards: self.reward.chunks(na).map(<[f64]>::to_vec).collect(),
            legal: self.legal.chunks(na).map(<[bool]>::to_vec).collect(),
            transitions: (0..self.observation_count())
                .flat_map(|o| (0..na).map(move |a| (o, a)))
                .filter(|&(o, a)| self.is_legal(o, a))
                .map(|(o, a)| Edge {
                    observation: o,
                    action: a,
                    successors: self.transitions(o, a).to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

fn sweep_budget(gamma: f64) -> usize {
    // Enough contractions by γ to shrink an O(1/(1-γ)) error below 1e-12.
    let sweeps = (40.0 / (1.0 - gamma)).ceil() as usize;
    sweeps.clamp(1_000, 10_000_000)
}

/// Sample mean and standard error of simulated discounted returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub episodes: usize,
}

/// Simulates the partially observable IBMDP itself: a data point is drawn
/// uniformly, IGAs compare its actual feature value with the threshold and
/// refine the bounds, base actions pay ±1, reset the bounds and draw a new
/// point. The policy only ever sees the bounds.
///
/// Each episode uses its own ChaCha stream derived from `seed`, so results do
/// not depend on the execution mode.
pub fn monte_carlo_return(
    dataset: &Dataset,
    omega: &ObservationSet,
    probs: &ActionProbabilities,
    episodes: usize,
    horizon: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloEstimate> {
    if episodes == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("episodes and horizon must be at least 1".into()));
    }
    let config = omega.config();
    config.check_dataset(dataset)?;
    let actions = config.actions();
    if probs.observation_count() != omega.len() || probs.action_count() != actions.len() {
        return Err(Error::InvalidPolicy(
            "policy shape does not match the observation set".into(),
        ));
    }
    let returns = exec.map_range(episodes, |episode| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode as u64);
        simulate_episode(dataset, omega, &actions, probs, horizon, &mut rng)
    });
    let returns = returns.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        standard_error: (var / n).sqrt(),
        episodes,
    })
}

fn simulate_episode(
    dataset: &Dataset,
    omega: &ObservationSet,
    actions: &ActionSpace,
    probs: &ActionProbabilities,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let config = omega.config();
    let mut point = rng.random_range(0..dataset.len());
    let mut obs = ObservationSet::ROOT;
    let mut discount = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let row = probs.row(obs);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        let mut last_positive = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_positive = a;
                acc += p;
                if u < acc {
                    chosen = Some(a);
                    break;
                }
            }
        }
        let a = chosen.unwrap_or(last_positive);
        if a < actions.class_count {
            total += discount * if dataset.label(point) == a { 1.0 } else { -1.0 };
            point = rng.random_range(0..dataset.len());
            obs = ObservationSet::ROOT;
        } else {
            let node = omega.node(obs);
            let outcome = node
                .outcomes
                .get(a - actions.class_count)
                .ok_or_else(|| Error::InvalidPolicy(format!("IGA chosen at capped observation {obs}")))?;
            let feature = (a - actions.class_count) / config.p as usize;
            let next = if dataset.row(point)[feature] <= outcome.threshold {
                outcome.low
            } else {
                outcome.high
            };
            total += discount * config.zeta;
            obs = next.ok_or_else(|| Error::Internal("point fell outside every child".into()))?;
        }
        discount *= config.gamma;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy_task;
    use crate::policy::TabularPolicy;
    use rand::SeedableRng;

    fn toy_mdp(zeta: f64, m: u32) -> (Dataset, ObservationMdp) {
        let data = toy_task(0).unwrap();
        let config = IbmdpConfig::new(&data, zeta, 0.99, 1, m).unwrap();
        let mdp = ObservationMdp::build(&data, &config).unwrap();
        (data, mdp)
    }

    fn random_policy(mdp: &ObservationMdp, seed: u64, scale: f64) -> TabularPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = (0..mdp.observation_count() * mdp.action_count())
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        TabularPolicy::from_logits(mdp.action_count(), logits, mdp.legal_mask().to_vec()).unwrap()
    }

    #[test]
    fn construction_invariants() {
        let (_, mdp) = toy_mdp(0.5, 2);
        let omega = mdp.observations();
        assert_eq!(mdp.reward(0, 0), 0.0);
        assert_eq!(mdp.transitions(0, 2), &[(1, 0.5), (2, 0.5)]);
        for o in 0..mdp.observation_count() {
            for a in 0..mdp.action_count() {
                if !mdp.is_legal(o, a) {
                    assert!(omega.is_capped(o) && a >= 2);
                    continue;
                }
                let sum: f64 = mdp.transitions(o, a).iter().map(|t| t.1).sum();
                assert!((sum - 1.0).abs() < 1e-12);
                if a < 2 {
                    assert_eq!(mdp.transitions(o, a), &[(0, 1.0)]);
                    assert!((-1.0..=1.0).contains(&mdp.reward(o, a)));
                } else {
                    assert_eq!(mdp.reward(o, a), 0.5);
                    assert!(mdp.transitions(o, a).len() <= 2);
                    for &(s, _) in mdp.transitions(o, a) {
                        assert_eq!(omega.node(s).depth, omega.node(o).depth + 1);
                    }
                }
            }
        }
    }

    #[test]
    fn single_observation_uniform_is_zero() {
        let (_, mdp) = toy_mdp(0.5, 0);
        let eval = mdp.evaluate_policy(&mdp.uniform_policy()).unwrap();
        assert_eq!(mdp.observation_count(), 1);
        assert!(eval.return_j.abs() < 1e-12);
        assert!((eval.state_distribution[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solvers_agree() {
        let (_, mdp) = toy_mdp(0.3, 2);
        for seed in 0..5 {
            let probs = random_policy(&mdp, seed, 2.0).probabilities();
            let a = mdp.evaluate_with(&probs, LinearSolver::Structured).unwrap();
            let b = mdp.evaluate_with(&probs, LinearSolver::Dense).unwrap();
            let c = mdp.evaluate_with(&probs, LinearSolver::FixedPoint).unwrap();
            for other in [&b, &c] {
                for (x, y) in a.v.iter().zip(&other.v) {
                    assert!((x - y).abs() < 1e-8, "{x} vs {y}");
                }
                for (x, y) in a.state_distribution.iter().zip(&other.state_distribution) {
                    assert!((x - y).abs() < 1e-8);
                }
            }
            assert!(mdp.bellman_residual(&probs, &a.v) < 1e-10);
            let total: f64 = a.state_distribution.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(a.state_distribution[0] >= 1.0 - 0.99);
            for o in 0..mdp.observation_count() {
                let avg: f64 = probs.row(o).iter().zip(a.advantage_row(o)).map(|(p, x)| p * x).sum();
                assert!(avg.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        let (_, mdp) = toy_mdp(0.5, 1);
        let n = mdp.observation_count() * mdp.action_count();
        let mut values = vec![0.0; n];
        values.iter_mut().step_by(mdp.action_count()).for_each(|v| *v = 0.9);
        let probs = ActionProbabilities::new(mdp.action_count(), values.clone()).unwrap();
        assert!(matches!(mdp.evaluate(&probs), Err(Error::InvalidPolicy(_))));
        // Put mass on an IGA at a capped observation.
        let last = mdp.observation_count() - 1;
        values.iter_mut().step_by(mdp.action_count()).for_each(|v| *v = 1.0);
        values[last * mdp.action_count()] = 0.0;
        values[last * mdp.action_count() + 2] = 1.0;
        let probs = ActionProbabilities::new(mdp.action_count(), values).unwrap();
        assert!(matches!(mdp.evaluate(&probs), Err(Error::InvalidPolicy(_))));
    }

    #[test]
    fn monte_carlo_is_deterministic_across_modes() {
        let (data, mdp) = toy_mdp(0.5, 2);
        let probs = random_policy(&mdp, 3, 1.0).probabilities();
        let omega = mdp.observations();
        let a = monte_carlo_return(&data, omega, &probs, 200, 300, 9, Execution::Sequential).unwrap();
        let b = monte_carlo_return(&data, omega, &probs, 200, 300, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_return(&data, omega, &probs, 0, 10, 1, Execution::Sequential).is_err());
    }

    #[test]
    fn json_dump_parses() {
        let (_, mdp) = toy_mdp(0.5, 1);
        let v: serde_json::Value = serde_json::from_str(&mdp.to_json().unwrap()).unwrap();
        assert_eq!(v["actions"].as_array().unwrap().len(), 4);
        assert_eq!(v["observations"].as_array().unwrap().len(), 5);
    }
}
