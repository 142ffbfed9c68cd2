//! Iterative bounding MDP semantics: feature-bound observations, information
//! gathering actions (IGAs), the depth-capped observation set and tree
//! extraction from deterministic observation policies.
//!
//! Bounds are exact rationals with denominators that are powers of `p + 1`,
//! so observations reached along different split orders deduplicate exactly.
//! A point `x` lies inside an observation iff `L_k < x_k <= U_k` for every
//! feature, with `L_k = 0` inclusive; an IGA on feature `k` sends the point to
//! the low child iff `x_k <= v'`.

use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::policy::DeterministicPolicy;
use crate::trees::DecisionTree;

/// Exact bound value.
pub type Bound = Ratio<i64>;

/// Largest reward of the underlying classification task (correct label).
pub const R_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbmdpConfig {
    /// Reward paid for every information gathering action.
    pub zeta: f64,
    pub gamma: f64,
    /// Split granularity: IGA fractions are `1/(p+1), ..., p/(p+1)`.
    pub p: u32,
    /// Maximum number of consecutive IGAs (M).
    pub max_igas: u32,
    pub feature_count: usize,
    pub class_count: usize,
}

impl IbmdpConfig {
    pub fn new(dataset: &Dataset, zeta: f64, gamma: f64, p: u32, max_igas: u32) -> Result<Self> {
        let config = IbmdpConfig {
            zeta,
            gamma,
            p,
            max_igas,
            feature_count: dataset.feature_count(),
            class_count: dataset.class_count(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.zeta.is_finite() || self.zeta >= R_MAX {
            return Err(Error::InvalidConfig(format!(
                "zeta must be finite and below {R_MAX}, got {}",
                self.zeta
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.p == 0 {
            return Err(Error::InvalidConfig("p must be at least 1".into()));
        }
        if self.feature_count == 0 || self.class_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "need d >= 1 and K >= 2, got d = {}, K = {}",
                self.feature_count, self.class_count
            )));
        }
        // Keep every denominator (p+1)^M inside i64 with room for products.
        let bits = f64::from(self.p + 1).log2() * f64::from(self.max_igas);
        if bits > 30.0 {
            return Err(Error::InvalidConfig(format!(
                "(p+1)^M too large for exact bounds (p = {}, M = {})",
                self.p, self.max_igas
            )));
        }
        Ok(())
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.feature_count() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                got: dataset.feature_count(),
            });
        }
        if dataset.class_count() != self.class_count {
            return Err(Error::DimensionMismatch {
                expected: self.class_count,
                got: dataset.class_count(),
            });
        }
        Ok(())
    }

    pub fn r_max(&self) -> f64 {
        R_MAX
    }

    pub fn r_min(&self) -> f64 {
        self.zeta.min(-1.0)
    }

    pub fn actions(&self) -> ActionSpace {
        ActionSpace {
            class_count: self.class_count,
            feature_count: self.feature_count,
            p: self.p,
        }
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }
}

/// Feature bounds `(L_k, U_k)` for every feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    bounds: Vec<(Bound, Bound)>,
}

impl Observation {
    /// All bounds `(0, 1)`.
    pub fn root(feature_count: usize) -> Self {
        Observation {
            bounds: vec![(Bound::zero(), Bound::one()); feature_count],
        }
    }

    pub fn from_bounds(bounds: Vec<(Bound, Bound)>) -> Result<Self> {
        for (k, (lo, hi)) in bounds.iter().enumerate() {
            if *lo < Bound::zero() || lo >= hi || *hi > Bound::one() {
                return Err(Error::InvalidConfig(format!(
                    "feature {k}: bounds ({lo}, {hi}) must satisfy 0 <= L < U <= 1"
                )));
            }
        }
        Ok(Observation { bounds })
    }

    pub fn feature_count(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(Bound, Bound)] {
        &self.bounds
    }

    pub fn lower(&self, k: usize) -> Bound {
        self.bounds[k].0
    }

    pub fn upper(&self, k: usize) -> Bound {
        self.bounds[k].1
    }

    pub fn width(&self, k: usize) -> Bound {
        self.bounds[k].1 - self.bounds[k].0
    }

    pub fn bounds_f64(&self) -> Vec<(f64, f64)> {
        self.bounds
            .iter()
            .map(|(lo, hi)| (ratio_to_f64(lo), ratio_to_f64(hi)))
            .collect()
    }

    /// Membership test: `L_k < x_k <= U_k`, with a zero lower bound inclusive.
    pub fn contains(&self, point: &[f64]) -> bool {
        debug_assert_eq!(point.len(), self.bounds.len());
        self.bounds.iter().zip(point).all(|((lo, hi), &x)| {
            let lo = ratio_to_f64(lo);
            let above = if lo == 0.0 { x >= 0.0 } else { x > lo };
            above && x <= ratio_to_f64(hi)
        })
    }

    pub fn is_root(&self) -> bool {
        self.bounds.iter().all(|(lo, hi)| lo.is_zero() && hi.is_one())
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, (lo, hi)) in self.bounds.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "({lo},{hi})")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn ratio_to_f64(r: &Bound) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Predict a class; resets the bounds.
    Base(usize),
    /// Compare `feature` against `fraction_index / (p+1)` of its current range.
    Iga { feature: usize, fraction_index: u32 },
}

impl Action {
    pub fn is_base(self) -> bool {
        matches!(self, Action::Base(_))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Base(c) => write!(f, "C{c}"),
            Action::Iga {
                feature,
                fraction_index,
            } => write!(f, "IGA(x{feature}, {fraction_index})"),
        }
    }
}

/// Ordered action set: the `K` base actions, then IGAs ordered by
/// `(feature, fraction_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub class_count: usize,
    pub feature_count: usize,
    pub p: u32,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.class_count + self.iga_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iga_count(&self) -> usize {
        self.feature_count * self.p as usize
    }

    pub fn action(&self, index: usize) -> Action {
        if index < self.class_count {
            Action::Base(index)
        } else {
            let j = index - self.class_count;
            Action::Iga {
                feature: j / self.p as usize,
                fraction_index: (j % self.p as usize) as u32 + 1,
            }
        }
    }

    pub fn index(&self, action: Action) -> Result<usize> {
        match action {
            Action::Base(c) if c < self.class_count => Ok(c),
            Action::Iga {
                feature,
                fraction_index,
            } if feature < self.feature_count && (1..=self.p).contains(&fraction_index) => {
                Ok(self.class_count + feature * self.p as usize + fraction_index as usize - 1)
            }
            other => Err(Error::InvalidAction(format!("{other} outside the action space"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        (0..self.len()).map(|i| self.action(i))
    }
}

fn iga_parts(action: Action, p: u32, feature_count: usize) -> Result<(usize, Bound)> {
    match action {
        Action::Iga {
            feature,
            fraction_index,
        } => {
            if feature >= feature_count {
                return Err(Error::InvalidAction(format!(
                    "feature {feature} out of range for d = {feature_count}"
                )));
            }
            if !(1..=p).contains(&fraction_index) {
                return Err(Error::InvalidAction(format!(
                    "fraction index {fraction_index} outside 1..={p}"
                )));
            }
            Ok((feature, Bound::new(i64::from(fraction_index), i64::from(p) + 1)))
        }
        Action::Base(_) => Err(Error::InvalidAction(
            "base actions do not define a split threshold".into(),
        )),
    }
}

/// Exact threshold `v' = v * (U_k - L_k) + L_k` of an IGA.
pub fn split_threshold(observation: &Observation, action: Action, p: u32) -> Result<Bound> {
    let (k, v) = iga_parts(action, p, observation.feature_count())?;
    Ok(v * observation.width(k) + observation.lower(k))
}

/// Refines the bounds after an IGA: `U_k := v'` on the low branch
/// (`x_k <= v'`), `L_k := v'` otherwise.
pub fn apply_iga(observation: &Observation, action: Action, p: u32, goes_low: bool) -> Result<Observation> {
    let threshold = split_threshold(observation, action, p)?;
    let (k, _) = iga_parts(action, p, observation.feature_count())?;
    let mut next = observation.clone();
    if goes_low {
        next.bounds[k].1 = threshold;
    } else {
        next.bounds[k].0 = threshold;
    }
    Ok(next)
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|i| i * i <= n).all(|i| !n.is_multiple_of(i))
}

fn product_of_factors(value: i64, factors: u32, p: i64) -> bool {
    if factors == 0 {
        return value == 1;
    }
    (1..=p.min(value)).any(|h| value % h == 0 && product_of_factors(value / h, factors - 1, p))
}

/// Number of IGAs since the last base action, recovered from bound widths
/// alone. Only defined when `p + 1` is prime.
pub fn depth_from_bounds(observation: &Observation, p: u32) -> Result<u32> {
    let q = i64::from(p) + 1;
    if !is_prime(q as u64) {
        return Err(Error::DepthUndefined(format!(
            "p + 1 = {q} is not prime, widths do not determine depth"
        )));
    }
    let mut total = 0;
    for k in 0..observation.feature_count() {
        let width = observation.width(k);
        let mut denom = *width.denom();
        let mut n = 0u32;
        while denom % q == 0 {
            denom /= q;
            n += 1;
        }
        if denom != 1 || !product_of_factors(*width.numer(), n, q - 1) {
            return Err(Error::DepthUndefined(format!(
                "width {width} of feature {k} is not a product of factors h/{q}"
            )));
        }
        total += n;
    }
    Ok(total)
}

/// Outcome of one IGA taken at an observation of the enumerated set.
#[derive(Debug, Clone, PartialEq)]
pub struct IgaOutcome {
    pub threshold: f64,
    /// Index of the low child in Ω, `None` when no data falls there.
    pub low: Option<usize>,
    pub high: Option<usize>,
    pub low_count: usize,
    pub high_count: usize,
}

#[derive(Debug, Clone)]
pub struct ObservationNode {
    pub observation: Observation,
    /// Number of IGAs taken from the root.
    pub depth: u32,
    /// Indices of dataset points inside the bounds.
    pub members: Vec<u32>,
    pub class_counts: Vec<usize>,
    /// One entry per IGA (action-space order) when `depth < M`, else empty.
    pub outcomes: Vec<IgaOutcome>,
}

impl ObservationNode {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Majority class, lowest index on ties.
    pub fn majority_class(&self) -> usize {
        majority(&self.class_counts)
    }

    pub fn class_fractions(&self) -> Vec<f64> {
        let n = self.count();
        self.class_counts
            .iter()
            .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
            .collect()
    }
}

pub(crate) fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// The finite observation set Ω in breadth-first order, root first.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    config: IbmdpConfig,
    nodes: Vec<ObservationNode>,
    index: HashMap<(Observation, u32), usize>,
}

#[derive(Serialize)]
struct ObservationRecord {
    bounds: Vec<(f64, f64)>,
    depth: u32,
    count: usize,
    class_fractions: Vec<f64>,
}

impl ObservationSet {
    pub const ROOT: usize = 0;

    pub fn config(&self) -> &IbmdpConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        Self::ROOT
    }

    pub fn nodes(&self) -> &[ObservationNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &ObservationNode {
        &self.nodes[index]
    }

    pub fn find(&self, observation: &Observation, depth: u32) -> Option<usize> {
        self.index.get(&(observation.clone(), depth)).copied()
    }

    /// Whether only base actions are legal at this observation.
    pub fn is_capped(&self, index: usize) -> bool {
        self.nodes[index].depth >= self.config.max_igas
    }

    /// JSON array of `{bounds, depth, count, class_fractions}`.
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<_> = self
            .nodes
            .iter()
            .map(|n| ObservationRecord {
                bounds: n.observation.bounds_f64(),
                depth: n.depth,
                count: n.count(),
                class_fractions: n.class_fractions(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }
}

/// Breadth-first enumeration of every non-empty observation reachable with at
/// most `M` consecutive IGAs.
///
/// Nodes are keyed by `(bounds, depth)`. For prime `p + 1` the depth is a
/// function of the bounds, so this is the same as keying by bounds; for other
/// `p` the key keeps the depth cap well defined.
pub fn enumerate_observations(config: &IbmdpConfig, dataset: &Dataset) -> Result<ObservationSet> {
    config.validate()?;
    config.check_dataset(dataset)?;
    let actions = config.actions();
    let root = Observation::root(config.feature_count);
    let members: Vec<u32> = (0..dataset.len() as u32).collect();
    let mut set = ObservationSet {
        config: *config,
        nodes: Vec::new(),
        index: HashMap::new(),
    };
    set.index.insert((root.clone(), 0), 0);
    set.nodes.push(ObservationNode {
        class_counts: dataset.class_counts_of(&members),
        observation: root,
        depth: 0,
        members,
        outcomes: Vec::new(),
    });

    let mut cursor = 0;
    while cursor < set.nodes.len() {
        if set.nodes[cursor].depth < config.max_igas {
            let mut outcomes = Vec::with_capacity(actions.iga_count());
            for a in actions.class_count..actions.len() {
                let action = actions.action(a);
                let parent = &set.nodes[cursor];
                let threshold_exact = split_threshold(&parent.observation, action, config.p)?;
                let threshold = ratio_to_f64(&threshold_exact);
                let Action::Iga { feature, .. } = action else {
                    unreachable!("IGA indices follow base actions")
                };
                let (low_members, high_members): (Vec<u32>, Vec<u32>) = parent
                    .members
                    .iter()
                    .partition(|&&i| dataset.row(i as usize)[feature] <= threshold);
                let depth = parent.depth + 1;
                let low_obs = apply_iga(&parent.observation, action, config.p, true)?;
                let high_obs = apply_iga(&parent.observation, action, config.p, false)?;
                let low_count = low_members.len();
                let high_count = high_members.len();
                let low = set.intern(dataset, low_obs, depth, low_members);
                let high = set.intern(dataset, high_obs, depth, high_members);
                outcomes.push(IgaOutcome {
                    threshold,
                    low,
                    high,
                    low_count,
                    high_count,
                });
            }
            set.nodes[cursor].outcomes = outcomes;
        }
        cursor += 1;
    }
    Ok(set)
}

impl ObservationSet {
    fn intern(&mut self, dataset: &Dataset, observation: Observation, depth: u32, members: Vec<u32>) -> Option<usize> {
        if members.is_empty() {
            return None;
        }
        let key = (observation, depth);
        if let Some(&i) = self.index.get(&key) {
            debug_assert_eq!(self.nodes[i].members, members);
            return Some(i);
        }
        let i = self.nodes.len();
        self.nodes.push(ObservationNode {
            observation: key.0.clone(),
            depth,
            class_counts: dataset.class_counts_of(&members),
            members,
            outcomes: Vec::new(),
        });
        self.index.insert(key, i);
        Some(i)
    }
}

/// Builds the decision tree a deterministic policy describes, starting at the
/// root observation.
///
/// A branch with no data has no observation in Ω; it becomes a leaf
/// predicting its parent's majority class.
pub fn extract_tree(policy: &DeterministicPolicy, omega: &ObservationSet) -> Result<DecisionTree> {
    if policy.len() != omega.len() {
        return Err(Error::DimensionMismatch {
            expected: omega.len(),
            got: policy.len(),
        });
    }
    let actions = omega.config().actions();
    extract_from(policy, omega, &actions, ObservationSet::ROOT)
}

fn extract_from(
    policy: &DeterministicPolicy,
    omega: &ObservationSet,
    actions: &ActionSpace,
    index: usize,
) -> Result<DecisionTree> {
    let node = omega.node(index);
    let action = actions.action(policy.action_index(index));
    match action {
        Action::Base(c) => Ok(DecisionTree::leaf(c)),
        Action::Iga { feature, .. } => {
            if omega.is_capped(index) {
                return Err(Error::Internal(format!(
                    "policy selects {action} at depth {} = M",
                    node.depth
                )));
            }
            let outcome = &node.outcomes[actions.index(action)? - actions.class_count];
            let fallback = node.majority_class();
            let child = |c: Option<usize>| match c {
                Some(i) => extract_from(policy, omega, actions, i),
                None => Ok(DecisionTree::leaf(fallback)),
            };
            Ok(DecisionTree::split(
                feature,
                outcome.threshold,
                child(outcome.low)?,
                child(outcome.high)?,
            ))
        }
    }
}
