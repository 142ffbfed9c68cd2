//! Binary decision trees with axis-aligned `x_k <= t` tests: evaluation,
//! greedy top-down induction, embedding into the IBMDP as a deterministic
//! policy, closed-form IBMDP return, and DOT / JSON / ASCII export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ibmdp::{apply_iga, majority, ratio_to_f64, split_threshold, Action, Observation, ObservationSet};
use crate::policy::DeterministicPolicy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        low: usize,
        high: usize,
    },
    Leaf {
        class: usize,
    },
}

/// Arena-backed tree; the point descends to `low` iff `x[feature] <= threshold`.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: usize,
}

impl PartialEq for DecisionTree {
    fn eq(&self, other: &Self) -> bool {
        fn same(a: &DecisionTree, i: usize, b: &DecisionTree, j: usize) -> bool {
            match (a.nodes[i], b.nodes[j]) {
                (Node::Leaf { class: x }, Node::Leaf { class: y }) => x == y,
                (
                    Node::Split {
                        feature: f1,
                        threshold: t1,
                        low: l1,
                        high: h1,
                    },
                    Node::Split {
                        feature: f2,
                        threshold: t2,
                        low: l2,
                        high: h2,
                    },
                ) => f1 == f2 && t1 == t2 && same(a, l1, b, l2) && same(a, h1, b, h2),
                _ => false,
            }
        }
        same(self, self.root, other, other.root)
    }
}

impl DecisionTree {
    pub fn leaf(class: usize) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { class }],
            root: 0,
        }
    }

    pub fn split(feature: usize, threshold: f64, low: DecisionTree, high: DecisionTree) -> Self {
        let mut nodes = Vec::with_capacity(low.nodes.len() + high.nodes.len() + 1);
        let shift = |node: Node, by: usize| match node {
            Node::Split {
                feature,
                threshold,
                low,
                high,
            } => Node::Split {
                feature,
                threshold,
                low: low + by,
                high: high + by,
            },
            leaf => leaf,
        };
        let offset = low.nodes.len();
        nodes.extend(low.nodes.iter().map(|&n| shift(n, 0)));
        nodes.extend(high.nodes.iter().map(|&n| shift(n, offset)));
        nodes.push(Node::Split {
            feature,
            threshold,
            low: low.root,
            high: high.root + offset,
        });
        DecisionTree {
            root: nodes.len() - 1,
            nodes,
        }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, i: usize) -> Node {
        self.nodes[i]
    }

    pub fn node_count(&self) -> usize {
        self.count_from(self.root)
    }

    fn count_from(&self, i: usize) -> usize {
        match self.nodes[i] {
            Node::Leaf { .. } => 1,
            Node::Split { low, high, .. } => 1 + self.count_from(low) + self.count_from(high),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.node_count().div_ceil(2)
    }

    /// Number of tests on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth_from(self.root)
    }

    fn depth_from(&self, i: usize) -> usize {
        match self.nodes[i] {
            Node::Leaf { .. } => 0,
            Node::Split { low, high, .. } => 1 + self.depth_from(low).max(self.depth_from(high)),
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Features tested anywhere in the tree, ascending, without repeats.
    pub fn features_used(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    pub fn classify(&self, point: &[f64]) -> Result<usize> {
        if let Some(f) = self.max_feature() {
            if f >= point.len() {
                return Err(Error::DimensionMismatch {
                    expected: f + 1,
                    got: point.len(),
                });
            }
        }
        Ok(self.classify_unchecked(point))
    }

    fn classify_unchecked(&self, point: &[f64]) -> usize {
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    low,
                    high,
                } => i = if point[feature] <= threshold { low } else { high },
            }
        }
    }

    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        if let Some(f) = self.max_feature() {
            if f >= dataset.feature_count() {
                return Err(Error::DimensionMismatch {
                    expected: f + 1,
                    got: dataset.feature_count(),
                });
            }
        }
        let correct = dataset
            .rows()
            .zip(dataset.labels())
            .filter(|(row, &label)| self.classify_unchecked(row) == label)
            .count();
        Ok(correct as f64 / dataset.len() as f64)
    }

    /// Leaves with their depth and the dataset points routed to them.
    pub fn leaf_partition(&self, dataset: &Dataset) -> Vec<LeafMass> {
        let mut out = Vec::new();
        let all: Vec<u32> = (0..dataset.len() as u32).collect();
        self.partition_from(self.root, 0, all, dataset, &mut out);
        out
    }

    fn partition_from(&self, i: usize, depth: usize, members: Vec<u32>, dataset: &Dataset, out: &mut Vec<LeafMass>) {
        match self.nodes[i] {
            Node::Leaf { class } => out.push(LeafMass {
                class,
                depth,
                class_counts: dataset.class_counts_of(&members),
            }),
            Node::Split {
                feature,
                threshold,
                low,
                high,
            } => {
                let (lo, hi): (Vec<u32>, Vec<u32>) = members
                    .into_iter()
                    .partition(|&m| dataset.row(m as usize)[feature] <= threshold);
                self.partition_from(low, depth + 1, lo, dataset, out);
                self.partition_from(high, depth + 1, hi, dataset, out);
            }
        }
    }

    /// Renewal decomposition of the tree's IBMDP return.
    pub fn cycle_stats(&self, dataset: &Dataset, gamma: f64) -> CycleStats {
        let n = dataset.len() as f64;
        self.leaf_partition(dataset)
            .iter()
            .fold(CycleStats::default(), |acc, leaf| {
                acc + CycleStats::leaf(leaf.total() as f64 / n, leaf.reward(), leaf.depth as u32, gamma)
            })
    }

    /// Closed-form discounted IBMDP return of the tree used as a policy.
    pub fn ibmdp_return(&self, dataset: &Dataset, zeta: f64, gamma: f64) -> f64 {
        self.cycle_stats(dataset, gamma).j(zeta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafMass {
    pub class: usize,
    pub depth: usize,
    pub class_counts: Vec<usize>,
}

impl LeafMass {
    pub fn total(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn correct(&self) -> usize {
        self.class_counts[self.class]
    }

    /// Mean base reward `2 · accuracy - 1` inside the leaf (0 when empty).
    pub fn reward(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            2.0 * self.correct() as f64 / n as f64 - 1.0
        }
    }
}

/// One pass from the root to a leaf and back, averaged over the data:
/// `J(ζ) = (base + ζ · iga) / (1 - discount)`.
///
/// A leaf at depth `ℓ` reached with probability `w` contributes
/// `w (ζ (1 - γ^ℓ)/(1 - γ) + γ^ℓ r)` to the cycle reward and `w γ^(ℓ+1)` to
/// the cycle discount. None of the terms except `ζ` itself depend on `ζ`, so
/// a fixed tree's return is affine in `ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleStats {
    pub base: f64,
    pub iga: f64,
    pub discount: f64,
}

impl CycleStats {
    pub fn leaf(weight: f64, reward: f64, depth: u32, gamma: f64) -> Self {
        let g = gamma.powi(depth as i32);
        CycleStats {
            base: weight * g * reward,
            iga: weight * (1.0 - g) / (1.0 - gamma),
            discount: weight * g * gamma,
        }
    }

    pub fn j(&self, zeta: f64) -> f64 {
        (self.base + zeta * self.iga) / (1.0 - self.discount)
    }
}

impl std::ops::Add for CycleStats {
    type Output = CycleStats;

    fn add(self, rhs: CycleStats) -> CycleStats {
        CycleStats {
            base: self.base + rhs.base,
            iga: self.iga + rhs.iga,
            discount: self.discount + rhs.discount,
        }
    }
}

/// Candidate thresholds for greedy induction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// Only the thresholds an IBMDP with this `p` can reach at the node.
    IbmdpGrid { p: u32 },
    /// Midpoints between consecutive distinct feature values.
    DataValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplitCriterion {
    #[default]
    Gini,
    ErrorRate,
}

impl SplitCriterion {
    fn impurity(self, counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        match self {
            SplitCriterion::Gini => 1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>(),
            SplitCriterion::ErrorRate => 1.0 - *counts.iter().max().unwrap_or(&0) as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyOptions {
    pub max_depth: usize,
    pub mode: ThresholdMode,
    pub criterion: SplitCriterion,
}

/// Top-down greedy induction minimizing weighted impurity.
///
/// Ties go to the lowest feature, then the lowest threshold. A node becomes a
/// majority leaf at `max_depth`, when pure, or when no candidate split lowers
/// the impurity.
pub fn greedy_baseline(dataset: &Dataset, options: &GreedyOptions) -> Result<DecisionTree> {
    if let ThresholdMode::IbmdpGrid { p: 0 } = options.mode {
        return Err(Error::InvalidConfig("grid mode needs p >= 1".into()));
    }
    let members: Vec<u32> = (0..dataset.len() as u32).collect();
    Ok(grow(
        dataset,
        options,
        members,
        Observation::root(dataset.feature_count()),
        options.max_depth,
    ))
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
    low_bounds: Option<Observation>,
    high_bounds: Option<Observation>,
}

fn grow(
    dataset: &Dataset,
    options: &GreedyOptions,
    members: Vec<u32>,
    bounds: Observation,
    depth_left: usize,
) -> DecisionTree {
    let counts = dataset.class_counts_of(&members);
    let leaf = DecisionTree::leaf(majority(&counts));
    let parent = options.criterion.impurity(&counts);
    if depth_left == 0 || parent == 0.0 {
        return leaf;
    }
    let n = members.len() as f64;
    let mut best: Option<Candidate> = None;
    let mut consider = |cand: Candidate| {
        if best.as_ref().is_none_or(|b| cand.score < b.score - 1e-12) {
            best = Some(cand);
        }
    };
    for feature in 0..dataset.feature_count() {
        match options.mode {
            ThresholdMode::DataValues => {
                let mut sorted: Vec<(f64, usize)> = members
                    .iter()
                    .map(|&m| (dataset.row(m as usize)[feature], dataset.label(m as usize)))
                    .collect();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut low = vec![0usize; dataset.class_count()];
                let mut high = counts.clone();
                for i in 0..sorted.len() - 1 {
                    low[sorted[i].1] += 1;
                    high[sorted[i].1] -= 1;
                    if sorted[i].0 == sorted[i + 1].0 {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let score =
                        (nl * options.criterion.impurity(&low) + (n - nl) * options.criterion.impurity(&high)) / n;
                    consider(Candidate {
                        score,
                        feature,
                        threshold: (sorted[i].0 + sorted[i + 1].0) / 2.0,
                        low_bounds: None,
                        high_bounds: None,
                    });
                }
            }
            ThresholdMode::IbmdpGrid { p } => {
                for h in 1..=p {
                    let action = Action::Iga {
                        feature,
                        fraction_index: h,
                    };
                    let threshold = ratio_to_f64(&split_threshold(&bounds, action, p).expect("valid IGA"));
                    let low_members: Vec<u32> = members
                        .iter()
                        .copied()
                        .filter(|&m| dataset.row(m as usize)[feature] <= threshold)
                        .collect();
                    let nl = low_members.len();
                    if nl == 0 || nl == members.len() {
                        continue;
                    }
                    let low = dataset.class_counts_of(&low_members);
                    let high: Vec<usize> = counts.iter().zip(&low).map(|(c, l)| c - l).collect();
                    let score = (nl as f64 * options.criterion.impurity(&low)
                        + (n - nl as f64) * options.criterion.impurity(&high))
                        / n;
                    consider(Candidate {
                        score,
                        feature,
                        threshold,
                        low_bounds: Some(apply_iga(&bounds, action, p, true).expect("valid IGA")),
                        high_bounds: Some(apply_iga(&bounds, action, p, false).expect("valid IGA")),
                    });
                }
            }
        }
    }
    let Some(best) = best else { return leaf };
    if best.score >= parent - 1e-12 {
        return leaf;
    }
    let (lo, hi): (Vec<u32>, Vec<u32>) = members
        .into_iter()
        .partition(|&m| dataset.row(m as usize)[best.feature] <= best.threshold);
    let low_bounds = best.low_bounds.unwrap_or_else(|| bounds.clone());
    let high_bounds = best.high_bounds.unwrap_or(bounds);
    DecisionTree::split(
        best.feature,
        best.threshold,
        grow(dataset, options, lo, low_bounds, depth_left - 1),
        grow(dataset, options, hi, high_bounds, depth_left - 1),
    )
}

/// Deterministic observation policy that plays `tree`.
///
/// Observations on the tree's paths take the tree's test or class; every
/// other observation takes the majority class of its data (unreachable under
/// the tree's own dynamics, so the return is unaffected).
pub fn tree_policy(tree: &DecisionTree, omega: &ObservationSet) -> Result<DeterministicPolicy> {
    let actions = omega.config().actions();
    let mut chosen: Vec<Option<usize>> = vec![None; omega.len()];
    embed(tree, tree.root(), omega, ObservationSet::ROOT, &mut chosen)?;
    let _ = actions;
    Ok(DeterministicPolicy::new(
        chosen
            .into_iter()
            .enumerate()
            .map(|(o, a)| a.unwrap_or_else(|| omega.node(o).majority_class()))
            .collect(),
    ))
}

fn embed(tree: &DecisionTree, i: usize, omega: &ObservationSet, o: usize, chosen: &mut [Option<usize>]) -> Result<()> {
    let config = omega.config();
    let actions = config.actions();
    let node = omega.node(o);
    match tree.node(i) {
        Node::Leaf { class } => {
            chosen[o] = Some(actions.index(Action::Base(class))?);
            Ok(())
        }
        Node::Split {
            feature,
            threshold,
            low,
            high,
        } => {
            if omega.is_capped(o) {
                return Err(Error::NotEmbeddable(format!(
                    "tree is deeper than M = {}",
                    config.max_igas
                )));
            }
            if feature >= config.feature_count {
                return Err(Error::NotEmbeddable(format!("feature {feature} out of range")));
            }
            let p = config.p as usize;
            let h = (0..p)
                .find(|&h| node.outcomes[feature * p + h].threshold == threshold)
                .ok_or_else(|| {
                    Error::NotEmbeddable(format!(
                        "threshold {threshold} on feature {feature} is not reachable from {}",
                        node.observation
                    ))
                })?;
            let outcome = &node.outcomes[feature * p + h];
            chosen[o] = Some(actions.class_count + feature * p + h);
            if let Some(child) = outcome.low {
                embed(tree, low, omega, child, chosen)?;
            }
            if let Some(child) = outcome.high {
                embed(tree, high, omega, child, chosen)?;
            }
            Ok(())
        }
    }
}

/// Optional display names for export.
#[derive(Debug, Clone, Default)]
pub struct TreeNames {
    pub features: Option<Vec<String>>,
    pub classes: Option<Vec<String>>,
}

impl TreeNames {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        TreeNames {
            features: dataset.feature_names().map(<[String]>::to_vec),
            classes: dataset.class_names().map(<[String]>::to_vec),
        }
    }

    fn feature(&self, k: usize) -> String {
        self.features
            .as_ref()
            .and_then(|f| f.get(k).cloned())
            .unwrap_or_else(|| format!("x_{k}"))
    }

    fn class(&self, c: usize) -> String {
        self.classes
            .as_ref()
            .and_then(|f| f.get(c).cloned())
            .unwrap_or_else(|| format!("C{c}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
    Ascii,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonNode {
    Split {
        feature: usize,
        threshold: f64,
        low: Box<JsonNode>,
        high: Box<JsonNode>,
    },
    Leaf {
        class: usize,
    },
}

impl DecisionTree {
    pub fn export(&self, format: ExportFormat, names: &TreeNames) -> Result<String> {
        match format {
            ExportFormat::Dot => Ok(self.to_dot(names)),
            ExportFormat::Json => self.to_json(),
            ExportFormat::Ascii => Ok(self.to_ascii(names)),
        }
    }

    fn to_json_node(&self, i: usize) -> JsonNode {
        match self.nodes[i] {
            Node::Leaf { class } => JsonNode::Leaf { class },
            Node::Split {
                feature,
                threshold,
                low,
                high,
            } => JsonNode::Split {
                feature,
                threshold,
                low: Box::new(self.to_json_node(low)),
                high: Box::new(self.to_json_node(high)),
            },
        }
    }

    /// Nested `{feature, threshold, low, high}` / `{class}` objects.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_node(self.root))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        fn build(node: JsonNode) -> DecisionTree {
            match node {
                JsonNode::Leaf { class } => DecisionTree::leaf(class),
                JsonNode::Split {
                    feature,
                    threshold,
                    low,
                    high,
                } => DecisionTree::split(feature, threshold, build(*low), build(*high)),
            }
        }
        Ok(build(serde_json::from_str(text)?))
    }

    pub fn to_dot(&self, names: &TreeNames) -> String {
        let mut out = String::from("digraph tree {\n    node [shape=box];\n");
        let mut next = 0usize;
        self.dot_node(self.root, names, &mut next, &mut out);
        out.push_str("}\n");
        out
    }

    fn dot_node(&self, i: usize, names: &TreeNames, next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        match self.nodes[i] {
            Node::Leaf { class } => {
                let _ = writeln!(
                    out,
                    "    n{id} [label=\"{}\", shape=ellipse];",
                    escape(&names.class(class))
                );
            }
            Node::Split {
                feature,
                threshold,
                low,
                high,
            } => {
                let _ = writeln!(
                    out,
                    "    n{id} [label=\"{} ≤ {}\"];",
                    escape(&names.feature(feature)),
                    fmt_threshold(threshold)
                );
                let l = self.dot_node(low, names, next, out);
                let h = self.dot_node(high, names, next, out);
                let _ = writeln!(out, "    n{id} -> n{l} [label=\"true\"];");
                let _ = writeln!(out, "    n{id} -> n{h} [label=\"false\"];");
            }
        }
        id
    }

    pub fn to_ascii(&self, names: &TreeNames) -> String {
        let mut out = String::new();
        self.ascii_node(self.root, names, 0, &mut out);
        out
    }

    fn ascii_node(&self, i: usize, names: &TreeNames, indent: usize, out: &mut String) {
        let pad = "    ".repeat(indent);
        match self.nodes[i] {
            Node::Leaf { class } => {
                let _ = writeln!(out, "{pad}predict {}", names.class(class));
            }
            Node::Split {
                feature,
                threshold,
                low,
                high,
            } => {
                let _ = writeln!(
                    out,
                    "{pad}if {} <= {}:",
                    names.feature(feature),
                    fmt_threshold(threshold)
                );
                self.ascii_node(low, names, indent + 1, out);
                let _ = writeln!(out, "{pad}else:");
                self.ascii_node(high, names, indent + 1, out);
            }
        }
    }
}

fn fmt_threshold(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{toy_generating_tree, toy_task, TOY_TASK_COUNT};
    use crate::ibmdp::{enumerate_observations, extract_tree, IbmdpConfig};

    fn stump() -> DecisionTree {
        DecisionTree::split(0, 0.5, DecisionTree::leaf(0), DecisionTree::leaf(1))
    }

    #[test]
    fn classification_rules() {
        assert_eq!(DecisionTree::leaf(2).classify(&[0.3]).unwrap(), 2);
        assert_eq!(stump().classify(&[0.5]).unwrap(), 0);
        assert_eq!(stump().classify(&[0.51]).unwrap(), 1);
        assert!(matches!(
            DecisionTree::split(3, 0.5, DecisionTree::leaf(0), DecisionTree::leaf(1)).classify(&[0.1]),
            Err(Error::DimensionMismatch { .. })
        ));
        let data = toy_task(0).unwrap();
        assert_eq!(toy_generating_tree(0).unwrap().accuracy(&data).unwrap(), 1.0);
        assert_eq!(DecisionTree::leaf(0).accuracy(&data).unwrap(), 0.5);
    }

    #[test]
    fn shape_metrics() {
        let t = toy_generating_tree(0).unwrap();
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.depth(), 2);
        assert_eq!(DecisionTree::leaf(1).depth(), 0);
    }

    #[test]
    fn exports() {
        let names = TreeNames::default();
        let dot = DecisionTree::leaf(0).to_dot(&names);
        assert_eq!(dot.matches("[label=").count(), 1);
        let dot = stump().to_dot(&names);
        assert_eq!(dot.matches(" -> ").count(), 2);
        assert_eq!(dot.matches("shape=ellipse").count(), 2);
        assert!(dot.contains("x_0 ≤ 0.5"));
        assert!(dot.contains("label=\"true\"") && dot.contains("label=\"false\""));
        let ascii = stump().to_ascii(&names);
        assert_eq!(ascii, "if x_0 <= 0.5:\n    predict C0\nelse:\n    predict C1\n");
        let json = toy_generating_tree(4).unwrap().to_json().unwrap();
        assert_eq!(DecisionTree::from_json(&json).unwrap(), toy_generating_tree(4).unwrap());
        let v: serde_json::Value = serde_json::from_str(&stump().to_json().unwrap()).unwrap();
        assert_eq!(v["low"]["class"], 0);
        assert_eq!(v["threshold"], 0.5);
    }

    #[test]
    fn greedy_depth_zero_is_majority() {
        let data = Dataset::new(vec![vec![0.1], vec![0.2], vec![0.9]], vec![1, 1, 0]).unwrap();
        let t = greedy_baseline(
            &data,
            &GreedyOptions {
                max_depth: 0,
                mode: ThresholdMode::DataValues,
                criterion: SplitCriterion::Gini,
            },
        )
        .unwrap();
        assert_eq!(t, DecisionTree::leaf(1));
        let t = greedy_baseline(
            &data,
            &GreedyOptions {
                max_depth: 3,
                mode: ThresholdMode::DataValues,
                criterion: SplitCriterion::Gini,
            },
        )
        .unwrap();
        assert_eq!(
            t,
            DecisionTree::split(0, 0.55, DecisionTree::leaf(1), DecisionTree::leaf(0))
        );
    }

    #[test]
    fn greedy_grid_uses_reachable_thresholds() {
        let data = toy_task(2).unwrap();
        let t = greedy_baseline(
            &data,
            &GreedyOptions {
                max_depth: 2,
                mode: ThresholdMode::IbmdpGrid { p: 1 },
                criterion: SplitCriterion::Gini,
            },
        )
        .unwrap();
        let config = IbmdpConfig::new(&data, 0.5, 0.99, 1, 2).unwrap();
        let omega = enumerate_observations(&config, &data).unwrap();
        assert!(tree_policy(&t, &omega).is_ok());
    }

    #[test]
    fn embedding_round_trips() {
        for i in 0..TOY_TASK_COUNT {
            let data = toy_task(i).unwrap();
            let config = IbmdpConfig::new(&data, 0.5, 0.99, 1, 2).unwrap();
            let omega = enumerate_observations(&config, &data).unwrap();
            let tree = toy_generating_tree(i).unwrap();
            let policy = tree_policy(&tree, &omega).unwrap();
            assert_eq!(extract_tree(&policy, &omega).unwrap(), tree);
        }
    }

    #[test]
    fn embedding_rejects_off_grid_and_too_deep() {
        let data = toy_task(0).unwrap();
        let config = IbmdpConfig::new(&data, 0.5, 0.99, 1, 1).unwrap();
        let omega = enumerate_observations(&config, &data).unwrap();
        let off = DecisionTree::split(0, 0.3, DecisionTree::leaf(0), DecisionTree::leaf(1));
        assert!(matches!(tree_policy(&off, &omega), Err(Error::NotEmbeddable(_))));
        let deep = toy_generating_tree(0).unwrap();
        assert!(matches!(tree_policy(&deep, &omega), Err(Error::NotEmbeddable(_))));
    }

    #[test]
    fn accuracy_matches_leaf_accounting() {
        let data = toy_task(5).unwrap();
        let t = DecisionTree::split(1, 0.5, DecisionTree::leaf(0), stump());
        let correct: usize = t.leaf_partition(&data).iter().map(LeafMass::correct).sum();
        assert_eq!(correct as f64 / 16.0, t.accuracy(&data).unwrap());
    }
}
