//! Reactive policies over the observation set: softmax over tabular logits,
//! explicit probability tables and deterministic action choices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `|Ω| × |A'|` action probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProbabilities {
    action_count: usize,
    values: Vec<f64>,
}

impl ActionProbabilities {
    pub fn new(action_count: usize, values: Vec<f64>) -> Result<Self> {
        if action_count == 0 || !values.len().is_multiple_of(action_count) {
            return Err(Error::InvalidPolicy(format!(
                "{} probabilities do not form rows of {action_count}",
                values.len()
            )));
        }
        Ok(ActionProbabilities { action_count, values })
    }

    pub fn observation_count(&self) -> usize {
        self.values.len() / self.action_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.values[o * self.action_count..(o + 1) * self.action_count]
    }

    pub fn get(&self, o: usize, a: usize) -> f64 {
        self.values[o * self.action_count + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Softmax policy `π(a|o) ∝ exp(θ(o, a))` over the legal actions of each
/// observation; masked actions get probability exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    action_count: usize,
    logits: Vec<f64>,
    legal: Vec<bool>,
}

impl TabularPolicy {
    /// All-zero logits, i.e. uniform over legal actions.
    pub fn uniform(action_count: usize, legal: Vec<bool>) -> Self {
        TabularPolicy {
            action_count,
            logits: vec![0.0; legal.len()],
            legal,
        }
    }

    pub fn from_logits(action_count: usize, logits: Vec<f64>, legal: Vec<bool>) -> Result<Self> {
        if logits.len() != legal.len() || !logits.len().is_multiple_of(action_count) {
            return Err(Error::InvalidPolicy("logit and mask shapes differ".into()));
        }
        for (o, row) in legal.chunks(action_count).enumerate() {
            if !row.iter().any(|&l| l) {
                return Err(Error::InvalidPolicy(format!("observation {o} has no legal action")));
            }
        }
        Ok(TabularPolicy {
            action_count,
            logits,
            legal,
        })
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn observation_count(&self) -> usize {
        self.logits.len() / self.action_count
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn legal(&self) -> &[bool] {
        &self.legal
    }

    pub fn is_legal(&self, o: usize, a: usize) -> bool {
        self.legal[o * self.action_count + a]
    }

    /// Adds `step * direction(o, a)` to every legal logit and returns the
    /// largest absolute change.
    pub fn ascend(&mut self, direction: &[f64], step: f64) -> f64 {
        let mut sup: f64 = 0.0;
        for ((theta, &d), &legal) in self.logits.iter_mut().zip(direction).zip(&self.legal) {
            if legal {
                let delta = step * d;
                *theta += delta;
                sup = sup.max(delta.abs());
            }
        }
        sup
    }

    pub fn probabilities(&self) -> ActionProbabilities {
        let mut values = vec![0.0; self.logits.len()];
        for ((out, theta), legal) in values
            .chunks_mut(self.action_count)
            .zip(self.logits.chunks(self.action_count))
            .zip(self.legal.chunks(self.action_count))
        {
            let max = theta
                .iter()
                .zip(legal)
                .filter(|(_, &l)| l)
                .map(|(&t, _)| t)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for ((o, &t), &l) in out.iter_mut().zip(theta).zip(legal) {
                if l {
                    *o = (t - max).exp();
                    total += *o;
                }
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        ActionProbabilities {
            action_count: self.action_count,
            values,
        }
    }
}

/// One action index per observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        DeterministicPolicy { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action_index(&self, o: usize) -> usize {
        self.actions[o]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn to_probabilities(&self, action_count: usize) -> ActionProbabilities {
        let mut values = vec![0.0; self.actions.len() * action_count];
        for (o, &a) in self.actions.iter().enumerate() {
            values[o * action_count + a] = 1.0;
        }
        ActionProbabilities { action_count, values }
    }
}

/// First index attaining the maximum over allowed entries, treating values
/// within `tie_tolerance` of the maximum as ties.
pub(crate) fn argmax_first(values: &[f64], allowed: &[bool], tie_tolerance: f64) -> usize {
    let max = values
        .iter()
        .zip(allowed)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .zip(allowed)
        .position(|(&v, &a)| a && v >= max - tie_tolerance)
        .expect("at least one allowed entry")
}
