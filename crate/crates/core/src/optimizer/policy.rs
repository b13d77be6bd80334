//! Linear softmax policy over observation features.
//!
//! The logit of a choice is the sum, over the observation's features, of a
//! weight keyed by `(feature, choice label)`. Keying by label rather than by
//! option position lets weights transfer between questions that list the
//! same labels in different orders.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Observation;

type Table = BTreeMap<String, BTreeMap<String, f64>>;

/// Policy weights. Missing entries read as 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub logits: Table,
}

/// Gradient of a scalar with respect to policy weights. Only touched keys
/// are present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gradient(pub Table);

impl Gradient {
    pub fn add(&mut self, feature: &str, label: &str, value: f64) {
        *self
            .0
            .entry(feature.to_string())
            .or_default()
            .entry(label.to_string())
            .or_default() += value;
    }

    pub fn get(&self, feature: &str, label: &str) -> f64 {
        self.0
            .get(feature)
            .and_then(|m| m.get(label))
            .copied()
            .unwrap_or(0.0)
    }

    /// All entries as `(feature, label, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.0
            .iter()
            .flat_map(|(f, m)| m.iter().map(move |(l, &v)| (f.as_str(), l.as_str(), v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().map(|(_, _, v)| v.abs()).fold(0.0, f64::max)
    }
}

impl PolicyParams {
    pub fn get(&self, feature: &str, label: &str) -> f64 {
        self.logits
            .get(feature)
            .and_then(|m| m.get(label))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, feature: &str, label: &str, value: f64) {
        self.logits
            .entry(feature.to_string())
            .or_default()
            .insert(label.to_string(), value);
    }

    /// Logit of each choice under `obs`.
    pub fn logits_for(&self, obs: &Observation, choices: &[String]) -> Vec<f64> {
        choices
            .iter()
            .map(|c| obs.features().iter().map(|f| self.get(f, c)).sum())
            .collect()
    }

    /// Gradient ascent step: `self += lr * grad`.
    pub fn apply(&mut self, grad: &Gradient, lr: f64) {
        if lr == 0.0 {
            return;
        }
        for (f, l, v) in grad.entries() {
            let w = self.get(f, l) + lr * v;
            self.set(f, l, w);
        }
    }

    /// Rejects non-finite weights.
    pub fn validate(&self) -> Result<()> {
        for (f, m) in &self.logits {
            for (l, v) in m {
                if !v.is_finite() {
                    return Err(Error::config(
                        format!("logits.{f}.{l}"),
                        format!("non-finite weight {v}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Choice probabilities. `choices` is the full contiguous choice list, null
/// option last.
pub fn softmax_prob(params: &PolicyParams, obs: &Observation, choices: &[String]) -> Vec<f64> {
    softmax(&params.logits_for(obs, choices))
}

/// Index of the most likely choice, ties broken by lowest index.
pub fn greedy(params: &PolicyParams, obs: &Observation, choices: &[String]) -> usize {
    let logits = params.logits_for(obs, choices);
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from a probability vector by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `KL(p || q)` for two distributions over the same support.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}
