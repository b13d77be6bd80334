//! Clipped surrogate objective over one or two rollout branches per prompt,
//! with a KL penalty toward a frozen reference policy, and its analytic
//! gradient.

use crate::optimizer::policy::{kl_divergence, softmax_prob, Gradient, PolicyParams};
use crate::world::Observation;

/// One scored rollout: the chosen choice index, the log-probability it had
/// under the behaviour policy, and its advantage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRollout {
    pub choice: usize,
    pub behavior_logprob: f64,
    pub advantage: f64,
}

/// A rollout group sharing one observation and choice list.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBatch {
    pub observation: Observation,
    /// Full choice list, null option last.
    pub choices: Vec<String>,
    pub rollouts: Vec<ScoredRollout>,
}

/// Every gradient-bearing branch of one prompt. GRPO-style algorithms have
/// one, CRPO has two.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptBatch {
    pub branches: Vec<BranchBatch>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub clip_epsilon: f64,
    pub kl_beta: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            clip_epsilon: 0.2,
            kl_beta: 0.01,
        }
    }
}

/// `min(rho * a, clip(rho, 1 - eps, 1 + eps) * a)`.
pub fn clipped_term(rho: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
    (rho * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_term`] with respect to `rho`: `advantage` where
/// the unclipped branch is selected, 0 where the clip binds.
pub fn clipped_term_slope(rho: f64, advantage: f64, eps: f64) -> f64 {
    let active = if advantage >= 0.0 {
        rho <= 1.0 + eps
    } else {
        rho >= 1.0 - eps
    };
    if active {
        advantage
    } else {
        0.0
    }
}

fn branch_value(
    params: &PolicyParams,
    reference: &PolicyParams,
    b: &BranchBatch,
    cfg: &ObjectiveConfig,
) -> f64 {
    let probs = softmax_prob(params, &b.observation, &b.choices);
    let g = b.rollouts.len() as f64;
    let surrogate: f64 = b
        .rollouts
        .iter()
        .map(|r| {
            let rho = (probs[r.choice].ln() - r.behavior_logprob).exp();
            clipped_term(rho, r.advantage, cfg.clip_epsilon)
        })
        .sum::<f64>()
        / g;
    let kl = if cfg.kl_beta == 0.0 {
        0.0
    } else {
        let ref_probs = softmax_prob(reference, &b.observation, &b.choices);
        kl_divergence(&probs, &ref_probs)
    };
    surrogate - cfg.kl_beta * kl
}

/// Mean over prompts of the summed per-branch clipped means, minus the KL
/// penalty of each branch's observation.
pub fn crpo_objective(
    params: &PolicyParams,
    reference: &PolicyParams,
    batch: &[PromptBatch],
    cfg: &ObjectiveConfig,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .flat_map(|p| &p.branches)
        .map(|b| branch_value(params, reference, b, cfg))
        .sum();
    total / batch.len() as f64
}

/// Analytic gradient of [`crpo_objective`] with respect to every weight the
/// batch touches.
pub fn policy_gradient(
    params: &PolicyParams,
    reference: &PolicyParams,
    batch: &[PromptBatch],
    cfg: &ObjectiveConfig,
) -> Gradient {
    let mut grad = Gradient::default();
    if batch.is_empty() {
        return grad;
    }
    let n_prompts = batch.len() as f64;
    for b in batch.iter().flat_map(|p| &p.branches) {
        let probs = softmax_prob(params, &b.observation, &b.choices);
        let g = b.rollouts.len() as f64;
        // d objective / d logit_a for this branch
        let mut coef = vec![0.0; probs.len()];
        for r in &b.rollouts {
            let rho = (probs[r.choice].ln() - r.behavior_logprob).exp();
            let w = rho * clipped_term_slope(rho, r.advantage, cfg.clip_epsilon) / g;
            if w == 0.0 {
                continue;
            }
            for (a, c) in coef.iter_mut().enumerate() {
                let hit = if a == r.choice { 1.0 } else { 0.0 };
                *c += w * (hit - probs[a]);
            }
        }
        if cfg.kl_beta != 0.0 {
            let ref_probs = softmax_prob(reference, &b.observation, &b.choices);
            let kl = kl_divergence(&probs, &ref_probs);
            for (a, c) in coef.iter_mut().enumerate() {
                let p = probs[a];
                if p > 0.0 {
                    *c -= cfg.kl_beta * p * (p.ln() - ref_probs[a].ln() - kl);
                }
            }
        }
        for f in b.observation.features() {
            for (label, c) in b.choices.iter().zip(&coef) {
                grad.add(f, label, c / n_prompts);
            }
        }
    }
    grad
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`. The denominator is floored at 1e-4 so
/// entries near zero are compared absolutely.
pub fn finite_difference_error(
    params: &PolicyParams,
    reference: &PolicyParams,
    batch: &[PromptBatch],
    cfg: &ObjectiveConfig,
    h: f64,
) -> f64 {
    let grad = policy_gradient(params, reference, batch, cfg);
    let mut worst: f64 = 0.0;
    for (f, l, analytic) in grad.entries() {
        let mut plus = params.clone();
        plus.set(f, l, params.get(f, l) + h);
        let mut minus = params.clone();
        minus.set(f, l, params.get(f, l) - h);
        let numeric = (crpo_objective(&plus, reference, batch, cfg)
            - crpo_objective(&minus, reference, batch, cfg))
            / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(err);
    }
    worst
}
