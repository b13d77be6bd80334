//! Numerical self-checks run by `crpo verify` and by the test suite.
//!
//! Each check returns a [`CheckOutcome`] instead of panicking so callers can
//! print a table and decide on an exit status.

use rand::Rng;

use crate::optimizer::advantage::{
    hybrid_cancellation_delta, normalize_hybrid_with, verify_cancellation_with, StdEstimator,
};
use crate::optimizer::objective::{
    finite_difference_error, BranchBatch, ObjectiveConfig, PromptBatch, ScoredRollout,
};
use crate::optimizer::policy::{softmax_prob, PolicyParams};
use crate::rewards::{self, expected_crr, BranchAnswers};
use crate::seeds::{rng_for, LabRng, Stream};
use crate::types::{AnswerId, RewardConfig};
use crate::world::Observation;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Inputs shared by the checks. `estimator` is the standard deviation used
/// by the normalization checks; anything but the population estimator is
/// a deliberately injected fault.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCheckConfig {
    pub seed: u64,
    /// Random groups drawn by the cancellation checks.
    pub trials: usize,
    pub estimator: StdEstimator,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        SelfCheckConfig {
            seed: 0,
            trials: 10_000,
            estimator: StdEstimator::Population,
        }
    }
}

/// Cancellation tolerance under per-group normalization.
pub const CANCELLATION_TOL: f64 = 1e-9;
/// Smallest hybrid delta that counts as "did not cancel".
pub const HYBRID_MIN_DELTA: f64 = 0.01;
/// Share of hybrid instances that must exceed [`HYBRID_MIN_DELTA`].
pub const HYBRID_MIN_SHARE: f64 = 0.99;
/// Instances drawn by the hybrid check. Fixed rather than taken from
/// `trials`: roughly 0.7% of draws have a bonus too small to move anything,
/// so small samples would fail the share test by chance.
pub const HYBRID_SAMPLES: usize = 10_000;
/// Relative error allowed between the analytic and numeric gradients.
pub const GRADIENT_TOL: f64 = 1e-5;
/// Groups per Monte-Carlo point of the CRR symmetry check.
pub const CRR_GROUPS: usize = 100_000;

/// Draws a mixed binary mask of length `g` (at least one true and one
/// false entry).
fn mixed_mask(rng: &mut LabRng, g: usize) -> Vec<bool> {
    loop {
        let p: f64 = rng.gen();
        let m: Vec<bool> = (0..g).map(|_| rng.gen_bool(p)).collect();
        if m.iter().any(|&x| x) && m.iter().any(|&x| !x) {
            return m;
        }
    }
}

fn bonus(rng: &mut LabRng) -> f64 {
    // uniform on (0, 2]
    2.0 - rng.gen_range(0.0..2.0)
}

fn binary(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}

/// Adding a constant bonus to every correct rollout of a random binary
/// group leaves per-group advantages unchanged.
pub fn cancellation_check(cfg: &SelfCheckConfig) -> CheckOutcome {
    let mut rng = rng_for(cfg.seed, Stream::Verify, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.trials {
        let g = rng.gen_range(2..=16);
        let mask = mixed_mask(&mut rng, g);
        let c = bonus(&mut rng);
        let report = verify_cancellation_with(&binary(&mask), &mask, c, cfg.estimator);
        worst = worst.max(report.max_abs_delta);
    }
    CheckOutcome {
        name: "per-group cancellation",
        passed: cfg.trials > 0 && worst <= CANCELLATION_TOL,
        detail: format!(
            "max delta {worst:.3e} over {} groups (tol {CANCELLATION_TOL:e})",
            cfg.trials
        ),
    }
}

/// The same bonus under hybrid normalization moves the advantages when the
/// counterfactual branch has spread.
pub fn hybrid_non_cancellation_check(cfg: &SelfCheckConfig) -> CheckOutcome {
    let mut rng = rng_for(cfg.seed, Stream::Verify, 2);
    let reward = RewardConfig::default();
    let mut moved = 0;
    for _ in 0..HYBRID_SAMPLES {
        let g = rng.gen_range(2..=16);
        let correct = mixed_mask(&mut rng, g);
        let behave = mixed_mask(&mut rng, g);
        let k = correct.iter().filter(|&&c| c).count() as f64;
        let cf: Vec<f64> = behave
            .iter()
            .map(|&b| {
                if b {
                    reward.w_aug * (1.0 + reward.lambda_d * k / g as f64)
                } else {
                    0.0
                }
            })
            .collect();
        let c = bonus(&mut rng);
        if hybrid_cancellation_delta(&binary(&correct), &correct, &cf, c) > HYBRID_MIN_DELTA {
            moved += 1;
        }
    }
    let share = moved as f64 / HYBRID_SAMPLES as f64;
    CheckOutcome {
        name: "hybrid non-cancellation",
        passed: share >= HYBRID_MIN_SHARE,
        detail: format!(
            "{:.2}% of {HYBRID_SAMPLES} instances moved by > {HYBRID_MIN_DELTA}",
            100.0 * share
        ),
    }
}

/// The hand-computed hybrid example: orig `[1,1,0,0]`, cf `[0.5,0,0,0]`.
pub fn hybrid_example_check(cfg: &SelfCheckConfig) -> CheckOutcome {
    let (o, c) = normalize_hybrid_with(&[1.0, 1.0, 0.0, 0.0], &[0.5, 0.0, 0.0, 0.0], cfg.estimator);
    let expected_o = [1.2977, 1.2977, -1.2977, -1.2977];
    let expected_c = [0.9733, -0.3244, -0.3244, -0.3244];
    let err = o
        .iter()
        .chain(&c)
        .zip(expected_o.iter().chain(&expected_c))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    CheckOutcome {
        name: "hybrid worked example",
        passed: err <= 1e-4,
        detail: format!("orig {:.4}, cf {:.4}, max error {err:.2e}", o[0], c[0]),
    }
}

/// Mean CRR of both branches over [`CRR_GROUPS`] groups of i.i.d. rollouts
/// at one `(p, q)` point. Returns `(orig_mean, aug_mean)`.
pub fn crr_monte_carlo(
    p: f64,
    q: f64,
    lambda: f64,
    dynamic: bool,
    g: usize,
    rng: &mut LabRng,
) -> (f64, f64) {
    const GT: AnswerId = AnswerId::Listed(0);
    const OTHER: AnswerId = AnswerId::Listed(1);
    let reward = RewardConfig {
        lambda_d: lambda,
        lambda_s: lambda,
        ..RewardConfig::default()
    };
    let (mut sum_orig, mut sum_aug) = (0.0, 0.0);
    for _ in 0..CRR_GROUPS {
        let original = (0..g)
            .map(|_| if rng.gen_bool(p) { GT } else { OTHER })
            .collect();
        let counterfactual = (0..g)
            .map(|_| {
                let behaves = rng.gen_bool(q);
                if behaves == dynamic {
                    if rng.gen_bool(0.5) {
                        OTHER
                    } else {
                        AnswerId::Null
                    }
                } else {
                    GT
                }
            })
            .collect();
        let b = BranchAnswers::well_formatted(original, counterfactual, GT, dynamic)
            .expect("equal lengths");
        sum_orig += (0..g)
            .map(|i| rewards::crr_orig(i, &b, &reward))
            .sum::<f64>()
            / g as f64;
        sum_aug += (0..g)
            .map(|j| rewards::crr_aug(j, &b, &reward))
            .sum::<f64>()
            / g as f64;
    }
    (sum_orig / CRR_GROUPS as f64, sum_aug / CRR_GROUPS as f64)
}

/// Both CRR streams average to `lambda * p * q` within 1%, and agree with
/// each other within 0.5%, over a 3x3 grid of `(p, q)`.
pub fn crr_symmetry_check(cfg: &SelfCheckConfig) -> CheckOutcome {
    let lambda = 0.3;
    let grid = [0.25, 0.5, 0.75];
    let mut worst_expected: f64 = 0.0;
    let mut worst_pair: f64 = 0.0;
    let mut point = 0;
    for &p in &grid {
        for &q in &grid {
            let mut rng = rng_for(cfg.seed, Stream::Verify, 100 + point);
            point += 1;
            let dynamic = point % 2 == 1;
            let (o, a) = crr_monte_carlo(p, q, lambda, dynamic, 4, &mut rng);
            let e = expected_crr(p, q, lambda);
            worst_expected = worst_expected.max((o - e).abs() / e).max((a - e).abs() / e);
            worst_pair = worst_pair.max((o - a).abs() / e);
        }
    }
    CheckOutcome {
        name: "crr symmetry",
        passed: worst_expected <= 0.01 && worst_pair <= 0.005,
        detail: format!(
            "max rel. error vs lambda*p*q {:.3}%, between branches {:.3}%",
            100.0 * worst_expected,
            100.0 * worst_pair
        ),
    }
}

/// Random two-prompt, two-branch batch for gradient checks. Ratios lie in
/// `[0.5, 1.5]`, so many rollouts are clipped, but stay at least 0.02 away
/// from the clip boundaries where the objective has a kink.
pub fn random_gradient_batch<R: Rng + ?Sized>(
    rng: &mut R,
) -> (PolicyParams, PolicyParams, Vec<PromptBatch>) {
    let features = ["p", "q", "r", "s"];
    let labels: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
    let mut params = PolicyParams::default();
    let mut reference = PolicyParams::default();
    for f in features {
        for l in &labels {
            params.set(f, l, rng.gen_range(-1.0..1.0));
            reference.set(f, l, rng.gen_range(-1.0..1.0));
        }
    }
    let eps = ObjectiveConfig::default().clip_epsilon;
    let mut batch = Vec::new();
    for _ in 0..2 {
        let mut prompt = PromptBatch::default();
        for _ in 0..2 {
            let mut keys = vec!["p"];
            keys.extend(features[1..].iter().filter(|_| rng.gen_bool(0.6)));
            let observation = Observation::from_features(keys);
            let probs = softmax_prob(&params, &observation, &labels);
            let rollouts = (0..3)
                .map(|_| {
                    let choice = rng.gen_range(0..labels.len());
                    let rho = loop {
                        let r: f64 = rng.gen_range(0.5..1.5);
                        if (r - (1.0 - eps)).abs() > 0.02 && (r - (1.0 + eps)).abs() > 0.02 {
                            break r;
                        }
                    };
                    ScoredRollout {
                        choice,
                        behavior_logprob: probs[choice].ln() - rho.ln(),
                        advantage: rng.gen_range(-2.0..2.0),
                    }
                })
                .collect();
            prompt.branches.push(BranchBatch {
                observation,
                choices: labels.clone(),
                rollouts,
            });
        }
        batch.push(prompt);
    }
    (params, reference, batch)
}

/// Analytic gradient against central differences on 50 random batches,
/// alternating a small and a large KL weight.
pub fn gradient_check(cfg: &SelfCheckConfig) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let mut rng = rng_for(cfg.seed, Stream::Verify, 1000 + trial);
        let (params, reference, batch) = random_gradient_batch(&mut rng);
        let objective = ObjectiveConfig {
            clip_epsilon: 0.2,
            kl_beta: if trial % 2 == 0 { 0.01 } else { 0.5 },
        };
        worst = worst.max(finite_difference_error(
            &params, &reference, &batch, &objective, 1e-5,
        ));
    }
    CheckOutcome {
        name: "gradient vs finite differences",
        passed: worst <= GRADIENT_TOL,
        detail: format!("max relative error {worst:.2e} over 50 batches (tol {GRADIENT_TOL:e})"),
    }
}

fn all_answer_lists(g: usize, alphabet: &[AnswerId]) -> Vec<Vec<AnswerId>> {
    let mut out = vec![vec![]];
    for _ in 0..g {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                alphabet.iter().map(move |&a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Exhaustive search over every answer configuration of both branches
/// (three real options plus the null option, G = 2 and 3, dynamic and
/// static): the total reward is maximal exactly when every original
/// rollout is correct and every counterfactual rollout behaves.
pub fn maximal_reward_check() -> CheckOutcome {
    let gt = AnswerId::Listed(0);
    let alphabet = [gt, AnswerId::Listed(1), AnswerId::Listed(2), AnswerId::Null];
    let reward = RewardConfig::default();
    let mut failures = Vec::new();
    let mut searched = 0usize;
    for g in [2, 3] {
        let lists = all_answer_lists(g, &alphabet);
        for dynamic in [true, false] {
            let mut scored = Vec::with_capacity(lists.len() * lists.len());
            for o in &lists {
                for cf in &lists {
                    let b = BranchAnswers::well_formatted(o.clone(), cf.clone(), gt, dynamic)
                        .expect("equal lengths");
                    let total: f64 = rewards::original_rewards(&b, &reward)
                        .iter()
                        .chain(&rewards::counterfactual_rewards(&b, &reward))
                        .map(|r| r.total)
                        .sum();
                    let ideal = o.iter().all(|&x| x == gt)
                        && cf.iter().all(|&x| rewards::r_behave(x, gt, dynamic) == 1.0);
                    scored.push((total, ideal));
                }
            }
            searched += scored.len();
            let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
            let mismatched = scored
                .iter()
                .filter(|(total, ideal)| ((best - total).abs() < 1e-12) != *ideal)
                .count();
            if mismatched > 0 {
                failures.push(format!("G={g} dynamic={dynamic}: {mismatched} mismatches"));
            }
        }
    }
    CheckOutcome {
        name: "maximal-reward configuration",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{searched} configurations searched")
        } else {
            failures.join("; ")
        },
    }
}

/// Every check, in table order.
pub fn run_all(cfg: &SelfCheckConfig) -> Vec<CheckOutcome> {
    vec![
        cancellation_check(cfg),
        hybrid_example_check(cfg),
        hybrid_non_cancellation_check(cfg),
        crr_symmetry_check(cfg),
        gradient_check(cfg),
        maximal_reward_check(),
    ]
}
