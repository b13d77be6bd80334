//! Reward rules for CRPO and the three baselines.
//!
//! Everything here works on answer lists only. The trainer samples the
//! rollouts, this module scores them.
//!
//! CRPO scores two branches per prompt. The original branch earns
//! correctness plus a consistency term (CRR) that grows with the number of
//! counterfactual rollouts that behaved as expected. The counterfactual
//! branch earns a behavioural reward (did the answer change when it should
//! have, or stay put when it should have) plus a CRR term that grows with
//! the number of correct original rollouts, all scaled by `w_aug`.

use crate::error::{Error, Result};
use crate::types::{AnswerId, RewardBreakdown, RewardConfig};

/// Answers of both branches of one prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchAnswers {
    pub original: Vec<AnswerId>,
    pub counterfactual: Vec<AnswerId>,
    pub ground_truth: AnswerId,
    /// Whether the question is dynamic (its answer should change under the
    /// transformation) or static (it should not).
    pub dynamic: bool,
    pub format_flags_orig: Vec<bool>,
    pub format_flags_cf: Vec<bool>,
}

impl BranchAnswers {
    /// Builds a record, checking that all four lists have the same length.
    pub fn new(
        original: Vec<AnswerId>,
        counterfactual: Vec<AnswerId>,
        ground_truth: AnswerId,
        dynamic: bool,
        format_flags_orig: Vec<bool>,
        format_flags_cf: Vec<bool>,
    ) -> Result<Self> {
        let g = original.len();
        if counterfactual.len() != g || format_flags_orig.len() != g || format_flags_cf.len() != g {
            return Err(Error::InvalidGroup(format!(
                "branch lengths differ: original {g}, counterfactual {}, format flags {} / {}",
                counterfactual.len(),
                format_flags_orig.len(),
                format_flags_cf.len()
            )));
        }
        Ok(BranchAnswers {
            original,
            counterfactual,
            ground_truth,
            dynamic,
            format_flags_orig,
            format_flags_cf,
        })
    }

    /// Shorthand with every format flag set.
    pub fn well_formatted(
        original: Vec<AnswerId>,
        counterfactual: Vec<AnswerId>,
        ground_truth: AnswerId,
        dynamic: bool,
    ) -> Result<Self> {
        let flags = vec![true; original.len()];
        let cf_flags = vec![true; counterfactual.len()];
        Self::new(
            original,
            counterfactual,
            ground_truth,
            dynamic,
            flags,
            cf_flags,
        )
    }

    pub fn group_size(&self) -> usize {
        self.original.len()
    }

    fn n_correct(&self) -> usize {
        self.original
            .iter()
            .filter(|&&o| o == self.ground_truth)
            .count()
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn r_correct(answer: AnswerId, gt: AnswerId) -> f64 {
    indicator(answer == gt)
}

/// Behavioural reward of a counterfactual answer: a dynamic question should
/// change its answer, a static one should keep it. Choosing the null
/// option counts as a change.
pub fn r_behave(cf_answer: AnswerId, gt: AnswerId, dynamic: bool) -> f64 {
    if dynamic {
        indicator(cf_answer != gt)
    } else {
        indicator(cf_answer == gt)
    }
}

/// Consistency reward of original rollout `i`, gated on it being correct.
pub fn crr_orig(i: usize, b: &BranchAnswers, cfg: &RewardConfig) -> f64 {
    let o = b.original[i];
    if o != b.ground_truth {
        return 0.0;
    }
    let g = b.group_size() as f64;
    let agree = b
        .counterfactual
        .iter()
        .filter(|&&cf| if b.dynamic { cf != o } else { cf == o })
        .count();
    cfg.lambda(b.dynamic) / g * agree as f64
}

/// Consistency reward of counterfactual rollout `j`, gated on its
/// behavioural reward.
pub fn crr_aug(j: usize, b: &BranchAnswers, cfg: &RewardConfig) -> f64 {
    let behave = r_behave(b.counterfactual[j], b.ground_truth, b.dynamic);
    if behave == 0.0 {
        return 0.0;
    }
    let g = b.group_size() as f64;
    behave * cfg.lambda(b.dynamic) / g * b.n_correct() as f64
}

pub fn reward_original(i: usize, b: &BranchAnswers, cfg: &RewardConfig) -> RewardBreakdown {
    RewardBreakdown::new(
        r_correct(b.original[i], b.ground_truth),
        crr_orig(i, b, cfg),
        cfg.format_reward_value * indicator(b.format_flags_orig[i]),
        1.0,
    )
}

pub fn reward_counterfactual(j: usize, b: &BranchAnswers, cfg: &RewardConfig) -> RewardBreakdown {
    RewardBreakdown::new(
        r_behave(b.counterfactual[j], b.ground_truth, b.dynamic),
        crr_aug(j, b, cfg),
        cfg.format_reward_value * indicator(b.format_flags_cf[j]),
        cfg.w_aug,
    )
}

/// Breakdowns for every rollout of the original branch.
pub fn original_rewards(b: &BranchAnswers, cfg: &RewardConfig) -> Vec<RewardBreakdown> {
    (0..b.group_size())
        .map(|i| reward_original(i, b, cfg))
        .collect()
}

/// Breakdowns for every rollout of the counterfactual branch.
pub fn counterfactual_rewards(b: &BranchAnswers, cfg: &RewardConfig) -> Vec<RewardBreakdown> {
    (0..b.group_size())
        .map(|j| reward_counterfactual(j, b, cfg))
        .collect()
}

/// Plain correctness plus format reward.
pub fn grpo_rewards(
    answers: &[AnswerId],
    gt: AnswerId,
    format_flags: &[bool],
    format_value: f64,
) -> Vec<f64> {
    answers
        .iter()
        .zip(format_flags)
        .map(|(&a, &f)| r_correct(a, gt) + format_value * indicator(f))
        .collect()
}

/// T-GRPO: correct ordered rollouts earn a bonus of `tgrpo_alpha` when the
/// ordered group is at least as accurate as the shuffled one. The shuffled
/// group only feeds the comparison and receives no reward of its own.
pub fn tgrpo_rewards(
    ordered_answers: &[AnswerId],
    shuffled_answers: &[AnswerId],
    gt: AnswerId,
    cfg: &RewardConfig,
    is_video: bool,
) -> Vec<f64> {
    let frac = |xs: &[AnswerId]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().filter(|&&a| a == gt).count() as f64 / xs.len() as f64
        }
    };
    let p = frac(ordered_answers);
    let p_shuffled = frac(shuffled_answers);
    let bonus = cfg.tgrpo_alpha * indicator(p >= p_shuffled && is_video);
    ordered_answers
        .iter()
        .map(|&a| if a == gt { 1.0 + bonus } else { 0.0 })
        .collect()
}

/// ArrowRL: fidelity plus, for arrow-of-time sensitive samples (the reverse
/// reference answered correctly), a bonus for differing from the reverse
/// reference.
pub fn arrowrl_rewards(
    answers: &[AnswerId],
    reverse_reference: AnswerId,
    gt: AnswerId,
    cfg: &RewardConfig,
) -> Vec<f64> {
    let alpha = if reverse_reference == gt {
        cfg.arrowrl_alpha
    } else {
        0.0
    };
    answers
        .iter()
        .map(|&a| r_correct(a, gt) + alpha * (1.0 - indicator(a == reverse_reference)))
        .collect()
}

/// Expected per-rollout CRR when original rollouts are correct with
/// probability `p` and counterfactual rollouts behave with probability `q`.
pub fn expected_crr(p: f64, q: f64, lambda: f64) -> f64 {
    lambda * p * q
}
