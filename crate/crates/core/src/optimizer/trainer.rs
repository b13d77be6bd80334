//! Training loop for CRPO and the GRPO, T-GRPO and ArrowRL baselines.
//!
//! Each step draws `batch_prompts` instances from a [`PromptSource`],
//! samples rollout groups from the current policy, scores them, normalizes
//! advantages and takes `updates_per_batch` gradient-ascent passes on the
//! clipped objective. The behaviour policy of a step is the policy before
//! its first update; the KL reference is the policy handed to [`train`].

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::advantage::{
    normalize_batch_std, normalize_hybrid, normalize_per_group, NormScheme,
};
use crate::optimizer::objective::{
    policy_gradient, BranchBatch, ObjectiveConfig, PromptBatch, ScoredRollout,
};
use crate::optimizer::policy::{greedy, sample_index, softmax_prob, PolicyParams};
use crate::rewards::{self, BranchAnswers};
use crate::router::{route, select_transformation};
use crate::seeds::{rng_for, LabRng, Stream};
use crate::types::{AnswerId, ObservationChannel, RewardConfig, Transformation};
use crate::world::{apply_transformation, observe, Observation, WorldConfig, WorldInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "grpo")]
    Grpo,
    #[serde(rename = "tgrpo")]
    Tgrpo,
    #[serde(rename = "arrowrl")]
    ArrowRl,
    #[default]
    #[serde(rename = "crpo")]
    Crpo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Grpo,
        Algorithm::Tgrpo,
        Algorithm::ArrowRl,
        Algorithm::Crpo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Grpo => "grpo",
            Algorithm::Tgrpo => "tgrpo",
            Algorithm::ArrowRl => "arrowrl",
            Algorithm::Crpo => "crpo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("algorithm", format!("unknown algorithm `{s}`")))
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Rollouts per group.
    #[serde(alias = "G")]
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub batch_prompts: usize,
    pub steps: usize,
    /// Gradient passes over each batch of rollouts.
    pub updates_per_batch: usize,
    pub algorithm: Algorithm,
    pub norm_scheme: NormScheme,
    pub seed: u64,
    /// Probability of flipping each router test outcome.
    pub router_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 0.01,
            learning_rate: 0.1,
            batch_prompts: 16,
            steps: 2000,
            updates_per_batch: 1,
            algorithm: Algorithm::Crpo,
            norm_scheme: NormScheme::HybridJointStd,
            seed: 0,
            router_noise: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            clip_epsilon: self.clip_epsilon,
            kl_beta: self.kl_beta,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if self.group_size < 2 {
            return Err(Error::config(
                field("group_size"),
                format!("must be >= 2, got {}", self.group_size),
            ));
        }
        for (name, v) in [
            ("steps", self.steps),
            ("batch_prompts", self.batch_prompts),
            ("updates_per_batch", self.updates_per_batch),
        ] {
            if v == 0 {
                return Err(Error::config(field(name), "must be >= 1"));
            }
        }
        if !(self.clip_epsilon.is_finite() && self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::config(
                field("clip_epsilon"),
                format!("must lie in (0, 1), got {}", self.clip_epsilon),
            ));
        }
        for (name, v) in [
            ("kl_beta", self.kl_beta),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    field(name),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.router_noise) {
            return Err(Error::config(
                field("router_noise"),
                format!("must lie in [0, 1], got {}", self.router_noise),
            ));
        }
        Ok(())
    }
}

/// Per-step training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub algorithm: Algorithm,
    /// Mean correctness reward of the original (ordered) rollouts.
    pub mean_correct_reward: f64,
    /// Fraction of gradient-bearing rollout groups whose rewards are all
    /// equal. Each branch counts as its own group.
    pub zero_advantage_fraction: f64,
    /// Mean CRR over both branches. Zero for the baselines.
    pub mean_crr_reward: f64,
    /// Mean of the algorithm's auxiliary term: CRR for CRPO, the temporal
    /// bonus for T-GRPO, the reverse term for ArrowRL, 0 for GRPO.
    pub mean_aux_reward: f64,
    /// Mean behavioural reward of the counterfactual branch.
    pub mean_behave_reward: f64,
    /// Fraction of prompts all of whose gradient-bearing groups have
    /// all-equal rewards.
    pub zero_advantage_fraction_merged: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "step,algorithm,mean_correct_reward,zero_advantage_fraction,mean_crr_reward,mean_aux_reward,mean_behave_reward,zero_advantage_fraction_merged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.algorithm,
            self.mean_correct_reward,
            self.zero_advantage_fraction,
            self.mean_crr_reward,
            self.mean_aux_reward,
            self.mean_behave_reward,
            self.zero_advantage_fraction_merged
        )
    }
}

/// Where training prompts come from.
pub trait PromptSource {
    fn draw(&self, rng: &mut LabRng) -> Result<WorldInstance>;

    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

impl PromptSource for WorldConfig {
    fn draw(&self, rng: &mut LabRng) -> Result<WorldInstance> {
        crate::world::sample_validated(self, rng)
    }

    fn validate(&self) -> Result<()> {
        WorldConfig::validate(self, "world")
    }
}

/// A fixed pool, drawn from uniformly with replacement.
impl PromptSource for [WorldInstance] {
    fn draw(&self, rng: &mut LabRng) -> Result<WorldInstance> {
        self.choose(rng)
            .cloned()
            .ok_or_else(|| Error::config("prompts", "prompt pool is empty"))
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::config("prompts", "prompt pool is empty"));
        }
        Ok(())
    }
}

/// Random streams of one step. Prompts and rollouts use separate streams,
/// so runs that differ only in reward settings see the same prompts.
#[derive(Debug, Clone)]
pub struct StepRngs {
    pub world: LabRng,
    pub rollouts: LabRng,
}

impl StepRngs {
    pub fn for_step(seed: u64, step: usize) -> Self {
        StepRngs {
            world: rng_for(seed, Stream::WorldGen, step as u64),
            rollouts: rng_for(seed, Stream::Rollouts, step as u64),
        }
    }
}

struct SampledGroup {
    observation: Observation,
    choices: Vec<String>,
    picks: Vec<(usize, f64)>,
}

impl SampledGroup {
    fn draw(
        params: &PolicyParams,
        observation: Observation,
        choices: &[String],
        g: usize,
        rng: &mut LabRng,
    ) -> Self {
        let probs = softmax_prob(params, &observation, choices);
        let picks = (0..g)
            .map(|_| {
                let i = sample_index(&probs, rng);
                (i, probs[i].ln())
            })
            .collect();
        SampledGroup {
            observation,
            choices: choices.to_vec(),
            picks,
        }
    }

    fn answers(&self) -> Vec<AnswerId> {
        let n = self.choices.len() - 1;
        self.picks
            .iter()
            .map(|&(i, _)| AnswerId::from_index(i, n).expect("index within choices"))
            .collect()
    }

    fn into_batch(self, advantages: &[f64]) -> BranchBatch {
        let rollouts = self
            .picks
            .iter()
            .zip(advantages)
            .map(|(&(choice, behavior_logprob), &advantage)| ScoredRollout {
                choice,
                behavior_logprob,
                advantage,
            })
            .collect();
        BranchBatch {
            observation: self.observation,
            choices: self.choices,
            rollouts,
        }
    }
}

/// Rewarded groups of one prompt, before normalization.
struct ScoredPrompt {
    groups: Vec<(SampledGroup, Vec<f64>)>,
}

#[derive(Default)]
struct Totals {
    correct: (f64, usize),
    crr: (f64, usize),
    aux: (f64, usize),
    behave: (f64, usize),
    zero_groups: usize,
    groups: usize,
    zero_prompts: usize,
    prompts: usize,
}

fn push(acc: &mut (f64, usize), values: impl IntoIterator<Item = f64>) {
    for v in values {
        acc.0 += v;
        acc.1 += 1;
    }
}

fn mean(acc: (f64, usize)) -> f64 {
    if acc.1 == 0 {
        0.0
    } else {
        acc.0 / acc.1 as f64
    }
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn score_prompt(
    params: &PolicyParams,
    inst: &WorldInstance,
    cfg: &TrainConfig,
    reward: &RewardConfig,
    rng: &mut LabRng,
    totals: &mut Totals,
) -> ScoredPrompt {
    let q = &inst.question;
    let choices = q.choices();
    let g = cfg.group_size;
    let gt = q.ground_truth;
    let full = |state| observe(state, q, ObservationChannel::FullVideo);
    let original = SampledGroup::draw(params, full(&inst.state), &choices, g, rng);
    let orig_answers = original.answers();
    push(
        &mut totals.correct,
        orig_answers.iter().map(|&a| rewards::r_correct(a, gt)),
    );
    let flags = vec![true; g];

    match cfg.algorithm {
        Algorithm::Grpo => {
            let r = rewards::grpo_rewards(&orig_answers, gt, &flags, reward.format_reward_value);
            push(&mut totals.aux, std::iter::repeat_n(0.0, g));
            ScoredPrompt {
                groups: vec![(original, r)],
            }
        }
        Algorithm::Tgrpo => {
            let shuffled_obs = observe(&inst.state, q, ObservationChannel::ShuffledFrames);
            let shuffled = SampledGroup::draw(params, shuffled_obs, &choices, g, rng);
            let r = rewards::tgrpo_rewards(&orig_answers, &shuffled.answers(), gt, reward, true);
            push(
                &mut totals.aux,
                r.iter().map(|&x| if x > 0.0 { x - 1.0 } else { 0.0 }),
            );
            ScoredPrompt {
                groups: vec![(original, r)],
            }
        }
        Algorithm::ArrowRl => {
            let reversed = apply_transformation(&inst.state, Transformation::TemporalReversal);
            let reference = greedy(params, &full(&reversed), &choices);
            let reference =
                AnswerId::from_index(reference, choices.len() - 1).expect("index within choices");
            let r = rewards::arrowrl_rewards(&orig_answers, reference, gt, reward);
            push(
                &mut totals.aux,
                r.iter()
                    .zip(&orig_answers)
                    .map(|(&x, &a)| x - rewards::r_correct(a, gt)),
            );
            ScoredPrompt {
                groups: vec![(original, r)],
            }
        }
        Algorithm::Crpo => {
            let routed = route(q, cfg.router_noise, rng);
            let t = select_transformation(routed, rng);
            let cf_state = apply_transformation(&inst.state, t);
            let counterfactual = SampledGroup::draw(params, full(&cf_state), &choices, g, rng);
            let b = BranchAnswers::new(
                orig_answers,
                counterfactual.answers(),
                gt,
                routed.is_dynamic(),
                flags.clone(),
                flags,
            )
            .expect("branches have equal length");
            let ro = rewards::original_rewards(&b, reward);
            let rc = rewards::counterfactual_rewards(&b, reward);
            let crr: Vec<f64> = ro.iter().chain(&rc).map(|r| r.crr).collect();
            push(&mut totals.crr, crr.iter().copied());
            push(&mut totals.aux, crr);
            push(&mut totals.behave, rc.iter().map(|r| r.base));
            let mut groups = vec![(original, ro.iter().map(|r| r.total).collect())];
            // A zero-weight counterfactual branch contributes no gradient.
            if reward.w_aug > 0.0 {
                groups.push((counterfactual, rc.iter().map(|r| r.total).collect()));
            }
            ScoredPrompt { groups }
        }
    }
}

/// One optimization step. Returns the updated policy and the step's
/// diagnostics.
pub fn train_step<S: PromptSource + ?Sized>(
    params: &PolicyParams,
    reference: &PolicyParams,
    source: &S,
    cfg: &TrainConfig,
    reward: &RewardConfig,
    step: usize,
    rngs: &mut StepRngs,
) -> Result<(PolicyParams, StepDiagnostics)> {
    let mut totals = Totals::default();
    let mut scored = Vec::with_capacity(cfg.batch_prompts);
    for _ in 0..cfg.batch_prompts {
        let inst = source.draw(&mut rngs.world)?;
        scored.push(score_prompt(
            params,
            &inst,
            cfg,
            reward,
            &mut rngs.rollouts,
            &mut totals,
        ));
    }

    for p in &scored {
        let zeros = p.groups.iter().filter(|(_, r)| is_constant(r)).count();
        totals.zero_groups += zeros;
        totals.groups += p.groups.len();
        totals.prompts += 1;
        if zeros == p.groups.len() {
            totals.zero_prompts += 1;
        }
    }

    let advantages: Vec<Vec<Vec<f64>>> = match cfg.norm_scheme {
        NormScheme::PerGroupMeanStd => scored
            .iter()
            .map(|p| {
                p.groups
                    .iter()
                    .map(|(_, r)| normalize_per_group(r))
                    .collect()
            })
            .collect(),
        NormScheme::HybridJointStd => scored
            .iter()
            .map(|p| match p.groups.as_slice() {
                [(_, o), (_, c)] => {
                    let (ao, ac) = normalize_hybrid(o, c);
                    vec![ao, ac]
                }
                groups => groups.iter().map(|(_, r)| normalize_per_group(r)).collect(),
            })
            .collect(),
        NormScheme::GroupMeanBatchStd => {
            let flat: Vec<Vec<f64>> = scored
                .iter()
                .flat_map(|p| p.groups.iter().map(|(_, r)| r.clone()))
                .collect();
            let mut normalized = normalize_batch_std(&flat).into_iter();
            scored
                .iter()
                .map(|p| {
                    p.groups
                        .iter()
                        .map(|_| normalized.next().expect("one per group"))
                        .collect()
                })
                .collect()
        }
    };

    let batch: Vec<PromptBatch> = scored
        .into_iter()
        .zip(advantages)
        .map(|(p, adv)| PromptBatch {
            branches: p
                .groups
                .into_iter()
                .zip(adv)
                .map(|((group, _), a)| group.into_batch(&a))
                .collect(),
        })
        .collect();

    let objective = cfg.objective();
    let mut next = params.clone();
    for _ in 0..cfg.updates_per_batch {
        let grad = policy_gradient(&next, reference, &batch, &objective);
        next.apply(&grad, cfg.learning_rate);
    }

    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let diag = StepDiagnostics {
        step,
        algorithm: cfg.algorithm,
        mean_correct_reward: mean(totals.correct),
        zero_advantage_fraction: frac(totals.zero_groups, totals.groups),
        mean_crr_reward: mean(totals.crr),
        mean_aux_reward: mean(totals.aux),
        mean_behave_reward: mean(totals.behave),
        zero_advantage_fraction_merged: frac(totals.zero_prompts, totals.prompts),
    };
    Ok((next, diag))
}

/// Runs `cfg.steps` steps from `initial`, which also serves as the KL
/// reference. Deterministic given `cfg.seed`.
pub fn train<S: PromptSource + ?Sized>(
    initial: &PolicyParams,
    source: &S,
    cfg: &TrainConfig,
    reward: &RewardConfig,
) -> Result<(PolicyParams, Vec<StepDiagnostics>)> {
    cfg.validate("train")?;
    reward.validate("reward")?;
    source.validate()?;
    initial.validate()?;
    let reference = initial.clone();
    let mut params = initial.clone();
    let mut diagnostics = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rngs = StepRngs::for_step(cfg.seed, step);
        let (next, diag) = train_step(&params, &reference, source, cfg, reward, step, &mut rngs)?;
        params = next;
        diagnostics.push(diag);
    }
    Ok((params, diagnostics))
}
