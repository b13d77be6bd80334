use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::Subtask;
use crate::router::{classify, select_transformation};
use crate::types::{
    AnswerId, ArrowOfTime, EventOrder, Question, TaskType, Transformation, WorldState,
};
use crate::world::{apply_transformation, Oracle, QuestionFamily, WorldConfig, WorldInstance};

/// Draws one instance: a task type from the mix, a family that can produce
/// it, a state realising it, then the option list.
pub fn sample_instance<R: Rng + ?Sized>(cfg: &WorldConfig, rng: &mut R) -> Result<WorldInstance> {
    cfg.validate("world")?;
    sample_validated(cfg, rng)
}

pub(crate) fn sample_validated<R: Rng + ?Sized>(
    cfg: &WorldConfig,
    rng: &mut R,
) -> Result<WorldInstance> {
    let types: Vec<TaskType> = TaskType::ALL
        .into_iter()
        .filter(|&t| cfg.weight(t) > 0.0)
        .collect();
    let weights: Vec<f64> = types.iter().map(|&t| cfg.weight(t)).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::config("world.question_mix", e.to_string()))?;
    let task_type = types[dist.sample(rng)];

    let plans = cfg.plan(task_type);
    let plan = plans.choose(rng).ok_or_else(|| {
        Error::config("world.question_mix", format!("cannot produce {task_type}"))
    })?;
    let family = plan.family;

    let mut statics = BTreeMap::new();
    for (attr, values) in &cfg.static_registry {
        let v = values.choose(rng).expect("validated non-empty");
        statics.insert(attr.clone(), v.clone());
    }
    let (mut state, attribute) = if family == QuestionFamily::Attribute {
        let attr = cfg
            .queryable_attributes()
            .choose(rng)
            .expect("planned attribute family")
            .to_string();
        let direction = *cfg.direction_set.choose(rng).expect("validated non-empty");
        let arrow = if rng.gen_bool(0.5) {
            ArrowOfTime::Forward
        } else {
            ArrowOfTime::Backward
        };
        let order = if rng.gen_bool(0.5) {
            EventOrder::AB
        } else {
            EventOrder::BA
        };
        (
            WorldState {
                direction,
                arrow,
                order,
                statics,
            },
            Some(attr),
        )
    } else {
        let &(direction, arrow, order) = plan.dynamics.choose(rng).expect("non-empty plan");
        (
            WorldState {
                direction,
                arrow,
                order,
                statics,
            },
            None,
        )
    };

    let labels: Vec<String> = match &attribute {
        Some(a) => cfg.static_registry[a].clone(),
        None => family.motion_labels(),
    };
    let gt_label = family.answer_label(&state, attribute.as_deref());

    if task_type.is_dynamic() {
        if let Some(cue) = &cfg.shortcut_attribute {
            if rng.gen_bool(cfg.shortcut_strength) {
                let values = &cfg.static_registry[cue];
                let idx = labels.iter().position(|l| *l == gt_label).unwrap_or(0);
                state
                    .statics
                    .insert(cue.clone(), values[idx % values.len()].clone());
            }
        }
    }

    let mut transformed: Vec<String> = Vec::new();
    for t in Transformation::ALL {
        let l = family.answer_label(&apply_transformation(&state, t), attribute.as_deref());
        if l != gt_label && !transformed.contains(&l) {
            transformed.push(l);
        }
    }
    let listed = rng.gen_bool(cfg.p_answer_listed);
    let k = cfg.option_count.get(family);
    let mut options = vec![gt_label.clone()];
    if listed {
        options.extend(transformed.iter().take(k - 1).cloned());
    }
    let mut distractors: Vec<&String> = labels
        .iter()
        .filter(|l| **l != gt_label && !transformed.contains(l))
        .collect();
    distractors.shuffle(rng);
    for d in distractors {
        if options.len() >= k {
            break;
        }
        options.push(d.clone());
    }
    // Too few distractors: fall back to transformed labels.
    for l in &transformed {
        if options.len() >= k {
            break;
        }
        if !options.contains(l) {
            options.push(l.clone());
        }
    }
    options.shuffle(rng);

    let prompt_key = family.prompt_key(attribute.as_deref());
    let id = format!("{prompt_key}-{:016x}", rng.gen::<u64>());
    let question = build_question(
        id,
        prompt_key,
        options,
        family,
        attribute.as_deref(),
        &state,
    );
    debug_assert_eq!(question.task_type, task_type);
    let mut inst = WorldInstance {
        state,
        question,
        family,
        attribute,
        oracle: Oracle {
            identity: AnswerId::Null,
            transformed: BTreeMap::new(),
        },
    };
    inst.oracle = inst.compute_oracle();
    Ok(inst)
}

fn build_question(
    id: String,
    prompt_key: String,
    options: Vec<String>,
    family: QuestionFamily,
    attribute: Option<&str>,
    state: &WorldState,
) -> Question {
    let gt_label = family.answer_label(state, attribute);
    let changes = |t| family.answer_label(&apply_transformation(state, t), attribute) != gt_label;
    let flip = changes(Transformation::HorizontalFlip);
    let rev = changes(Transformation::TemporalReversal);
    let ground_truth = options
        .iter()
        .position(|o| *o == gt_label)
        .map_or(AnswerId::Null, AnswerId::Listed);
    Question {
        id,
        prompt_key,
        options,
        ground_truth,
        task_type: classify(flip, rev),
        flip_changes_answer: flip,
        reversal_changes_answer: rev,
    }
}

/// Two instances sharing a question and option set whose states differ by
/// one transformation, and whose correct answers differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstancePair {
    pub a: WorldInstance,
    pub b: WorldInstance,
    pub transformation: Transformation,
}

impl InstancePair {
    pub fn subtask(&self) -> Subtask {
        self.a
            .family
            .subtask()
            .expect("pairs are built from motion questions")
    }

    /// Counterpart of `a` under `t`, or `None` when the pair would not be
    /// answerable on both sides with different answers.
    pub fn from_instance(a: WorldInstance, t: Transformation) -> Option<InstancePair> {
        let state_b = apply_transformation(&a.state, t);
        let label_b = a.answer_label(&state_b);
        let answer_b = a.question.answer_for_label(&label_b);
        if answer_b.is_null() || answer_b == a.question.ground_truth {
            return None;
        }
        let question = build_question(
            format!("{}-cf", a.question.id),
            a.question.prompt_key.clone(),
            a.question.options.clone(),
            a.family,
            a.attribute.as_deref(),
            &state_b,
        );
        let mut b = WorldInstance {
            state: state_b,
            question,
            family: a.family,
            attribute: a.attribute.clone(),
            oracle: a.oracle.clone(),
        };
        b.oracle = b.compute_oracle();
        Some(InstancePair {
            a,
            b,
            transformation: t,
        })
    }
}

/// Transformation used to build a benchmark pair for a question. Event
/// order questions use segment reordering, the others follow the router.
fn pair_transformation<R: Rng + ?Sized>(inst: &WorldInstance, rng: &mut R) -> Transformation {
    match inst.family {
        QuestionFamily::Order => Transformation::SegmentReorder,
        _ => select_transformation(inst.question.task_type, rng),
    }
}

/// Builds `n_pairs` answer-changing pairs. Candidates whose counterfactual
/// answer is not listed are discarded and redrawn.
pub fn build_paired_benchmark<R: Rng + ?Sized>(
    cfg: &WorldConfig,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<InstancePair>> {
    if n_pairs == 0 {
        return Err(Error::config("n_pairs", "must be >= 1"));
    }
    if cfg.weight(TaskType::Static) > 0.0 {
        return Err(Error::StaticPairs);
    }
    cfg.validate("world")?;
    let max_attempts = 1000 * n_pairs + 10_000;
    let mut out = Vec::with_capacity(n_pairs);
    let mut attempts = 0;
    while out.len() < n_pairs {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(
                "world.p_answer_listed",
                "could not draw answerable pairs; counterfactual answers are never listed",
            ));
        }
        let inst = sample_validated(cfg, rng)?;
        let t = pair_transformation(&inst, rng);
        if let Some(pair) = InstancePair::from_instance(inst, t) {
            out.push(pair);
        }
    }
    Ok(out)
}
