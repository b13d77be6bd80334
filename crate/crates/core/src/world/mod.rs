//! Synthetic counterfactual world.
//!
//! A [`WorldState`] stands in for a video: a motion direction, an arrow of
//! time, the order of two action segments and a bag of static attributes.
//! Transformations act on it exactly as they would on a clip, so the
//! correct answer of every question under every transformation is known in
//! closed form. Observation channels model what a policy sees: the whole
//! clip, one frame, shuffled frames, or just the text.

mod config;
mod family;
mod generate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use config::{OptionCounts, WorldConfig};
pub use family::QuestionFamily;
pub(crate) use generate::sample_validated;
pub use generate::{build_paired_benchmark, sample_instance, InstancePair};

use crate::error::{Error, Result};
use crate::types::{
    AnswerId, ArrowOfTime, EventOrder, ObservationChannel, Question, Transformation, WorldState,
};

/// Applies `t` to a state. Every transformation is an involution and
/// statics are never touched.
pub fn apply_transformation(w: &WorldState, t: Transformation) -> WorldState {
    let mut out = w.clone();
    match t {
        Transformation::HorizontalFlip => {
            out.direction = w.direction.mirrored();
        }
        Transformation::TemporalReversal => {
            out.direction = w.direction.reversed();
            out.arrow = w.arrow.flipped();
            out.order = w.order.swapped();
        }
        Transformation::SegmentReorder => {
            out.order = w.order.swapped();
        }
    }
    out
}

/// What a policy is conditioned on: a small set of feature keys. Two
/// states with equal observations are indistinguishable to any policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(Vec<String>);

impl Observation {
    pub fn features(&self) -> &[String] {
        &self.0
    }

    /// Builds an observation from raw feature keys. Duplicates are dropped.
    pub fn from_features<I, S>(features: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v: Vec<String> = Vec::new();
        for f in features {
            let f = f.into();
            if !v.contains(&f) {
                v.push(f);
            }
        }
        Observation(v)
    }
}

fn arrow_str(a: ArrowOfTime) -> &'static str {
    match a {
        ArrowOfTime::Forward => "forward",
        ArrowOfTime::Backward => "backward",
    }
}

fn order_str(o: EventOrder) -> &'static str {
    match o {
        EventOrder::AB => "ab",
        EventOrder::BA => "ba",
    }
}

/// Renders the part of `w` visible through `ch`, keyed by the question's
/// prompt.
///
/// Every channel carries a prompt feature. Single frames add one feature
/// per static attribute. Shuffled frames add the unsigned axis of motion,
/// since a bag of frames shows where an object travels but not in which
/// sense. The full video adds the signed motion, arrow and segment order.
pub fn observe(w: &WorldState, q: &Question, ch: ObservationChannel) -> Observation {
    let p = &q.prompt_key;
    let mut f = vec![format!("prompt:{p}")];
    if ch != ObservationChannel::TextOnly {
        f.extend(w.statics.iter().map(|(k, v)| format!("{p}|{k}={v}")));
    }
    match ch {
        ObservationChannel::ShuffledFrames => f.push(format!("{p}|axis={}", w.direction.axis())),
        ObservationChannel::FullVideo => f.push(format!(
            "{p}|motion={}/{}/{}",
            w.direction.as_str(),
            arrow_str(w.arrow),
            order_str(w.order)
        )),
        ObservationChannel::SingleFrame | ObservationChannel::TextOnly => {}
    }
    Observation(f)
}

/// Correct answers of an instance under the identity and each
/// transformation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oracle {
    pub identity: AnswerId,
    pub transformed: BTreeMap<Transformation, AnswerId>,
}

/// A sampled state together with its question and answer oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldInstance {
    pub state: WorldState,
    pub question: Question,
    pub family: QuestionFamily,
    /// Attribute asked about by attribute questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    pub oracle: Oracle,
}

impl WorldInstance {
    /// Correct label of this instance's question for an arbitrary state.
    pub fn answer_label(&self, state: &WorldState) -> String {
        self.family.answer_label(state, self.attribute.as_deref())
    }

    /// Recomputes the oracle from the state, question and family.
    pub(crate) fn compute_oracle(&self) -> Oracle {
        let transformed = Transformation::ALL
            .into_iter()
            .map(|t| {
                let label = self.answer_label(&apply_transformation(&self.state, t));
                (t, self.question.answer_for_label(&label))
            })
            .collect();
        Oracle {
            identity: self
                .question
                .answer_for_label(&self.answer_label(&self.state)),
            transformed,
        }
    }

    pub fn observe(&self, ch: ObservationChannel) -> Observation {
        observe(&self.state, &self.question, ch)
    }
}

/// Correct answer after applying `t`, or the null option when the new
/// correct label is not among the options.
pub fn transformed_answer(inst: &WorldInstance, t: Transformation) -> Result<AnswerId> {
    if !inst.question.task_type.is_dynamic() {
        return Ok(inst.question.ground_truth);
    }
    inst.oracle
        .transformed
        .get(&t)
        .copied()
        .ok_or(Error::OracleGap(t))
}
