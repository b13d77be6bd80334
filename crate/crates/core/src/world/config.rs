use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::classify;
use crate::types::{ArrowOfTime, Direction, EventOrder, TaskType, Transformation, WorldState};
use crate::world::{apply_transformation, QuestionFamily};

/// Number of real options per question family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptionCounts {
    pub direction: usize,
    pub heading: usize,
    pub arrow: usize,
    pub order: usize,
    pub attribute: usize,
}

impl Default for OptionCounts {
    fn default() -> Self {
        OptionCounts {
            direction: 4,
            heading: 4,
            arrow: 3,
            order: 2,
            attribute: 3,
        }
    }
}

impl OptionCounts {
    pub fn get(&self, family: QuestionFamily) -> usize {
        match family {
            QuestionFamily::Direction => self.direction,
            QuestionFamily::Heading => self.heading,
            QuestionFamily::Arrow => self.arrow,
            QuestionFamily::Order => self.order,
            QuestionFamily::Attribute => self.attribute,
        }
    }
}

/// Distribution of the synthetic world.
///
/// The default is a shortcut-prone task: the `scene` attribute is set from
/// the correct answer of every dynamic question, so a policy can reach full
/// training accuracy from a single frame without looking at motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub static_registry: BTreeMap<String, Vec<String>>,
    pub direction_set: Vec<Direction>,
    pub option_count: OptionCounts,
    /// Probability that the transformed correct answer is among the options.
    pub p_answer_listed: f64,
    pub question_mix: BTreeMap<TaskType, f64>,
    pub families: Vec<QuestionFamily>,
    /// Static attribute that leaks the answer of dynamic questions.
    pub shortcut_attribute: Option<String>,
    /// Probability that the leak is present in a dynamic instance.
    pub shortcut_strength: f64,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for WorldConfig {
    fn default() -> Self {
        let mut static_registry = BTreeMap::new();
        static_registry.insert(
            "scene".to_string(),
            strings(&[
                "kitchen", "street", "park", "beach", "forest", "office", "garage", "field", "pool",
            ]),
        );
        static_registry.insert(
            "color".to_string(),
            strings(&["red", "green", "blue", "yellow"]),
        );
        static_registry.insert("count".to_string(), strings(&["one", "two", "three"]));
        let question_mix = [
            (TaskType::Spatial, 1.0),
            (TaskType::Temporal, 2.0),
            (TaskType::Spatiotemporal, 1.0),
            (TaskType::Static, 1.0),
        ]
        .into_iter()
        .collect();
        WorldConfig {
            static_registry,
            direction_set: Direction::ALL.to_vec(),
            option_count: OptionCounts::default(),
            p_answer_listed: 0.5,
            question_mix,
            families: QuestionFamily::ALL.to_vec(),
            shortcut_attribute: Some("scene".to_string()),
            shortcut_strength: 1.0,
        }
    }
}

/// A family together with the dynamic configurations that realise a task
/// type.
#[derive(Debug, Clone)]
pub(crate) struct FamilyPlan {
    pub family: QuestionFamily,
    pub dynamics: Vec<(Direction, ArrowOfTime, EventOrder)>,
}

impl WorldConfig {
    /// Same world with the static weight removed; used for paired
    /// benchmarks.
    pub fn dynamic_only(&self) -> WorldConfig {
        let mut out = self.clone();
        out.question_mix.remove(&TaskType::Static);
        out
    }

    pub fn weight(&self, t: TaskType) -> f64 {
        self.question_mix.get(&t).copied().unwrap_or(0.0)
    }

    /// Non-leaking attributes that attribute questions may ask about.
    pub(crate) fn queryable_attributes(&self) -> Vec<&str> {
        self.static_registry
            .keys()
            .map(String::as_str)
            .filter(|k| Some(*k) != self.shortcut_attribute.as_deref())
            .collect()
    }

    /// Families able to produce `t`, each with the dynamic states that do.
    pub(crate) fn plan(&self, t: TaskType) -> Vec<FamilyPlan> {
        let mut out = Vec::new();
        for &family in &self.families {
            if family.is_motion() != t.is_dynamic() {
                continue;
            }
            if family == QuestionFamily::Attribute {
                if !self.queryable_attributes().is_empty() {
                    out.push(FamilyPlan {
                        family,
                        dynamics: vec![],
                    });
                }
                continue;
            }
            let mut dynamics = Vec::new();
            for &d in &self.direction_set {
                for a in [ArrowOfTime::Forward, ArrowOfTime::Backward] {
                    for o in [EventOrder::AB, EventOrder::BA] {
                        let state = WorldState {
                            direction: d,
                            arrow: a,
                            order: o,
                            statics: BTreeMap::new(),
                        };
                        if motion_task_type(family, &state) == t {
                            dynamics.push((d, a, o));
                        }
                    }
                }
            }
            if !dynamics.is_empty() {
                out.push(FamilyPlan { family, dynamics });
            }
        }
        out
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        let mut any_positive = false;
        for (t, &w) in &self.question_mix {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(
                    format!("{prefix}.question_mix.{t}"),
                    format!("weight must be finite and >= 0, got {w}"),
                ));
            }
            any_positive |= w > 0.0;
        }
        if !any_positive {
            return Err(Error::config(
                field("question_mix"),
                "needs at least one positive weight",
            ));
        }
        for (name, p) in [
            ("p_answer_listed", self.p_answer_listed),
            ("shortcut_strength", self.shortcut_strength),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(
                    field(name),
                    format!("must lie in [0, 1], got {p}"),
                ));
            }
        }
        if self.direction_set.is_empty() {
            return Err(Error::config(field("direction_set"), "must not be empty"));
        }
        if self.families.is_empty() {
            return Err(Error::config(field("families"), "must not be empty"));
        }
        for (attr, values) in &self.static_registry {
            if attr.is_empty() || values.is_empty() {
                return Err(Error::config(
                    format!("{prefix}.static_registry.{attr}"),
                    "attribute needs a name and at least one value",
                ));
            }
        }
        if let Some(attr) = &self.shortcut_attribute {
            if !self.static_registry.contains_key(attr) {
                return Err(Error::config(
                    field("shortcut_attribute"),
                    format!("`{attr}` is not in the static registry"),
                ));
            }
        }
        for &family in &self.families {
            let k = self.option_count.get(family);
            let name = format!("{prefix}.option_count.{}", family.as_str());
            if !(2..=4).contains(&k) {
                return Err(Error::config(name, format!("must lie in 2..=4, got {k}")));
            }
            let vocabulary = if family == QuestionFamily::Attribute {
                self.queryable_attributes()
                    .iter()
                    .map(|a| self.static_registry[*a].len())
                    .min()
                    .unwrap_or(usize::MAX)
            } else {
                family.motion_labels().len()
            };
            if k > vocabulary {
                return Err(Error::config(
                    name,
                    format!("{k} options requested but only {vocabulary} labels exist"),
                ));
            }
        }
        for t in TaskType::ALL {
            if self.weight(t) > 0.0 && self.plan(t).is_empty() {
                return Err(Error::config(
                    format!("{prefix}.question_mix.{t}"),
                    format!("no enabled question family can produce {t} questions"),
                ));
            }
        }
        Ok(())
    }
}

/// Task type of a motion question asked about `state`, from the two
/// hypothetical tests.
pub(crate) fn motion_task_type(family: QuestionFamily, state: &WorldState) -> TaskType {
    let gt = family.answer_label(state, None);
    let flip = family.answer_label(
        &apply_transformation(state, Transformation::HorizontalFlip),
        None,
    ) != gt;
    let rev = family.answer_label(
        &apply_transformation(state, Transformation::TemporalReversal),
        None,
    ) != gt;
    classify(flip, rev)
}
