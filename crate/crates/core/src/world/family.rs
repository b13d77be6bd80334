use serde::{Deserialize, Serialize};

use crate::evalbench::Subtask;
use crate::types::{ArrowOfTime, Direction, EventOrder, WorldState};

/// Kind of question the synthetic world can ask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFamily {
    /// Which way does the object move on screen?
    Direction,
    /// Which way is the actor facing? Unchanged by playing the clip
    /// backwards, mirrored by a flip.
    Heading,
    /// Is the change playing forward or backward in time?
    Arrow,
    /// Which of the two events happens first?
    Order,
    /// A static attribute (color, count, ...).
    Attribute,
}

const ARROW_LABELS: [&str; 3] = ["forward", "backward", "unchanged"];
const ORDER_LABELS: [&str; 2] = ["a_then_b", "b_then_a"];

impl QuestionFamily {
    pub const ALL: [QuestionFamily; 5] = [
        QuestionFamily::Direction,
        QuestionFamily::Heading,
        QuestionFamily::Arrow,
        QuestionFamily::Order,
        QuestionFamily::Attribute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionFamily::Direction => "direction",
            QuestionFamily::Heading => "heading",
            QuestionFamily::Arrow => "arrow",
            QuestionFamily::Order => "order",
            QuestionFamily::Attribute => "attribute",
        }
    }

    pub fn is_motion(self) -> bool {
        !matches!(self, QuestionFamily::Attribute)
    }

    pub fn prompt_key(self, attribute: Option<&str>) -> String {
        match self {
            QuestionFamily::Direction => "direction".into(),
            QuestionFamily::Heading => "heading".into(),
            QuestionFamily::Arrow => "arrow_of_time".into(),
            QuestionFamily::Order => "event_order".into(),
            QuestionFamily::Attribute => format!("attribute:{}", attribute.unwrap_or("?")),
        }
    }

    /// Fixed label vocabulary of a motion family. Attribute questions take
    /// their labels from the static registry instead.
    pub fn motion_labels(self) -> Vec<String> {
        match self {
            QuestionFamily::Direction | QuestionFamily::Heading => Direction::ALL
                .iter()
                .map(|d| d.as_str().to_string())
                .collect(),
            QuestionFamily::Arrow => ARROW_LABELS.iter().map(|s| s.to_string()).collect(),
            QuestionFamily::Order => ORDER_LABELS.iter().map(|s| s.to_string()).collect(),
            QuestionFamily::Attribute => Vec::new(),
        }
    }

    /// The correct label for `state`.
    pub fn answer_label(self, state: &WorldState, attribute: Option<&str>) -> String {
        match self {
            QuestionFamily::Direction => state.direction.as_str().into(),
            QuestionFamily::Heading => heading(state).as_str().into(),
            QuestionFamily::Arrow => match state.arrow {
                ArrowOfTime::Forward => ARROW_LABELS[0].into(),
                ArrowOfTime::Backward => ARROW_LABELS[1].into(),
            },
            QuestionFamily::Order => match state.order {
                EventOrder::AB => ORDER_LABELS[0].into(),
                EventOrder::BA => ORDER_LABELS[1].into(),
            },
            QuestionFamily::Attribute => attribute
                .and_then(|a| state.statics.get(a))
                .cloned()
                .unwrap_or_default(),
        }
    }

    pub fn subtask(self) -> Option<Subtask> {
        match self {
            QuestionFamily::Direction | QuestionFamily::Heading => Some(Subtask::MovingDirection),
            QuestionFamily::Arrow => Some(Subtask::ReversibleDynamics),
            QuestionFamily::Order => Some(Subtask::EventSequence),
            QuestionFamily::Attribute => None,
        }
    }
}

/// Facing direction: the on-screen motion with the playback direction
/// undone.
fn heading(state: &WorldState) -> Direction {
    match state.arrow {
        ArrowOfTime::Forward => state.direction,
        ArrowOfTime::Backward => state.direction.reversed(),
    }
}
