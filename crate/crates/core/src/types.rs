//! Domain types shared by every module: task categories, transformations,
//! questions, latent world states, rollouts and reward bookkeeping.
//!
//! Everything here is plain data. Behaviour lives in the modules that own
//! it; the only logic in this file is construction, validation and
//! (de)serialization.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::router;

/// Label of the option appended to every multiple-choice question.
pub const NULL_OPTION_LABEL: &str = "none of the above";

/// Smallest and largest number of real options a question may carry.
pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 8;

/// Category assigned by the task router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    Spatial,
    Temporal,
    Spatiotemporal,
    Static,
}

impl TaskType {
    pub const ALL: [TaskType; 4] = [
        TaskType::Spatial,
        TaskType::Temporal,
        TaskType::Spatiotemporal,
        TaskType::Static,
    ];

    pub fn is_dynamic(self) -> bool {
        !matches!(self, TaskType::Static)
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskType::Spatial => "Spatial",
            TaskType::Temporal => "Temporal",
            TaskType::Spatiotemporal => "Spatiotemporal",
            TaskType::Static => "Static",
        };
        f.write_str(s)
    }
}

/// A controlled change of the world. Each variant is an involution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transformation {
    HorizontalFlip,
    TemporalReversal,
    SegmentReorder,
}

impl Transformation {
    pub const ALL: [Transformation; 3] = [
        Transformation::HorizontalFlip,
        Transformation::TemporalReversal,
        Transformation::SegmentReorder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Transformation::HorizontalFlip => "horizontal_flip",
            Transformation::TemporalReversal => "temporal_reversal",
            Transformation::SegmentReorder => "segment_reorder",
        }
    }
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Index of an answer within a question's option list, or the appended
/// null option.
///
/// In contiguous option arrays (real options followed by the null option)
/// the null option sits at index `options.len()`. On the wire a listed
/// option is its integer index and the null option is the string
/// `"null_option"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnswerId {
    Listed(usize),
    Null,
}

const NULL_OPTION_TAG: &str = "null_option";

impl AnswerId {
    pub fn is_null(self) -> bool {
        matches!(self, AnswerId::Null)
    }

    /// Position in a contiguous choice array of `n_options` real options
    /// plus the null option.
    pub fn index(self, n_options: usize) -> usize {
        match self {
            AnswerId::Listed(i) => i,
            AnswerId::Null => n_options,
        }
    }

    /// Inverse of [`AnswerId::index`]. Returns `None` past the null slot.
    pub fn from_index(index: usize, n_options: usize) -> Option<AnswerId> {
        match index.cmp(&n_options) {
            std::cmp::Ordering::Less => Some(AnswerId::Listed(index)),
            std::cmp::Ordering::Equal => Some(AnswerId::Null),
            std::cmp::Ordering::Greater => None,
        }
    }
}

impl fmt::Display for AnswerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerId::Listed(i) => write!(f, "{i}"),
            AnswerId::Null => f.write_str(NULL_OPTION_TAG),
        }
    }
}

impl Serialize for AnswerId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AnswerId::Listed(i) => serializer.serialize_u64(*i as u64),
            AnswerId::Null => serializer.serialize_str(NULL_OPTION_TAG),
        }
    }
}

impl<'de> Deserialize<'de> for AnswerId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Index(u64),
            Tag(String),
        }
        match Wire::deserialize(deserializer)? {
            Wire::Index(i) => Ok(AnswerId::Listed(i as usize)),
            Wire::Tag(s) if s == NULL_OPTION_TAG => Ok(AnswerId::Null),
            Wire::Tag(s) => Err(serde::de::Error::custom(format!(
                "expected an option index or \"{NULL_OPTION_TAG}\", found \"{s}\""
            ))),
        }
    }
}

/// A multiple-choice question. `options` excludes the appended null option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    /// Conditioning key shared by every question asked the same way.
    pub prompt_key: String,
    pub options: Vec<String>,
    pub ground_truth: AnswerId,
    pub task_type: TaskType,
    /// Would the correct answer change under a horizontal flip?
    pub flip_changes_answer: bool,
    /// Would the correct answer change under temporal reversal?
    pub reversal_changes_answer: bool,
}

impl Question {
    /// Real options followed by the null option.
    pub fn choices(&self) -> Vec<String> {
        let mut out = self.options.clone();
        out.push(NULL_OPTION_LABEL.to_string());
        out
    }

    pub fn label(&self, answer: AnswerId) -> Option<&str> {
        match answer {
            AnswerId::Listed(i) => self.options.get(i).map(String::as_str),
            AnswerId::Null => Some(NULL_OPTION_LABEL),
        }
    }

    /// The answer id under which `label` is listed, or the null option.
    pub fn answer_for_label(&self, label: &str) -> AnswerId {
        self.options
            .iter()
            .position(|o| o == label)
            .map_or(AnswerId::Null, AnswerId::Listed)
    }
}

/// One broken invariant of a [`Question`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NullGroundTruth,
    GroundTruthOutOfRange {
        index: usize,
        n_options: usize,
    },
    OptionCount(usize),
    DuplicateOption(String),
    ReservedLabel,
    TaskTypeMismatch {
        declared: TaskType,
        implied: TaskType,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NullGroundTruth => f.write_str("ground truth may not be null option"),
            Violation::GroundTruthOutOfRange { index, n_options } => {
                write!(
                    f,
                    "ground truth index {index} out of range for {n_options} options"
                )
            }
            Violation::OptionCount(n) => {
                write!(f, "option count {n} outside {MIN_OPTIONS}..={MAX_OPTIONS}")
            }
            Violation::DuplicateOption(l) => write!(f, "duplicate option label `{l}`"),
            Violation::ReservedLabel => {
                write!(
                    f,
                    "option label `{NULL_OPTION_LABEL}` is reserved for the null option"
                )
            }
            Violation::TaskTypeMismatch { declared, implied } => write!(
                f,
                "task type inconsistent with tests: declared {declared}, tests imply {implied}"
            ),
        }
    }
}

/// Lists every invariant `q` breaks. An empty report means well-formed.
pub fn validate_question(q: &Question) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = q.options.len();
    match q.ground_truth {
        AnswerId::Null => out.push(Violation::NullGroundTruth),
        AnswerId::Listed(i) if i >= n => out.push(Violation::GroundTruthOutOfRange {
            index: i,
            n_options: n,
        }),
        AnswerId::Listed(_) => {}
    }
    if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&n) {
        out.push(Violation::OptionCount(n));
    }
    for (i, label) in q.options.iter().enumerate() {
        if label == NULL_OPTION_LABEL {
            out.push(Violation::ReservedLabel);
        }
        if q.options[..i].contains(label) {
            out.push(Violation::DuplicateOption(label.clone()));
        }
    }
    let implied = router::classify(q.flip_changes_answer, q.reversal_changes_answer);
    if implied != q.task_type {
        out.push(Violation::TaskTypeMismatch {
            declared: q.task_type,
            implied,
        });
    }
    out
}

/// Motion direction in the image plane, `None` for a stationary scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
    None,
}

impl Direction {
    pub const ALL: [Direction; 9] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
        Direction::UpLeft,
        Direction::UpRight,
        Direction::DownLeft,
        Direction::DownRight,
        Direction::None,
    ];

    /// Left-right mirror image.
    pub fn mirrored(self) -> Direction {
        use Direction::*;
        match self {
            Left => Right,
            Right => Left,
            UpLeft => UpRight,
            UpRight => UpLeft,
            DownLeft => DownRight,
            DownRight => DownLeft,
            d => d,
        }
    }

    /// The opposite vector.
    pub fn reversed(self) -> Direction {
        use Direction::*;
        match self {
            Left => Right,
            Right => Left,
            Up => Down,
            Down => Up,
            UpLeft => DownRight,
            DownRight => UpLeft,
            UpRight => DownLeft,
            DownLeft => UpRight,
            None => None,
        }
    }

    pub fn has_horizontal_component(self) -> bool {
        self.mirrored() != self
    }

    /// The unsigned line of motion.
    pub fn axis(self) -> &'static str {
        use Direction::*;
        match self {
            Left | Right => "horizontal",
            Up | Down => "vertical",
            UpLeft | DownRight => "falling_diagonal",
            UpRight | DownLeft => "rising_diagonal",
            None => "none",
        }
    }

    pub fn as_str(self) -> &'static str {
        use Direction::*;
        match self {
            Left => "left",
            Right => "right",
            Up => "up",
            Down => "down",
            UpLeft => "up_left",
            UpRight => "up_right",
            DownLeft => "down_left",
            DownRight => "down_right",
            None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArrowOfTime {
    Forward,
    Backward,
}

impl ArrowOfTime {
    pub fn flipped(self) -> ArrowOfTime {
        match self {
            ArrowOfTime::Forward => ArrowOfTime::Backward,
            ArrowOfTime::Backward => ArrowOfTime::Forward,
        }
    }
}

/// Order of the two action segments of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventOrder {
    AB,
    BA,
}

impl EventOrder {
    pub fn swapped(self) -> EventOrder {
        match self {
            EventOrder::AB => EventOrder::BA,
            EventOrder::BA => EventOrder::AB,
        }
    }
}

/// Latent content of a clip.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldState {
    pub direction: Direction,
    pub arrow: ArrowOfTime,
    pub order: EventOrder,
    pub statics: BTreeMap<String, String>,
}

/// What part of a [`WorldState`] the policy gets to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationChannel {
    FullVideo,
    SingleFrame,
    ShuffledFrames,
    TextOnly,
}

impl ObservationChannel {
    pub const ALL: [ObservationChannel; 4] = [
        ObservationChannel::FullVideo,
        ObservationChannel::SingleFrame,
        ObservationChannel::ShuffledFrames,
        ObservationChannel::TextOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObservationChannel::FullVideo => "full_video",
            ObservationChannel::SingleFrame => "single_frame",
            ObservationChannel::ShuffledFrames => "shuffled_frames",
            ObservationChannel::TextOnly => "text_only",
        }
    }
}

impl fmt::Display for ObservationChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObservationChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObservationChannel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::config(
                    "channel",
                    format!("unknown channel `{s}` (expected full_video, single_frame, shuffled_frames or text_only)"),
                )
            })
    }
}

/// One sampled answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rollout {
    pub answer: AnswerId,
    /// Natural log of the answer's probability under the behaviour policy.
    pub logprob: f64,
    pub format_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Original,
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutGroup {
    pub branch: Branch,
    pub rollouts: Vec<Rollout>,
    pub question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformation: Option<Transformation>,
}

impl RolloutGroup {
    /// Checks the group against the configured group size.
    pub fn validate(&self, group_size: usize) -> Result<()> {
        if group_size < 2 {
            return Err(Error::InvalidGroup(format!("group size {group_size} < 2")));
        }
        if self.rollouts.len() != group_size {
            return Err(Error::InvalidGroup(format!(
                "expected {group_size} rollouts, found {}",
                self.rollouts.len()
            )));
        }
        match (self.branch, self.transformation) {
            (Branch::Original, Some(_)) => {
                return Err(Error::InvalidGroup(
                    "original branch may not carry a transformation".into(),
                ))
            }
            (Branch::Counterfactual, None) => {
                return Err(Error::InvalidGroup(
                    "counterfactual branch needs a transformation".into(),
                ))
            }
            _ => {}
        }
        if let Some(r) = self
            .rollouts
            .iter()
            .find(|r| r.logprob > 0.0 || r.logprob.is_nan())
        {
            return Err(Error::InvalidGroup(format!("logprob {} > 0", r.logprob)));
        }
        Ok(())
    }
}

/// Per-rollout reward decomposition. `total = scale * (base + crr + format)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Correctness reward on the original branch, behavioural reward on the
    /// counterfactual branch.
    pub base: f64,
    pub crr: f64,
    pub format: f64,
    pub scale: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(base: f64, crr: f64, format: f64, scale: f64) -> Self {
        RewardBreakdown {
            base,
            crr,
            format,
            scale,
            total: scale * (base + crr + format),
        }
    }
}

/// Reward coefficients for CRPO and the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// CRR weight for dynamic tasks.
    pub lambda_d: f64,
    /// CRR weight for static tasks.
    pub lambda_s: f64,
    /// Weight of the whole counterfactual branch.
    pub w_aug: f64,
    /// Reward granted to a well-formatted rollout.
    pub format_reward_value: f64,
    pub tgrpo_alpha: f64,
    pub arrowrl_alpha: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda_d: 0.3,
            lambda_s: 0.3,
            w_aug: 0.5,
            format_reward_value: 0.0,
            tgrpo_alpha: 0.3,
            arrowrl_alpha: 0.25,
        }
    }
}

impl RewardConfig {
    /// The CRR weight that applies to a task.
    pub fn lambda(&self, dynamic: bool) -> f64 {
        if dynamic {
            self.lambda_d
        } else {
            self.lambda_s
        }
    }

    /// Field paths are reported relative to `prefix` (e.g. `reward`).
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let fields = [
            ("lambda_d", self.lambda_d),
            ("lambda_s", self.lambda_s),
            ("w_aug", self.w_aug),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    format!("{prefix}.{name}"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        let finite = [
            ("format_reward_value", self.format_reward_value),
            ("tgrpo_alpha", self.tgrpo_alpha),
            ("arrowrl_alpha", self.arrowrl_alpha),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("{prefix}.{name}"), "must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn question(gt: AnswerId, flip: bool, rev: bool, t: TaskType) -> Question {
        Question {
            id: "q".into(),
            prompt_key: "direction".into(),
            options: vec!["left".into(), "right".into(), "up".into()],
            ground_truth: gt,
            task_type: t,
            flip_changes_answer: flip,
            reversal_changes_answer: rev,
        }
    }

    #[test]
    fn null_ground_truth_is_reported() {
        let v = validate_question(&question(AnswerId::Null, true, false, TaskType::Spatial));
        assert_eq!(v, vec![Violation::NullGroundTruth]);
        assert_eq!(v[0].to_string(), "ground truth may not be null option");
    }

    #[test]
    fn consistent_spatial_question_is_clean() {
        let v = validate_question(&question(
            AnswerId::Listed(0),
            true,
            false,
            TaskType::Spatial,
        ));
        assert!(v.is_empty());
    }

    #[test]
    fn contradictory_task_type_is_reported() {
        let v = validate_question(&question(
            AnswerId::Listed(1),
            false,
            false,
            TaskType::Temporal,
        ));
        assert_eq!(v.len(), 1);
        assert!(v[0]
            .to_string()
            .starts_with("task type inconsistent with tests"));
    }

    #[test]
    fn option_count_and_duplicates() {
        let mut q = question(AnswerId::Listed(0), false, false, TaskType::Static);
        q.options = vec!["a".into()];
        assert!(validate_question(&q).contains(&Violation::OptionCount(1)));
        q.options = vec!["a".into(), "a".into()];
        assert!(validate_question(&q).contains(&Violation::DuplicateOption("a".into())));
        q.options = vec!["a".into(), NULL_OPTION_LABEL.into()];
        assert!(validate_question(&q).contains(&Violation::ReservedLabel));
    }

    #[test]
    fn answer_id_wire_format() {
        assert_eq!(serde_json::to_string(&AnswerId::Listed(2)).unwrap(), "2");
        assert_eq!(
            serde_json::to_string(&AnswerId::Null).unwrap(),
            "\"null_option\""
        );
        assert_eq!(
            serde_json::from_str::<AnswerId>("\"null_option\"").unwrap(),
            AnswerId::Null
        );
        assert!(serde_json::from_str::<AnswerId>("\"nope\"").is_err());
        assert_eq!(AnswerId::Null.index(3), 3);
        assert_eq!(AnswerId::from_index(3, 3), Some(AnswerId::Null));
        assert_eq!(AnswerId::from_index(4, 3), None);
    }

    #[test]
    fn null_option_is_last_choice() {
        let q = question(AnswerId::Listed(0), true, false, TaskType::Spatial);
        let choices = q.choices();
        assert_eq!(choices.last().unwrap(), NULL_OPTION_LABEL);
        assert_eq!(q.answer_for_label("down"), AnswerId::Null);
        assert_eq!(q.answer_for_label("up"), AnswerId::Listed(2));
    }

    #[test]
    fn task_type_labels() {
        let s = serde_json::to_string(&TaskType::ALL).unwrap();
        assert_eq!(s, r#"["Spatial","Temporal","Spatiotemporal","Static"]"#);
    }

    #[test]
    fn rollout_group_checks() {
        let r = Rollout {
            answer: AnswerId::Listed(0),
            logprob: -0.5,
            format_ok: true,
        };
        let mut g = RolloutGroup {
            branch: Branch::Counterfactual,
            rollouts: vec![r, r],
            question_id: "q".into(),
            transformation: None,
        };
        assert!(g.validate(2).is_err());
        g.transformation = Some(Transformation::HorizontalFlip);
        assert!(g.validate(2).is_ok());
        assert!(g.validate(3).is_err());
        g.rollouts[0].logprob = 0.1;
        assert!(g.validate(2).is_err());
    }

    #[test]
    fn breakdown_total() {
        let b = RewardBreakdown::new(1.0, 0.225, 0.0, 0.5);
        assert!((b.total - 0.6125).abs() < 1e-12);
    }

    #[test]
    fn reward_defaults() {
        let c = RewardConfig::default();
        assert_eq!((c.lambda_d, c.lambda_s, c.w_aug), (0.3, 0.3, 0.5));
        assert_eq!((c.tgrpo_alpha, c.arrowrl_alpha), (0.3, 0.25));
        assert_eq!(c.format_reward_value, 0.0);
        let bad = RewardConfig { w_aug: -1.0, ..c };
        let err = bad.validate("reward").unwrap_err().to_string();
        assert!(err.starts_with("reward.w_aug"), "{err}");
    }
}
