//! Task router: turns the outcomes of the two hypothetical tests ("would
//! the answer change under a horizontal flip?", "... under temporal
//! reversal?") into a [`TaskType`] and picks the counterfactual
//! transformation for training.
//!
//! The router never looks at a video. Test outcomes come either from the
//! synthetic world, where they are computed analytically, or from a
//! JSON-lines label file.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Question, TaskType, Transformation};

/// Decision matrix over the two test outcomes.
pub fn classify(flip_changes: bool, reversal_changes: bool) -> TaskType {
    match (flip_changes, reversal_changes) {
        (true, false) => TaskType::Spatial,
        (false, true) => TaskType::Temporal,
        (true, true) => TaskType::Spatiotemporal,
        (false, false) => TaskType::Static,
    }
}

pub fn is_dynamic(t: TaskType) -> bool {
    t.is_dynamic()
}

/// Transformation used to build the counterfactual branch. Spatial and
/// temporal questions are deterministic; the rest toss a fair coin between
/// flip and reversal. Segment reordering is never chosen here.
pub fn select_transformation<R: Rng + ?Sized>(t: TaskType, rng: &mut R) -> Transformation {
    match t {
        TaskType::Spatial => Transformation::HorizontalFlip,
        TaskType::Temporal => Transformation::TemporalReversal,
        TaskType::Spatiotemporal | TaskType::Static => {
            if rng.gen_bool(0.5) {
                Transformation::HorizontalFlip
            } else {
                Transformation::TemporalReversal
            }
        }
    }
}

/// Routes a question, flipping each test outcome independently with
/// probability `noise_rate` to model router mistakes.
pub fn route<R: Rng + ?Sized>(q: &Question, noise_rate: f64, rng: &mut R) -> TaskType {
    if noise_rate <= 0.0 {
        return classify(q.flip_changes_answer, q.reversal_changes_answer);
    }
    let flip = q.flip_changes_answer ^ rng.gen_bool(noise_rate.min(1.0));
    let rev = q.reversal_changes_answer ^ rng.gen_bool(noise_rate.min(1.0));
    classify(flip, rev)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterStats {
    pub counts: BTreeMap<TaskType, u64>,
    pub per_source: BTreeMap<String, BTreeMap<TaskType, u64>>,
}

impl RouterStats {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

fn zero_counts() -> BTreeMap<TaskType, u64> {
    TaskType::ALL.into_iter().map(|t| (t, 0)).collect()
}

/// Counts questions per task type, overall and per source. Questions absent
/// from `sources` are attributed to `"unknown"`.
pub fn tally(questions: &[Question], sources: &HashMap<String, String>) -> RouterStats {
    let mut stats = RouterStats {
        counts: zero_counts(),
        per_source: BTreeMap::new(),
    };
    for q in questions {
        let t = classify(q.flip_changes_answer, q.reversal_changes_answer);
        *stats.counts.entry(t).or_default() += 1;
        let source = sources.get(&q.id).map_or("unknown", String::as_str);
        *stats
            .per_source
            .entry(source.to_string())
            .or_insert_with(zero_counts)
            .entry(t)
            .or_default() += 1;
    }
    stats
}

/// One line of a router label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterLabel {
    pub question_id: String,
    pub flip_changes: bool,
    pub reversal_changes: bool,
}

impl RouterLabel {
    pub fn task_type(&self) -> TaskType {
        classify(self.flip_changes, self.reversal_changes)
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<RouterLabel>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let label = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(label);
    }
    Ok(out)
}

/// Overwrites test outcomes and task types of labelled questions. Returns
/// how many questions were updated.
pub fn apply_labels(questions: &mut [Question], labels: &[RouterLabel]) -> usize {
    let by_id: HashMap<&str, &RouterLabel> =
        labels.iter().map(|l| (l.question_id.as_str(), l)).collect();
    let mut updated = 0;
    for q in questions.iter_mut() {
        if let Some(l) = by_id.get(q.id.as_str()) {
            q.flip_changes_answer = l.flip_changes;
            q.reversal_changes_answer = l.reversal_changes;
            q.task_type = l.task_type();
            updated += 1;
        }
    }
    updated
}
