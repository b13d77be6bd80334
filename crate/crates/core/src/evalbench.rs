//! Paired evaluation.
//!
//! A pair is two clips that share a question and option set but have
//! different correct answers. Pair accuracy (P-Acc) credits a pair only if
//! both sides are answered correctly, so any predictor that cannot tell
//! the two clips apart scores zero on every pair.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::policy::{greedy, sample_index, softmax_prob, PolicyParams};
use crate::seeds::{rng_for, Stream};
use crate::types::{AnswerId, ObservationChannel, Question, Transformation, WorldState};
use crate::world::{build_paired_benchmark, observe, InstancePair, WorldConfig, WorldInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    ReversibleDynamics,
    MovingDirection,
    EventSequence,
}

impl Subtask {
    pub const ALL: [Subtask; 3] = [
        Subtask::ReversibleDynamics,
        Subtask::MovingDirection,
        Subtask::EventSequence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subtask::ReversibleDynamics => "reversible_dynamics",
            Subtask::MovingDirection => "moving_direction",
            Subtask::EventSequence => "event_sequence",
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::A, Side::B];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "a",
            Side::B => "b",
        })
    }
}

/// One line of a benchmark manifest.
///
/// `question` carries side A's ground truth. The optional states make a
/// record evaluable under visual channels; without them only the text
/// channel can be scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub pair_id: String,
    pub question: Question,
    pub answer_a: AnswerId,
    pub answer_b: AnswerId,
    pub transformation: Transformation,
    pub subtask: Subtask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_a: Option<WorldState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_b: Option<WorldState>,
}

impl PairRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidPair {
            pair_id: self.pair_id.clone(),
            reason,
        };
        if self.answer_a == self.answer_b {
            return Err(bad(format!(
                "answer_a and answer_b are both {}",
                self.answer_a
            )));
        }
        let n = self.question.options.len();
        for (name, a) in [("answer_a", self.answer_a), ("answer_b", self.answer_b)] {
            match a {
                AnswerId::Null => return Err(bad(format!("{name} may not be the null option"))),
                AnswerId::Listed(i) if i >= n => {
                    return Err(bad(format!("{name} = {i} is out of range for {n} options")))
                }
                AnswerId::Listed(_) => {}
            }
        }
        if self.question.ground_truth != self.answer_a {
            return Err(bad("question.ground_truth must equal answer_a".into()));
        }
        Ok(())
    }

    pub fn answer(&self, side: Side) -> AnswerId {
        match side {
            Side::A => self.answer_a,
            Side::B => self.answer_b,
        }
    }

    pub fn state(&self, side: Side) -> Option<&WorldState> {
        match side {
            Side::A => self.state_a.as_ref(),
            Side::B => self.state_b.as_ref(),
        }
    }

    /// Manifest record for a generated pair.
    pub fn from_pair(pair_id: impl Into<String>, pair: &InstancePair) -> PairRecord {
        PairRecord {
            pair_id: pair_id.into(),
            question: pair.a.question.clone(),
            answer_a: pair.a.question.ground_truth,
            answer_b: pair.b.question.ground_truth,
            transformation: pair.transformation,
            subtask: pair.subtask(),
            state_a: Some(pair.a.state.clone()),
            state_b: Some(pair.b.state.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtaskScore {
    pub acc: f64,
    pub p_acc: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub p_acc: f64,
    pub per_subtask: BTreeMap<Subtask, SubtaskScore>,
    pub n_pairs: usize,
}

/// Predictions keyed by `(pair_id, side)`.
pub type Predictions = HashMap<(String, Side), AnswerId>;

#[derive(Default, Clone, Copy)]
struct Counts {
    correct: usize,
    pairs_correct: usize,
    pairs: usize,
}

impl Counts {
    fn score(self) -> SubtaskScore {
        let (acc, p_acc) = if self.pairs == 0 {
            (0.0, 0.0)
        } else {
            (
                self.correct as f64 / (2 * self.pairs) as f64,
                self.pairs_correct as f64 / self.pairs as f64,
            )
        };
        SubtaskScore {
            acc,
            p_acc,
            n_pairs: self.pairs,
        }
    }
}

/// Scores predictions. Every record needs a prediction on both sides.
pub fn pair_accuracy(records: &[PairRecord], predictions: &Predictions) -> Result<EvalReport> {
    let mut total = Counts::default();
    let mut by_subtask: BTreeMap<Subtask, Counts> = BTreeMap::new();
    for r in records {
        let mut n_ok = 0;
        for side in Side::BOTH {
            let p = predictions.get(&(r.pair_id.clone(), side)).ok_or_else(|| {
                Error::MissingPrediction {
                    pair_id: r.pair_id.clone(),
                    side: side.to_string(),
                }
            })?;
            if *p == r.answer(side) {
                n_ok += 1;
            }
        }
        for c in [&mut total, by_subtask.entry(r.subtask).or_default()] {
            c.correct += n_ok;
            c.pairs_correct += usize::from(n_ok == 2);
            c.pairs += 1;
        }
    }
    let overall = total.score();
    Ok(EvalReport {
        acc: overall.acc,
        p_acc: overall.p_acc,
        per_subtask: by_subtask
            .into_iter()
            .map(|(k, c)| (k, c.score()))
            .collect(),
        n_pairs: total.pairs,
    })
}

/// Accuracy and pair accuracy of a uniform guesser over the real options
/// of each pair.
pub fn chance_rates(option_counts: &[usize]) -> (f64, f64) {
    if option_counts.is_empty() {
        return (0.0, 0.0);
    }
    let n = option_counts.len() as f64;
    let acc = option_counts.iter().map(|&k| 1.0 / k as f64).sum::<f64>() / n;
    let p_acc = option_counts
        .iter()
        .map(|&k| 1.0 / (k * k) as f64)
        .sum::<f64>()
        / n;
    (acc, p_acc)
}

/// How a policy turns probabilities into an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decode {
    /// Most likely choice, ties to the lowest index.
    #[default]
    Greedy,
    /// One draw per side from a stream derived from `seed`.
    Sample { seed: u64 },
}

fn decide(
    params: &PolicyParams,
    obs: &crate::world::Observation,
    choices: &[String],
    decode: Decode,
    draw: u64,
) -> AnswerId {
    let idx = match decode {
        Decode::Greedy => greedy(params, obs, choices),
        Decode::Sample { seed } => {
            let probs = softmax_prob(params, obs, choices);
            sample_index(&probs, &mut rng_for(seed, Stream::Eval, draw))
        }
    };
    AnswerId::from_index(idx, choices.len() - 1).expect("index within choices")
}

/// Predictions of `params` on manifest records under `channel`.
///
/// Records without states can only be scored on the text channel.
pub fn predict_records(
    params: &PolicyParams,
    records: &[PairRecord],
    channel: ObservationChannel,
    decode: Decode,
) -> Result<Predictions> {
    let mut out = Predictions::with_capacity(records.len() * 2);
    let blank = WorldState {
        direction: crate::types::Direction::None,
        arrow: crate::types::ArrowOfTime::Forward,
        order: crate::types::EventOrder::AB,
        statics: BTreeMap::new(),
    };
    let choices = |r: &PairRecord| r.question.choices();
    for (i, r) in records.iter().enumerate() {
        let choices = choices(r);
        for (k, side) in Side::BOTH.into_iter().enumerate() {
            let state = match (r.state(side), channel) {
                (Some(s), _) => s,
                (None, ObservationChannel::TextOnly) => &blank,
                (None, _) => {
                    return Err(Error::InvalidPair {
                        pair_id: r.pair_id.clone(),
                        reason: format!("no state_{side}; only text_only can be evaluated"),
                    })
                }
            };
            let obs = observe(state, &r.question, channel);
            let draw = (2 * i + k) as u64;
            out.insert(
                (r.pair_id.clone(), side),
                decide(params, &obs, &choices, decode, draw),
            );
        }
    }
    Ok(out)
}

/// Runs a policy on both sides of every pair and scores the result.
pub fn evaluate_policy(
    params: &PolicyParams,
    pairs: &[InstancePair],
    channel: ObservationChannel,
    decode: Decode,
) -> EvalReport {
    let records = records_for(pairs);
    evaluate_records(params, &records, channel, decode).expect("generated records carry states")
}

/// [`evaluate_policy`] for manifest records.
pub fn evaluate_records(
    params: &PolicyParams,
    records: &[PairRecord],
    channel: ObservationChannel,
    decode: Decode,
) -> Result<EvalReport> {
    let preds = predict_records(params, records, channel, decode)?;
    pair_accuracy(records, &preds)
}

/// Greedy accuracy on individual instances.
pub fn evaluate_singles(
    params: &PolicyParams,
    instances: &[WorldInstance],
    channel: ObservationChannel,
) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    let correct = instances
        .iter()
        .filter(|inst| {
            let choices = inst.question.choices();
            let idx = greedy(params, &inst.observe(channel), &choices);
            AnswerId::from_index(idx, choices.len() - 1) == Some(inst.question.ground_truth)
        })
        .count();
    correct as f64 / instances.len() as f64
}

/// Manifest records with ids `pair-00000`, `pair-00001`, ...
pub fn records_for(pairs: &[InstancePair]) -> Vec<PairRecord> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| PairRecord::from_pair(format!("pair-{i:05}"), p))
        .collect()
}

/// A synthetic manifest drawn from the dynamic part of `world`.
pub fn synthetic_manifest(
    world: &WorldConfig,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<PairRecord>> {
    let mut rng = rng_for(seed, Stream::Eval, u64::MAX);
    let pairs = build_paired_benchmark(&world.dynamic_only(), n_pairs, &mut rng)?;
    Ok(records_for(&pairs))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let record: PairRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        record.validate().map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(record.pair_id.clone()) {
            return Err(parse_err(format!("duplicate pair_id `{}`", record.pair_id)));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn save_manifest(records: &[PairRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        r.validate()?;
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}
