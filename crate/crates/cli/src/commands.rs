//! The four subcommands.
//!
//! Each command writes human-readable progress to the supplied writer and
//! machine-readable artifacts to disk. Nothing written depends on wall
//! time or thread scheduling, so reruns produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crpo::evalbench::{
    evaluate_records, load_manifest, synthetic_manifest, Decode, EvalReport, PairRecord,
};
use crpo::optimizer::{train, PolicyParams, StdEstimator, StepDiagnostics};
use crpo::selfcheck::{run_all, SelfCheckConfig};
use crpo::types::{ObservationChannel, RewardConfig};
use serde::Serialize;

use crate::config::{output_root, ExperimentConfig};
use crate::error::CliError;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const POLICY_FILE: &str = "policy.json";
pub const RUN_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

/// Contents of `run.json`.
#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    config_hash: String,
    seed: u64,
    algorithm: String,
    steps: usize,
    version: &'static str,
    reward: &'a RewardConfig,
}

/// Renders diagnostics as CSV with a header row.
pub fn diagnostics_csv(rows: &[StepDiagnostics]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(StepDiagnostics::CSV_HEADER);
    s.push('\n');
    for row in rows {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}

/// Trains under `cfg` with the reward coefficients `reward` and writes the
/// three run artifacts into `dir`.
pub fn train_into(
    cfg: &ExperimentConfig,
    reward: &RewardConfig,
    dir: &Path,
) -> Result<PolicyParams, CliError> {
    create_dir(dir)?;
    let (params, diagnostics) = train(&PolicyParams::default(), &cfg.world, &cfg.train, reward)?;
    write_file(
        &dir.join(DIAGNOSTICS_FILE),
        diagnostics_csv(&diagnostics).as_bytes(),
    )?;
    write_json(&dir.join(POLICY_FILE), &params)?;
    let mut effective = cfg.clone();
    effective.reward = *reward;
    write_json(
        &dir.join(RUN_FILE),
        &RunRecord {
            config_hash: effective.hash(),
            seed: cfg.train.seed,
            algorithm: cfg.train.algorithm.to_string(),
            steps: cfg.train.steps,
            version: env!("CARGO_PKG_VERSION"),
            reward,
        },
    )?;
    Ok(params)
}

pub fn cmd_train(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = cfg.output_root();
    train_into(&cfg, &cfg.reward, &dir)?;
    say(
        out,
        format_args!(
            "trained {} for {} steps (seed {}); wrote {}",
            cfg.train.algorithm,
            cfg.train.steps,
            cfg.train.seed,
            dir.display()
        ),
    )
}

/// Loads a policy file. A missing file is an I/O failure; a malformed one
/// is an input error naming the offending field.
pub fn load_policy(path: &Path) -> Result<PolicyParams, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let params: PolicyParams =
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Input {
            what: "policy",
            path: path.to_path_buf(),
            reason: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
    params.validate().map_err(|e| CliError::Input {
        what: "policy",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(params)
}

/// Evaluates `params` on `records` under each channel, writing one report
/// per channel plus a summary CSV into `dir`.
pub fn eval_into(
    params: &PolicyParams,
    records: &[PairRecord],
    channels: &[ObservationChannel],
    decode: Decode,
    dir: &Path,
) -> Result<Vec<(ObservationChannel, EvalReport)>, CliError> {
    create_dir(dir)?;
    let mut reports = Vec::with_capacity(channels.len());
    let mut summary = String::from("channel,n_pairs,acc,p_acc\n");
    for &channel in channels {
        if reports.iter().any(|(c, _)| *c == channel) {
            continue;
        }
        let report = evaluate_records(params, records, channel, decode)?;
        write_json(&dir.join(format!("report_{channel}.json")), &report)?;
        summary.push_str(&format!(
            "{channel},{},{},{}\n",
            report.n_pairs, report.acc, report.p_acc
        ));
        reports.push((channel, report));
    }
    write_file(&dir.join(SUMMARY_FILE), summary.as_bytes())?;
    Ok(reports)
}

/// Where `eval` gets its pairs.
#[derive(Debug, Clone, PartialEq)]
pub enum PairSource {
    Manifest(PathBuf),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalArgs {
    pub policy: PathBuf,
    pub source: PairSource,
    /// Empty means the config's channels.
    pub channels: Vec<ObservationChannel>,
    /// Supplies the world, pair count, seed and output root.
    pub config: Option<PathBuf>,
    /// Overrides the output directory.
    pub out_dir: Option<PathBuf>,
    pub decode: Decode,
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = load_policy(&args.policy)?;
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let records = match &args.source {
        PairSource::Manifest(path) => load_manifest(path)?,
        PairSource::Synthetic => synthetic_manifest(&cfg.world, cfg.eval.n_pairs, cfg.train.seed)?,
    };
    let channels = if args.channels.is_empty() {
        cfg.eval.channels.clone()
    } else {
        args.channels.clone()
    };
    let dir = match (&args.out_dir, &args.config) {
        (Some(d), _) => d.clone(),
        (None, Some(_)) => cfg.output_root().join("eval"),
        (None, None) => output_root(None).join("eval"),
    };
    let reports = eval_into(&params, &records, &channels, args.decode, &dir)?;
    say(
        out,
        format_args!(
            "{:<16} {:>7} {:>8} {:>8}",
            "channel", "pairs", "acc", "p_acc"
        ),
    )?;
    for (channel, r) in &reports {
        say(
            out,
            format_args!(
                "{:<16} {:>7} {:>8.4} {:>8.4}",
                channel.as_str(),
                r.n_pairs,
                r.acc,
                r.p_acc
            ),
        )?;
    }
    say(out, format_args!("wrote {}", dir.display()))
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub channel: ObservationChannel,
    pub acc: f64,
    pub p_acc: f64,
}

/// Runs one train+eval per sweep value. Points run on separate threads,
/// each in its own subdirectory, and share the world, rollout and
/// evaluation streams because they share the seed.
pub fn run_sweep(cfg: &ExperimentConfig, root: &Path) -> Result<Vec<SweepRow>, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("sweep", "section is required by the sweep command"))?;
    let records = synthetic_manifest(&cfg.world, cfg.eval.n_pairs, cfg.train.seed)?;
    let sweep_dir = root.join("sweep");
    create_dir(&sweep_dir)?;
    let results: Vec<Result<Vec<SweepRow>, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sweep
            .values
            .iter()
            .map(|&value| {
                let records = &records;
                let dir = sweep_dir.join(format!("{}-{}", sweep.param, value));
                scope.spawn(move || -> Result<Vec<SweepRow>, CliError> {
                    let reward = sweep.param.apply(&cfg.reward, value);
                    let params = train_into(cfg, &reward, &dir)?;
                    let reports =
                        eval_into(&params, records, &cfg.eval.channels, Decode::Greedy, &dir)?;
                    Ok(reports
                        .into_iter()
                        .map(|(channel, r)| SweepRow {
                            value,
                            channel,
                            acc: r.acc,
                            p_acc: r.p_acc,
                        })
                        .collect())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    let mut csv = String::from("param,value,channel,acc,p_acc\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            sweep.param, row.value, row.channel, row.acc, row.p_acc
        ));
    }
    write_file(&sweep_dir.join(SWEEP_FILE), csv.as_bytes())?;
    Ok(rows)
}

pub fn cmd_sweep(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let root = cfg.output_root();
    let rows = run_sweep(&cfg, &root)?;
    let param = cfg
        .sweep
        .as_ref()
        .map(|s| s.param.as_str())
        .unwrap_or_default();
    say(
        out,
        format_args!("{:<8} {:<16} {:>8} {:>8}", param, "channel", "acc", "p_acc"),
    )?;
    for r in &rows {
        say(
            out,
            format_args!(
                "{:<8} {:<16} {:>8.4} {:>8.4}",
                r.value,
                r.channel.as_str(),
                r.acc,
                r.p_acc
            ),
        )?;
    }
    say(out, format_args!("wrote {}", root.join("sweep").display()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyArgs {
    pub seed: u64,
    pub trials: usize,
    /// Swap in the sample standard deviation. Only useful for checking
    /// that the self-check catches it.
    pub inject_sample_std: bool,
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::config("trials", "must be at least 1"));
    }
    let cfg = SelfCheckConfig {
        seed: args.seed,
        trials: args.trials,
        estimator: if args.inject_sample_std {
            StdEstimator::Sample
        } else {
            StdEstimator::Population
        },
    };
    let outcomes = run_all(&cfg);
    let width = outcomes
        .iter()
        .map(|o| o.name.len())
        .max()
        .unwrap_or(5)
        .max(5);
    say(out, format_args!("{:<width$}  status  detail", "check"))?;
    for o in &outcomes {
        let status = if o.passed { "pass" } else { "FAIL" };
        say(
            out,
            format_args!("{:<width$}  {:<6}  {}", o.name, status, o.detail),
        )?;
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.name.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}
