use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crpo::evalbench::{save_manifest, synthetic_manifest, PairRecord, Side};
use crpo::optimizer::PolicyParams;
use crpo::types::ObservationChannel;
use crpo::world::WorldConfig;

fn crpo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crpo"))
        .args(args)
        .current_dir(dir)
        .env_remove("CRPO_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_writes_its_three_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"train": {"steps": 30}, "output_dir": "run"}"#,
    );
    let out = crpo(tmp.path(), &["train", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["diagnostics.csv", "policy.json", "run.json"] {
        assert!(tmp.path().join("run").join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(tmp.path().join("run/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(csv
        .starts_with("step,algorithm,mean_correct_reward,zero_advantage_fraction,mean_crr_reward"));
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/run.json")).unwrap())
            .unwrap();
    assert_eq!(run["seed"], 0);
    assert_eq!(run["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn train_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(
        tmp.path(),
        "a.json",
        r#"{"train": {"steps": 50, "seed": 7}, "output_dir": "a"}"#,
    );
    let b = write_config(
        tmp.path(),
        "b.json",
        r#"{"train": {"steps": 50, "seed": 7}, "output_dir": "b"}"#,
    );
    assert!(crpo(tmp.path(), &["train", "--config", &a])
        .status
        .success());
    assert!(crpo(tmp.path(), &["train", "--config", &b])
        .status
        .success());
    for f in ["diagnostics.csv", "policy.json", "run.json"] {
        let x = fs::read(tmp.path().join("a").join(f)).unwrap();
        let y = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn zero_steps_exit_two_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"train": {"steps": 0}}"#);
    let out = crpo(tmp.path(), &["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train.steps"), "{}", stderr(&out));
}

#[test]
fn malformed_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"reward": {"lambda_d": "big"}}"#);
    let out = crpo(tmp.path(), &["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("reward.lambda_d"), "{}", stderr(&out));
}

#[test]
fn output_root_can_be_overridden_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"train": {"steps": 5}, "output_dir": "configured"}"#,
    );
    let out = Command::new(env!("CARGO_BIN_EXE_crpo"))
        .args(["train", "--config", &cfg])
        .current_dir(tmp.path())
        .env("CRPO_OUTPUT_DIR", tmp.path().join("override"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("override/policy.json").is_file());
    assert!(!tmp.path().join("configured").exists());
}

#[test]
fn eval_without_a_policy_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = crpo(
        tmp.path(),
        &["eval", "--policy", "missing.json", "--synthetic"],
    );
    assert_eq!(out.status.code(), Some(1));
}

fn oracle_policy(records: &[PairRecord]) -> PolicyParams {
    let mut params = PolicyParams::default();
    for r in records {
        for side in Side::BOTH {
            let obs = crpo::world::observe(
                r.state(side).unwrap(),
                &r.question,
                ObservationChannel::FullVideo,
            );
            let label = r.question.label(r.answer(side)).unwrap();
            params.set(obs.features().last().unwrap(), label, 50.0);
        }
    }
    params
}

fn report(dir: &Path, channel: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join(format!("report_{channel}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn eval_scores_a_manifest_per_channel() {
    let tmp = tempfile::tempdir().unwrap();
    let records = synthetic_manifest(&WorldConfig::default(), 120, 3).unwrap();
    save_manifest(&records, tmp.path().join("pairs.jsonl")).unwrap();
    fs::write(
        tmp.path().join("oracle.json"),
        serde_json::to_string(&oracle_policy(&records)).unwrap(),
    )
    .unwrap();
    let out = crpo(
        tmp.path(),
        &[
            "eval",
            "--policy",
            "oracle.json",
            "--manifest",
            "pairs.jsonl",
            "--channel",
            "full_video",
            "--channel",
            "single_frame",
            "--channel",
            "shuffled_frames",
            "--channel",
            "text_only",
            "--out",
            "reports",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = tmp.path().join("reports");
    assert_eq!(report(&dir, "full_video")["p_acc"], 1.0);
    assert_eq!(report(&dir, "text_only")["p_acc"], 0.0);
    assert_eq!(report(&dir, "full_video")["n_pairs"], 120);
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("channel,n_pairs,acc,p_acc"));
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn eval_rejects_bad_inputs_with_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("p.json"), r#"{"logits": {}}"#).unwrap();
    fs::write(
        tmp.path().join("bad.json"),
        r#"{"logits": {"f": {"a": "x"}}}"#,
    )
    .unwrap();
    fs::write(tmp.path().join("bad.jsonl"), "{\"pair_id\": 3}\n").unwrap();
    let out = crpo(tmp.path(), &["eval", "--policy", "bad.json", "--synthetic"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = crpo(
        tmp.path(),
        &["eval", "--policy", "p.json", "--manifest", "bad.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains(":1:"), "{}", stderr(&out));
    let out = crpo(
        tmp.path(),
        &["eval", "--policy", "p.json", "--channel", "x_ray"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_of_stateless_records_needs_the_text_channel() {
    let tmp = tempfile::tempdir().unwrap();
    let mut records = synthetic_manifest(&WorldConfig::default(), 10, 1).unwrap();
    for r in &mut records {
        r.state_a = None;
        r.state_b = None;
    }
    save_manifest(&records, tmp.path().join("m.jsonl")).unwrap();
    fs::write(tmp.path().join("p.json"), r#"{"logits": {}}"#).unwrap();
    let ok = crpo(
        tmp.path(),
        &[
            "eval",
            "--policy",
            "p.json",
            "--manifest",
            "m.jsonl",
            "--channel",
            "text_only",
        ],
    );
    assert!(ok.status.success(), "{}", stderr(&ok));
    let bad = crpo(
        tmp.path(),
        &["eval", "--policy", "p.json", "--manifest", "m.jsonl"],
    );
    assert_eq!(bad.status.code(), Some(2), "{}", stderr(&bad));
}

#[test]
fn synthetic_eval_defaults_to_the_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("p.json"), r#"{"logits": {}}"#).unwrap();
    let out = crpo(tmp.path(), &["eval", "--policy", "p.json", "--synthetic"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp
        .path()
        .join("runs/eval/report_full_video.json")
        .is_file());
}

#[test]
fn lambda_sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        r#"{"train": {"steps": 20}, "eval": {"n_pairs": 50}, "output_dir": "out",
            "sweep": {"param": "lambda", "values": [0.0, 0.3]}}"#,
    );
    let out = crpo(tmp.path(), &["sweep", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("out/sweep/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,value,channel,acc,p_acc");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("lambda,0,full_video,"));
    assert!(lines[2].starts_with("lambda,0.3,full_video,"));
    for point in ["lambda-0", "lambda-0.3"] {
        assert!(tmp
            .path()
            .join("out/sweep")
            .join(point)
            .join("policy.json")
            .is_file());
    }
}

#[test]
fn sweep_rejects_negative_values_and_missing_sections() {
    let tmp = tempfile::tempdir().unwrap();
    let neg = write_config(
        tmp.path(),
        "n.json",
        r#"{"sweep": {"param": "w_aug", "values": [0.5, -0.5]}}"#,
    );
    let out = crpo(tmp.path(), &["sweep", "--config", &neg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sweep.values[1]"), "{}", stderr(&out));
    let none = write_config(tmp.path(), "x.json", "{}");
    let out = crpo(tmp.path(), &["sweep", "--config", &none]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sweep"), "{}", stderr(&out));
}

#[test]
fn verify_passes_by_default_and_catches_the_sample_std_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = crpo(tmp.path(), &["verify", "--trials", "2000"]);
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    let table = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(!table.contains("FAIL"));

    let bad = crpo(
        tmp.path(),
        &["verify", "--trials", "2000", "--inject-sample-std"],
    );
    assert_eq!(bad.status.code(), Some(1));
    let table = String::from_utf8_lossy(&bad.stdout);
    let status = |name: &str| {
        table
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap()
            .contains("pass")
    };
    assert!(status("per-group cancellation"));
    assert!(!status("hybrid worked example"));
    assert!(stderr(&bad).contains("hybrid worked example"));
}

#[test]
fn verify_rejects_zero_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let out = crpo(tmp.path(), &["verify", "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
