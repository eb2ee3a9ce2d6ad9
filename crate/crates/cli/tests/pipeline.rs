use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agr_cli::config::{Overrides, Profile, RewriterMode, RunConfig};
use agr_cli::manifest::Manifest;
use agr_cli::pipeline::{cmd_build_data, cmd_eval, cmd_rl, cmd_sft, cmd_train_rm};
use agr_cli::CliError;
use agr_core::datasets::{write_jsonl, IftRecord, Tag, REWRITER_KEY_ENV};
use agr_core::models::Vocabulary;
use agr_core::training::ift_target_text;
use agr_core::AgeGroup;
use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fixture_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(Some(&fixtures().join("pipeline.toml"))).unwrap();
    cfg.paths.out = out.to_path_buf();
    cfg
}

fn agr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agr"))
        .arg("--config")
        .arg(fixtures().join("pipeline.toml"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn manifest(out: &Path, command: &str) -> Manifest {
    let text = fs::read_to_string(out.join("manifests").join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn rl_without_reward_model_is_a_missing_prerequisite() {
    let dir = TempDir::new().unwrap();
    let cfg = fixture_config(dir.path());
    cmd_build_data(&cfg).unwrap();
    cmd_sft(&cfg).unwrap();
    match cmd_rl(&cfg) {
        Err(CliError::MissingPrerequisite(name)) => assert_eq!(name, "reward_model"),
        other => panic!("expected a missing reward model, got {other:?}"),
    }
    let out = agr(&["rl"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reward_model"));
}

#[test]
fn http_rewriter_without_key_fails_before_any_work() {
    let dir = TempDir::new().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.rewriter.mode = RewriterMode::Http;
    cfg.rewriter.url = "http://127.0.0.1:9/rewrite".into();
    let out = Command::new(env!("CARGO_BIN_EXE_agr"))
        .env_remove(REWRITER_KEY_ENV)
        .arg("--config")
        .arg(write_config(dir.path(), &cfg))
        .arg("build-data")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains(REWRITER_KEY_ENV));
    assert!(!dir.path().join("data").exists());
    assert!(!dir.path().join("manifests").exists());
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn hundred_sources_split_ninety_five_five() {
    let dir = TempDir::new().unwrap();
    let sources = dir.path().join("sources.jsonl");
    let lines: Vec<String> = (0..100)
        .map(|i| {
            let (old, young) = (60 + i % 30, 12 + i % 15);
            serde_json::json!({
                "record_id": format!("gen-{i:03}"),
                "context": format!("A {old}-year-old and a {young}-year-old waited in line {i}. The {young}-year-old dropped the tickets."),
                "question": "Who dropped the tickets?",
                "answers": [format!("The {old}-year-old"), format!("The {young}-year-old"), "Cannot be determined"],
                "label_index": 1
            })
            .to_string()
        })
        .collect();
    fs::write(&sources, lines.join("\n") + "\n").unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.paths.sources = sources;
    let m = cmd_build_data(&cfg).unwrap();
    assert_eq!(m.counts["skipped"], 0);
    assert_eq!((m.counts["scenarios"], m.counts["scenarios_train"], m.counts["scenarios_test"]), (100, 95, 5));
    assert!(m.notes.iter().any(|n| n == "split ratio 0.95"));
    assert_eq!(manifest(dir.path(), "build-data"), m);
}

#[test]
fn build_data_manifest_records_digests_and_config() {
    let dir = TempDir::new().unwrap();
    let m = cmd_build_data(&fixture_config(dir.path())).unwrap();
    assert_eq!(m.inputs.len(), 2);
    assert!(m.outputs.contains_key("data/vocab.json"));
    assert!(m.outputs.values().all(|d| d.len() == 64));
    assert_eq!(m.counts["skipped"], 2);
    let echoed = RunConfig::parse(&m.config).unwrap();
    assert_eq!(echoed.seed, 7);
}

#[test]
fn too_many_skipped_records_exit_with_their_own_code() {
    let dir = TempDir::new().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.max_skipped = Some(1);
    assert!(matches!(cmd_build_data(&cfg), Err(CliError::TooManySkipped { skipped: 2, limit: 1 })));
    let out = Command::new(env!("CARGO_BIN_EXE_agr"))
        .arg("--config")
        .arg(write_config(dir.path(), &cfg))
        .arg("build-data")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn lambda_defaults_follow_the_profile() {
    let mut cfg = RunConfig::default();
    assert_eq!(cfg.rl_config().lambda, 0.5);
    cfg.profile = Profile::Abmb;
    assert_eq!(cfg.rl_config().lambda, 0.7);
    cfg.apply(&Overrides { lambda: Some(1.25), ..Default::default() });
    assert_eq!(cfg.rl_config().lambda, 1.25);
}

#[test]
fn full_run_echoes_lambda_beta_and_epsilon() {
    let dir = TempDir::new().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.profile = Profile::Abmb;
    cfg.apply(&Overrides { beta: Some(0.2), epsilon: Some(0.125), ..Default::default() });
    cmd_build_data(&cfg).unwrap();
    cmd_sft(&cfg).unwrap();
    cmd_train_rm(&cfg).unwrap();
    let rl = cmd_rl(&cfg).unwrap();
    assert_eq!(rl.final_metrics["lambda"], 0.7);
    assert_eq!(rl.final_metrics["beta"], 0.2);
    assert!(manifest(dir.path(), "rl").notes.iter().any(|n| n == "lambda 0.7 beta 0.2"));

    let report = cmd_eval(&cfg, None, None).unwrap();
    assert_eq!(report.epsilon, 0.125);
    let gap = report.fairness_gap.tc;
    assert_eq!(report.gate.tc, gap.map(|g| g <= 0.125));
    for f in ["report.json", "report.txt", "outputs.jsonl"] {
        assert!(dir.path().join("reports/eval").join(f).is_file(), "{f}");
    }
}

#[test]
fn memorized_training_answers_get_every_tag_right() {
    let dir = TempDir::new().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.sft.epochs = 200;
    let groups = [AgeGroup::Young, AgeGroup::MiddleAged, AgeGroup::Old];
    let records: Vec<IftRecord> = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let tag = if i % 2 == 0 { Tag::Yes } else { Tag::No };
            IftRecord {
                scenario_id: format!("m{i}"),
                group: groups[i % 3],
                question: format!("Did {w} happen?"),
                tag,
                explanation: format!("{}, {w} is stated.", tag.as_str()),
            }
        })
        .collect();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    write_jsonl(&records, data.join("ift_train.jsonl")).unwrap();
    let targets: Vec<String> = records.iter().map(ift_target_text).collect();
    let vocab = Vocabulary::from_texts(
        records.iter().map(|r| r.question.as_str()).chain(targets.iter().map(String::as_str)),
        100,
    )
    .unwrap();
    fs::write(data.join("vocab.json"), serde_json::to_string(&vocab).unwrap()).unwrap();

    cmd_sft(&cfg).unwrap();
    let ck = dir.path().join("checkpoints/sft.json");
    let report = cmd_eval(&cfg, Some(&ck), Some(&data.join("ift_train.jsonl"))).unwrap();
    assert_eq!(report.overall_counts.records, 6);
    assert_eq!(report.overall.tag, 1.0, "{report:?}");
}

#[test]
fn synthetic_needs_two_lambdas() {
    let dir = TempDir::new().unwrap();
    let out = agr(&["synthetic", "--lambdas", "0.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("reports").exists());
}

#[test]
fn unknown_config_keys_exit_with_config_code() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "rl.betta = 0.1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_agr")).arg("--config").arg(&path).arg("sft").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("betta"));
}

#[test]
fn sft_before_build_data_is_a_missing_prerequisite() {
    let dir = TempDir::new().unwrap();
    assert_eq!(agr(&["sft"], dir.path()).status.code(), Some(3));
}
