//! The pipeline commands. Each reads its prerequisites from the output
//! tree, writes its artifacts and a manifest, and is deterministic given
//! the configuration.
//!
//! ```text
//! <out>/data/         preference*.jsonl ift*.jsonl scenarios*.jsonl vocab.json skipped.jsonl
//! <out>/checkpoints/  sft.json reward_model.json policy_rl.json
//! <out>/reports/      sft.json train_rm.json rl.json eval/ synthetic.json
//! <out>/manifests/    <command>.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use agr_core::datasets::{
    build_ift_dataset, build_preference_pairs, grouped_scenario, read_jsonl, split_dataset, write_jsonl,
    AnnotatedResponse, AnnotationInput, HttpRewriter, IftRecord, PreferenceRecord, RewriterClient, SkippedRecord,
    SourceRecord, TemplateRewriter,
};
use agr_core::eval::{emit_report, evaluate, EvalRecord, EvalReport};
use agr_core::models::{Checkpoint, PolicyModel, RewardModel, Vocabulary};
use agr_core::training::{
    derive_seed, ift_target_text, preference_examples, rl_train, sft_examples, sft_train, train_reward_model,
    TokenScenario, TrainReport,
};
use agr_core::GroupedScenario;

use crate::config::{RewriterMode, RunConfig};
use crate::manifest::{Manifest, Recorder};
use crate::synthetic::{run_synthetic, SyntheticReport};
use crate::CliError;

/// Paths inside the output tree.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { root: cfg.paths.out.clone() }
    }

    pub fn data(&self, name: &str) -> PathBuf {
        self.root.join("data").join(name)
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.json"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).expect("artifacts serialize") + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_records<T: Serialize>(rec: &mut Recorder, path: &Path, records: &[T]) -> Result<(), CliError> {
    ensure_parent(path)?;
    write_jsonl(records, path)?;
    rec.output(path)
}

fn require(path: &Path, name: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingPrerequisite(name.to_string()))
    }
}

fn rewriter(cfg: &RunConfig) -> Result<Box<dyn RewriterClient>, CliError> {
    match cfg.rewriter.mode {
        RewriterMode::Template => Ok(Box::new(TemplateRewriter)),
        RewriterMode::Http => {
            if cfg.rewriter.url.is_empty() {
                return Err(CliError::Config("rewriter.url is required in http mode".into()));
            }
            let timeout = Duration::from_secs(cfg.rewriter.timeout_secs);
            HttpRewriter::from_env(cfg.rewriter.url.clone(), timeout, cfg.rewriter.retries)
                .map(|h| Box::new(h) as Box<dyn RewriterClient>)
                .map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

fn vocabulary(
    cfg: &RunConfig,
    ift: &[IftRecord],
    prefs: &[PreferenceRecord],
    scenarios: &[GroupedScenario],
) -> Result<Vocabulary, CliError> {
    let targets: Vec<String> = ift.iter().map(ift_target_text).collect();
    let texts = ift
        .iter()
        .map(|r| r.question.as_str())
        .chain(targets.iter().map(String::as_str))
        .chain(prefs.iter().flat_map(|p| [p.query.as_str(), p.chosen.as_str(), p.rejected.as_str()]))
        .chain(scenarios.iter().flat_map(|s| s.prompts.iter().map(|(_, p)| p.as_str())));
    Ok(Vocabulary::from_texts(texts, cfg.model.max_vocab)?)
}

/// Builds preference pairs, instruction records, grouped scenarios, their
/// splits and the vocabulary.
pub fn cmd_build_data(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let rewriter = rewriter(cfg)?;
    let layout = Layout::new(cfg);
    let mut rec = Recorder::new("build-data", cfg);

    rec.input(&cfg.paths.sources)?;
    rec.input(&cfg.paths.annotations)?;
    let sources: Vec<SourceRecord> = read_jsonl(&cfg.paths.sources)?;
    let inputs: Vec<AnnotationInput> = read_jsonl(&cfg.paths.annotations)?;
    let annotated = inputs.into_iter().map(AnnotatedResponse::from_input).collect::<Result<Vec<_>, _>>()?;
    let prefs = build_preference_pairs(&annotated);

    let ift = build_ift_dataset(&sources, rewriter.as_ref());
    let mut skipped = ift.skipped;
    let mut scenarios = Vec::new();
    for src in &sources {
        match grouped_scenario(src, rewriter.as_ref()) {
            Ok(s) => scenarios.push(s),
            Err(e) if !skipped.iter().any(|s| s.record_id == src.record_id) => {
                skipped.push(SkippedRecord { record_id: src.record_id.clone(), reason: e.to_string() })
            }
            Err(_) => {}
        }
    }

    let ratio = cfg.split.ratio;
    let pref_split = split_dataset(&prefs, ratio, derive_seed(cfg.seed, 10))?;
    let ift_split = split_dataset(&ift.records, ratio, derive_seed(cfg.seed, 11))?;
    let scen_split = split_dataset(&scenarios, ratio, derive_seed(cfg.seed, 12))?;
    let vocab = vocabulary(cfg, &ift_split.train, &pref_split.train, &scen_split.train)?;

    write_records(&mut rec, &layout.data("annotated.jsonl"), &annotated)?;
    write_records(&mut rec, &layout.data("preference.jsonl"), &prefs)?;
    write_records(&mut rec, &layout.data("preference_train.jsonl"), &pref_split.train)?;
    write_records(&mut rec, &layout.data("preference_test.jsonl"), &pref_split.test)?;
    write_records(&mut rec, &layout.data("ift.jsonl"), &ift.records)?;
    write_records(&mut rec, &layout.data("ift_train.jsonl"), &ift_split.train)?;
    write_records(&mut rec, &layout.data("ift_test.jsonl"), &ift_split.test)?;
    write_records(&mut rec, &layout.data("scenarios.jsonl"), &scenarios)?;
    write_records(&mut rec, &layout.data("scenarios_train.jsonl"), &scen_split.train)?;
    write_records(&mut rec, &layout.data("scenarios_test.jsonl"), &scen_split.test)?;
    write_records(&mut rec, &layout.data("skipped.jsonl"), &skipped)?;
    let vocab_path = layout.data("vocab.json");
    write_json(&vocab_path, &vocab)?;
    rec.output(&vocab_path)?;

    rec.count("sources", sources.len());
    rec.count("annotated_responses", annotated.len());
    rec.count("preference_pairs", prefs.len());
    rec.count("preference_train", pref_split.train.len());
    rec.count("preference_test", pref_split.test.len());
    rec.count("ift_records", ift.records.len());
    rec.count("ift_train", ift_split.train.len());
    rec.count("ift_test", ift_split.test.len());
    rec.count("scenarios", scenarios.len());
    rec.count("scenarios_train", scen_split.train.len());
    rec.count("scenarios_test", scen_split.test.len());
    rec.count("skipped", skipped.len());
    rec.count("vocab", vocab.len());
    rec.note(format!("split ratio {ratio}"));
    for s in &skipped {
        rec.note(format!("skipped {}: {}", s.record_id, s.reason));
    }
    let manifest = rec.finish()?;
    if let Some(limit) = cfg.max_skipped {
        if skipped.len() > limit {
            return Err(CliError::TooManySkipped { skipped: skipped.len(), limit });
        }
    }
    Ok(manifest)
}

fn load_vocab(layout: &Layout) -> Result<Vocabulary, CliError> {
    let path = layout.data("vocab.json");
    require(&path, "vocab")?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path, name: &str) -> Result<PolicyModel, CliError> {
    require(path, name)?;
    Ok(Checkpoint::load(path)?.into_policy(None)?)
}

fn save_report(rec: &mut Recorder, path: &Path, report: &TrainReport) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, report.to_json() + "\n").map_err(|e| CliError::io(path, e))?;
    rec.output(path)
}

fn save_checkpoint(rec: &mut Recorder, path: &Path, ck: &Checkpoint) -> Result<(), CliError> {
    ensure_parent(path)?;
    ck.save(path)?;
    rec.output(path)
}

pub fn cmd_sft(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let mut rec = Recorder::new("sft", cfg);
    let vocab = load_vocab(&layout)?;
    let data_path = layout.data("ift_train.jsonl");
    require(&data_path, "ift_train")?;
    rec.input(&data_path)?;
    let records: Vec<IftRecord> = read_jsonl(&data_path)?;
    let examples = sft_examples(&records, &vocab);
    let init = PolicyModel::new(vocab.clone(), cfg.model.arch(vocab.len()), derive_seed(cfg.seed, 0))?;
    let (policy, report) = sft_train(init, &examples, &cfg.sft_config())?;
    save_checkpoint(&mut rec, &layout.checkpoint("sft"), &Checkpoint::of_policy(&policy))?;
    save_report(&mut rec, &layout.report("sft.json"), &report)?;
    rec.count("examples", examples.len());
    rec.finish()?;
    Ok(report)
}

pub fn cmd_train_rm(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let mut rec = Recorder::new("train-rm", cfg);
    let sft_path = layout.checkpoint("sft");
    let sft = load_policy(&sft_path, "sft")?;
    rec.input(&sft_path)?;
    let train_path = layout.data("preference_train.jsonl");
    let test_path = layout.data("preference_test.jsonl");
    require(&train_path, "preference_train")?;
    rec.input(&train_path)?;
    let train = preference_examples(&read_jsonl(&train_path)?, sft.vocab());
    let test = if test_path.is_file() {
        rec.input(&test_path)?;
        preference_examples(&read_jsonl(&test_path)?, sft.vocab())
    } else {
        Vec::new()
    };
    let rm = RewardModel::from_policy_backbone(&sft, derive_seed(cfg.seed, 2));
    let (rm, report) = train_reward_model(rm, &train, &test, &cfg.rm_config())?;
    save_checkpoint(&mut rec, &layout.checkpoint("reward_model"), &Checkpoint::of_reward(&rm))?;
    save_report(&mut rec, &layout.report("train_rm.json"), &report)?;
    rec.count("train_pairs", train.len());
    rec.count("test_pairs", test.len());
    rec.finish()?;
    Ok(report)
}

pub fn cmd_rl(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let mut rec = Recorder::new("rl", cfg);
    let sft_path = layout.checkpoint("sft");
    let rm_path = layout.checkpoint("reward_model");
    let sft = load_policy(&sft_path, "sft")?;
    require(&rm_path, "reward_model")?;
    let rm = Checkpoint::load(&rm_path)?.into_reward(Some(sft.arch()))?;
    rec.input(&sft_path)?;
    rec.input(&rm_path)?;
    let scen_path = layout.data("scenarios_train.jsonl");
    require(&scen_path, "scenarios_train")?;
    rec.input(&scen_path)?;
    let scenarios: Vec<GroupedScenario> = read_jsonl(&scen_path)?;
    let encoded: Vec<TokenScenario> = scenarios.iter().map(|s| TokenScenario::encode(s, sft.vocab())).collect();
    let rl_cfg = cfg.rl_config();
    let (policy, report) = rl_train(sft.clone(), &sft, &rm, &encoded, &rl_cfg)?;
    save_checkpoint(&mut rec, &layout.checkpoint("policy_rl"), &Checkpoint::of_policy(&policy))?;
    save_report(&mut rec, &layout.report("rl.json"), &report)?;
    rec.count("scenarios", encoded.len());
    rec.note(format!("lambda {} beta {}", rl_cfg.lambda, rl_cfg.beta));
    rec.finish()?;
    Ok(report)
}

/// Greedy answers for each record, then the bias metrics. Defaults to the
/// RL policy and the held-out instruction split.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, data: Option<&Path>) -> Result<EvalReport, CliError> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let mut rec = Recorder::new("eval", cfg);
    let ck_path = checkpoint.map_or_else(|| layout.checkpoint("policy_rl"), Path::to_path_buf);
    let policy = load_policy(&ck_path, "policy_rl")?;
    rec.input(&ck_path)?;
    let data_path = data.map_or_else(|| layout.data("ift_test.jsonl"), Path::to_path_buf);
    require(&data_path, "eval data")?;
    rec.input(&data_path)?;
    let records: Vec<IftRecord> = read_jsonl(&data_path)?;
    let vocab = policy.vocab();
    let budget = cfg.rl.max_new_tokens;
    let mut outputs = Vec::with_capacity(records.len());
    for ift in records {
        let prompt = vocab.encode_prompt(&ift.question);
        let room = policy.arch().max_len.saturating_sub(prompt.len());
        let rollout = policy.greedy_response(&prompt, budget.min(room))?;
        outputs.push(EvalRecord { model_output: vocab.decode(&rollout.response), ift });
    }
    let report = evaluate(&outputs, cfg.epsilon, cfg.content_threshold)?;
    let dir = layout.report("eval");
    write_records(&mut rec, &dir.join("outputs.jsonl"), &outputs)?;
    emit_report(&report, "AGR", &dir)?;
    rec.output(&dir.join("report.json"))?;
    rec.output(&dir.join("report.txt"))?;
    rec.count("records", outputs.len());
    rec.finish()?;
    Ok(report)
}

pub fn render_synthetic(report: &SyntheticReport) -> String {
    let mut out = String::from("lambda | mean D_total | std D_total | Young | Middle-age | Old | gap\n");
    for s in &report.summary {
        let q = &s.mean_quality;
        out.push_str(&format!(
            "{:6} | {:12.4} | {:11.4} | {:5.3} | {:10.3} | {:5.3} | {:.4}\n",
            s.lambda, s.mean_d_total, s.std_d_total, q.young, q.middle_aged, q.old, s.gap_of_means
        ));
    }
    out
}

pub fn cmd_synthetic(cfg: &RunConfig) -> Result<SyntheticReport, CliError> {
    let layout = Layout::new(cfg);
    let mut rec = Recorder::new("synthetic", cfg);
    let s = &cfg.synthetic;
    let report = run_synthetic(&s.task, &s.lambdas, &s.seeds)?;
    let json = layout.report("synthetic.json");
    let txt = layout.report("synthetic.txt");
    write_json(&json, &report)?;
    fs::write(&txt, render_synthetic(&report)).map_err(|e| CliError::io(&txt, e))?;
    rec.output(&json)?;
    rec.output(&txt)?;
    rec.count("runs", report.runs.len());
    rec.finish()?;
    Ok(report)
}
