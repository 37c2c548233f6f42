#[path = "../../core/tests/common/scripted.rs"]
mod scripted;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use normloom::corpus::{Language, Store, SystemClock, Turn};
use normloom::llm::{BackendMode, ChatBackend, CompletionCache, Gateway};
use normloom::pipeline::{write_baseline, BaselineDialogue, Pipeline, PipelineConfig};
use normloom::review::{Quotas, ReviewDesk, ReviewKind, TaskState};
use scripted::{decide_open, seed, ScriptedBackend};
use serde_json::Value;

const CONFIG: &str = "scenarios_per_norm = 2\nsituations_per_scenario = 1\nparallelism = 2\n";

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn normloom(store: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_normloom"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("NORMLOOM_CONFIG")
        .env_remove("NORMLOOM_STORE")
        .env_remove("NORMLOOM_TOKENS")
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn config() -> PipelineConfig {
    PipelineConfig { scenarios_per_norm: 2, situations_per_scenario: 1, parallelism: 2, ..PipelineConfig::default() }
}

/// Records completions for five seeds into `dir/completions.jsonl`, optionally reviewing
/// everything (all accepted) until the pipeline reaches its fixpoint.
fn recorded_store(dir: &Path, review: bool) {
    let store = Arc::new(Store::open(dir).unwrap());
    seed(&store, 5);
    let backend: Arc<dyn ChatBackend> = Arc::new(ScriptedBackend::default());
    let cache = CompletionCache::open(dir.join("completions.jsonl")).unwrap();
    let gateway = Arc::new(Gateway::new(Some(backend), cache, BackendMode::Record));
    let desk = Arc::new(ReviewDesk::new(store.clone(), Arc::new(SystemClock), Quotas::default()));
    let pipeline = Pipeline::new(store.clone(), gateway, desk.clone(), config()).unwrap();
    loop {
        let created = pipeline.advance().created();
        if !review {
            return;
        }
        let decided: usize = ReviewKind::ALL.iter().map(|&k| decide_open(&desk, k, true)).sum();
        if created == 0 && decided == 0 {
            break;
        }
    }
    assert!(store.review_tasks().iter().all(|t| t.state != TaskState::Open));
}

fn fresh_seeded(dir: &Path) {
    seed(&Store::open(dir).unwrap(), 5);
}

/// Every number in the JSON rendering, formatted the way the text rendering prints it.
fn numbers(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Number(n) if n.is_f64() => out.push(format!("{:.4}", n.as_f64().unwrap())),
        Value::Number(n) => out.push(n.to_string()),
        Value::Array(a) => a.iter().for_each(|x| numbers(x, out)),
        Value::Object(o) => o.values().for_each(|x| numbers(x, out)),
        _ => {}
    }
}

#[test]
fn seed_is_atomic_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let good = r#"{"culture":"chinese","category":"apology","description":"打扰别人时要说“不好意思”。"}
{"culture":"chinese","category":"greeting","description":"见到长辈要说“您好”。"}
{"culture":"american","category":"giving_thanks","description":"Say \"thank you\" when someone holds the door."}
{"culture":"chinese","category":"leave","description":"送客时主人要说“慢走”。"}
{"culture":"american","category":"request","description":"Open a request with \"could you\" rather than an imperative."}
"#;
    let bad = good.replacen("\"leave\"", "\"farewell\"", 1);
    let r = normloom(&store, &["seed", write(dir.path(), "bad.jsonl", &bad).to_str().unwrap()]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("line 4"), "{}", r.stderr);
    assert!(Store::open(&store).unwrap().norms().is_empty());

    let file = write(dir.path(), "good.jsonl", good);
    let r = normloom(&store, &["seed", file.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, "added 5 seed norms, skipped 0 already present\n");
    let r = normloom(&store, &["--format", "json", "seed", file.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!((v["added"].as_u64(), v["skipped"].as_u64()), (Some(0), Some(5)));
    assert_eq!(Store::open(&store).unwrap().norms().len(), 5);
}

#[test]
fn gated_store_reports_zero_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let r = normloom(dir.path(), &["advance"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, "0 jobs\n");
}

#[test]
fn configuration_errors_exit_two_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let zero = write(dir.path(), "zero.toml", "parallelism = 0\n");
    let r = normloom(&store, &["--config", zero.to_str().unwrap(), "advance"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("parallelism"), "{}", r.stderr);
    let r = normloom(&store, &["--mode", "record", "advance"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("backend_url"), "{}", r.stderr);
    let unknown = write(dir.path(), "unknown.toml", "scenarios = 3\n");
    assert_eq!(normloom(&store, &["--config", unknown.to_str().unwrap(), "advance"]).code, 2);
}

#[test]
fn replayed_advance_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    recorded_store(&fixtures, false);
    let cfg = write(
        dir.path(),
        "replay.toml",
        &format!("{CONFIG}cache_path = {:?}\n", fixtures.join("completions.jsonl").to_str().unwrap()),
    );
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let store = dir.path().join(name);
        fresh_seeded(&store);
        let r = normloom(&store, &["--config", cfg.to_str().unwrap(), "advance"]);
        assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
        assert!(r.stdout.starts_with("25 jobs\n"), "{}", r.stdout);
        outputs.push(r.stdout);
        // nothing new until a reviewer decides something
        assert_eq!(normloom(&store, &["--config", cfg.to_str().unwrap(), "advance"]).stdout, "0 jobs\n");
    }
    assert_eq!(outputs[0], outputs[1]);
    let files = |n: &str| std::fs::read(dir.path().join(n).join("situations.jsonl")).unwrap();
    assert_eq!(files("a"), files("b"));
}

#[test]
fn replay_misses_quarantine_and_can_be_resolved() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    fresh_seeded(&store);
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let cfg = cfg.to_str().unwrap();
    let r = normloom(&store, &["--config", cfg, "advance"]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.starts_with("5 jobs\n"), "{}", r.stdout);
    assert_eq!(r.stdout.matches("Quarantined").count(), 5, "{}", r.stdout);

    let r = normloom(&store, &["--config", cfg, "--format", "json", "quarantine", "list"]);
    assert_eq!(r.code, 0);
    let jobs: Vec<Value> = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(jobs.len(), 5);
    let first = jobs[0]["id"].as_str().unwrap();
    let second = jobs[1]["id"].as_str().unwrap();
    let text = normloom(&store, &["--config", cfg, "quarantine", "list"]).stdout;
    assert!(text.contains(first) && text.contains("replay miss"), "{text}");

    let edited = write(dir.path(), "edit.txt", "Scenario:\n1. in a tea house; two old friends\n2. at a market; a vendor and a buyer\n");
    let r = normloom(&store, &["--config", cfg, "quarantine", "edit", first, "--completion", edited.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.contains("Done outputs=2"), "{}", r.stdout);

    let r = normloom(&store, &["--config", cfg, "quarantine", "retry", second]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("Quarantined"), "{}", r.stdout);
    assert!(normloom(&store, &["--config", cfg, "quarantine", "retry", first]).stderr.contains("not quarantined"));
}

#[test]
fn empty_store_reports_are_notices() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["diversity", "topics", "agreement", "detection", "stats"] {
        let r = normloom(dir.path(), &["report", kind]);
        assert_eq!(r.code, 0, "{kind}: {}", r.stderr);
        assert!(r.stdout.contains("nothing to report"), "{kind}: {}", r.stdout);
        let r = normloom(dir.path(), &["--format", "json", "report", kind]);
        let v: Value = serde_json::from_str(&r.stdout).unwrap();
        assert_eq!(v["report"], "empty");
    }
}

#[test]
fn topics_report_has_k_rows_of_m_tokens() {
    let dir = tempfile::tempdir().unwrap();
    recorded_store(dir.path(), false);
    let r = normloom(dir.path(), &["--lang", "zh", "report", "topics", "--topics", "30", "--top", "10", "--iterations", "30"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows: Vec<&str> = r.stdout.lines().filter(|l| l.starts_with("topic")).collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|l| l.split_once(": ").unwrap().1.split(' ').count() == 10));
    assert!(r.stdout.starts_with("[zh] documents=20 topics=30"), "{}", r.stdout);
    let again = normloom(dir.path(), &["--lang", "zh", "report", "topics", "--topics", "30", "--iterations", "30"]);
    assert_eq!(r.stdout, again.stdout);
}

#[test]
fn reviewed_store_reports_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    recorded_store(dir.path(), true);
    let store = Store::open(dir.path()).unwrap();
    let dialogues = store.dialogues();
    assert!(!dialogues.is_empty());

    // the same stock exchange in place of every staged dialogue, turn for turn
    let stock: Vec<BaselineDialogue> = dialogues
        .iter()
        .map(|d| BaselineDialogue {
            norm_id: d.norm_id.clone(),
            polarity: normloom::corpus::Polarity::Adherence,
            language: Language::Zh,
            turns: (0..d.turns.len())
                .map(|i| Turn {
                    index: i,
                    speaker: if i % 2 == 0 { "甲" } else { "乙" }.into(),
                    utterance: if i % 2 == 0 { "对不起，对不起。" } else { "没关系，没关系。" }.into(),
                })
                .collect(),
        })
        .collect();
    write_baseline(&dir.path().join("baseline_simple.jsonl"), &stock).unwrap();
    let r = normloom(dir.path(), &["--format", "json", "--lang", "zh", "report", "diversity"]);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    for n in 1..=4 {
        let ratio = |mode: &str| rows.iter().find(|r| r["mode"] == mode && r["n"] == n).unwrap()["ratio"].as_f64().unwrap();
        assert!(ratio("cot") > ratio("simple"), "n={n}: {rows:?}");
    }

    for kind in ["diversity", "agreement", "detection", "stats"] {
        let text = normloom(dir.path(), &["report", kind]);
        let json = normloom(dir.path(), &["--format", "json", "report", kind]);
        assert_eq!((text.code, json.code), (0, 0), "{kind}");
        let v: Value = serde_json::from_str(&json.stdout).unwrap();
        assert_ne!(v["report"], "empty", "{kind}");
        let mut nums = Vec::new();
        numbers(&v, &mut nums);
        assert!(!nums.is_empty(), "{kind}");
        for n in nums {
            assert!(text.stdout.contains(&n), "{kind}: {n} missing from\n{}", text.stdout);
        }
    }
    let detection = normloom(dir.path(), &["--format", "json", "report", "detection"]);
    let v: Value = serde_json::from_str(&detection.stdout).unwrap();
    for row in v["blocks"][0]["rows"].as_array().unwrap().iter().filter(|r| r["support"].as_u64() > Some(0)) {
        assert_eq!(row["f1"].as_f64(), Some(1.0));
    }

    let out = dir.path().join("gold.json");
    let r = normloom(dir.path(), &["export-gold", "--deidentify", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let export: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let gold = export["gold"].as_array().unwrap();
    assert!(r.stdout.starts_with(&format!("wrote {} gold label sets", gold.len())));
    assert!(!gold.is_empty());
    let body = serde_json::to_string(gold).unwrap();
    for d in &dialogues {
        for name in d.speakers() {
            assert!(!body.contains(name), "{name} leaked");
        }
    }
    assert!(body.contains("Speaker A"));
    let plain = normloom(dir.path(), &["export-gold"]).stdout;
    assert!(dialogues.iter().any(|d| plain.contains(d.speakers()[0])));
}
