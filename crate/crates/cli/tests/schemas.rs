#[path = "../../core/tests/common/fixtures.rs"]
mod fixtures;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use corver_core::{EngineConfig, TextIndex, WordTokenizer};
use jsonschema::Validator;
use serde_json::{json, Value};

fn schema(name: &str) -> Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/v1").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(v: &Validator, instance: &Value) {
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{instance}\n{errors:#?}");
}

fn engine_files(dir: &Path) -> PathBuf {
    let docs = ["The Flyers won the Stanley Cup in 1975.", "Bernie Parent played for the Flyers."];
    TextIndex::build(docs, WordTokenizer::default(), 500_000, 100).unwrap().save(&dir.join("toy.cvix")).unwrap();
    let stub = [
        json!({"sentence": "The Flyers won the Stanley Cup.", "raw": "[[\"Flyers\", \"won\", \"Stanley Cup\"]]"}),
        json!({"sentence": "Parent won it.", "raw": "[[\"Bernie Parent\", \"won\", \"the Stanley Cup\"]]"}),
    ];
    std::fs::write(dir.join("stub.jsonl"), stub.iter().map(Value::to_string).collect::<Vec<_>>().join("\n")).unwrap();
    let cfg = json!({
        "index_path": "toy.cvix",
        "extractor": {"stub": "stub.jsonl"},
        "variant": "relcheck",
        "window": 20,
        "weights": {"lambda_c": 0.5},
        "scale_mode": "token"
    });
    let path = dir.join("engine.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn config_schema_accepts_loaded_configs() {
    let dir = tempfile::tempdir().unwrap();
    let path = engine_files(dir.path());
    let v = schema("config");
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_valid(&v, &raw);
    let loaded = serde_json::to_value(EngineConfig::load(&path).unwrap()).unwrap();
    assert_valid(&v, &loaded);
    assert!(!v.is_valid(&json!({"index_path": "x", "extractor": {"stub": "s"}, "variant": "max"})));
    assert!(!v.is_valid(&json!({"extractor": {"stub": "s"}})));
}

#[test]
fn service_traffic_matches_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = engine_files(dir.path());
    let text = "<think>The Flyers won the Stanley Cup. Parent won it.</think>\n<answer>1975</answer>";
    let completion = fixtures::completion_json(text, Some("1975"));
    let mut no_gold = fixtures::completion_json("<think>x</think>", None);
    no_gold["mask"] = json!(vec![true; no_gold["token_spans"].as_array().unwrap().len()]);
    let requests = vec![
        json!({"id": 1, "kind": "health"}),
        json!({"id": "two", "kind": "count", "words": ["Flyers", "Stanley Cup"], "window": 5}),
        json!({"id": 3, "kind": "score_completion", "completion": completion}),
        json!({"id": 4, "kind": "score_completion", "completion": no_gold}),
        json!({"id": [5], "kind": "score_group", "prompt_id": "p", "completions": [completion, no_gold]}),
        json!({"id": 6, "kind": "count", "words": []}),
    ];
    let req_schema = schema("request");
    for r in &requests[..5] {
        assert_valid(&req_schema, r);
    }
    assert!(!req_schema.is_valid(&requests[5]));
    assert!(!req_schema.is_valid(&json!({"id": 7, "kind": "count"})));
    assert!(!req_schema.is_valid(&json!({"id": 7, "kind": "health", "extra": 1})));
    assert!(!req_schema.is_valid(&json!({"id": 7, "kind": "score_group", "prompt_id": "p", "completions": [completion]})));

    let mut child = Command::new(env!("CARGO_BIN_EXE_corver"))
        .args(["serve", "--stdio", "--config", cfg.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    for r in &requests {
        writeln!(stdin, "{r}").unwrap();
    }
    writeln!(stdin, "{{\"id\": 8, \"kind\": \"nope\"}}").unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    let res_schema = schema("response");
    let responses: Vec<Value> = String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(responses.len(), requests.len() + 1);
    for r in &responses {
        assert_valid(&res_schema, r);
    }
    let errors = responses.iter().filter(|r| r.get("error").is_some()).count();
    assert_eq!(errors, 2, "empty count and unknown kind");
}
