//! Newline-delimited JSON request/response protocol of the scoring service.
//!
//! Every request is one JSON object with an `id` (any JSON value, echoed
//! back) and a `kind`. Responses carry the same `id` and either a `result`
//! or an `error`.

use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::{CompletionInput, Engine, EngineError};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreGroup {
    prompt_id: String,
    completions: Vec<CompletionInput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreCompletion {
    completion: CompletionInput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Count {
    words: Vec<String>,
    #[serde(default)]
    window: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    /// Malformed JSON, missing fields, unknown kind, invalid input.
    BadRequest,
    /// Index or extractor failure while scoring.
    ScoringError,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::ScoringError => "scoring_error",
        }
    }
}

pub fn error_response(id: Value, code: ErrorCode, message: impl Into<String>) -> Value {
    json!({"id": id, "error": {"code": code.as_str(), "message": message.into()}})
}

fn engine_error(id: Value, e: EngineError) -> Value {
    let code = if e.is_input_error() { ErrorCode::BadRequest } else { ErrorCode::ScoringError };
    error_response(id, code, e.to_string())
}

/// Handles one request line. Never fails: problems become error responses.
pub fn handle_line(engine: &Engine, line: &str) -> Value {
    let request: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_response(Value::Null, ErrorCode::BadRequest, format!("malformed JSON: {e}")),
    };
    handle_value(engine, request)
}

pub fn handle_value(engine: &Engine, request: Value) -> Value {
    let Value::Object(mut fields) = request else {
        return error_response(Value::Null, ErrorCode::BadRequest, "request must be a JSON object");
    };
    let Some(id) = fields.remove("id") else {
        return error_response(Value::Null, ErrorCode::BadRequest, "missing \"id\"");
    };
    let kind = match fields.remove("kind") {
        Some(Value::String(k)) => k,
        _ => return error_response(id, ErrorCode::BadRequest, "missing or non-string \"kind\""),
    };
    let payload = Value::Object(fields);
    let bad = |e: serde_json::Error| error_response(id.clone(), ErrorCode::BadRequest, format!("invalid {kind} request: {e}"));
    let result = match kind.as_str() {
        "health" => Ok(json!({"status": "ok", "index_tokens": engine.index_tokens()})),
        "count" => {
            let req: Count = match serde_json::from_value(payload) {
                Ok(r) => r,
                Err(e) => return bad(e),
            };
            engine.count(&req.words, req.window).map(|c| serde_json::to_value(c).expect("count serializes"))
        }
        "score_completion" => {
            let req: ScoreCompletion = match serde_json::from_value(payload) {
                Ok(r) => r,
                Err(e) => return bad(e),
            };
            engine
                .score_completion::<f64>(&req.completion.completion(), req.completion.gold.as_ref())
                .map(|s| serde_json::to_value(s).expect("score serializes"))
        }
        "score_group" => {
            let req: ScoreGroup = match serde_json::from_value(payload) {
                Ok(r) => r,
                Err(e) => return bad(e),
            };
            engine.score_group::<f64>(&req.prompt_id, &req.completions).map(|g| serde_json::to_value(g).expect("group serializes"))
        }
        other => return error_response(id, ErrorCode::BadRequest, format!("unknown kind {other:?}")),
    };
    match result {
        Ok(result) => json!({"id": id, "kind": kind, "result": result}),
        Err(e) => engine_error(id, e),
    }
}
