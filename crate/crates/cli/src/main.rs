//! `corver` command-line interface.

mod serve;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use corver_core::data::{self, CalibrationRecord, QuestionStats, DEFAULT_BUCKETS, DEFAULT_Z};
use corver_core::protocol::{error_response, ErrorCode};
use corver_core::{CompletionInput, Engine, EngineConfig, EngineError, TextIndex, WordTokenizer};

#[derive(Parser, Debug)]
#[command(name = "corver", version, about = "Co-occurrence reward engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or query a corpus index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Score completions (JSONL in, one completion score per line out).
    Score(EngineArgs),
    /// Score rollout groups and emit group-normalized token advantages.
    Advantages(EngineArgs),
    /// Learning-zone filter over rollout grades, with optional anchor mixing.
    Filter(FilterArgs),
    /// Per-bucket precision with Wilson intervals.
    Calibrate(CalibrateArgs),
    /// Run the NDJSON scoring service.
    Serve(serve::ServeArgs),
}

#[derive(Subcommand, Debug)]
enum IndexCommand {
    /// Tokenize a corpus and write the index plus its vocabulary file.
    Build {
        /// Plain text (one document per non-empty line) or .jsonl with a "text" field.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Maximum inter-clause distance in tokens.
        #[arg(long, default_value_t = corver_core::index::DEFAULT_MAX_CLAUSE_DIST)]
        window: u64,
        #[arg(long, default_value_t = corver_core::index::DEFAULT_MAX_CLAUSE_FREQ)]
        max_clause_freq: u64,
        /// Lowercase corpus and queries.
        #[arg(long)]
        lowercase: bool,
    },
    /// Count a query such as "Stanley AND Cup".
    Count {
        #[arg(long)]
        index: PathBuf,
        /// Clauses separated by the word AND; a clause may be a phrase.
        #[arg(long)]
        query: String,
        /// Defaults to the index's maximum inter-clause distance.
        #[arg(long)]
        window: Option<u64>,
    },
}

#[derive(Args, Debug)]
struct EngineArgs {
    /// Engine config (TOML or JSON); falls back to $CORVER_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input JSONL; `-` reads stdin.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// JSONL of {"question_id", "n_correct", "G"}.
    #[arg(long)]
    grades: PathBuf,
    #[arg(long, default_value_t = 1)]
    low: u32,
    /// Defaults to G-1.
    #[arg(long)]
    high: Option<u32>,
    /// Number of mastered questions to mix back in.
    #[arg(long, default_value_t = 0)]
    anchors: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print bucket sizes instead of the selected ids.
    #[arg(long)]
    summary: bool,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// JSONL of {"count", "correct"}.
    #[arg(long = "in")]
    input: PathBuf,
    /// Bucket lower bounds, comma separated, starting at 0.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUCKETS)]
    buckets: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_Z)]
    z: f64,
}

/// Failure classes mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        // resources named on the command line or in the config are the caller's input
        match e {
            EngineError::Score(_) => Failure::Internal(e.into()),
            other => Failure::Input(other.into()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

pub fn internal<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Internal(e.into())
}

fn open_input(path: &Path) -> CliResult<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(input)?;
    Ok(Box::new(BufReader::new(f)))
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> CliResult<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display())).map_err(input)?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| serde_json::from_str(&line).with_context(|| format!("{}:{n}", path.display())).map_err(input))
        .collect()
}

fn emit_lines<I: IntoIterator<Item = Value>>(values: I) -> CliResult<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for v in values {
        serde_json::to_writer(&mut out, &v).map_err(internal)?;
        out.write_all(b"\n").map_err(internal)?;
    }
    out.flush().map_err(internal)
}

fn read_corpus(path: &Path) -> CliResult<Vec<String>> {
    let jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let lines = read_lines(path)?;
    if !jsonl {
        return Ok(lines.into_iter().map(|(_, l)| l).collect());
    }
    lines
        .into_iter()
        .map(|(n, l)| {
            let v: Value = serde_json::from_str(&l).with_context(|| format!("{}:{n}", path.display())).map_err(input)?;
            v.get("text")
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| input(anyhow!("{}:{n}: missing string field \"text\"", path.display())))
        })
        .collect()
}

fn index_command(cmd: IndexCommand) -> CliResult<()> {
    match cmd {
        IndexCommand::Build { corpus, out, window, max_clause_freq, lowercase } => {
            let docs = read_corpus(&corpus)?;
            let started = std::time::Instant::now();
            let idx = TextIndex::build(docs.iter().map(String::as_str), WordTokenizer { lowercase }, max_clause_freq, window)
                .map_err(input)?;
            idx.save(&out).with_context(|| format!("writing {}", out.display())).map_err(internal)?;
            log::info!("indexed {} tokens in {:.1?}", idx.index().len(), started.elapsed());
            emit_lines([json!({
                "index": out,
                "tokens": idx.index().len(),
                "documents": idx.index().num_docs(),
                "vocab_size": idx.vocab().len(),
                "token_width": idx.index().params().token_width.bits(),
                "tokenizer": idx.tokenizer().id(),
            })])
        }
        IndexCommand::Count { index, query, window } => {
            let idx = TextIndex::load(&index).map_err(input)?;
            let clauses = parse_query(&query).map_err(input)?;
            let window = window.unwrap_or(idx.index().params().max_clause_dist);
            let count = idx.count_phrases(&clauses, window).map_err(input)?;
            emit_lines([json!({
                "query": clauses,
                "window": window,
                "count": count.count,
                "truncated": count.truncated,
                "anchor_clause": count.anchor_clause,
            })])
        }
    }
}

/// Splits on the standalone word `AND`.
fn parse_query(query: &str) -> anyhow::Result<Vec<String>> {
    let mut clauses = vec![Vec::new()];
    for word in query.split_whitespace() {
        if word == "AND" {
            clauses.push(Vec::new());
        } else {
            clauses.last_mut().expect("non-empty").push(word);
        }
    }
    if clauses.iter().any(Vec::is_empty) {
        return Err(anyhow!("query {query:?} has an empty clause"));
    }
    Ok(clauses.into_iter().map(|c| c.join(" ")).collect())
}

fn load_engine(config: Option<&Path>) -> CliResult<Engine> {
    let cfg = EngineConfig::locate(config).map_err(input)?;
    Ok(Engine::from_config(&cfg)?)
}

/// Runs `f` on every line in parallel, emits results in input order, and
/// returns the worst failure class seen.
fn per_line<F>(path: &Path, f: F) -> CliResult<()>
where
    F: Fn(Value) -> Result<Value, (Value, ErrorCode, String)> + Sync,
{
    let lines = read_lines(path)?;
    let results: Vec<(Value, Option<ErrorCode>)> = lines
        .par_iter()
        .map(|(n, line)| match serde_json::from_str::<Value>(line) {
            Err(e) => (error_response(Value::Null, ErrorCode::BadRequest, format!("line {n}: {e}")), Some(ErrorCode::BadRequest)),
            Ok(v) => match f(v) {
                Ok(out) => (out, None),
                Err((id, code, msg)) => (error_response(id, code, format!("line {n}: {msg}")), Some(code)),
            },
        })
        .collect();
    let worst = results.iter().filter_map(|(_, c)| *c).max_by_key(|c| matches!(c, ErrorCode::ScoringError));
    emit_lines(results.into_iter().map(|(v, _)| v))?;
    match worst {
        None => Ok(()),
        Some(ErrorCode::BadRequest) => Err(input(anyhow!("some input lines were rejected"))),
        Some(ErrorCode::ScoringError) => Err(internal(anyhow!("scoring failed for some input lines"))),
    }
}

fn classify(e: EngineError) -> (ErrorCode, String) {
    let code = if e.is_input_error() { ErrorCode::BadRequest } else { ErrorCode::ScoringError };
    (code, e.to_string())
}

fn take_id(v: &mut Value) -> Value {
    v.as_object_mut().and_then(|o| o.remove("id")).unwrap_or(Value::Null)
}

fn score_command(args: EngineArgs) -> CliResult<()> {
    let engine = load_engine(args.config.as_deref())?;
    per_line(&args.input, |mut v| {
        let id = take_id(&mut v);
        let c: CompletionInput =
            serde_json::from_value(v).map_err(|e| (id.clone(), ErrorCode::BadRequest, e.to_string()))?;
        let score = engine.score_completion::<f64>(&c.completion(), c.gold.as_ref()).map_err(|e| {
            let (code, msg) = classify(e);
            (id.clone(), code, msg)
        })?;
        let mut out = serde_json::to_value(score).expect("score serializes");
        if !id.is_null() {
            out.as_object_mut().expect("object").insert("id".into(), id);
        }
        Ok(out)
    })
}

#[derive(serde::Deserialize)]
struct GroupLine {
    prompt_id: String,
    completions: Vec<CompletionInput>,
}

fn advantages_command(args: EngineArgs) -> CliResult<()> {
    let engine = load_engine(args.config.as_deref())?;
    per_line(&args.input, |v| {
        let id = v.get("prompt_id").cloned().unwrap_or(Value::Null);
        let g: GroupLine = serde_json::from_value(v).map_err(|e| (id.clone(), ErrorCode::BadRequest, e.to_string()))?;
        let result = engine.score_group::<f64>(&g.prompt_id, &g.completions).map_err(|e| {
            let (code, msg) = classify(e);
            (id.clone(), code, msg)
        })?;
        Ok(serde_json::to_value(result).expect("group serializes"))
    })
}

fn filter_command(args: FilterArgs) -> CliResult<()> {
    let stats: Vec<QuestionStats> = parse_jsonl(&args.grades)?;
    let kept = data::learning_zone_filter(&stats, args.low, args.high).map_err(input)?;
    let mastered = data::mastered_ids(&stats).map_err(input)?;
    let pool = data::mix_anchors(&kept, &mastered, args.anchors, args.seed).map_err(input)?;
    if args.summary {
        let zones = data::zone_counts(&stats).map_err(input)?;
        return emit_lines([json!({
            "total": zones.total(),
            "never": zones.never,
            "learning": zones.learning,
            "mastered": zones.mastered,
            "kept": kept.len(),
            "anchors": pool.len() - kept.len(),
            "pool": pool.len(),
        })]);
    }
    let n_kept = kept.len();
    emit_lines(pool.into_iter().enumerate().map(|(i, id)| json!({"question_id": id, "anchor": i >= n_kept})))
}

fn calibrate_command(args: CalibrateArgs) -> CliResult<()> {
    let records: Vec<CalibrationRecord> = parse_jsonl(&args.input)?;
    let report = data::calibrate(&records, &args.buckets, args.z).map_err(input)?;
    emit_lines(report.buckets.into_iter().map(|b| serde_json::to_value(b).expect("bucket serializes")))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Index(cmd) => index_command(cmd),
        Command::Score(args) => score_command(args),
        Command::Advantages(args) => advantages_command(args),
        Command::Filter(args) => filter_command(args),
        Command::Calibrate(args) => calibrate_command(args),
        Command::Serve(args) => serve::run(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).target(env_logger::Target::Stderr).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Input(e) | Failure::Internal(e)) = f;
            log::error!("{e:#}");
            ExitCode::from(code)
        }
    }
}
