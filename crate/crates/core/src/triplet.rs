//! Extractor output parsing and triplet selection.
//!
//! Extractor models emit bracketed lists such as
//! `[["Paris", "capital of", "France"]]`, often imperfectly: smart quotes,
//! stray escapes, unbalanced or missing brackets, unquoted fields. The parser
//! here never fails. It lexes the text into brackets, commas and string
//! fields, rebuilds the list tree (closing anything left open), and reads
//! every innermost list of strings as one item.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// Entities rejected as triplet heads or tails (whole-string, case-insensitive).
pub const PRONOUNS: [&str; 11] = ["he", "she", "it", "they", "this", "that", "them", "his", "her", "its", "their"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triplet {
    /// Trims all fields; `None` if head or tail is empty afterwards.
    pub fn new(head: &str, relation: &str, tail: &str) -> Option<Self> {
        let (head, tail) = (head.trim(), tail.trim());
        if head.is_empty() || tail.is_empty() {
            return None;
        }
        Some(Triplet { head: head.to_owned(), relation: relation.trim().to_owned(), tail: tail.to_owned() })
    }
}

/// One candidate read from extractor output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedItem {
    Empty,
    Pair { entity: String, relation: String },
    Triple { head: String, relation: String, tail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorOutput {
    pub raw: String,
    pub parsed: Vec<ParsedItem>,
}

impl ExtractorOutput {
    pub fn from_raw(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let parsed = parse_items(&raw);
        ExtractorOutput { raw, parsed }
    }
}

pub fn parse_extractor_output(raw: &str) -> ExtractorOutput {
    ExtractorOutput::from_raw(raw)
}

fn is_pronoun(entity: &str) -> bool {
    let e = entity.trim();
    PRONOUNS.iter().any(|p| e.eq_ignore_ascii_case(p))
}

fn valid_triplet(item: &ParsedItem) -> Option<Triplet> {
    match item {
        ParsedItem::Triple { head, relation, tail } => {
            Triplet::new(head, relation, tail).filter(|t| !is_pronoun(&t.head) && !is_pronoun(&t.tail))
        }
        _ => None,
    }
}

/// First triple with non-empty, non-pronoun head and tail.
pub fn first_valid_triplet(out: &ExtractorOutput) -> Option<Triplet> {
    out.parsed.iter().find_map(valid_triplet)
}

pub fn all_valid_triplets(out: &ExtractorOutput) -> Vec<Triplet> {
    out.parsed.iter().filter_map(valid_triplet).collect()
}

pub fn normalize_quotes(raw: &str) -> String {
    raw.chars()
        .map(|c| match c {
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{FF02}' => '"',
            '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{FF07}' => '\'',
            other => other,
        })
        .collect()
}

#[derive(Debug, PartialEq)]
enum Lexeme {
    Open,
    Close,
    Field(String),
}

fn lex(text: &str) -> Vec<Lexeme> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '[' => {
                out.push(Lexeme::Open);
                i += 1;
            }
            ']' => {
                out.push(Lexeme::Close);
                i += 1;
            }
            ',' | '\\' => i += 1,
            c if c.is_whitespace() => i += 1,
            q @ ('"' | '\'') => {
                let (field, next) = quoted(&chars, i + 1, q);
                out.push(Lexeme::Field(field));
                i = next;
            }
            _ => {
                let start = i;
                while i < chars.len() && !matches!(chars[i], ',' | '[' | ']') {
                    i += 1;
                }
                let bare: String = chars[start..i].iter().collect();
                let bare = bare.trim();
                if !bare.is_empty() {
                    out.push(Lexeme::Field(bare.to_owned()));
                }
            }
        }
    }
    out
}

/// A quote closes a field only when followed (after spaces) by `,`, `]`, or
/// the end of input; other occurrences are kept as literal characters.
fn closes_field(chars: &[char], after: usize) -> bool {
    chars[after..].iter().find(|c| !c.is_whitespace()).is_none_or(|c| matches!(c, ',' | ']'))
}

fn quoted(chars: &[char], mut i: usize, quote: char) -> (String, usize) {
    let mut field = String::new();
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' && i + 1 < chars.len() {
            let e = chars[i + 1];
            i += 2;
            match e {
                'n' => field.push(' '),
                't' => field.push(' '),
                'u' if i + 4 <= chars.len() => {
                    let hex: String = chars[i..i + 4].iter().collect();
                    match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                        Some(ch) => {
                            field.push(ch);
                            i += 4;
                        }
                        None => field.push('u'),
                    }
                }
                other => field.push(other),
            }
            continue;
        }
        if c == quote && closes_field(chars, i + 1) {
            return (field, i + 1);
        }
        field.push(c);
        i += 1;
    }
    (field, i)
}

enum Node {
    Field(String),
    List(Vec<Node>),
}

fn build_tree(lexemes: Vec<Lexeme>) -> Vec<Vec<Node>> {
    let mut roots = Vec::new();
    let mut stack: Vec<Vec<Node>> = Vec::new();
    for lx in lexemes {
        match lx {
            Lexeme::Open => stack.push(Vec::new()),
            // an unmatched close is dropped
            Lexeme::Close => {
                if let Some(done) = stack.pop() {
                    match stack.last_mut() {
                        Some(parent) => parent.push(Node::List(done)),
                        None => roots.push(done),
                    }
                }
            }
            Lexeme::Field(f) => {
                if let Some(top) = stack.last_mut() {
                    top.push(Node::Field(f));
                }
            }
        }
    }
    while let Some(done) = stack.pop() {
        match stack.last_mut() {
            Some(parent) => parent.push(Node::List(done)),
            None => roots.push(done),
        }
    }
    roots
}

fn collect_items(list: &[Node], out: &mut Vec<ParsedItem>) {
    let has_sublists = list.iter().any(|n| matches!(n, Node::List(_)));
    if has_sublists {
        for n in list {
            if let Node::List(sub) = n {
                collect_items(sub, out);
            }
        }
        return;
    }
    let fields: Vec<&str> = list
        .iter()
        .map(|n| match n {
            Node::Field(f) => f.as_str(),
            Node::List(_) => unreachable!(),
        })
        .collect();
    match fields.as_slice() {
        [] => out.push(ParsedItem::Empty),
        [entity, relation] => {
            out.push(ParsedItem::Pair { entity: entity.to_string(), relation: relation.to_string() })
        }
        [head, relation, tail] => out.push(ParsedItem::Triple {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
        }),
        _ => {} // malformed arity
    }
}

/// Output that was JSON-stringified once has every double quote escaped;
/// strip that layer so its fields lex normally.
fn unwrap_stringified(text: String) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut saw_escaped_quote = false;
    for (i, &c) in chars.iter().enumerate() {
        if c == '"' {
            if i > 0 && chars[i - 1] == '\\' {
                saw_escaped_quote = true;
            } else {
                return text;
            }
        }
    }
    if saw_escaped_quote {
        text.replace("\\\"", "\"")
    } else {
        text
    }
}

/// Best-effort parse of extractor text into candidate items, in order.
pub fn parse_items(raw: &str) -> Vec<ParsedItem> {
    let roots = build_tree(lex(&unwrap_stringified(normalize_quotes(raw))));
    let mut items = Vec::new();
    for root in &roots {
        collect_items(root, &mut items);
    }
    items
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("{path}: {message}")]
    Lookup { path: String, message: String },
    #[error("extractor process: {0}")]
    Process(String),
}

/// Produces raw extractor output for sentences.
pub trait Extractor: Send + Sync {
    /// One output per sentence, in input order.
    fn extract_batch(&self, sentences: &[&str]) -> Result<Vec<ExtractorOutput>, ExtractError>;

    fn extract(&self, sentence: &str) -> Result<ExtractorOutput, ExtractError> {
        let mut out = self.extract_batch(&[sentence])?;
        Ok(out.pop().unwrap_or_else(|| ExtractorOutput::from_raw("")))
    }
}

#[derive(Debug, Deserialize)]
struct LookupRow {
    sentence: String,
    raw: String,
}

/// Deterministic extractor backed by a sentence → raw-output table.
/// Unknown sentences yield empty output.
#[derive(Debug, Clone, Default)]
pub struct StubExtractor {
    table: HashMap<String, String>,
}

impl StubExtractor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sentence: &str, raw: &str) {
        self.table.insert(sentence.trim().to_owned(), raw.to_owned());
    }

    pub fn with(mut self, sentence: &str, raw: &str) -> Self {
        self.insert(sentence, raw);
        self
    }

    /// Reads JSONL rows `{"sentence": ..., "raw": ...}`.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut stub = StubExtractor::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: LookupRow = serde_json::from_str(line)?;
            stub.insert(&row.sentence, &row.raw);
        }
        Ok(stub)
    }

    pub fn load(path: &Path) -> Result<Self, ExtractError> {
        let err = |message: String| ExtractError::Lookup { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_jsonl(&text).map_err(|e| err(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Extractor for StubExtractor {
    fn extract_batch(&self, sentences: &[&str]) -> Result<Vec<ExtractorOutput>, ExtractError> {
        Ok(sentences
            .iter()
            .map(|s| ExtractorOutput::from_raw(self.table.get(s.trim()).map(String::as_str).unwrap_or("")))
            .collect())
    }
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Runs an external extractor program that reads one sentence per line on
/// stdin and answers one raw output per line on stdout, in order.
pub struct CommandExtractor {
    io: Mutex<ChildIo>,
}

impl CommandExtractor {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, ExtractError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ExtractError::Process(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(CommandExtractor { io: Mutex::new(ChildIo { child, stdin, stdout }) })
    }
}

impl Extractor for CommandExtractor {
    fn extract_batch(&self, sentences: &[&str]) -> Result<Vec<ExtractorOutput>, ExtractError> {
        let mut guard = self.io.lock().map_err(|_| ExtractError::Process("adapter lock poisoned".into()))?;
        let ChildIo { stdin, stdout, .. } = &mut *guard;
        let payload: String = sentences.iter().map(|s| format!("{}\n", s.replace(['\n', '\r'], " "))).collect();
        std::thread::scope(|scope| {
            let writer = scope.spawn(move || stdin.write_all(payload.as_bytes()).and_then(|_| stdin.flush()));
            let mut outputs = Vec::with_capacity(sentences.len());
            let mut line = String::new();
            for _ in 0..sentences.len() {
                line.clear();
                let n = stdout.read_line(&mut line).map_err(|e| ExtractError::Process(e.to_string()))?;
                if n == 0 {
                    return Err(ExtractError::Process("extractor closed its output early".into()));
                }
                outputs.push(ExtractorOutput::from_raw(line.trim_end_matches(['\n', '\r'])));
            }
            writer
                .join()
                .map_err(|_| ExtractError::Process("writer thread panicked".into()))?
                .map_err(|e| ExtractError::Process(e.to_string()))?;
            Ok(outputs)
        })
    }
}

impl Drop for CommandExtractor {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
