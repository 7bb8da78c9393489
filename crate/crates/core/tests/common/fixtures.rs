//! Fixture loaders and a templated completion generator shared by the
//! integration and acceptance tests.

#![allow(dead_code)]

use std::path::PathBuf;

use corver_core::reward::FixedCounter;
use corver_core::triplet::StubExtractor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[derive(Debug, Clone, Deserialize)]
pub struct TraceSentence {
    pub text: String,
    pub block: String,
    pub triplet: [String; 3],
    pub query: Vec<String>,
    pub count: u64,
    pub reward: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TraceCase {
    pub name: String,
    pub gold: String,
    pub text: String,
    pub sentences: Vec<TraceSentence>,
}

impl TraceCase {
    /// Stub extractor answering each sentence with its recorded triplet.
    pub fn extractor(&self) -> StubExtractor {
        let mut stub = StubExtractor::new();
        for s in &self.sentences {
            stub.insert(&s.text, &serde_json::to_string(&[&s.triplet]).unwrap());
        }
        stub
    }

    /// Counter returning the recorded count for each recorded query.
    pub fn counter(&self) -> FixedCounter {
        let mut c = FixedCounter::new();
        for s in &self.sentences {
            c.insert(&s.query, s.count);
        }
        c
    }
}

pub fn case_study() -> Vec<TraceCase> {
    #[derive(Deserialize)]
    struct File {
        cases: Vec<TraceCase>,
    }
    serde_json::from_str::<File>(&read_fixture("case_study.json")).unwrap().cases
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradingCase {
    Normalize { input: String, output: String, note: String },
    Judge { prediction: String, gold: Value, label: String, note: String },
    Extract { completion: String, answer: String, note: String },
    Format { completion: String, rule: Option<String>, note: String },
}

pub fn grading_cases() -> Vec<GradingCase> {
    read_fixture("grading_cases.jsonl").lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Subword-style mock tokenizer: tags split into `<`, name, `>`; runs of
/// letters or digits carry their leading whitespace; other characters are
/// single tokens. Spans are code-point offsets covering the whole text.
pub fn mock_tokenize(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i == chars.len() {
            spans.push((start, i));
            break;
        }
        if chars[i].is_alphanumeric() {
            // letters and digits form separate runs
            let letters = chars[i].is_alphabetic();
            while i < chars.len() && chars[i].is_alphanumeric() && chars[i].is_alphabetic() == letters {
                i += 1;
            }
        } else {
            i += 1;
        }
        spans.push((start, i));
    }
    spans
}

const SUBJECTS: [&str; 8] =
    ["Marie Curie", "The Danube", "Mount Kilimanjaro", "Johann Sebastian Bach", "The Treaty of Versailles", "Ada Lovelace", "The Amazon River", "Kyoto"];
const PREDICATES: [&str; 8] = [
    "was first described in",
    "is closely associated with",
    "was studied extensively by",
    "lies near",
    "appears in records from",
    "is often compared with",
    "was documented in",
    "influenced",
];
const OBJECTS: [&str; 8] = ["Vienna", "the year 1919", "East Africa", "Leipzig", "the Royal Society", "Paris", "Brazil", "the Heian period"];

/// One templated completion with `think` and `answer` sentence counts.
pub fn templated_completion(rng: &mut ChaCha8Rng, think: usize, answer: usize) -> String {
    let sentence = |rng: &mut ChaCha8Rng| {
        let end = *[".", ".", ".", "!", "?"].choose(rng).unwrap();
        format!("{} {} {}{end}", SUBJECTS.choose(rng).unwrap(), PREDICATES.choose(rng).unwrap(), OBJECTS.choose(rng).unwrap())
    };
    let think_text: Vec<String> = (0..think).map(|_| sentence(rng)).collect();
    let answer_text: Vec<String> = (0..answer).map(|_| sentence(rng)).collect();
    let sep = if rng.gen_bool(0.5) { "\n" } else { " " };
    format!("<think>{}</think>{sep}<answer>{}</answer>", think_text.join(" "), answer_text.join(" "))
}

/// `n` templated completions with their mock tokenizations, reproducible from `seed`.
pub fn templated_set(n: usize, seed: u64) -> Vec<(String, Vec<(usize, usize)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let think = rng.gen_range(1..=8);
            let answer = rng.gen_range(1..=3);
            let text = templated_completion(&mut rng, think, answer);
            let spans = mock_tokenize(&text);
            (text, spans)
        })
        .collect()
}

/// JSON completion record in the wire format.
pub fn completion_json(text: &str, gold: Option<&str>) -> Value {
    let spans = mock_tokenize(text);
    let mut v = json!({"text": text, "token_spans": spans});
    if let Some(g) = gold {
        v["gold"] = json!({"answer": g});
    }
    v
}

/// Never / learning / mastered counts of one filtered pool, plus the anchors
/// mixed back in.
#[derive(Debug, Clone, Copy)]
pub struct ZoneRow {
    pub model: &'static str,
    pub pool: usize,
    pub never: usize,
    pub learning: usize,
    pub mastered: usize,
    pub anchors: usize,
}

pub const G: u32 = 16;

pub const ZONE_ROWS: [ZoneRow; 6] = [
    ZoneRow { model: "Llama-3.2-3B-Instruct", pool: 9680, never: 2463, learning: 5172, mastered: 2045, anchors: 1000 },
    ZoneRow { model: "Llama-3.1-8B-Instruct", pool: 9680, never: 3057, learning: 4861, mastered: 1762, anchors: 0 },
    ZoneRow { model: "Qwen3-4B", pool: 13560, never: 6515, learning: 4329, mastered: 2716, anchors: 800 },
    ZoneRow { model: "Qwen3-8B", pool: 13560, never: 5084, learning: 4956, mastered: 3520, anchors: 0 },
    ZoneRow { model: "Qwen3-14B", pool: 13560, never: 4839, learning: 4623, mastered: 4098, anchors: 0 },
    ZoneRow { model: "OLMo-2-13B-Instruct", pool: 13560, never: 4422, learning: 5608, mastered: 3530, anchors: 0 },
];

/// Shuffled grade records realizing a row's bucket counts, learning-zone
/// counts spread over 1..=15.
pub fn synthetic_grades(row: &ZoneRow, seed: u64) -> Vec<corver_core::data::QuestionStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_correct: Vec<u32> = Vec::with_capacity(row.pool);
    n_correct.extend(std::iter::repeat_n(0, row.never));
    n_correct.extend((0..row.learning).map(|_| rng.gen_range(1..G)));
    n_correct.extend(std::iter::repeat_n(G, row.mastered));
    n_correct.shuffle(&mut rng);
    n_correct
        .into_iter()
        .enumerate()
        .map(|(i, n)| corver_core::data::QuestionStats { question_id: format!("q{i:05}"), n_correct: n, g: G })
        .collect()
}

/// Calibration buckets with their audited size and correct count.
pub const AUDIT_BUCKETS: [(u64, u64, u64); 5] = [(0, 200, 48), (1, 100, 53), (5, 100, 70), (10, 100, 73), (20, 200, 162)];
/// Published precision and 95% Wilson interval per bucket, in percent.
pub const AUDIT_PERCENT: [(f64, f64, f64); 5] =
    [(24.0, 18.6, 30.4), (53.0, 43.3, 62.5), (70.0, 60.4, 78.1), (73.0, 63.6, 80.7), (81.0, 75.0, 85.8)];

/// Labelled counts reproducing the audit: each bucket's records sit at
/// counts inside the bucket, with the first `correct` labelled correct.
pub fn audit_records() -> Vec<corver_core::data::CalibrationRecord> {
    let mut out = Vec::new();
    let uppers = [0u64, 4, 9, 19, 100_000];
    for (&(lower, n, correct), &upper) in AUDIT_BUCKETS.iter().zip(&uppers) {
        for i in 0..n {
            let count = lower + i % (upper - lower + 1);
            out.push(corver_core::data::CalibrationRecord { count: Some(count), correct: Some(i < correct) });
        }
    }
    out
}
