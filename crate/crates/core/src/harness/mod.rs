//! The experiment matrix: sample preparation, model dispatch, scoring,
//! aggregation and report files.

mod config;
mod report;
mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{Method, PromptOrder};
use crate::tags::{parse_model_output, ParsedOutput};
use crate::world::{count_value, count_word, TaskId, TaskSample};

pub use config::{MethodParams, OfflineModel, RunConfig};
pub use report::{
    cell_text, emit_csv, emit_report, heatmap_color, read_csv, report_from_records, CsvRow,
};
pub use run::{build_model, prepare_samples, prompt_kit, run_matrix, run_to_dir, RunOutcome, SampleSets};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(#[from] crate::world::DatasetError),
    #[error("sample generation: {0}")]
    Generation(#[from] crate::world::GenError),
    #[error("prompt templates: {0}")]
    Prompt(#[from] crate::prompt::PromptError),
    #[error("model setup: {0}")]
    Model(#[from] crate::client::ModelError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed records file: {0}")]
    Records(String),
}

/// Context length in estimated tokens, labelled "16k" when a multiple of 1024.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "SizeRepr", into = "String")]
pub struct ContextSize(pub usize);

#[derive(Deserialize)]
#[serde(untagged)]
enum SizeRepr {
    Number(usize),
    Label(String),
}

impl TryFrom<SizeRepr> for ContextSize {
    type Error = String;

    fn try_from(r: SizeRepr) -> Result<Self, Self::Error> {
        match r {
            SizeRepr::Number(n) => Ok(ContextSize(n)),
            SizeRepr::Label(s) => s.parse(),
        }
    }
}

impl From<ContextSize> for String {
    fn from(c: ContextSize) -> String {
        c.to_string()
    }
}

impl fmt::Display for ContextSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 > 0 && self.0.is_multiple_of(1024) {
            write!(f, "{}k", self.0 / 1024)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for ContextSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let parsed = match t.strip_suffix('k') {
            Some(k) => k.parse::<usize>().map(|k| k * 1024),
            None => t.parse::<usize>(),
        };
        match parsed {
            Ok(n) if n > 0 => Ok(ContextSize(n)),
            _ => Err(format!("invalid context size {s:?}")),
        }
    }
}

/// One scored completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task: TaskId,
    pub context_size: ContextSize,
    pub method: Method,
    pub order: Option<PromptOrder>,
    pub index: usize,
    pub question: String,
    pub target: String,
    pub output: String,
    pub parsed: Option<ParsedOutput>,
    pub correct: bool,
    /// Set when the model failed or no answer could be extracted.
    pub flagged: bool,
    pub error: Option<String>,
    pub latency_ms: u64,
}

static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d+\b").expect("digit pattern"));

fn normalize_count(text: &str) -> String {
    let text = DIGITS.replace_all(text, |c: &regex::Captures<'_>| {
        match c[0].parse::<usize>() {
            Ok(n) if n <= 10 => count_word(n),
            _ => c[0].to_string(),
        }
    });
    text.replace("zero", "none")
}

fn is_count(target: &str) -> bool {
    count_value(target).is_some() || target.parse::<usize>().is_ok_and(|n| n <= 10)
}

/// Case-insensitive containment of the target in the answer. Count targets
/// ("two", "2", "none") compare with digits and count words unified.
pub fn check_correct(target: &str, answer: &str) -> bool {
    let target = target.trim().to_lowercase();
    if target.is_empty() {
        return false;
    }
    let answer = answer.trim().to_lowercase();
    if is_count(&target) {
        normalize_count(&answer).contains(&normalize_count(&target))
    } else {
        answer.contains(&target)
    }
}

/// Identifies a record's cell and prompt order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub task: TaskId,
    pub context_size: ContextSize,
    pub method: Method,
}

/// Scores a completion. Proposed completions are scored on the extracted
/// answer, or on the whole completion when only the last-line fallback
/// found one.
pub fn score_sample(
    key: CellKey,
    order: Option<PromptOrder>,
    index: usize,
    sample: &TaskSample,
    completion: &str,
) -> EvalRecord {
    let mut record = EvalRecord {
        task: key.task,
        context_size: key.context_size,
        method: key.method,
        order,
        index,
        question: sample.question.clone(),
        target: sample.target.clone(),
        output: completion.to_string(),
        parsed: None,
        correct: false,
        flagged: false,
        error: None,
        latency_ms: 0,
    };
    if key.method != Method::Proposed {
        record.correct = check_correct(&sample.target, completion);
        return record;
    }
    match parse_model_output(completion) {
        Ok(parsed) => {
            let scored = if parsed.answer_fallback {
                completion
            } else {
                parsed.final_answer.as_str()
            };
            record.correct = check_correct(&sample.target, scored);
            record.parsed = Some(parsed);
        }
        Err(e) => {
            record.flagged = true;
            record.error = Some(e.to_string());
        }
    }
    record
}

/// A failed model call: incorrect, flagged, still counted.
pub fn failed_record(
    key: CellKey,
    order: Option<PromptOrder>,
    index: usize,
    sample: &TaskSample,
    error: String,
) -> EvalRecord {
    let mut record = score_sample(key, order, index, sample, "");
    record.correct = false;
    record.flagged = true;
    record.parsed = None;
    record.error = Some(error);
    record
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn new(correct: usize, total: usize) -> Self {
        Self { correct, total }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cell {
    Single(Tally),
    Ranged { per_order: BTreeMap<PromptOrder, Tally> },
}

impl Cell {
    pub fn accuracies(&self) -> Vec<f64> {
        match self {
            Cell::Single(t) => vec![t.accuracy()],
            Cell::Ranged { per_order } => per_order.values().map(Tally::accuracy).collect(),
        }
    }

    /// `(min, max)` over orders; equal for single cells.
    pub fn range(&self) -> (f64, f64) {
        let a = self.accuracies();
        let min = a.iter().copied().fold(f64::INFINITY, f64::min);
        let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Scalar shown in heatmaps: the mean over orders.
    pub fn mean(&self) -> f64 {
        let a = self.accuracies();
        a.iter().sum::<f64>() / a.len().max(1) as f64
    }

    pub fn samples(&self) -> usize {
        match self {
            Cell::Single(t) => t.total,
            Cell::Ranged { per_order } => per_order.values().map(|t| t.total).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub cells: BTreeMap<CellKey, Cell>,
}

impl EvalReport {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut tallies: BTreeMap<CellKey, BTreeMap<Option<PromptOrder>, Tally>> = BTreeMap::new();
        for r in records {
            let key = CellKey {
                task: r.task,
                context_size: r.context_size,
                method: r.method,
            };
            let t = tallies.entry(key).or_default().entry(r.order).or_default();
            t.total += 1;
            t.correct += usize::from(r.correct);
        }
        Self::from_tallies(tallies)
    }

    pub fn from_tallies(tallies: BTreeMap<CellKey, BTreeMap<Option<PromptOrder>, Tally>>) -> Self {
        let cells = tallies
            .into_iter()
            .map(|(key, by_order)| {
                let per_order: BTreeMap<PromptOrder, Tally> =
                    by_order.iter().filter_map(|(o, t)| o.map(|o| (o, *t))).collect();
                let cell = if per_order.is_empty() {
                    Cell::Single(by_order.values().copied().fold(Tally::default(), |a, t| {
                        Tally::new(a.correct + t.correct, a.total + t.total)
                    }))
                } else {
                    Cell::Ranged { per_order }
                };
                (key, cell)
            })
            .collect();
        Self { cells }
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        dedup(self.cells.keys().map(|k| k.task))
    }

    pub fn sizes(&self) -> Vec<ContextSize> {
        dedup(self.cells.keys().map(|k| k.context_size))
    }

    pub fn methods(&self) -> Vec<Method> {
        dedup(self.cells.keys().map(|k| k.method))
    }

    pub fn get(&self, task: TaskId, context_size: ContextSize, method: Method) -> Option<&Cell> {
        self.cells.get(&CellKey {
            task,
            context_size,
            method,
        })
    }
}

fn dedup<T: Ord>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = items.collect();
    v.sort();
    v.dedup();
    v
}

/// Two-decimal `min--max`, or a single value when both ends print alike.
pub fn format_range(accuracies: &[f64]) -> String {
    if accuracies.is_empty() {
        return String::new();
    }
    let min = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (format!("{min:.2}"), format!("{max:.2}"));
    if lo == hi {
        lo
    } else {
        format!("{lo}--{hi}")
    }
}
