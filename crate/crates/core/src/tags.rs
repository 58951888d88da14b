//! Interpretation of completions produced under the single-pass prompt:
//! `<relevant_section>` tags (or their JSON form), bullet summaries,
//! `Step N:` reasoning lines and the final `Answer:`.
//!
//! Model output is rarely well-formed markup, so the parser recovers where it
//! can and records a warning for every recovery it makes.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

const OPEN: &str = "<relevant_section";
const CLOSE: &str = "</relevant_section>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSegment {
    pub content: String,
    pub position_percent: Option<f64>,
    pub reason: Option<String>,
}

impl TaggedSegment {
    pub fn new(content: impl Into<String>, position_percent: Option<f64>) -> Self {
        Self {
            content: content.into(),
            position_percent,
            reason: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub segments: Vec<TaggedSegment>,
    pub summaries: Vec<String>,
    pub cot_steps: Vec<String>,
    pub final_answer: String,
    /// The answer came from the last-line fallback, not an `Answer:` marker.
    pub answer_fallback: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("completion is empty")]
    EmptyCompletion,
    #[error("no answer found in completion")]
    NoAnswerFound,
    #[error("no JSON relevant_sections found")]
    NoJsonFound,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalAnswer {
    pub text: String,
    pub fallback: bool,
}

static ATTRIBUTE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\b(position|reason(?:_why_tagged)?)\s*=\s*(?:"([^"]*)"?|'([^']*)'?|([^\s>]+))"#)
        .expect("attribute pattern")
});

static STEP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s>#*_-]*step\s*\d+\s*[*_]*\s*[:.)]\s*[*_]*\s*(.*?)\s*$").expect("step pattern")
});

static BULLET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+\.)\s+(.+?)\s*$").expect("bullet pattern"));

/// Parses a completion into tagged segments, summaries, reasoning steps and
/// the final answer.
pub fn parse_model_output(completion: &str) -> Result<ParsedOutput, ParseError> {
    if completion.is_empty() {
        return Err(ParseError::EmptyCompletion);
    }
    let mut out = ParsedOutput::default();
    let (segments, tag_spans) = scan_tags(completion, &mut out.warnings);
    out.segments = segments;
    if out.segments.is_empty() && tag_spans.is_empty() {
        if let Ok((segments, warnings)) = parse_json_sections(completion) {
            out.segments = segments;
            out.warnings.extend(warnings);
        }
    }

    out.cot_steps = STEP
        .captures_iter(completion)
        .map(|c| c[1].to_string())
        .collect();

    let mut line_start = 0;
    for line in completion.split_inclusive('\n') {
        let start = line_start;
        line_start += line.len();
        if tag_spans.iter().any(|&(a, b)| start < b && a < start + line.len()) {
            continue;
        }
        if STEP.is_match(line) || line.to_ascii_lowercase().contains("answer:") {
            continue;
        }
        if let Some(c) = BULLET.captures(line) {
            out.summaries.push(c[1].to_string());
        }
    }
    if !out.segments.is_empty() && out.summaries.is_empty() {
        out.warnings.push("no summaries found for tagged sections".into());
    }

    let answer = extract_final_answer(completion)?;
    if answer.fallback {
        out.warnings
            .push("no Answer: marker; used the last non-empty line".into());
    }
    out.final_answer = answer.text;
    out.answer_fallback = answer.fallback;
    Ok(out)
}

/// Text after the last case-insensitive `Answer:` marker (its first
/// non-empty line), or the last non-empty line as a flagged fallback.
pub fn extract_final_answer(completion: &str) -> Result<FinalAnswer, ParseError> {
    const MARKER: &str = "answer:";
    let lower = completion.to_ascii_lowercase();
    if let Some(i) = lower.rfind(MARKER) {
        if let Some(text) = completion[i + MARKER.len()..]
            .lines()
            .map(clean_line)
            .find(|l| !l.is_empty())
        {
            return Ok(FinalAnswer {
                text: text.to_string(),
                fallback: false,
            });
        }
    }
    completion
        .lines()
        .rev()
        .map(clean_line)
        .find(|l| !l.is_empty() && !l.to_ascii_lowercase().ends_with(MARKER))
        .map(|text| FinalAnswer {
            text: text.to_string(),
            fallback: true,
        })
        .ok_or(ParseError::NoAnswerFound)
}

fn clean_line(line: &str) -> &str {
    line.trim().trim_matches(|c: char| c == '*' || c == '_' || c.is_whitespace())
}

/// Returns the parsed segments and the byte spans of every tag found.
fn scan_tags(completion: &str, warnings: &mut Vec<String>) -> (Vec<TaggedSegment>, Vec<(usize, usize)>) {
    let lower = completion.to_ascii_lowercase();
    let len = completion.len();
    let mut segments = Vec::new();
    let mut spans = Vec::new();
    let mut pos = 0;
    while let Some(rel) = lower[pos..].find(OPEN) {
        let start = pos + rel;
        let after_name = start + OPEN.len();
        pos = after_name;
        if lower[after_name..]
            .chars()
            .next()
            .is_some_and(|c| !(c.is_whitespace() || c == '>' || c == '/'))
        {
            continue;
        }

        let rest = &completion[after_name..];
        let (attrs, body_start) = match rest.find(['>', '\n']) {
            Some(i) if rest.as_bytes()[i] == b'>' => (&rest[..i], after_name + i + 1),
            Some(i) => {
                warnings.push(format!(
                    "tag at byte {start} not closed with '>'; attributes read to end of line"
                ));
                (&rest[..i], after_name + i + 1)
            }
            None => {
                warnings.push(format!("tag at byte {start} truncated"));
                (rest, len)
            }
        };
        let (position, reason) = parse_attributes(attrs, warnings);

        let next_open = lower[body_start..]
            .find(OPEN)
            .map_or(len, |i| body_start + i);
        let (content, end) = match lower[body_start..next_open].find(CLOSE) {
            Some(i) => (&completion[body_start..body_start + i], body_start + i + CLOSE.len()),
            None => {
                warnings.push(format!(
                    "tag at byte {start} never closed; content salvaged to end of line"
                ));
                let region = &completion[body_start..next_open];
                let lead = region.len() - region.trim_start().len();
                let line_end = region[lead..].find('\n').map_or(region.len(), |i| lead + i);
                (&region[lead..line_end], body_start + line_end)
            }
        };
        spans.push((start, end));
        pos = end.max(pos);

        let content = content.trim();
        if content.is_empty() {
            warnings.push(format!("tag at byte {start} has no content; dropped"));
            continue;
        }
        segments.push(TaggedSegment {
            content: content.to_string(),
            position_percent: position,
            reason,
        });
    }
    (segments, spans)
}

fn parse_attributes(attrs: &str, warnings: &mut Vec<String>) -> (Option<f64>, Option<String>) {
    let mut position = None;
    let mut reason = None;
    for c in ATTRIBUTE.captures_iter(attrs) {
        let value = c
            .get(2)
            .or_else(|| c.get(3))
            .or_else(|| c.get(4))
            .map_or("", |m| m.as_str());
        if c[1].eq_ignore_ascii_case("position") {
            position = parse_position(value, warnings);
        } else {
            reason = Some(value.replace("&quot;", "\"").replace("&amp;", "&"));
        }
    }
    (position, reason)
}

fn parse_position(raw: &str, warnings: &mut Vec<String>) -> Option<f64> {
    let cleaned = raw.trim().trim_end_matches('%').trim();
    match cleaned.parse::<f64>() {
        Ok(p) if (0.0..=100.0).contains(&p) => Some(p),
        Ok(p) => {
            warnings.push(format!("position {p} outside [0, 100]; dropped"));
            None
        }
        Err(_) => {
            warnings.push(format!("unparsable position {raw:?}; dropped"));
            None
        }
    }
}

/// Reads the JSON variant: an object with a `relevant_sections` array, or a
/// bare array of objects carrying `content`.
pub fn parse_json_sections(completion: &str) -> Result<(Vec<TaggedSegment>, Vec<String>), ParseError> {
    for (i, _) in completion.match_indices(['{', '[']) {
        let mut stream = serde_json::Deserializer::from_str(&completion[i..]).into_iter::<Value>();
        let Some(Ok(value)) = stream.next() else {
            continue;
        };
        let entries = match &value {
            Value::Object(map) => match map.get("relevant_sections") {
                Some(Value::Array(a)) => a,
                _ => continue,
            },
            Value::Array(a) if a.iter().any(|e| e.get("content").is_some()) => a,
            _ => continue,
        };
        return Ok(json_entries(entries));
    }
    Err(ParseError::NoJsonFound)
}

fn json_entries(entries: &[Value]) -> (Vec<TaggedSegment>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut segments = Vec::new();
    for (n, entry) in entries.iter().enumerate() {
        let content = entry
            .get("content")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|c| !c.is_empty());
        let Some(content) = content else {
            warnings.push(format!("JSON entry {n} has no usable content; skipped"));
            continue;
        };
        let position_percent = match entry.get("position") {
            Some(Value::Number(x)) => parse_position(&x.to_string(), &mut warnings),
            Some(Value::String(s)) => parse_position(s, &mut warnings),
            Some(other) => {
                warnings.push(format!("JSON entry {n} position {other} unusable; dropped"));
                None
            }
            None => {
                warnings.push(format!("JSON entry {n} has no position"));
                None
            }
        };
        let reason = entry
            .get("reason_why_tagged")
            .or_else(|| entry.get("reason"))
            .and_then(Value::as_str)
            .map(str::to_string);
        segments.push(TaggedSegment {
            content: content.to_string(),
            position_percent,
            reason,
        });
    }
    (segments, warnings)
}

/// Renders segments in tag form, one per line, positions with one decimal.
pub fn serialize_segments(segments: &[TaggedSegment]) -> String {
    segments
        .iter()
        .map(|s| {
            let mut open = String::from(OPEN);
            if let Some(p) = s.position_percent {
                open.push_str(&format!(" position=\"{p:.1}%\""));
            }
            if let Some(r) = &s.reason {
                open.push_str(&format!(
                    " reason=\"{}\"",
                    r.replace('&', "&amp;").replace('"', "&quot;")
                ));
            }
            format!("{open}>{}{CLOSE}", s.content)
        })
        .collect::<Vec<_>>()
        .join("\n")
}
