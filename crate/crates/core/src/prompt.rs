//! Prompt construction for the three evaluated methods.
//!
//! Every prompt is a fixed short system message (optional) followed by one
//! user message assembled from named blocks. The span of each block's payload
//! inside the user message is recorded so tests and diagnostics can check
//! ordering and fidelity without re-parsing the text.
//!
//! Proposed-method block orders:
//!
//! | order            | blocks                                                   |
//! |------------------|----------------------------------------------------------|
//! | `Standard`       | instructions, content, question, example tags            |
//! | `QuestionFirst`  | question, instructions, content, example tags            |
//! | `RelevantFirst`  | example tags, content, question, instructions            |
//!
//! `RelevantFirst` is an interpretation: the tag demonstration (which itself
//! shows the tagging format) leads, and the numbered directives close the
//! prompt. Without example tags it degrades to content, question,
//! instructions.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatMessage, Role};

const DEFAULT_TEMPLATES: &str = include_str!("../templates/default.txt");
const BLOCK_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    NaiveRag,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::NaiveRag, Method::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::NaiveRag => "naive_rag",
            Method::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(Method::Baseline),
            "naive_rag" | "rag" => Ok(Method::NaiveRag),
            "proposed" => Ok(Method::Proposed),
            other => Err(PromptError::Unknown(format!("method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptOrder {
    Standard,
    QuestionFirst,
    RelevantFirst,
}

impl PromptOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptOrder::Standard => "standard",
            PromptOrder::QuestionFirst => "question_first",
            PromptOrder::RelevantFirst => "relevant_first",
        }
    }

    fn blocks(self, example_tags: bool) -> Vec<Block> {
        use Block::*;
        let mut blocks = match self {
            PromptOrder::Standard => vec![Instructions, Content, Question, ExampleTags],
            PromptOrder::QuestionFirst => vec![Question, Instructions, Content, ExampleTags],
            PromptOrder::RelevantFirst => vec![ExampleTags, Content, Question, Instructions],
        };
        if !example_tags {
            blocks.retain(|b| *b != ExampleTags);
        }
        blocks
    }
}

impl fmt::Display for PromptOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptOrder {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(PromptOrder::Standard),
            "question_first" => Ok(PromptOrder::QuestionFirst),
            "relevant_first" => Ok(PromptOrder::RelevantFirst),
            other => Err(PromptError::Unknown(format!("prompt order {other:?}"))),
        }
    }
}

/// The three evaluated orders, always in this sequence.
pub fn all_prompt_orders() -> [PromptOrder; 3] {
    [
        PromptOrder::Standard,
        PromptOrder::QuestionFirst,
        PromptOrder::RelevantFirst,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Instructions,
    Content,
    Question,
    ExampleTags,
    Snippets,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpan {
    pub message: usize,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub messages: Vec<ChatMessage>,
    pub block_spans: BTreeMap<Block, BlockSpan>,
    pub method: Method,
    pub order: Option<PromptOrder>,
}

impl RenderedPrompt {
    pub fn block_text(&self, block: Block) -> Option<&str> {
        let span = self.block_spans.get(&block)?;
        self.messages
            .get(span.message)
            .and_then(|m| m.content.get(span.range.clone()))
    }

    /// Blocks sorted by where they appear.
    pub fn block_sequence(&self) -> Vec<Block> {
        let mut blocks: Vec<(&Block, &BlockSpan)> = self.block_spans.iter().collect();
        blocks.sort_by_key(|(_, s)| (s.message, s.range.start));
        blocks.into_iter().map(|(b, _)| *b).collect()
    }

    /// The user message carrying the blocks.
    pub fn user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("context is empty")]
    EmptyContext,
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no snippets to present")]
    NoSnippets,
    #[error("snippet {0} is empty")]
    EmptySnippet(usize),
    #[error("template error: {0}")]
    Template(String),
    #[error("unknown {0}")]
    Unknown(String),
}

/// A block template split around its single placeholder, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Section {
    head: String,
    tail: Option<String>,
}

impl Section {
    fn fixed(text: &str) -> Result<Self, String> {
        if text.contains("{context}") || text.contains("{question}") {
            return Err("takes no placeholders".into());
        }
        Ok(Self {
            head: text.to_string(),
            tail: None,
        })
    }

    fn with_slot(text: &str, slot: &str) -> Result<Self, String> {
        let mut parts = text.split(slot);
        let head = parts.next().unwrap_or_default().to_string();
        let tail = parts
            .next()
            .ok_or_else(|| format!("missing {slot}"))?
            .to_string();
        if parts.next().is_some() {
            return Err(format!("{slot} appears more than once"));
        }
        Ok(Self {
            head,
            tail: Some(tail),
        })
    }
}

/// Prompt wording, loaded from a sectioned template file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    system: String,
    baseline_content: Section,
    baseline_question: Section,
    rag_snippets: Section,
    rag_question: Section,
    instructions: Section,
    proposed_content: Section,
    proposed_question: Section,
    example_tags: Section,
}

impl Default for Templates {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("embedded templates are valid")
    }
}

impl Templates {
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("@@") {
                let name = name.trim().to_string();
                if sections.contains_key(&name) {
                    return Err(PromptError::Template(format!("duplicate section {name}")));
                }
                sections.insert(name.clone(), Vec::new());
                current = Some(name);
            } else if let Some(name) = &current {
                sections.get_mut(name).expect("section exists").push(line);
            } else if !(line.trim().is_empty() || line.starts_with('#')) {
                return Err(PromptError::Template(format!(
                    "text before the first section: {line:?}"
                )));
            }
        }
        let body = |name: &str| -> Result<String, PromptError> {
            let lines = sections
                .get(name)
                .ok_or_else(|| PromptError::Template(format!("missing section {name}")))?;
            let text = lines.join("\n");
            let text = text.trim_matches('\n');
            if text.trim().is_empty() {
                return Err(PromptError::Template(format!("section {name} is empty")));
            }
            Ok(text.to_string())
        };
        let check = |name: &str, r: Result<Section, String>| {
            r.map_err(|e| PromptError::Template(format!("section {name}: {e}")))
        };
        let fixed = |name: &str| check(name, Section::fixed(&body(name)?));
        let slot = |name: &str, s: &str| check(name, Section::with_slot(&body(name)?, s));
        Ok(Self {
            system: fixed("system")?.head,
            baseline_content: slot("baseline.content", "{context}")?,
            baseline_question: slot("baseline.question", "{question}")?,
            rag_snippets: slot("rag.snippets", "{context}")?,
            rag_question: slot("rag.question", "{question}")?,
            instructions: fixed("proposed.instructions")?,
            proposed_content: slot("proposed.content", "{context}")?,
            proposed_question: slot("proposed.question", "{question}")?,
            example_tags: fixed("proposed.example_tags")?,
        })
    }
}

/// Builds prompts from a template set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptKit {
    templates: Templates,
    system_message: bool,
}

impl Default for PromptKit {
    fn default() -> Self {
        Self::new(Templates::default())
    }
}

impl PromptKit {
    pub fn new(templates: Templates) -> Self {
        Self {
            templates,
            system_message: true,
        }
    }

    pub fn without_system_message(mut self) -> Self {
        self.system_message = false;
        self
    }

    pub fn build_baseline(&self, context: &str, question: &str) -> Result<RenderedPrompt, PromptError> {
        require(context, question)?;
        let t = &self.templates;
        Ok(self.render(
            &[
                (Block::Content, &t.baseline_content, context),
                (Block::Question, &t.baseline_question, question),
            ],
            Method::Baseline,
            None,
        ))
    }

    pub fn build_rag<S: AsRef<str>>(
        &self,
        snippets: &[S],
        question: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        if snippets.is_empty() {
            return Err(PromptError::NoSnippets);
        }
        if let Some(i) = snippets.iter().position(|s| s.as_ref().trim().is_empty()) {
            return Err(PromptError::EmptySnippet(i));
        }
        if question.trim().is_empty() {
            return Err(PromptError::EmptyQuestion);
        }
        let listing = snippets
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
            .collect::<Vec<_>>()
            .join("\n");
        let t = &self.templates;
        Ok(self.render(
            &[
                (Block::Snippets, &t.rag_snippets, &listing),
                (Block::Question, &t.rag_question, question),
            ],
            Method::NaiveRag,
            None,
        ))
    }

    pub fn build_emulated_rag(
        &self,
        context: &str,
        question: &str,
        order: PromptOrder,
        include_example_tags: bool,
    ) -> Result<RenderedPrompt, PromptError> {
        require(context, question)?;
        let t = &self.templates;
        let parts: Vec<(Block, &Section, &str)> = order
            .blocks(include_example_tags)
            .into_iter()
            .map(|b| match b {
                Block::Instructions => (b, &t.instructions, ""),
                Block::Content => (b, &t.proposed_content, context),
                Block::Question => (b, &t.proposed_question, question),
                Block::ExampleTags => (b, &t.example_tags, ""),
                Block::Snippets => unreachable!("snippets belong to the RAG prompt"),
            })
            .collect();
        Ok(self.render(&parts, Method::Proposed, Some(order)))
    }

    fn render(
        &self,
        parts: &[(Block, &Section, &str)],
        method: Method,
        order: Option<PromptOrder>,
    ) -> RenderedPrompt {
        let mut messages = Vec::new();
        if self.system_message {
            messages.push(ChatMessage::system(&self.templates.system));
        }
        let message = messages.len();
        let mut user = String::new();
        let mut block_spans = BTreeMap::new();
        for (block, section, value) in parts {
            if !user.is_empty() {
                user.push_str(BLOCK_SEPARATOR);
            }
            let range = match &section.tail {
                Some(tail) => {
                    user.push_str(&section.head);
                    let start = user.len();
                    user.push_str(value);
                    let end = user.len();
                    user.push_str(tail);
                    start..end
                }
                None => {
                    let start = user.len();
                    user.push_str(&section.head);
                    start..user.len()
                }
            };
            block_spans.insert(*block, BlockSpan { message, range });
        }
        messages.push(ChatMessage::user(user));
        RenderedPrompt {
            messages,
            block_spans,
            method,
            order,
        }
    }
}

fn require(context: &str, question: &str) -> Result<(), PromptError> {
    if context.trim().is_empty() {
        return Err(PromptError::EmptyContext);
    }
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    Ok(())
}

static DEFAULT_KIT: LazyLock<PromptKit> = LazyLock::new(PromptKit::default);

/// Whole context plus question, no tagging or reasoning directives.
pub fn build_baseline_prompt(context: &str, question: &str) -> Result<RenderedPrompt, PromptError> {
    DEFAULT_KIT.build_baseline(context, question)
}

/// Numbered retrieved sentences followed by the question.
pub fn build_rag_prompt<S: AsRef<str>>(snippets: &[S], question: &str) -> Result<RenderedPrompt, PromptError> {
    DEFAULT_KIT.build_rag(snippets, question)
}

/// The single-pass tag / summarize / reason / answer prompt.
pub fn build_emulated_rag_prompt(
    context: &str,
    question: &str,
    order: PromptOrder,
    include_example_tags: bool,
) -> Result<RenderedPrompt, PromptError> {
    DEFAULT_KIT.build_emulated_rag(context, question, order, include_example_tags)
}
