//! Long-context question answering evaluation toolkit.
//!
//! The crate is split along the pipeline:
//!
//! - [`world`]: the bAbI micro-world for tasks 2, 7 and 10, its answer oracles
//!   and a generator that hides needle sentences inside long distractor text.
//! - [`prompt`]: prompt construction for the no-retrieval baseline, single-step
//!   RAG, and the single-pass tag / summarize / reason / answer method.
//! - [`tags`]: interpretation of completions produced under the single-pass
//!   prompt.
//! - [`retriever`]: sentence splitting and BM25 top-k selection for the RAG
//!   baseline.
//! - [`client`]: chat-completion clients (HTTP, oracle, transcript replay).
//! - [`harness`]: the experiment matrix, scoring and report emission.

pub mod client;
pub mod harness;
pub mod prompt;
pub mod retriever;
pub mod tags;
pub mod world;

pub use client::{ChatMessage, GenParams, Model, ModelCall, ModelError, Role};
pub use harness::{check_correct, format_range, EvalRecord, EvalReport, RunConfig};
pub use prompt::{Method, PromptOrder, RenderedPrompt};
pub use tags::{parse_model_output, ParsedOutput, TaggedSegment};
pub use world::{TaskId, TaskSample};
