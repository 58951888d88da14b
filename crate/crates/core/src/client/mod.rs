//! Model invocation: an OpenAI-compatible HTTP client plus two offline
//! models (an instruction-perfect oracle and a transcript replayer).

mod openai;
mod oracle;
mod transcript;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::RenderedPrompt;
use crate::world::TaskSample;

pub use openai::{request_body, Backoff, Endpoint, OpenAiClient, BASE_URL_ENV, DEFAULT_API_KEY_ENV};
pub use oracle::{oracle_complete, OracleModel};
pub use transcript::{
    fingerprint, replay_complete, Recorder, ReplayModel, RequestSummary, TranscriptEntry,
    TranscriptStore,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl GenParams {
    /// Short-answer budget used for the baseline and RAG methods.
    pub const SHORT_ANSWER: GenParams = GenParams {
        max_tokens: 20,
        temperature: 0.0,
    };

    /// Budget for the tag / summarize / reason / answer completion.
    pub const REASONING: GenParams = GenParams {
        max_tokens: 1024,
        temperature: 0.0,
    };
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("sample carries no needle metadata")]
    MissingNeedleMetadata,
    #[error("no transcript for fingerprint {fingerprint}")]
    MissingTranscript { fingerprint: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Everything a model may look at for one completion.
#[derive(Debug, Clone, Copy)]
pub struct ModelCall<'a> {
    pub prompt: &'a RenderedPrompt,
    pub params: GenParams,
    /// Ground truth, used only by the oracle model.
    pub sample: &'a TaskSample,
}

pub trait Model: Send + Sync {
    /// Label recorded in transcripts.
    fn name(&self) -> &str;

    fn complete(&self, call: &ModelCall<'_>) -> Result<String, ModelError>;
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, call: &ModelCall<'_>) -> Result<String, ModelError> {
        (**self).complete(call)
    }
}
