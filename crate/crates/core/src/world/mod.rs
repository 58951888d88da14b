//! The bAbI micro-world behind QA2 (two supporting facts), QA7 (counting)
//! and QA10 (indefinite knowledge), plus long-context sample generation.

mod dataset;
mod distractor;
mod generate;
mod oracle;
mod state;
mod tokens;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_samples, write_samples};
pub use distractor::{builtin_sentence, DistractorSource, DISTRACTOR_VOCABULARY};
pub use generate::{derive_seed, generate_sample, generate_sample_with, GenSpec};
pub use oracle::{
    count_value, count_word, oracle_qa10, oracle_qa2, oracle_qa7, recompute_target, replay, replay_from,
    supporting_needles,
};
pub use state::{apply_event, Certainty, ObjectPlace, Whereabouts, WorldState};
pub use tokens::{count_tokens, CharRatio, TokenCounter};

pub const PERSONS: &[&str] = &[
    "Mary", "John", "Daniel", "Sandra", "Charlie", "Fred", "Bill", "Julie", "Jeff", "Emily",
];

pub const OBJECTS: &[&str] = &["apple", "football", "milk", "bottle", "book", "key"];

pub const LOCATIONS: &[&str] = &[
    "kitchen",
    "garden",
    "hallway",
    "bathroom",
    "office",
    "bedroom",
    "balcony",
    "classroom",
    "playground",
    "cinema",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Qa2,
    Qa7,
    Qa10,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Qa2, TaskId::Qa7, TaskId::Qa10];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Qa2 => "qa2",
            TaskId::Qa7 => "qa7",
            TaskId::Qa10 => "qa10",
        }
    }

    /// Fewest needle events a generated sample of this task may carry.
    pub fn min_events(self) -> usize {
        match self {
            TaskId::Qa2 => 2,
            TaskId::Qa7 => 2,
            TaskId::Qa10 => 1,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qa2" | "2" => Ok(TaskId::Qa2),
            "qa7" | "7" => Ok(TaskId::Qa7),
            "qa10" | "10" => Ok(TaskId::Qa10),
            other => Err(WorldError::UnknownTask(other.to_string())),
        }
    }
}

/// One atomic statement about the world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Fact {
    Move { actor: String, location: String },
    Grab { actor: String, object: String },
    Drop { actor: String, object: String },
    Give { actor: String, object: String, recipient: String },
    EitherAt { actor: String, locations: [String; 2] },
    NotAt { actor: String, location: String },
}

impl Fact {
    pub fn actor(&self) -> &str {
        match self {
            Fact::Move { actor, .. }
            | Fact::Grab { actor, .. }
            | Fact::Drop { actor, .. }
            | Fact::Give { actor, .. }
            | Fact::EitherAt { actor, .. }
            | Fact::NotAt { actor, .. } => actor,
        }
    }

    pub fn object(&self) -> Option<&str> {
        match self {
            Fact::Grab { object, .. } | Fact::Drop { object, .. } | Fact::Give { object, .. } => {
                Some(object)
            }
            _ => None,
        }
    }

    pub fn recipient(&self) -> Option<&str> {
        match self {
            Fact::Give { recipient, .. } => Some(recipient),
            _ => None,
        }
    }

    pub fn locations(&self) -> Vec<&str> {
        match self {
            Fact::Move { location, .. } | Fact::NotAt { location, .. } => vec![location.as_str()],
            Fact::EitherAt { locations, .. } => locations.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    /// True when the fact names `person` as actor or recipient.
    pub fn mentions_person(&self, person: &str) -> bool {
        self.actor() == person || self.recipient() == Some(person)
    }
}

/// A fact together with its ordinal in the needle sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactEvent {
    pub seq: usize,
    pub fact: Fact,
}

impl FactEvent {
    pub fn new(seq: usize, fact: Fact) -> Self {
        Self { seq, fact }
    }
}

/// Builds a sequenced event list from bare facts.
pub fn sequence(facts: impl IntoIterator<Item = Fact>) -> Vec<FactEvent> {
    facts
        .into_iter()
        .enumerate()
        .map(|(seq, fact)| FactEvent { seq, fact })
        .collect()
}

/// What a sample's question asks about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    ObjectLocation { object: String },
    HeldCount { person: String },
    PersonAt { person: String, location: String },
}

impl Query {
    pub fn question(&self) -> String {
        match self {
            Query::ObjectLocation { object } => format!("Where is the {object}?"),
            Query::HeldCount { person } => format!("How many objects is {person} carrying?"),
            Query::PersonAt { person, location } => format!("Is {person} in the {location}?"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Needle {
    pub text: String,
    /// Byte offset of `text` inside the sample input.
    pub offset: usize,
    /// `100 * offset / input.len()`.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub task: TaskId,
    pub input: String,
    pub question: String,
    pub target: String,
    pub needles: Vec<Needle>,
    pub events: Option<Vec<FactEvent>>,
    pub query: Option<Query>,
    pub seed: Option<u64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("{object} is already held by {holder}")]
    GrabConflict { object: String, holder: String },
    #[error("{actor} cannot drop {object}: not held")]
    DropNotHeld { actor: String, object: String },
    #[error("{actor} cannot give {object}: not held")]
    GiveNotHeld { actor: String, object: String },
    #[error("ruling out {location} leaves {actor} with no candidate location")]
    EmptyCandidateSet { actor: String, location: String },
    #[error("malformed event: {0}")]
    InvalidEvent(String),
    #[error("location of {0} cannot be resolved")]
    Unresolvable(String),
    #[error("unknown person {0}")]
    UnknownPerson(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("sample has no event metadata")]
    MissingEvents,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("token budget {target} cannot hold the needles ({needed} tokens)")]
    BudgetTooSmall { target: usize, needed: usize },
    #[error("cannot land within {tolerance} of {target} tokens")]
    BudgetUnattainable { target: usize, tolerance: f64 },
    #[error("distractor source {path}: {reason}")]
    DistractorUnreadable { path: String, reason: String },
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
}
