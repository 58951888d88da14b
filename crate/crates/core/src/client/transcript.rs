use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, GenParams, Model, ModelCall, ModelError};

/// SHA-256 over a length-prefixed encoding of the messages and params, so
/// distinct inputs never share an encoding. Temperature enters by its bits.
pub fn fingerprint(messages: &[ChatMessage], params: GenParams) -> String {
    let mut h = Sha256::new();
    h.update(b"lch-transcript-v1\0");
    h.update((messages.len() as u64).to_le_bytes());
    for m in messages {
        let role = m.role.as_str().as_bytes();
        h.update((role.len() as u64).to_le_bytes());
        h.update(role);
        h.update((m.content.len() as u64).to_le_bytes());
        h.update(m.content.as_bytes());
    }
    h.update(params.max_tokens.to_le_bytes());
    h.update(params.temperature.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub messages: usize,
    pub prompt_chars: usize,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub request: RequestSummary,
    pub completion: String,
    pub model: String,
    pub timestamp_ms: u128,
}

impl TranscriptEntry {
    pub fn new(messages: &[ChatMessage], params: GenParams, completion: &str, model: &str) -> Self {
        Self {
            fingerprint: fingerprint(messages, params),
            request: RequestSummary {
                messages: messages.len(),
                prompt_chars: messages.iter().map(|m| m.content.chars().count()).sum(),
                max_tokens: params.max_tokens,
                temperature: params.temperature,
            },
            completion: completion.to_string(),
            model: model.to_string(),
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis()),
        }
    }
}

struct Inner {
    file: Option<File>,
    completions: HashMap<String, String>,
}

/// Append-only JSONL transcript file, one entry per fingerprint. The first
/// entry for a fingerprint wins; later duplicates are neither stored nor
/// written.
pub struct TranscriptStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for TranscriptStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TranscriptStore")
            .field("path", &self.path)
            .field("entries", &self.len())
            .finish()
    }
}

impl TranscriptStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                file: None,
                completions: HashMap::new(),
            }),
        }
    }

    /// Opens for appending, loading any entries already present.
    pub fn open(path: &Path) -> io::Result<Self> {
        let completions = if path.exists() {
            read_entries(path)?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                file: Some(file),
                completions,
            }),
        })
    }

    /// Loads entries without ever writing to the file.
    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                file: None,
                completions: read_entries(path)?,
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.lock().completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, fingerprint: &str) -> Option<String> {
        self.lock().completions.get(fingerprint).cloned()
    }

    /// Returns false when the fingerprint was already stored.
    pub fn append(&self, entry: &TranscriptEntry) -> io::Result<bool> {
        let mut inner = self.lock();
        if inner.completions.contains_key(&entry.fingerprint) {
            return Ok(false);
        }
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner
            .completions
            .insert(entry.fingerprint.clone(), entry.completion.clone());
        Ok(true)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn read_entries(path: &Path) -> io::Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), i + 1),
            )
        })?;
        map.entry(entry.fingerprint).or_insert(entry.completion);
    }
    Ok(map)
}

pub fn replay_complete(
    store: &TranscriptStore,
    messages: &[ChatMessage],
    params: GenParams,
) -> Result<String, ModelError> {
    let fingerprint = fingerprint(messages, params);
    store
        .get(&fingerprint)
        .ok_or(ModelError::MissingTranscript { fingerprint })
}

/// Answers only from a transcript store.
#[derive(Debug)]
pub struct ReplayModel {
    store: TranscriptStore,
}

impl ReplayModel {
    pub fn new(store: TranscriptStore) -> Self {
        Self { store }
    }
}

impl Model for ReplayModel {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, call: &ModelCall<'_>) -> Result<String, ModelError> {
        replay_complete(&self.store, &call.prompt.messages, call.params)
    }
}

/// Wraps a model and appends every successful completion to a store.
pub struct Recorder<'a, M: ?Sized> {
    inner: &'a M,
    store: &'a TranscriptStore,
}

impl<'a, M: Model + ?Sized> Recorder<'a, M> {
    pub fn new(inner: &'a M, store: &'a TranscriptStore) -> Self {
        Self { inner, store }
    }
}

impl<M: Model + ?Sized> Model for Recorder<'_, M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, call: &ModelCall<'_>) -> Result<String, ModelError> {
        let completion = self.inner.complete(call)?;
        let entry = TranscriptEntry::new(&call.prompt.messages, call.params, &completion, self.inner.name());
        // A store write failure must not change the completion.
        let _ = self.store.append(&entry);
        Ok(completion)
    }
}
