use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ContextSize, HarnessError};
use crate::client::{Endpoint, GenParams};
use crate::prompt::{all_prompt_orders, Method, PromptOrder};
use crate::world::{DistractorSource, TaskId};

/// A model that needs no network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OfflineModel {
    Oracle,
    /// Answers from a transcript file.
    Replay(PathBuf),
}

impl FromStr for OfflineModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "oracle" => Ok(OfflineModel::Oracle),
            other => match other.strip_prefix("replay:") {
                Some(path) if !path.is_empty() => Ok(OfflineModel::Replay(PathBuf::from(path))),
                _ => Err(format!("offline model must be \"oracle\" or \"replay:<store>\", got {s:?}")),
            },
        }
    }
}

impl TryFrom<String> for OfflineModel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<OfflineModel> for String {
    fn from(m: OfflineModel) -> String {
        m.to_string()
    }
}

impl fmt::Display for OfflineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OfflineModel::Oracle => f.write_str("oracle"),
            OfflineModel::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    pub baseline: GenParams,
    pub naive_rag: GenParams,
    pub proposed: GenParams,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            baseline: GenParams::SHORT_ANSWER,
            naive_rag: GenParams::SHORT_ANSWER,
            proposed: GenParams::REASONING,
        }
    }
}

impl MethodParams {
    pub fn for_method(&self, method: Method) -> GenParams {
        match method {
            Method::Baseline => self.baseline,
            Method::NaiveRag => self.naive_rag,
            Method::Proposed => self.proposed,
        }
    }
}

/// Everything that determines a run. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: Vec<TaskId>,
    pub context_sizes: Vec<ContextSize>,
    pub methods: Vec<Method>,
    pub orders: Vec<PromptOrder>,
    pub samples_per_cell: usize,
    pub seed: u64,
    pub top_k: usize,
    pub concurrency: usize,
    pub include_example_tags: bool,
    pub system_message: bool,
    pub distractors: DistractorSource,
    /// Directory of `<task>_<size>.jsonl` files; generated samples when absent.
    pub data_dir: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub offline: Option<OfflineModel>,
    pub out: PathBuf,
    pub endpoint: Endpoint,
    pub params: MethodParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tasks: TaskId::ALL.to_vec(),
            context_sizes: vec![ContextSize(16 * 1024), ContextSize(32 * 1024), ContextSize(64 * 1024)],
            methods: Method::ALL.to_vec(),
            orders: all_prompt_orders().to_vec(),
            samples_per_cell: 25,
            seed: 0,
            top_k: 5,
            concurrency: 4,
            include_example_tags: true,
            system_message: true,
            distractors: DistractorSource::Builtin,
            data_dir: None,
            templates: None,
            offline: None,
            out: PathBuf::from("runs/latest"),
            endpoint: Endpoint::default(),
            params: MethodParams::default(),
        }
    }
}

impl RunConfig {
    /// Errors carry the message and line only, never the offending text.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            HarnessError::Config(match line {
                Some(l) => format!("line {l}: {}", e.message()),
                None => e.message().to_string(),
            })
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Sorts and deduplicates the axis lists, then checks ranges.
    pub fn normalize(&mut self) -> Result<(), HarnessError> {
        for list in [&mut self.tasks as &mut dyn SortDedup, &mut self.context_sizes, &mut self.methods, &mut self.orders] {
            list.sort_dedup();
        }
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.tasks.is_empty() || self.context_sizes.is_empty() || self.methods.is_empty() {
            return fail("at least one task, context size and method are required");
        }
        if self.methods.contains(&Method::Proposed) && self.orders.is_empty() {
            return fail("the proposed method needs at least one prompt order");
        }
        if self.samples_per_cell == 0 {
            return fail("samples_per_cell must be at least 1");
        }
        if self.top_k == 0 {
            return fail("top_k must be at least 1");
        }
        if self.concurrency == 0 {
            return fail("concurrency must be at least 1");
        }
        for m in Method::ALL {
            let p = self.params.for_method(m);
            if p.max_tokens == 0 || !p.temperature.is_finite() || p.temperature < 0.0 {
                return Err(HarnessError::Config(format!(
                    "{m}: max_tokens must be positive and temperature non-negative"
                )));
            }
        }
        if self.offline.is_none() {
            self.endpoint.validate()?;
        }
        Ok(())
    }

    /// Orders a method runs under; `None` for methods without orders.
    pub fn orders_for(&self, method: Method) -> Vec<Option<PromptOrder>> {
        if method == Method::Proposed {
            self.orders.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }
}

trait SortDedup {
    fn sort_dedup(&mut self);
}

impl<T: Ord> SortDedup for Vec<T> {
    fn sort_dedup(&mut self) {
        self.sort();
        self.dedup();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            offline: Some(OfflineModel::Replay("runs/a/transcripts.log".into())),
            context_sizes: vec![ContextSize(16384), ContextSize(2000)],
            ..RunConfig::default()
        };
        let text = c.to_toml();
        assert!(text.contains("\"16k\""));
        assert!(text.contains("replay:runs/a/transcripts.log"));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = RunConfig::from_toml(
            "tasks = [\"qa7\"]\ncontext_sizes = [\"16k\", 4096]\noffline = \"oracle\"\n[params.proposed]\nmax_tokens = 2048\ntemperature = 0.0\n",
        )
        .unwrap();
        assert_eq!(c.tasks, [TaskId::Qa7]);
        assert_eq!(c.context_sizes, [ContextSize(16384), ContextSize(4096)]);
        assert_eq!(c.params.proposed.max_tokens, 2048);
        assert_eq!(c.params.baseline, GenParams::SHORT_ANSWER);
        assert_eq!(c.samples_per_cell, 25);
    }

    #[test]
    fn keys_are_rejected() {
        let err = RunConfig::from_toml("[endpoint]\napi_key = \"sk-secret-1\"\n").unwrap_err();
        let shown = err.to_string();
        assert!(shown.contains("line 2") && shown.contains("api_key"), "{shown}");
        assert!(!shown.contains("sk-secret-1"));
        assert!(RunConfig::from_toml("api_key = \"sk-1\"\n").is_err());
    }

    #[test]
    fn normalize_checks() {
        let mut c = RunConfig {
            offline: Some(OfflineModel::Oracle),
            tasks: vec![TaskId::Qa10, TaskId::Qa2, TaskId::Qa2],
            ..RunConfig::default()
        };
        c.normalize().unwrap();
        assert_eq!(c.tasks, [TaskId::Qa2, TaskId::Qa10]);
        c.samples_per_cell = 0;
        assert!(c.normalize().is_err());
        assert!("replay:".parse::<OfflineModel>().is_err());
    }
}
