use std::fmt;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatMessage, GenParams, Model, ModelCall, ModelError, Role};

pub const DEFAULT_API_KEY_ENV: &str = "LCH_API_KEY";
pub const BASE_URL_ENV: &str = "LCH_BASE_URL";

/// Where and how to reach a chat-completion server. Holds the name of the
/// variable carrying the key, never the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoint {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl Default for Endpoint {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60.0,
            max_retries: 3,
        }
    }
}

impl Endpoint {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ModelError::InvalidRequest("timeout must be positive".into()));
        }
        if self.base_url.trim().is_empty() || self.model.trim().is_empty() {
            return Err(ModelError::InvalidRequest("base_url and model are required".into()));
        }
        Ok(())
    }

    /// Applies the `LCH_BASE_URL` override when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                self.base_url = url.trim().to_string();
            }
        }
        self
    }

    pub fn completions_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        format!("{base}/v1/chat/completions")
    }
}

/// Exponential backoff `base * 2^attempt`, jittered by `±jitter`, capped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
    pub jitter: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            cap: Duration::from_secs(30),
            jitter: 0.2,
        }
    }
}

impl Backoff {
    pub const NONE: Backoff = Backoff {
        base: Duration::ZERO,
        cap: Duration::ZERO,
        jitter: 0.0,
    };

    pub fn delay<R: Rng + ?Sized>(&self, attempt: u32, rng: &mut R) -> Duration {
        let nominal = self.base.as_secs_f64() * 2f64.powi(attempt.min(62) as i32);
        let factor = if self.jitter > 0.0 {
            rng.random_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64((nominal * factor).min(self.cap.as_secs_f64()).max(0.0))
    }
}

/// The exact wire body: `model`, `messages`, `max_tokens`, `temperature`.
pub fn request_body(model: &str, messages: &[ChatMessage], params: GenParams) -> Value {
    json!({
        "model": model,
        "messages": messages,
        "max_tokens": params.max_tokens,
        "temperature": params.temperature,
    })
}

enum Failure {
    Retryable(String),
    Fatal(ModelError),
}

pub struct OpenAiClient {
    endpoint: Endpoint,
    api_key: Option<String>,
    backoff: Backoff,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for OpenAiClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiClient")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("backoff", &self.backoff)
            .finish()
    }
}

impl OpenAiClient {
    /// Reads the key from the endpoint's environment variable. A missing
    /// variable sends no authorization header.
    pub fn new(endpoint: Endpoint) -> Result<Self, ModelError> {
        let key = std::env::var(&endpoint.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty());
        Self::with_key(endpoint, key)
    }

    pub fn with_key(endpoint: Endpoint, api_key: Option<String>) -> Result<Self, ModelError> {
        endpoint.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| ModelError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            endpoint,
            api_key,
            backoff: Backoff::default(),
            http,
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn chat(&self, messages: &[ChatMessage], params: GenParams) -> Result<String, ModelError> {
        if messages.is_empty() {
            return Err(ModelError::InvalidRequest("no messages".into()));
        }
        if messages
            .iter()
            .any(|m| m.role == Role::User && m.content.trim().is_empty())
        {
            return Err(ModelError::InvalidRequest("empty user message".into()));
        }
        let body = request_body(&self.endpoint.model, messages, params);
        let url = self.endpoint.completions_url();
        let mut rng = rand::rng();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&url, &body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    if attempts > self.endpoint.max_retries {
                        return Err(ModelError::Transport { attempts, message });
                    }
                    std::thread::sleep(self.backoff.delay(attempts - 1, &mut rng));
                }
            }
        }
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<String, Failure> {
        let mut request = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| Failure::Retryable(format!("reading body: {e}")))?;
        match status {
            200..=299 => first_choice(&text).map_err(Failure::Fatal),
            401 | 403 => Err(Failure::Fatal(ModelError::AuthFailure { status })),
            408 | 429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(ModelError::Rejected {
                status,
                body: text.chars().take(500).collect(),
            })),
        }
    }
}

fn first_choice(body: &str) -> Result<String, ModelError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| ModelError::MalformedResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ModelError::MalformedResponse("no choices[0].message.content".into()))
}

impl Model for OpenAiClient {
    fn name(&self) -> &str {
        &self.endpoint.model
    }

    fn complete(&self, call: &ModelCall<'_>) -> Result<String, ModelError> {
        self.chat(&call.prompt.messages, call.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn body_has_exactly_four_fields() {
        let body = request_body("m", &[ChatMessage::user("hi")], GenParams::SHORT_ANSWER);
        let obj = body.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["max_tokens", "messages", "model", "temperature"]);
        assert_eq!(body["max_tokens"], 20);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "user");
    }

    #[test]
    fn backoff_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = Backoff::default();
        for attempt in 0..8 {
            let nominal = (2f64.powi(attempt as i32)).min(30.0);
            let d = b.delay(attempt, &mut rng).as_secs_f64();
            assert!(d <= 30.0 + 1e-9);
            if nominal * 1.2 < 30.0 {
                assert!(d >= nominal * 0.8 - 1e-9 && d <= nominal * 1.2 + 1e-9, "{attempt} {d}");
            }
        }
        assert_eq!(b.delay(40, &mut rng), Duration::from_secs(30));
        assert_eq!(Backoff::NONE.delay(3, &mut rng), Duration::ZERO);
    }

    #[test]
    fn url_and_validation() {
        let mut e = Endpoint::default();
        assert_eq!(e.completions_url(), "https://api.openai.com/v1/chat/completions");
        e.base_url = "http://localhost:8000/v1/".into();
        assert_eq!(e.completions_url(), "http://localhost:8000/v1/chat/completions");
        e.timeout_secs = 0.0;
        assert!(e.validate().is_err());
    }

    #[test]
    fn debug_never_shows_key() {
        let c = OpenAiClient::with_key(Endpoint::default(), Some("sk-secret-123".into())).unwrap();
        let shown = format!("{c:?}");
        assert!(!shown.contains("sk-secret-123"));
        assert!(shown.contains("redacted"));
    }

    #[test]
    fn malformed_payloads() {
        assert_eq!(
            first_choice(r#"{"choices":[{"message":{"role":"assistant","content":"balcony"}}]}"#),
            Ok("balcony".to_string())
        );
        assert!(matches!(first_choice("{}"), Err(ModelError::MalformedResponse(_))));
        assert!(matches!(first_choice("not json"), Err(ModelError::MalformedResponse(_))));
    }
}
