//! Chat-completions client with structured answer extraction.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use super::{ProblemSpec, QueryContext, QueryRecord, Solver};
use crate::error::{Error, Result};
use crate::tally::normalize_answer;

const SYSTEM_PROMPT: &str = "Solve the problem. Reply with a JSON object of the form \
{\"answer\": \"<final answer>\"} and nothing else. The answer field holds only the final \
answer, with no units or explanation.";

const REPROMPT: &str = "Your previous reply was not a JSON object of the form \
{\"answer\": \"...\"}. Reply again with only that object.";

/// Endpoint settings. The credential is read from the environment variable
/// named by `api_key_env` and never stored in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    /// Request field carrying the reasoning-effort knob, e.g. `reasoning_effort`.
    pub reasoning_effort_field: String,
    pub reasoning_effort: Option<String>,
    pub temperature: Option<f64>,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    /// Process-wide ceiling on in-flight requests.
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com".into(),
            path: "/v1/chat/completions".into(),
            model: "o3-mini".into(),
            reasoning_effort_field: "reasoning_effort".into(),
            reasoning_effort: None,
            temperature: None,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 300,
            max_attempts: 5,
            backoff_base_ms: 1_000,
            max_in_flight: 64,
        }
    }
}

impl EndpointConfig {
    pub fn url(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

pub struct LlmSolver {
    config: EndpointConfig,
    api_key: String,
    client: reqwest::Client,
    permits: Arc<Semaphore>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Usage {
    prompt: u64,
    completion: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        self.prompt += rhs.prompt;
        self.completion += rhs.completion;
    }
}

struct Completion {
    content: String,
    usage: Usage,
}

enum AttemptError {
    Retryable(String, Option<Duration>),
    Fatal(String),
}

impl LlmSolver {
    pub fn from_env(config: EndpointConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable {} holding the API key is not set",
                config.api_key_env
            ))
        })?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: EndpointConfig, api_key: impl Into<String>) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Http(e.to_string()))?;
        let permits = Arc::new(Semaphore::new(config.max_in_flight.max(1)));
        Ok(LlmSolver {
            config,
            api_key: api_key.into(),
            client,
            permits,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn request_body(&self, problem: &ProblemSpec, messages: &[Value]) -> Value {
        let hints = &problem.model_hints;
        let model = hints.model_name.as_deref().unwrap_or(&self.config.model);
        let mut body = json!({
            "model": model,
            "messages": messages,
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": "final_answer",
                    "strict": true,
                    "schema": {
                        "type": "object",
                        "properties": {"answer": {"type": "string"}},
                        "required": ["answer"],
                        "additionalProperties": false
                    }
                }
            }
        });
        let effort = hints
            .reasoning_effort
            .map(|e| e.as_str().to_string())
            .or_else(|| self.config.reasoning_effort.clone());
        if let Some(effort) = effort {
            body[self.config.reasoning_effort_field.as_str()] = Value::String(effort);
        }
        if let Some(t) = hints.temperature.or(self.config.temperature) {
            body["temperature"] = json!(t);
        }
        body
    }

    async fn attempt(&self, body: &Value) -> std::result::Result<Completion, AttemptError> {
        let response = self
            .client
            .post(self.config.url())
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() || e.is_request() {
                    AttemptError::Retryable(e.to_string(), None)
                } else {
                    AttemptError::Fatal(e.to_string())
                }
            })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let retry_after = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(AttemptError::Retryable(
                format!("upstream returned {status}"),
                retry_after,
            ));
        }
        if !status.is_success() {
            let text = response.text().await.unwrap_or_default();
            return Err(AttemptError::Fatal(format!(
                "upstream returned {status}: {text}"
            )));
        }
        let payload: Value = response
            .json()
            .await
            .map_err(|e| AttemptError::Retryable(format!("unreadable response body: {e}"), None))?;
        Ok(parse_completion(&payload))
    }

    async fn send_with_retry(&self, body: &Value) -> std::result::Result<Completion, String> {
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.attempt(body).await {
                Ok(c) => return Ok(c),
                Err(AttemptError::Fatal(msg)) => return Err(msg),
                Err(AttemptError::Retryable(msg, retry_after)) => {
                    tracing::debug!(attempt, error = %msg, "retryable upstream failure");
                    last = msg;
                    if attempt + 1 < attempts {
                        let delay = backoff_delay(self.config.backoff_base_ms, attempt);
                        tokio::time::sleep(retry_after.map_or(delay, |r| r.max(delay))).await;
                    }
                }
            }
        }
        Err(format!("gave up after {attempts} attempts: {last}"))
    }

    async fn query(&self, problem: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
        let _permit = self
            .permits
            .acquire()
            .await
            .expect("semaphore never closed");
        let started = Instant::now();
        let mut messages = vec![
            json!({"role": "system", "content": SYSTEM_PROMPT}),
            json!({"role": "user", "content": problem.prompt}),
        ];
        let mut usage = Usage::default();
        let mut raw = String::new();
        let mut error = None;
        for reprompt in 0..2 {
            let body = self.request_body(problem, &messages);
            match self.send_with_retry(&body).await {
                Err(msg) => {
                    error = Some(msg);
                    break;
                }
                Ok(completion) => {
                    usage += completion.usage;
                    raw = completion.content;
                    if let Some(answer) = extract_answer(&raw) {
                        return QueryRecord {
                            answer: normalize_answer(&answer),
                            raw_text: raw,
                            prompt_tokens: usage.prompt,
                            completion_tokens: usage.completion,
                            latency_ms: started.elapsed().as_millis() as u64,
                            turn_index: ctx.turn_index,
                            sample_index: ctx.sample_index,
                            error: None,
                        };
                    }
                    if reprompt == 0 {
                        messages.push(json!({"role": "assistant", "content": raw}));
                        messages.push(json!({"role": "user", "content": REPROMPT}));
                    } else {
                        error = Some("malformed structured output after re-prompt".into());
                    }
                }
            }
        }
        let mut record = QueryRecord::failed(ctx, error.unwrap_or_default());
        record.raw_text = raw;
        record.prompt_tokens = usage.prompt;
        record.completion_tokens = usage.completion;
        record.latency_ms = started.elapsed().as_millis() as u64;
        record
    }
}

impl Solver for LlmSolver {
    async fn solve(&self, problem: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
        self.query(problem, ctx).await
    }
}

fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << attempt.min(16));
    let jitter = if base_ms > 0 {
        rand::thread_rng().gen_range(0..=base_ms)
    } else {
        0
    };
    Duration::from_millis(exp + jitter)
}

fn parse_completion(payload: &Value) -> Completion {
    let content = payload["choices"][0]["message"]["content"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    let usage = &payload["usage"];
    let prompt = usage["prompt_tokens"].as_u64().unwrap_or(0);
    // completion_tokens already covers completion_tokens_details.reasoning_tokens;
    // a top-level reasoning_tokens field is reported separately by some servers
    let completion = usage["completion_tokens"].as_u64().unwrap_or(0)
        + usage["reasoning_tokens"].as_u64().unwrap_or(0);
    Completion {
        content,
        usage: Usage { prompt, completion },
    }
}

/// Pulls the `answer` field out of a structured reply, tolerating code
/// fences or prose around the JSON object.
pub(crate) fn extract_answer(content: &str) -> Option<String> {
    let from_value = |v: Value| match v.get("answer")? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    };
    if let Ok(v) = serde_json::from_str::<Value>(content.trim()) {
        return from_value(v);
    }
    let start = content.find('{')?;
    let end = content.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str::<Value>(&content[start..=end])
        .ok()
        .and_then(from_value)
}
