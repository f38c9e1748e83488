//! OpenAI-compatible `chat/completions` client.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    BackendError, CompletionBackend, CompletionRequest, CompletionResponse, RetryPolicy, TokenBucket, Usage,
};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL up to and including the API version, e.g. `https://api.openai.com/v1`.
    pub api_base: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout: Duration,
    pub requests_per_minute: u32,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(api_base: impl Into<String>, model: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        HttpConfig {
            api_base: api_base.into(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            timeout: Duration::from_secs(120),
            requests_per_minute: 500,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: TokenBucket,
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable. Fails
    /// before any network activity when it is unset or empty.
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.api_key_env.trim().is_empty() {
            return Err(BackendError::Config("no API key environment variable configured".into()));
        }
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: HttpConfig, api_key: impl Into<String>) -> Result<Self, BackendError> {
        if config.model.trim().is_empty() {
            return Err(BackendError::Config("model name is empty".into()));
        }
        let agent_config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build();
        Ok(HttpBackend {
            limiter: TokenBucket::per_minute(config.requests_per_minute),
            agent: ureq::Agent::new_with_config(agent_config),
            api_key: api_key.into(),
            config,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'))
    }

    fn send_once(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.limiter.acquire();
        let mut body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        });
        if let Some(stop) = &request.stop {
            body["stop"] = json!(stop);
        }
        let started = Instant::now();
        let mut response = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("HTTP {status}"))),
            429 => return Err(BackendError::RateLimited { retry_after }),
            408 | 500..=599 => return Err(BackendError::Network(format!("HTTP {status}"))),
            _ => return Err(BackendError::Rejected { status, body: truncate(&text, 300) }),
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse(format!("invalid JSON: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))?;
        let usage = value.get("usage").and_then(|u| {
            Some(Usage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                output_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(CompletionResponse {
            text: content.to_string(),
            from_cache: false,
            latency_ms: started.elapsed().as_millis() as u64,
            usage,
        })
    }
}

fn truncate(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        self.config.retry.run(|_| self.send_once(request), std::thread::sleep)
    }
}
