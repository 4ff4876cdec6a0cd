use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest, RawCompletion};
use crate::error::{Error, Result};

/// Client for a legacy-style completion endpoint:
///
/// request  `{"model","prompt","temperature","max_tokens","presence_penalty","frequency_penalty","n"}`
/// response `{"choices":[{"text": "..."}, ...]}`
pub struct RemoteHttp {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    presence_penalty: f64,
    frequency_penalty: f64,
    n: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
}

impl RemoteHttp {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("cannot build http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
        })
    }
}

impl CompletionBackend for RemoteHttp {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.model, self.endpoint)
    }

    fn call(&self, request: &CompletionRequest) -> std::result::Result<RawCompletion, BackendError> {
        let body = WireRequest {
            model: &self.model,
            prompt: &request.prompt,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            presence_penalty: request.presence_penalty,
            frequency_penalty: request.frequency_penalty,
            n: request.n,
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(text)),
            429 => return Err(BackendError::RateLimited),
            408 | 500..=599 => return Err(BackendError::Transient(format!("status {status}: {text}"))),
            code => {
                return Err(BackendError::Rejected {
                    status: code,
                    body: text,
                })
            }
        }
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(format!("{e}: {text}")))?;
        Ok(RawCompletion {
            texts: parsed.choices.into_iter().map(|c| c.text).collect(),
            payload: text,
        })
    }
}
