//! OpenAI-compatible chat-completion transport.

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatTransport, GatewayConfig, PromptKind, TransportError};

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// `POST {"model", "messages", "temperature"}` and read
/// `choices[0].message.content`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the API key from the configured environment variable; a missing
    /// variable means unauthenticated requests.
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(HttpTransport {
            client,
            endpoint: cfg.endpoint_url.clone(),
            model: cfg.model_name.clone(),
            temperature: cfg.temperature,
            api_key: std::env::var(&cfg.api_key_env_var).ok().filter(|k| !k.is_empty()),
        })
    }

    pub(crate) fn request_body(&self, messages: &[ChatMessage]) -> String {
        serde_json::to_string(&CompletionRequest {
            model: &self.model,
            messages,
            temperature: self.temperature,
        })
        .expect("request serializes")
    }
}

pub(crate) fn parse_completion(body: &str) -> Result<String, TransportError> {
    let resp: CompletionResponse =
        serde_json::from_str(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
    resp.choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| TransportError::Malformed("no choices[0].message.content".into()))
}

impl ChatTransport for HttpTransport {
    fn complete(&self, kind: PromptKind, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let body = self.request_body(messages);
        // the key only ever travels in the header
        tracing::debug!(%kind, endpoint = %self.endpoint, request = %body, "chat request");
        let mut req = self
            .client
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError::Http(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::Http(e.to_string()))?;
        tracing::debug!(%kind, status = status.as_u16(), response = %text, "chat response");
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        parse_completion(&text)
    }
}
