//! Everything that talks to the language model: prompt rendering, the
//! chat transport (HTTP or scripted mock), retries, and reply sanitization.

mod http;
mod mock;
pub mod parse;
pub mod prompts;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::Table;

pub use http::HttpTransport;
pub use mock::{MockReply, MockScript, MockTransport};
pub use prompts::{
    render_feedback_prompt, render_init_prompt, render_naming_prompt, render_refine_prompt,
};

pub const DEFAULT_VAR_NAME: &str = "Metric";
pub const DEFAULT_VALUE_NAME: &str = "Value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        let content = content.into();
        debug_assert!(!content.is_empty(), "chat message content must be nonempty");
        ChatMessage { role, content }
    }
}

/// Which prompt a call carries. The mock scripts replies per kind and the
/// call log counts by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Init,
    Feedback,
    Refine,
    Naming,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::Init => "init",
            PromptKind::Feedback => "feedback",
            PromptKind::Refine => "refine",
            PromptKind::Naming => "naming",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("http error: {0}")]
    Http(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("mock script exhausted for a {0} call")]
    ScriptExhausted(PromptKind),
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("transport misconfigured: {0}")]
    Config(String),
}

impl TransportError {
    pub fn retryable(&self) -> bool {
        match self {
            TransportError::Http(_) | TransportError::Malformed(_) | TransportError::Scripted(_) => true,
            TransportError::Status { status, .. } => matches!(status, 408 | 429 | 500..=599),
            TransportError::ScriptExhausted(_) | TransportError::Config(_) => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("{kind} call failed after {attempts} attempt(s): {source}")]
    Transport {
        kind: PromptKind,
        attempts: usize,
        source: TransportError,
    },
    #[error("{kind} reply had no usable JSON object after {attempts} attempt(s); raw reply: {raw}")]
    Parse {
        kind: PromptKind,
        attempts: usize,
        raw: String,
    },
}

/// Sends a conversation and returns the assistant's reply text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, kind: PromptKind, messages: &[ChatMessage]) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env_var: String,
    pub timeout: Duration,
    pub max_retries: usize,
    pub temperature: f64,
    /// Initial sleep before retrying a failed transport call; doubles per
    /// attempt. Parse failures retry immediately.
    pub retry_backoff: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint_url: "http://localhost:8000/v1/chat/completions".into(),
            model_name: "qwen3-235b-a22b".into(),
            api_key_env_var: "PIVOTMATCH_API_KEY".into(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            temperature: 0.0,
            retry_backoff: Duration::from_millis(500),
        }
    }
}

/// A sanitized unpivot proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerResponse {
    pub unpivot_columns: Vec<String>,
    /// Proposed names that are not source attributes.
    pub dropped: Vec<String>,
    pub raw: String,
}

/// Number of model calls made, by prompt kind (retries included).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLog {
    pub counts: BTreeMap<PromptKind, usize>,
}

impl CallLog {
    pub fn get(&self, kind: PromptKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Retrying, counting front end over a [`ChatTransport`].
pub struct Gateway {
    transport: Arc<dyn ChatTransport>,
    config: GatewayConfig,
    log: Mutex<CallLog>,
}

impl Gateway {
    pub fn new(transport: Arc<dyn ChatTransport>, config: GatewayConfig) -> Self {
        Gateway {
            transport,
            config,
            log: Mutex::new(CallLog::default()),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn call_log(&self) -> CallLog {
        self.log.lock().expect("call log poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.call_log().total()
    }

    /// Sends with retries; `parse` turning the reply into `None` also counts
    /// as a failed attempt.
    fn call_parsed<T>(
        &self,
        kind: PromptKind,
        messages: &[ChatMessage],
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(T, String), GatewayError> {
        let attempts = self.config.max_retries + 1;
        let mut backoff = self.config.retry_backoff;
        let mut last: Option<GatewayError> = None;
        for attempt in 1..=attempts {
            *self.log.lock().expect("call log poisoned").counts.entry(kind).or_insert(0) += 1;
            match self.transport.complete(kind, messages) {
                Ok(raw) => match parse(&raw) {
                    Some(v) => return Ok((v, raw)),
                    None => {
                        tracing::warn!(%kind, attempt, "unusable reply");
                        last = Some(GatewayError::Parse { kind, attempts: attempt, raw });
                    }
                },
                Err(e) => {
                    tracing::warn!(%kind, attempt, error = %e, "transport failure");
                    let retry = e.retryable();
                    last = Some(GatewayError::Transport {
                        kind,
                        attempts: attempt,
                        source: e,
                    });
                    if !retry {
                        break;
                    }
                    if attempt < attempts && !backoff.is_zero() {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Ask for an unpivot set (`kind` is Init or Refine) and sanitize it
    /// against the source attributes: unknown names are dropped and
    /// duplicates removed, first occurrence wins.
    pub fn propose(
        &self,
        kind: PromptKind,
        messages: &[ChatMessage],
        source: &Table,
    ) -> Result<ProposerResponse, GatewayError> {
        let (cols, raw) = self.call_parsed(kind, messages, parse::extract_unpivot_columns)?;
        let attrs: HashSet<&str> = source.attributes().iter().map(String::as_str).collect();
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for c in cols {
            let c = c.trim().to_string();
            if !attrs.contains(c.as_str()) {
                tracing::warn!(name = %c, "proposal names an unknown source attribute; dropped");
                dropped.push(c);
            } else if seen.insert(c.clone()) {
                kept.push(c);
            }
        }
        Ok(ProposerResponse {
            unpivot_columns: kept,
            dropped,
            raw,
        })
    }

    /// Free-text critique of a candidate set.
    pub fn feedback(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        self.call_parsed(PromptKind::Feedback, messages, |r| {
            let t = r.trim();
            (!t.is_empty()).then(|| t.to_string())
        })
        .map(|(t, _)| t)
    }

    /// Names for the generated variable/value columns. Falls back to
    /// `Metric`/`Value` when the reply is unusable, then suffixes names that
    /// collide with retained attributes or with each other.
    pub fn name_var_value(
        &self,
        candidate_set: &[String],
        source: &Table,
        target: &Table,
    ) -> Result<(String, String), GatewayError> {
        let messages = prompts::render_naming_prompt(source, target, candidate_set);
        let (raw, _) = self.call_parsed(PromptKind::Naming, &messages, |r| Some(r.to_string()))?;
        let (var, value) = match parse::extract_var_value(&raw) {
            Some((v, w)) if !v.is_empty() && !w.is_empty() => (v, w),
            _ => {
                tracing::warn!("unusable naming reply; using defaults");
                (DEFAULT_VAR_NAME.to_string(), DEFAULT_VALUE_NAME.to_string())
            }
        };
        Ok(deconflict_names(var, value, candidate_set, source))
    }
}

/// Make `var` and `value` distinct and free of collisions with the
/// attributes that survive the unpivot.
pub fn deconflict_names(var: String, value: String, candidate_set: &[String], source: &Table) -> (String, String) {
    let folded: HashSet<&str> = candidate_set.iter().map(String::as_str).collect();
    let retained: HashSet<&str> = source
        .attributes()
        .iter()
        .map(String::as_str)
        .filter(|a| !folded.contains(a))
        .collect();
    let free = |name: &str, taken: &HashSet<&str>| -> String {
        if !taken.contains(name) {
            return name.to_string();
        }
        (1..)
            .map(|k| format!("{name}_{k}"))
            .find(|c| !taken.contains(c.as_str()))
            .expect("unbounded suffixes")
    };
    let var = free(&var, &retained);
    let mut taken = retained.clone();
    taken.insert(var.as_str());
    let value = free(&value, &taken);
    (var, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::load_table;

    fn source() -> Table {
        load_table("Div,HS,AS,Metric\nE0,1,2,3\n", None, "s").unwrap()
    }

    fn target() -> Table {
        load_table("Div,Metric,Value\nE0,HS,1\n", None, "t").unwrap()
    }

    fn gateway(script: MockScript) -> (Gateway, Arc<MockTransport>) {
        let mock = Arc::new(MockTransport::new(script));
        let cfg = GatewayConfig {
            retry_backoff: Duration::ZERO,
            ..GatewayConfig::default()
        };
        (Gateway::new(mock.clone(), cfg), mock)
    }

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage::new(Role::User, "hi")]
    }

    #[test]
    fn propose_parses_and_sanitizes() {
        let (gw, _) = gateway(MockScript::sequence([
            r#"{"unpivot_columns": ["HS","AS"]}"#,
            r#"{"unpivot_columns": []}"#,
            r#"{"unpivot_columns": ["HS","Bogus","HS"]}"#,
        ]));
        let s = source();
        assert_eq!(gw.propose(PromptKind::Init, &msgs(), &s).unwrap().unpivot_columns, ["HS", "AS"]);
        assert!(gw.propose(PromptKind::Init, &msgs(), &s).unwrap().unpivot_columns.is_empty());
        let r = gw.propose(PromptKind::Refine, &msgs(), &s).unwrap();
        assert_eq!(r.unpivot_columns, ["HS"]);
        assert_eq!(r.dropped, ["Bogus"]);
    }

    #[test]
    fn propose_retries_parse_failures() {
        let (gw, _) = gateway(MockScript::sequence(["nope", r#"{"unpivot_columns": ["AS"]}"#]));
        let r = gw.propose(PromptKind::Init, &msgs(), &source()).unwrap();
        assert_eq!(r.unpivot_columns, ["AS"]);
        assert_eq!(gw.call_log().get(PromptKind::Init), 2);
    }

    #[test]
    fn propose_gives_up_with_raw_reply() {
        let (gw, _) = gateway(MockScript::default().with_rule(PromptKind::Init, "still not json"));
        let err = gw.propose(PromptKind::Init, &msgs(), &source()).unwrap_err();
        assert_eq!(
            err,
            GatewayError::Parse {
                kind: PromptKind::Init,
                attempts: 4,
                raw: "still not json".into()
            }
        );
    }

    #[test]
    fn transport_failures_retry_then_succeed() {
        let script = MockScript::default().with_queue(
            PromptKind::Feedback,
            [MockReply::fail("boom"), MockReply::Text("fine".into())],
        );
        let (gw, _) = gateway(script);
        assert_eq!(gw.feedback(&msgs()).unwrap(), "fine");
        assert_eq!(gw.call_count(), 2);
    }

    #[test]
    fn exhaustion_is_not_retried() {
        let (gw, _) = gateway(MockScript::default());
        let err = gw.feedback(&msgs()).unwrap_err();
        assert!(matches!(
            err,
            GatewayError::Transport {
                attempts: 1,
                source: TransportError::ScriptExhausted(PromptKind::Feedback),
                ..
            }
        ));
    }

    #[test]
    fn naming_defaults_and_deconflicts() {
        let (gw, _) = gateway(MockScript::default().with_rule(PromptKind::Naming, "no idea"));
        // `Metric` is a retained source attribute here
        let names = gw.name_var_value(&["HS".into(), "AS".into()], &source(), &target()).unwrap();
        assert_eq!(names, ("Metric_1".into(), "Value".into()));
        assert_eq!(gw.call_log().get(PromptKind::Naming), 1);
    }

    #[test]
    fn naming_uses_reply() {
        let (gw, _) = gateway(
            MockScript::default()
                .with_rule(PromptKind::Naming, r#"{"var_name": "Stat", "value_name": "Stat"}"#),
        );
        let names = gw.name_var_value(&["HS".into()], &source(), &target()).unwrap();
        assert_eq!(names, ("Stat".into(), "Stat_1".into()));
    }

    #[test]
    fn folded_names_may_be_reused() {
        let s = source();
        let got = deconflict_names("HS".into(), "AS".into(), &["HS".into(), "AS".into()], &s);
        assert_eq!(got, ("HS".into(), "AS".into()));
    }
}
