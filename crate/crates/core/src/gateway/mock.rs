//! Scripted transport for offline runs and tests.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatTransport, PromptKind, TransportError};

/// A canned reply: text, or a transport failure (`{"error": "..."}` in
/// script files).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Fail(FailReply),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailReply {
    pub error: String,
}

impl MockReply {
    pub fn fail(msg: impl Into<String>) -> MockReply {
        MockReply::Fail(FailReply { error: msg.into() })
    }
}

/// Reply script. Resolution order for a call of kind `k`: the queue for
/// `k`, then the shared `sequence`, then the rule for `k`, then the
/// `propose` rule (init and refine calls only).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub sequence: Vec<MockReply>,
    #[serde(default)]
    pub init: Vec<MockReply>,
    #[serde(default)]
    pub feedback: Vec<MockReply>,
    #[serde(default)]
    pub refine: Vec<MockReply>,
    #[serde(default)]
    pub naming: Vec<MockReply>,
    #[serde(default)]
    pub rules: BTreeMap<String, String>,
}

impl MockScript {
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        MockScript {
            sequence: replies.into_iter().map(|r| MockReply::Text(r.into())).collect(),
            ..MockScript::default()
        }
    }

    pub fn with_queue(mut self, kind: PromptKind, replies: impl IntoIterator<Item = MockReply>) -> Self {
        self.queue_mut(kind).extend(replies);
        self
    }

    pub fn with_rule(mut self, kind: PromptKind, reply: impl Into<String>) -> Self {
        self.rules.insert(kind.to_string(), reply.into());
        self
    }

    /// Every init/refine call proposes `set`; feedback approves it and
    /// naming answers `var`/`value`.
    pub fn always_propose(set: &[&str], var: &str, value: &str) -> Self {
        let proposal = serde_json::json!({ "unpivot_columns": set }).to_string();
        let naming = serde_json::json!({ "var_name": var, "value_name": value }).to_string();
        let mut s = MockScript::default();
        s.rules.insert("propose".into(), proposal);
        s.rules
            .insert("feedback".into(), "The selection is ideal; keep it unchanged.".into());
        s.rules.insert("naming".into(), naming);
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn queue_mut(&mut self, kind: PromptKind) -> &mut Vec<MockReply> {
        match kind {
            PromptKind::Init => &mut self.init,
            PromptKind::Feedback => &mut self.feedback,
            PromptKind::Refine => &mut self.refine,
            PromptKind::Naming => &mut self.naming,
        }
    }
}

#[derive(Debug)]
struct State {
    queues: BTreeMap<PromptKind, VecDeque<MockReply>>,
    sequence: VecDeque<MockReply>,
    rules: BTreeMap<String, String>,
    log: Vec<(PromptKind, Vec<ChatMessage>)>,
}

/// Transport that answers from a [`MockScript`] and records every call.
#[derive(Debug)]
pub struct MockTransport {
    state: Mutex<State>,
}

impl MockTransport {
    pub fn new(mut script: MockScript) -> Self {
        let mut queues = BTreeMap::new();
        for kind in [PromptKind::Init, PromptKind::Feedback, PromptKind::Refine, PromptKind::Naming] {
            queues.insert(kind, std::mem::take(script.queue_mut(kind)).into());
        }
        MockTransport {
            state: Mutex::new(State {
                queues,
                sequence: script.sequence.into(),
                rules: script.rules,
                log: Vec::new(),
            }),
        }
    }

    /// Calls so far, by kind.
    pub fn counts(&self) -> BTreeMap<PromptKind, usize> {
        let st = self.state.lock().expect("mock poisoned");
        let mut out = BTreeMap::new();
        for (k, _) in &st.log {
            *out.entry(*k).or_insert(0) += 1;
        }
        out
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().expect("mock poisoned").log.len()
    }

    /// Every conversation sent, in call order.
    pub fn calls(&self) -> Vec<(PromptKind, Vec<ChatMessage>)> {
        self.state.lock().expect("mock poisoned").log.clone()
    }
}

impl ChatTransport for MockTransport {
    fn complete(&self, kind: PromptKind, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let mut st = self.state.lock().expect("mock poisoned");
        st.log.push((kind, messages.to_vec()));
        let reply = st
            .queues
            .get_mut(&kind)
            .and_then(VecDeque::pop_front)
            .or_else(|| st.sequence.pop_front())
            .or_else(|| st.rules.get(&kind.to_string()).cloned().map(MockReply::Text))
            .or_else(|| match kind {
                PromptKind::Init | PromptKind::Refine => {
                    st.rules.get("propose").cloned().map(MockReply::Text)
                }
                _ => None,
            });
        match reply {
            Some(MockReply::Text(t)) => Ok(t),
            Some(MockReply::Fail(f)) => Err(TransportError::Scripted(f.error)),
            None => Err(TransportError::ScriptExhausted(kind)),
        }
    }
}
