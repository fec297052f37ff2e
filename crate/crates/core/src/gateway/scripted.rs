//! Replay backend: canned replies looked up by request key.
//!
//! The script file is a JSON object mapping `request_key` to an entry:
//!
//! ```json
//! {
//!   "lex:0:kind": "Very Accurate - I am.",
//!   "lex:0:niggardly": {"error": "content_filter"},
//!   "gen:3": ["not json", "still not json", "{\"Full Name\": ...}"]
//! }
//! ```
//!
//! A string is returned verbatim. An `{"error": ...}` object yields one of
//! `content_filter`, `refused`, `transport` (retryable) or `permanent`.
//! A list is consumed one element per call and its last element repeats;
//! lists exist for fault injection and are the only non-idempotent entries.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Attempt, ChatRequest, GatewayError, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Reply(String),
    Error {
        error: ScriptedError,
        #[serde(default)]
        detail: Option<String>,
    },
    Sequence(Vec<ScriptEntry>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedError {
    ContentFilter,
    Refused,
    Transport,
    Permanent,
}

pub struct ScriptedTransport {
    script: HashMap<String, ScriptEntry>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ScriptedTransport {
    pub fn new(script: HashMap<String, ScriptEntry>) -> Self {
        Self { script, cursors: Mutex::new(HashMap::new()) }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    fn resolve(&self, key: &str, entry: &ScriptEntry) -> Attempt {
        match entry {
            ScriptEntry::Reply(text) => Attempt::Text(text.clone()),
            ScriptEntry::Error { error, detail } => {
                let detail = detail.clone().unwrap_or_else(|| "scripted failure".into());
                match error {
                    ScriptedError::ContentFilter => Attempt::ContentFiltered,
                    ScriptedError::Refused => Attempt::Refused,
                    ScriptedError::Transport => Attempt::Transient(detail),
                    ScriptedError::Permanent => Attempt::Permanent(detail),
                }
            }
            ScriptEntry::Sequence(items) => {
                if items.is_empty() {
                    return Attempt::Permanent(format!("empty scripted sequence for {key}"));
                }
                let index = {
                    let mut cursors = self.cursors.lock().expect("script cursor poisoned");
                    let cursor = cursors.entry(key.to_string()).or_insert(0);
                    let index = (*cursor).min(items.len() - 1);
                    *cursor += 1;
                    index
                };
                self.resolve(key, &items[index])
            }
        }
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> Result<Attempt, GatewayError> {
        Ok(match self.script.get(&request.request_key) {
            Some(entry) => self.resolve(&request.request_key, entry),
            None => Attempt::Permanent(format!("no scripted reply for {}", request.request_key)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, Limits, Outcome, RetryPolicy};
    use std::sync::Arc;

    fn req(key: &str) -> ChatRequest {
        ChatRequest {
            system_prompt: "s".into(),
            user_prompt: "u".into(),
            temperature: 0.7,
            max_tokens: 32,
            request_key: key.into(),
        }
    }

    fn gateway(json: &str) -> Gateway {
        let script = serde_json::from_str(json).unwrap();
        Gateway::new(Arc::new(ScriptedTransport::new(script)), RetryPolicy::immediate(5), Limits::default()).unwrap()
    }

    #[test]
    fn replays_verbatim_and_idempotently() {
        let gw = gateway(r#"{"k": "Very Accurate - I am."}"#);
        let a = gw.complete(&req("k")).unwrap();
        let b = gw.complete(&req("k")).unwrap();
        assert_eq!(a.outcome, Outcome::Text("Very Accurate - I am.".into()));
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.attempt_count, b.attempt_count);
    }

    #[test]
    fn scripted_errors_map_to_outcomes() {
        let gw = gateway(
            r#"{"f": {"error": "content_filter"}, "r": {"error": "refused"},
                "t": {"error": "transport", "detail": "boom"}}"#,
        );
        assert_eq!(gw.complete(&req("f")).unwrap().outcome, Outcome::ContentFiltered);
        assert_eq!(gw.complete(&req("r")).unwrap().outcome, Outcome::Refused);
        let t = gw.complete(&req("t")).unwrap();
        assert_eq!(t.outcome, Outcome::TransportError("boom".into()));
        assert_eq!(t.attempt_count, 6);
        assert!(matches!(gw.complete(&req("missing")).unwrap().outcome, Outcome::TransportError(_)));
    }

    #[test]
    fn sequences_advance_then_repeat_last() {
        let gw = gateway(r#"{"s": [{"error": "transport"}, {"error": "transport"}, "ok"]}"#);
        let res = gw.complete(&req("s")).unwrap();
        assert_eq!(res.outcome, Outcome::Text("ok".into()));
        assert_eq!(res.attempt_count, 3);
        assert_eq!(gw.complete(&req("s")).unwrap().attempt_count, 1);
    }
}
