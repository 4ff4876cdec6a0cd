use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest, RawCompletion};
use crate::error::{Error, Result};

/// One line of a mock script.
///
/// Exactly one selector should be set: `prompt_hash` (SHA-256 hex of the
/// prompt), `prompt_contains` (substring), or `default`. When several entries
/// match, hash beats substring beats default, and an entry pinned to the
/// request's `temperature` beats an unpinned one; remaining ties go to the
/// earliest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub default: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub completions: Vec<String>,
    /// Number of leading calls that fail with a transient error.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fail_first: u32,
    /// Fail every call with this error kind: transient, rate_limited, auth, malformed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl ScriptEntry {
    pub fn for_hash(hash: impl Into<String>, completions: &[&str]) -> Self {
        Self {
            prompt_hash: Some(hash.into()),
            ..Self::fallback(completions)
        }
    }

    pub fn containing(needle: impl Into<String>, completions: &[&str]) -> Self {
        Self {
            prompt_contains: Some(needle.into()),
            ..Self::fallback(completions)
        }
    }

    pub fn fallback(completions: &[&str]) -> Self {
        Self {
            prompt_hash: None,
            prompt_contains: None,
            default: true,
            temperature: None,
            completions: completions.iter().map(|s| s.to_string()).collect(),
            fail_first: 0,
            error: None,
        }
    }

    pub fn at_temperature(mut self, t: f64) -> Self {
        self.temperature = Some(t);
        self
    }

    fn score(&self, request: &CompletionRequest, hash: &str) -> Option<u8> {
        let tier = if let Some(h) = &self.prompt_hash {
            (h.eq_ignore_ascii_case(hash)).then_some(3)?
        } else if let Some(needle) = &self.prompt_contains {
            request.prompt.contains(needle.as_str()).then_some(2)?
        } else if self.default {
            1
        } else {
            return None;
        };
        let pinned = match self.temperature {
            Some(t) if (t - request.temperature).abs() < 1e-9 => 1,
            Some(_) => return None,
            None => 0,
        };
        Some(tier * 2 + pinned)
    }
}

/// Deterministic backend that answers from a JSON-lines script. Identical
/// requests always select the same entry and get the same completions.
#[derive(Debug)]
pub struct ScriptedMock {
    id: String,
    entries: Vec<ScriptEntry>,
    failures_served: Vec<AtomicU32>,
    calls: AtomicU64,
}

impl ScriptedMock {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let canon = serde_json::to_string(&entries).expect("script entries serialize");
        let id = format!("scripted-mock:{}", &crate::sha256_hex(canon)[..12]);
        let failures_served = entries.iter().map(|_| AtomicU32::new(0)).collect();
        Self {
            id,
            entries,
            failures_served,
            calls: AtomicU64::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries: Vec<ScriptEntry> = crate::jsonl::read_all(path)?;
        for (i, e) in entries.iter().enumerate() {
            let selectors =
                e.prompt_hash.is_some() as u8 + e.prompt_contains.is_some() as u8 + e.default as u8;
            if selectors != 1 {
                return Err(Error::Config(format!(
                    "{} entry {}: set exactly one of prompt_hash, prompt_contains, default",
                    path.display(),
                    i + 1
                )));
            }
        }
        Ok(Self::new(entries))
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for ScriptedMock {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn call(&self, request: &CompletionRequest) -> std::result::Result<RawCompletion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = request.prompt_hash();
        let best = self
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.score(request, &hash).map(|s| (s, i)))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((_, idx)) = best else {
            return Err(BackendError::Unscripted(hash));
        };
        let entry = &self.entries[idx];

        if self.failures_served[idx]
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |served| {
                (served < entry.fail_first).then_some(served + 1)
            })
            .is_ok()
        {
            return Err(BackendError::Transient("scripted failure".into()));
        }
        if let Some(kind) = &entry.error {
            return Err(match kind.as_str() {
                "rate_limited" => BackendError::RateLimited,
                "auth" => BackendError::Auth("scripted auth failure".into()),
                "malformed" => BackendError::Malformed("scripted malformed payload".into()),
                _ => BackendError::Transient("scripted failure".into()),
            });
        }
        if entry.completions.is_empty() {
            return Err(BackendError::Malformed("script entry has no completions".into()));
        }
        let texts: Vec<String> = entry
            .completions
            .iter()
            .cycle()
            .take(request.n as usize)
            .cloned()
            .collect();
        let payload = serde_json::json!({ "entry": idx, "choices": texts }).to_string();
        Ok(RawCompletion { texts, payload })
    }
}

type Responder = dyn Fn(&CompletionRequest) -> std::result::Result<Vec<String>, BackendError> + Send + Sync;

/// Backend driven by a closure. Handy for synthetic worlds in tests.
pub struct FnBackend {
    id: String,
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        id: impl Into<String>,
        respond: impl Fn(&CompletionRequest) -> std::result::Result<Vec<String>, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            respond: Box::new(respond),
        }
    }
}

impl CompletionBackend for FnBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn call(&self, request: &CompletionRequest) -> std::result::Result<RawCompletion, BackendError> {
        let texts = (self.respond)(request)?;
        Ok(RawCompletion {
            payload: serde_json::json!({ "choices": texts }).to_string(),
            texts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{Gateway, RateLimit, RetryPolicy};

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::new(prompt)
    }

    #[test]
    fn hash_entry_returns_canned_text() {
        let r = req("hello prompt");
        let mock = ScriptedMock::new(vec![
            ScriptEntry::fallback(&["fallback"]),
            ScriptEntry::for_hash(r.prompt_hash(), &["canned"]),
        ]);
        assert_eq!(mock.call(&r).unwrap().texts, ["canned"]);
        assert_eq!(mock.call(&req("other")).unwrap().texts, ["fallback"]);
    }

    #[test]
    fn identical_requests_identical_results() {
        let mock = ScriptedMock::new(vec![ScriptEntry::fallback(&["a", "b"])]);
        let r = req("p").n(3);
        let first = mock.call(&r).unwrap();
        assert_eq!(first.texts, ["a", "b", "a"]);
        assert_eq!(mock.call(&r).unwrap(), first);
    }

    #[test]
    fn temperature_pinned_entry_wins_at_that_temperature() {
        let mock = ScriptedMock::new(vec![
            ScriptEntry::containing("Q:", &["Answer: I don't know"]),
            ScriptEntry::containing("Q:", &["Answer: apple"]).at_temperature(1.0),
        ]);
        assert_eq!(mock.call(&req("Q: x")).unwrap().texts, ["Answer: I don't know"]);
        assert_eq!(mock.call(&req("Q: x").temperature(1.0)).unwrap().texts, ["Answer: apple"]);
    }

    #[test]
    fn unscripted_prompt_errors() {
        let mock = ScriptedMock::new(vec![ScriptEntry::containing("zzz", &["x"])]);
        assert!(matches!(mock.call(&req("p")), Err(BackendError::Unscripted(_))));
    }

    #[test]
    fn fail_twice_then_succeed_under_retry_cap_three() {
        let mut entry = ScriptEntry::fallback(&["ok"]);
        entry.fail_first = 2;
        let gw = Gateway::new(
            ScriptedMock::new(vec![entry]),
            RateLimit::default(),
            RetryPolicy {
                max_retries: 3,
                initial_backoff_ms: 1,
                max_backoff_ms: 2,
            },
        );
        let res = gw.complete(&req("p")).unwrap();
        assert_eq!(res.texts, ["ok"]);
        assert_eq!(res.retries, 2);
    }

    #[test]
    fn load_validates_selectors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        std::fs::write(&path, "{\"default\":true,\"prompt_contains\":\"x\",\"completions\":[\"a\"]}\n").unwrap();
        assert!(ScriptedMock::load(&path).is_err());
        std::fs::write(&path, "{\"default\":true,\"completions\":[\"a\"]}\n").unwrap();
        let mock = ScriptedMock::load(&path).unwrap();
        assert_eq!(mock.call(&req("p")).unwrap().texts, ["a"]);
        assert_eq!(mock.call_count(), 1);
    }
}
