use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{prompt_hash, JudgeError};

/// Sends one rendered prompt and returns the raw reply text. An `Err` is a
/// transport failure and is retried.
pub trait Transport: Sync {
    fn complete(&self, prompt: &str) -> Result<String, String>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CannedReply {
    Reply(String),
    Error(String),
}

/// Canned replies for offline runs. Replies keyed by the prompt's SHA-256
/// are consumed first; otherwise the shared queue is used. An exhausted
/// fixture answers with a transport error.
#[derive(Debug, Default)]
pub struct FixtureTransport {
    keyed: Mutex<HashMap<String, VecDeque<CannedReply>>>,
    queue: Mutex<VecDeque<CannedReply>>,
    calls: Mutex<Vec<String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FixtureFile {
    by_prompt: HashMap<String, Vec<CannedReply>>,
    queue: Vec<CannedReply>,
}

impl FixtureTransport {
    pub fn new(queue: impl IntoIterator<Item = CannedReply>) -> Self {
        Self {
            queue: Mutex::new(queue.into_iter().collect()),
            ..Self::default()
        }
    }

    pub fn replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|r| CannedReply::Reply(r.into())))
    }

    pub fn with_prompt(self, prompt: &str, replies: Vec<CannedReply>) -> Self {
        self.keyed
            .lock()
            .expect("fixture lock")
            .insert(prompt_hash(prompt), replies.into());
        self
    }

    /// JSON of the form `{"by_prompt": {"<sha256>": [..]}, "queue": [..]}`
    /// where each reply is `{"reply": ".."}` or `{"error": ".."}`.
    pub fn from_json(text: &str) -> Result<Self, JudgeError> {
        let file: FixtureFile =
            serde_json::from_str(text).map_err(|e| JudgeError::Fixture(e.to_string()))?;
        Ok(Self {
            keyed: Mutex::new(file.by_prompt.into_iter().map(|(k, v)| (k, v.into())).collect()),
            queue: Mutex::new(file.queue.into()),
            calls: Mutex::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| JudgeError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Hashes of the prompts received so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("fixture lock").clone()
    }
}

impl Transport for FixtureTransport {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        let hash = prompt_hash(prompt);
        self.calls.lock().expect("fixture lock").push(hash.clone());
        let keyed = self
            .keyed
            .lock()
            .expect("fixture lock")
            .get_mut(&hash)
            .and_then(|q| q.pop_front());
        let next = keyed.or_else(|| self.queue.lock().expect("fixture lock").pop_front());
        match next {
            Some(CannedReply::Reply(r)) => Ok(r),
            Some(CannedReply::Error(e)) => Err(e),
            None => Err("fixture exhausted".into()),
        }
    }
}

#[cfg(feature = "http")]
pub use http::HttpTransport;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::Transport;
    use crate::judge::{JudgeConfig, JudgeError};

    /// Chat-completion endpoint: one user message, reply read from
    /// `choices[0].message.content`.
    pub struct HttpTransport {
        agent: ureq::Agent,
        endpoint: String,
        model: String,
        temperature: f64,
        api_key: String,
    }

    impl HttpTransport {
        pub fn new(config: &JudgeConfig) -> Result<Self, JudgeError> {
            config.validate()?;
            let api_key = std::env::var(&config.api_key_env)
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| JudgeError::MissingApiKey(config.api_key_env.clone()))?;
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
                .build()
                .into();
            Ok(Self {
                agent,
                endpoint: config.endpoint.clone(),
                model: config.model.clone(),
                temperature: config.temperature,
                api_key,
            })
        }
    }

    impl Transport for HttpTransport {
        fn complete(&self, prompt: &str) -> Result<String, String> {
            let body = json!({
                "model": self.model,
                "temperature": self.temperature,
                "messages": [{"role": "user", "content": prompt}],
            });
            let mut resp = self
                .agent
                .post(&self.endpoint)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(&body)
                .map_err(|e| e.to_string())?;
            let value: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
            value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("reply without message content: {value}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_before_queue() {
        let t = FixtureTransport::replies(["no"]).with_prompt("p", vec![CannedReply::Reply("yes".into())]);
        assert_eq!(t.complete("p").unwrap(), "yes");
        assert_eq!(t.complete("p").unwrap(), "no");
        assert!(t.complete("p").is_err());
        assert_eq!(t.calls().len(), 3);
    }

    #[test]
    fn parses_fixture_file() {
        let json = format!(
            r#"{{"by_prompt": {{"{}": [{{"error": "timeout"}}, {{"reply": "Yes"}}]}}, "queue": [{{"reply": "no"}}]}}"#,
            prompt_hash("q")
        );
        let t = FixtureTransport::from_json(&json).unwrap();
        assert_eq!(t.complete("q"), Err("timeout".into()));
        assert_eq!(t.complete("q").unwrap(), "Yes");
        assert_eq!(t.complete("other").unwrap(), "no");
    }
}
