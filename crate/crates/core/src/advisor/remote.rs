use std::thread::sleep;

use serde_json::{json, Value};

use crate::advisor::{CompletionBackend, GenerationSettings};
use crate::error::{Error, Result};

pub const ENV_API_KEY: &str = "GDA_API_KEY";
pub const ENV_API_URL: &str = "GDA_API_URL";
pub const DEFAULT_API_URL: &str = "https://api.openai.com/v1/chat/completions";

/// OpenAI-compatible chat-completion client.
///
/// Each call sends one user message. Connection failures, 429 and 5xx are
/// retried up to `max_retries` times with doubling delays; any other status
/// fails at once.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub url: String,
    api_key: String,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl RemoteBackend {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>) -> Self {
        RemoteBackend {
            url: url.into(),
            api_key: api_key.into(),
        }
    }

    /// Key from `GDA_API_KEY`, endpoint from `GDA_API_URL` (or the default).
    pub fn from_env() -> Result<Self> {
        let key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::config(format!("remote backend needs {ENV_API_KEY} to be set")))?;
        let url = std::env::var(ENV_API_URL)
            .ok()
            .filter(|u| !u.is_empty())
            .unwrap_or_else(|| DEFAULT_API_URL.to_string());
        Ok(Self::new(url, key))
    }

    fn request_body(prompt: &str, settings: &GenerationSettings) -> Value {
        let mut body = json!({
            "model": settings.model,
            "temperature": settings.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(m) = settings.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn attempt(&self, agent: &ureq::Agent, body: &str) -> std::result::Result<String, Attempt> {
        let resp = agent
            .post(&self.url)
            .header("Authorization", format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading response: {e}")))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => {
                return Err(Attempt::Fatal(Error::Transport {
                    retries: 0,
                    message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
                }))
            }
        }
        let content = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(String::from));
        content.ok_or_else(|| {
            Attempt::Fatal(Error::Format {
                message: "response has no choices[0].message.content".into(),
                raw_response: text,
            })
        })
    }
}

impl CompletionBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote({})", self.url)
    }

    fn complete(&self, prompt: &str, settings: &GenerationSettings) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let body = Self::request_body(prompt, settings).to_string();
        let mut delay = settings.backoff;
        let mut retries = 0;
        loop {
            match self.attempt(&agent, &body) {
                Ok(content) => return Ok(content),
                Err(Attempt::Fatal(Error::Transport { message, .. })) => {
                    return Err(Error::Transport { retries, message })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) if retries >= settings.max_retries => {
                    return Err(Error::Transport { retries, message })
                }
                Err(Attempt::Retry(_)) => {
                    sleep(delay);
                    delay *= 2;
                    retries += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn body_has_model_and_message() {
        let b = RemoteBackend::request_body("hi", &GenerationSettings::default());
        assert_eq!(b["model"], "gpt-3.5-turbo");
        assert_eq!(b["temperature"], 0.0);
        assert_eq!(b["messages"][0]["content"], "hi");
    }

    #[test]
    fn unreachable_endpoint_gives_transport_error() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let backend = RemoteBackend::new(format!("http://127.0.0.1:{port}/v1/chat/completions"), "k");
        let settings = GenerationSettings {
            timeout: Duration::from_millis(500),
            backoff: Duration::from_millis(1),
            ..Default::default()
        };
        match backend.complete("hi", &settings) {
            Err(Error::Transport { retries, .. }) => assert_eq!(retries, 3),
            other => panic!("{other:?}"),
        }
    }
}
