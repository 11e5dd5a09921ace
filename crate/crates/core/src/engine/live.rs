use super::{PromptBundle, PromptRole, ProviderError, ProviderPort};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;

pub const ENV_ENDPOINT: &str = "VIVA_LIVE_ENDPOINT";
pub const ENV_MODEL: &str = "VIVA_LIVE_MODEL";
pub const ENV_API_KEY: &str = "VIVA_LIVE_API_KEY";
pub const ENV_TEMPERATURE: &str = "VIVA_LIVE_TEMPERATURE";

/// Settings for an OpenAI-compatible chat-completions endpoint.
///
/// The API key is never serialized.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub temperature: Option<f32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

impl std::fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("temperature", &self.temperature)
            .field("timeout_secs", &self.timeout_secs)
            .finish()
    }
}

impl LiveConfig {
    /// Reads endpoint, model, key and temperature from the environment.
    pub fn from_env() -> Result<Self, ProviderError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let endpoint = var(ENV_ENDPOINT).ok_or_else(|| ProviderError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = var(ENV_MODEL).ok_or_else(|| ProviderError::Config(format!("{ENV_MODEL} is not set")))?;
        let temperature = match var(ENV_TEMPERATURE) {
            Some(t) => Some(t.parse().map_err(|_| ProviderError::Config(format!("{ENV_TEMPERATURE} is not a number")))?),
            None => None,
        };
        Ok(Self { endpoint, model, api_key: var(ENV_API_KEY), temperature, timeout_secs: default_timeout() })
    }

    /// Fills the key from the environment when not already set.
    pub fn with_env_key(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(ENV_API_KEY).ok().filter(|v| !v.is_empty());
        }
        self
    }
}

pub struct LiveProvider {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    /// Chat messages with consecutive same-role turns merged.
    pub fn messages(bundle: &PromptBundle) -> Vec<Value> {
        let mut out: Vec<(&str, String)> = vec![("system", bundle.system_prompt.clone())];
        for message in &bundle.conversation {
            let role = match message.role {
                PromptRole::Examiner => "assistant",
                PromptRole::Submission | PromptRole::Candidate | PromptRole::Instruction => "user",
            };
            match out.last_mut() {
                Some((last, content)) if *last == role => {
                    content.push_str("\n\n");
                    content.push_str(&message.content);
                }
                _ => out.push((role, message.content.clone())),
            }
        }
        out.into_iter().map(|(role, content)| json!({ "role": role, "content": content })).collect()
    }
}

impl ProviderPort for LiveProvider {
    fn provider_id(&self) -> &str {
        "live"
    }

    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError> {
        let mut body = json!({ "model": self.config.model, "messages": Self::messages(bundle) });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let mut request = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send(body.to_string())
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("endpoint returned HTTP {}", status.as_u16())));
        }
        let reply: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transport(format!("unreadable response: {e}")))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Transport("response has no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Message;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves one HTTP request, returning the raw request text.
    fn serve_once(status: u16, body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            head + &String::from_utf8(payload).unwrap()
        });
        (url, handle)
    }

    fn bundle() -> PromptBundle {
        PromptBundle {
            system_prompt: "sys".into(),
            conversation: vec![
                Message::new(PromptRole::Submission, "doc"),
                Message::new(PromptRole::Examiner, "q1"),
                Message::new(PromptRole::Candidate, "a1"),
                Message::new(PromptRole::Instruction, "conclude"),
            ],
        }
    }

    #[test]
    fn merges_consecutive_user_turns() {
        let messages = LiveProvider::messages(&bundle());
        let roles: Vec<&str> = messages.iter().map(|m| m["role"].as_str().unwrap()).collect();
        assert_eq!(roles, ["system", "user", "assistant", "user"]);
        assert_eq!(messages[3]["content"], "a1\n\nconclude");
    }

    #[test]
    fn posts_chat_request_and_reads_content() {
        let (url, server) = serve_once(200, r#"{"choices":[{"message":{"role":"assistant","content":"Why?"}}]}"#);
        let provider = LiveProvider::new(LiveConfig {
            endpoint: url,
            model: "m-1".into(),
            api_key: Some("sk-test".into()),
            temperature: Some(0.2),
            timeout_secs: 10,
        });
        assert_eq!(provider.complete(&bundle()).unwrap(), "Why?");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /v1/chat/completions"));
        assert!(request.contains("Bearer sk-test"));
        assert!(request.contains("\"model\":\"m-1\""));
        assert!(request.contains("\"temperature\":0.2"));
    }

    #[test]
    fn http_errors_are_transport_failures() {
        let (url, server) = serve_once(500, "{}");
        let provider = LiveProvider::new(LiveConfig {
            endpoint: url,
            model: "m".into(),
            api_key: Some("sk-secret".into()),
            temperature: None,
            timeout_secs: 10,
        });
        let err = provider.complete(&bundle()).unwrap_err();
        assert_eq!(err, ProviderError::Transport("endpoint returned HTTP 500".into()));
        assert!(!err.to_string().contains("sk-secret"));
        server.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_failure() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let provider = LiveProvider::new(LiveConfig {
            endpoint: url,
            model: "m".into(),
            api_key: None,
            temperature: None,
            timeout_secs: 2,
        });
        assert!(matches!(provider.complete(&bundle()), Err(ProviderError::Transport(_))));
    }

    #[test]
    fn debug_redacts_key() {
        let config = LiveConfig {
            endpoint: "http://x".into(),
            model: "m".into(),
            api_key: Some("sk-secret".into()),
            temperature: None,
            timeout_secs: 1,
        };
        assert!(!format!("{config:?}").contains("sk-secret"));
    }
}
