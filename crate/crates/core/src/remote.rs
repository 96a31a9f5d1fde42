//! Generic chat-completion wire adapter used by remote judges and agents.
//! Temperature is pinned to zero by construction. Endpoints and credentials
//! come from environment variables; when they are absent the remote kinds
//! are simply unavailable, never the scripted ones.

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("http error: {0}")]
    Http(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("reply missing completion content")]
    EmptyReply,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
}

impl RemoteConfig {
    /// Read `<prefix>_URL`, `<prefix>_MODEL`, `<prefix>_API_KEY`. URL and
    /// model are required; the key is optional for local endpoints.
    pub fn from_env(prefix: &str) -> Option<RemoteConfig> {
        let url = std::env::var(format!("{prefix}_URL")).ok()?;
        let model = std::env::var(format!("{prefix}_MODEL")).ok()?;
        let api_key = std::env::var(format!("{prefix}_API_KEY")).ok();
        Some(RemoteConfig {
            url,
            model,
            api_key,
        })
    }
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

pub struct ChatClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(config: RemoteConfig) -> ChatClient {
        ChatClient {
            config,
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn from_env(prefix: &str) -> Option<ChatClient> {
        RemoteConfig::from_env(prefix).map(ChatClient::new)
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    /// One chat completion at temperature zero.
    pub fn complete(&self, system: &str, user: &str) -> Result<String, RemoteError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut request = self.http.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| RemoteError::Http(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(RemoteError::Status(status.as_u16()));
        }
        let reply: ChatReply = response
            .json()
            .map_err(|e| RemoteError::Http(e.to_string()))?;
        reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or(RemoteError::EmptyReply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_env_disables_remote() {
        std::env::remove_var("EDSIM_TESTPREFIX_URL");
        std::env::remove_var("EDSIM_TESTPREFIX_MODEL");
        assert!(RemoteConfig::from_env("EDSIM_TESTPREFIX").is_none());
    }
}
