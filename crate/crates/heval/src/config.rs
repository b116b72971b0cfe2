//! Provider configuration (`providers.toml` or `providers.json`).
//!
//! ```toml
//! [[provider]]
//! name = "gpt-4"
//! kind = "openai"            # openai | anthropic | gemini | mock
//! model_id = "gpt-4o"
//! auth_env_var = "OPENAI_API_KEY"
//! accounts = { a = "OPENAI_KEY_A", b = "OPENAI_KEY_B" }
//! ```
//!
//! Defaults for omitted fields are listed in [`defaults`].

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{io_at, HevalError, Result};

pub mod defaults {
    pub const REQUEST_TIMEOUT_SECS: u64 = 120;
    pub const MAX_OUTPUT_TOKENS: u32 = 4096;
    pub const RATE_LIMIT_PER_MINUTE: u32 = 60;
    pub const MAX_IN_FLIGHT: usize = 2;
    pub const MAX_ATTEMPTS: u32 = 3;
    pub const BACKOFF_BASE_MS: u64 = 1000;
    pub const MOCK_FIXTURES: &str = "mock";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[serde(rename = "openai")]
    OpenAi,
    Anthropic,
    Gemini,
    Mock,
}

impl ProviderKind {
    fn infer(name: &str) -> Option<Self> {
        let n = name.to_ascii_lowercase();
        if n == "mock" || n.starts_with("mock-") {
            Some(Self::Mock)
        } else if n.starts_with("gpt") || n.starts_with("openai") {
            Some(Self::OpenAi)
        } else if n.starts_with("claude") || n.starts_with("anthropic") {
            Some(Self::Anthropic)
        } else if n.starts_with("gemini") {
            Some(Self::Gemini)
        } else {
            None
        }
    }

    fn default_endpoint(self, model: &str) -> String {
        match self {
            Self::OpenAi => "https://api.openai.com/v1/chat/completions".into(),
            Self::Anthropic => "https://api.anthropic.com/v1/messages".into(),
            Self::Gemini => format!(
                "https://generativelanguage.googleapis.com/v1beta/models/{model}:generateContent"
            ),
            Self::Mock => String::new(),
        }
    }

    fn default_env_var(self) -> Option<&'static str> {
        match self {
            Self::OpenAi => Some("OPENAI_API_KEY"),
            Self::Anthropic => Some("ANTHROPIC_API_KEY"),
            Self::Gemini => Some("GEMINI_API_KEY"),
            Self::Mock => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub name: String,
    pub kind: ProviderKind,
    pub endpoint_url: String,
    pub model_id: String,
    /// Environment variable holding the API key; the key itself is never
    /// written anywhere.
    pub auth_env_var: Option<String>,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
    /// Requests per minute.
    pub rate_limit: u32,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    /// Account label to the environment variable holding that account's key.
    pub accounts: BTreeMap<String, String>,
    /// Extra body fields such as `temperature`; empty means provider
    /// defaults.
    pub sampling: BTreeMap<String, serde_json::Value>,
    /// Mock only: directory of canned responses.
    pub fixtures: Option<PathBuf>,
}

impl ProviderDescriptor {
    pub fn mock(name: &str, fixtures: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            kind: ProviderKind::Mock,
            endpoint_url: String::new(),
            model_id: name.into(),
            auth_env_var: None,
            max_output_tokens: defaults::MAX_OUTPUT_TOKENS,
            request_timeout: Duration::from_secs(defaults::REQUEST_TIMEOUT_SECS),
            rate_limit: defaults::RATE_LIMIT_PER_MINUTE,
            max_in_flight: defaults::MAX_IN_FLIGHT,
            max_attempts: defaults::MAX_ATTEMPTS,
            backoff_base: Duration::from_millis(defaults::BACKOFF_BASE_MS),
            accounts: BTreeMap::new(),
            sampling: BTreeMap::new(),
            fixtures: Some(fixtures.into()),
        }
    }

    /// Environment variable to read for `account`, if the provider needs one.
    pub fn env_var_for(&self, account: Option<&str>) -> Result<Option<&str>> {
        match account {
            Some(label) => match self.accounts.get(label) {
                Some(var) => Ok(Some(var)),
                None if self.kind == ProviderKind::Mock => Ok(None),
                None => Err(HevalError::Invalid(format!(
                    "provider {} has no account {label:?}",
                    self.name
                ))),
            },
            None => Ok(self.auth_env_var.as_deref()),
        }
    }

    /// Sampling settings as recorded on runs.
    pub fn sampling_summary(&self) -> Option<String> {
        (!self.sampling.is_empty()).then(|| serde_json::to_string(&self.sampling).unwrap_or_default())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProvider {
    name: String,
    kind: Option<ProviderKind>,
    endpoint_url: Option<String>,
    model_id: Option<String>,
    auth_env_var: Option<String>,
    max_output_tokens: Option<u32>,
    request_timeout_secs: Option<u64>,
    rate_limit: Option<u32>,
    max_in_flight: Option<usize>,
    max_attempts: Option<u32>,
    backoff_base_ms: Option<u64>,
    #[serde(default)]
    accounts: BTreeMap<String, String>,
    #[serde(default)]
    sampling: BTreeMap<String, serde_json::Value>,
    fixtures: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    provider: Vec<RawProvider>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line where the `n`th (0-based) provider's name appears.
fn name_line(text: &str, name: &str, nth: usize) -> usize {
    let needle = format!("\"{name}\"");
    text.match_indices(needle.as_str())
        .nth(nth)
        .map_or(1, |(i, _)| line_of(text, i))
}

/// Parses provider descriptors from TOML, or JSON when `path` ends in
/// `.json`. Descriptors keep file order.
pub fn parse_providers(text: &str, path: &Path) -> Result<Vec<ProviderDescriptor>> {
    let config_err = |line, message: String| HevalError::Config {
        path: path.to_path_buf(),
        line,
        message,
    };
    let raw: RawConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| config_err(e.line(), e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| line_of(text, s.start));
            config_err(line, e.message().to_string())
        })?
    };

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.provider.len());
    for p in raw.provider {
        let occurrence = out
            .iter()
            .filter(|d: &&ProviderDescriptor| d.name == p.name)
            .count();
        let line = name_line(text, &p.name, occurrence);
        if !seen.insert(p.name.clone()) {
            return Err(config_err(line, format!("duplicate provider name {:?}", p.name)));
        }
        let kind = p.kind.or_else(|| ProviderKind::infer(&p.name)).ok_or_else(|| {
            config_err(line, format!("provider {:?} needs a kind", p.name))
        })?;
        let max_output_tokens = p.max_output_tokens.unwrap_or(defaults::MAX_OUTPUT_TOKENS);
        if max_output_tokens == 0 {
            return Err(config_err(line, "max_output_tokens must be positive".into()));
        }
        let rate_limit = p.rate_limit.unwrap_or(defaults::RATE_LIMIT_PER_MINUTE);
        let max_in_flight = p.max_in_flight.unwrap_or(defaults::MAX_IN_FLIGHT);
        let max_attempts = p.max_attempts.unwrap_or(defaults::MAX_ATTEMPTS);
        if rate_limit == 0 || max_in_flight == 0 || max_attempts == 0 {
            return Err(config_err(
                line,
                "rate_limit, max_in_flight and max_attempts must be positive".into(),
            ));
        }
        let model_id = p.model_id.unwrap_or_else(|| p.name.clone());
        out.push(ProviderDescriptor {
            endpoint_url: p
                .endpoint_url
                .unwrap_or_else(|| kind.default_endpoint(&model_id)),
            auth_env_var: p
                .auth_env_var
                .or_else(|| kind.default_env_var().map(Into::into)),
            max_output_tokens,
            request_timeout: Duration::from_secs(
                p.request_timeout_secs.unwrap_or(defaults::REQUEST_TIMEOUT_SECS),
            ),
            rate_limit,
            max_in_flight,
            max_attempts,
            backoff_base: Duration::from_millis(p.backoff_base_ms.unwrap_or(defaults::BACKOFF_BASE_MS)),
            accounts: p.accounts,
            sampling: p.sampling,
            fixtures: match kind {
                ProviderKind::Mock => Some(p.fixtures.unwrap_or_else(|| defaults::MOCK_FIXTURES.into())),
                _ => p.fixtures,
            },
            name: p.name,
            kind,
            model_id,
        });
    }
    Ok(out)
}

pub fn list_providers(path: &Path) -> Result<Vec<ProviderDescriptor>> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    parse_providers(&text, path)
}

/// Written by `init`.
pub const DEFAULT_PROVIDERS_TOML: &str = r#"# Providers available to `heval evaluate` and `heval reliability`.
# API keys are read from the environment variables named here and are
# never stored in the project.

[[provider]]
name = "mock"
kind = "mock"
fixtures = "mock"

# [[provider]]
# name = "gpt-4"
# kind = "openai"
# model_id = "gpt-4o"
# auth_env_var = "OPENAI_API_KEY"
# accounts = { a = "OPENAI_KEY_A", b = "OPENAI_KEY_B" }
#
# [[provider]]
# name = "gemini-1.5-pro"
# kind = "gemini"
# auth_env_var = "GEMINI_API_KEY"
#
# [[provider]]
# name = "claude-3.5-sonnet"
# kind = "anthropic"
# model_id = "claude-3-5-sonnet-20240620"
# auth_env_var = "ANTHROPIC_API_KEY"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ProviderDescriptor>> {
        parse_providers(text, Path::new("providers.toml"))
    }

    #[test]
    fn mock_only_gets_defaults() {
        let p = parse("[[provider]]\nname = \"mock\"\n").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].request_timeout, Duration::from_secs(120));
        assert_eq!(p[0].kind, ProviderKind::Mock);
        assert_eq!(p[0].fixtures.as_deref(), Some(Path::new("mock")));
    }

    #[test]
    fn four_providers_in_file_order() {
        let text = "[[provider]]\nname = \"gpt-4\"\n\n[[provider]]\nname = \"gemini-1.5-pro\"\n\n[[provider]]\nname = \"claude-3.5-sonnet\"\n\n[[provider]]\nname = \"mock\"\n";
        let names: Vec<_> = parse(text).unwrap().into_iter().map(|p| (p.name, p.kind)).collect();
        assert_eq!(
            names,
            [
                ("gpt-4".to_string(), ProviderKind::OpenAi),
                ("gemini-1.5-pro".to_string(), ProviderKind::Gemini),
                ("claude-3.5-sonnet".to_string(), ProviderKind::Anthropic),
                ("mock".to_string(), ProviderKind::Mock),
            ]
        );
    }

    #[test]
    fn duplicate_name_reports_line() {
        let text = "[[provider]]\nname = \"mock\"\n\n[[provider]]\nname = \"mock\"\n";
        match parse(text) {
            Err(HevalError::Config { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_reports_line() {
        match parse("[[provider]]\nname = \"mock\"\nmax_output_tokens = \"many\"\n") {
            Err(HevalError::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("[[provider]]\nname = \"mock\"\nmax_output_tokens = 0\n") {
            Err(HevalError::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_config() {
        let text = r#"{"provider": [{"name": "mock"}, {"name": "x", "kind": "openai", "rate_limit": 10}]}"#;
        let p = parse_providers(text, Path::new("providers.json")).unwrap();
        assert_eq!(p[1].rate_limit, 10);
        assert_eq!(p[1].auth_env_var.as_deref(), Some("OPENAI_API_KEY"));
    }

    #[test]
    fn shipped_default_parses() {
        let p = parse(DEFAULT_PROVIDERS_TOML).unwrap();
        assert_eq!(p.len(), 1);
    }
}
