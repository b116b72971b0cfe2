//! Uniform completion interface over remote providers and the mock.
//!
//! A [`Gateway`] owns one provider's rate limiter and in-flight bound and
//! drives a [`Backend`] with retries. Backends only translate a
//! [`PromptRequest`] to a provider call.

mod clock;
mod mock;
mod wire;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use chrono::Utc;
use heval_core::model::{CompletionResult, FinishReason, TokenUsage};
use heval_core::prompt::PromptRequest;
use thiserror::Error;

use crate::config::{ProviderDescriptor, ProviderKind};

pub use clock::{Clock, RateLimiter, SystemClock, VirtualClock};
pub use mock::{MockBackend, MockMeta};
pub use wire::{HttpBackend, HttpReply, ReqwestTransport, Transport, WireRequest};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("{provider}: credential error: {message}")]
    Credential { provider: String, message: String },
    #[error("{provider}: gave up after {attempts} attempts: {last}")]
    ExhaustedRetries {
        provider: String,
        attempts: u32,
        last: String,
    },
    #[error("{provider}: attachment too large: {detail}")]
    OversizeAttachment { provider: String, detail: String },
    #[error("{provider}: {message}")]
    Protocol { provider: String, message: String },
    #[error("unknown provider {0:?}")]
    UnknownProvider(String),
}

impl ProviderError {
    pub fn code(&self) -> &'static str {
        match self {
            ProviderError::Credential { .. } => "credential",
            ProviderError::ExhaustedRetries { .. } => "exhausted_retries",
            ProviderError::OversizeAttachment { .. } => "oversize_attachment",
            ProviderError::Protocol { .. } => "protocol",
            ProviderError::UnknownProvider(_) => "unknown_provider",
        }
    }
}

/// What a backend returns for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCompletion {
    pub text: String,
    pub finish: FinishReason,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallError {
    /// Worth retrying: 429, 5xx, timeouts, dropped connections.
    Transient(String),
    Credential(String),
    Oversize(String),
    Fatal(String),
}

pub trait Backend: Send + Sync {
    fn call(
        &self,
        request: &PromptRequest,
        account: Option<&str>,
        api_key: Option<&str>,
    ) -> Result<RawCompletion, CallError>;
}

struct InFlight {
    limit: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock().unwrap();
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap();
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    descriptor: ProviderDescriptor,
    backend: Arc<dyn Backend>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    in_flight: InFlight,
    env: EnvLookup,
}

type EnvLookup = Box<dyn Fn(&str) -> Option<String> + Send + Sync>;

impl Gateway {
    pub fn new(descriptor: ProviderDescriptor, backend: Arc<dyn Backend>, clock: Arc<dyn Clock>) -> Self {
        Self {
            limiter: RateLimiter::per_minute(descriptor.rate_limit),
            in_flight: InFlight {
                limit: descriptor.max_in_flight,
                busy: Mutex::new(0),
                freed: Condvar::new(),
            },
            descriptor,
            backend,
            clock,
            env: Box::new(|var| std::env::var(var).ok()),
        }
    }

    /// Gateway with the backend the descriptor's kind calls for. Mock
    /// fixture paths resolve against `base_dir`.
    pub fn for_descriptor(descriptor: ProviderDescriptor, base_dir: &std::path::Path) -> Self {
        let backend: Arc<dyn Backend> = match descriptor.kind {
            ProviderKind::Mock => {
                let dir = descriptor.fixtures.clone().unwrap_or_else(|| "mock".into());
                Arc::new(MockBackend::new(base_dir.join(dir)))
            }
            _ => Arc::new(HttpBackend::new(
                descriptor.clone(),
                Arc::new(ReqwestTransport::default()),
            )),
        };
        Self::new(descriptor, backend, Arc::new(SystemClock::default()))
    }

    /// Replaces environment lookup, for tests.
    pub fn with_env(mut self, env: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> Self {
        self.env = Box::new(env);
        self
    }

    pub fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn limiter(&self) -> &RateLimiter {
        &self.limiter
    }

    fn credential(&self, account: Option<&str>) -> Result<Option<String>, ProviderError> {
        let provider = self.descriptor.name.clone();
        let var = self
            .descriptor
            .env_var_for(account)
            .map_err(|e| ProviderError::Credential {
                provider: provider.clone(),
                message: e.to_string(),
            })?;
        match var {
            None if self.descriptor.kind == ProviderKind::Mock => Ok(None),
            None => Err(ProviderError::Credential {
                provider,
                message: "no auth_env_var configured".into(),
            }),
            Some(var) => match (self.env)(var) {
                Some(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(ProviderError::Credential {
                    provider,
                    message: format!("environment variable {var} is not set"),
                }),
            },
        }
    }

    fn check_sizes(&self, request: &PromptRequest) -> Result<(), ProviderError> {
        let limit = wire::attachment_limit(self.descriptor.kind);
        for shot in &request.attachments {
            if shot.image_bytes.len() > limit {
                return Err(ProviderError::OversizeAttachment {
                    provider: self.descriptor.name.clone(),
                    detail: format!(
                        "screenshot {} is {} bytes, limit {limit}",
                        shot.screen_index,
                        shot.image_bytes.len()
                    ),
                });
            }
        }
        Ok(())
    }

    /// Sends one request, retrying transient failures with exponential
    /// backoff up to the configured attempt cap.
    pub fn complete(
        &self,
        request: &PromptRequest,
        account: Option<&str>,
    ) -> Result<CompletionResult, ProviderError> {
        let key = self.credential(account)?;
        self.check_sizes(request)?;
        let _permit = self.in_flight.acquire();
        let provider = self.descriptor.name.clone();
        let max = self.descriptor.max_attempts;
        let mut last = String::new();
        for attempt in 1..=max {
            self.limiter.acquire(self.clock.as_ref());
            let started = Instant::now();
            match self.backend.call(request, account, key.as_deref()) {
                Ok(raw) => {
                    let finish = if raw.text.is_empty() {
                        FinishReason::Other
                    } else {
                        raw.finish
                    };
                    return Ok(CompletionResult {
                        raw_text: raw.text,
                        finish_reason: finish,
                        token_usage: raw.usage,
                        latency: started.elapsed(),
                        timestamp: Utc::now(),
                        provider_name: provider,
                        attempt_count: attempt,
                    });
                }
                Err(CallError::Transient(message)) => {
                    last = message;
                    if attempt < max {
                        self.clock
                            .sleep(self.descriptor.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
                Err(CallError::Credential(message)) => {
                    return Err(ProviderError::Credential { provider, message })
                }
                Err(CallError::Oversize(detail)) => {
                    return Err(ProviderError::OversizeAttachment { provider, detail })
                }
                Err(CallError::Fatal(message)) => {
                    return Err(ProviderError::Protocol { provider, message })
                }
            }
        }
        Err(ProviderError::ExhaustedRetries {
            provider,
            attempts: max,
            last,
        })
    }
}
