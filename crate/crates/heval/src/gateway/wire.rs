//! HTTP wire formats for the OpenAI, Anthropic and Gemini chat APIs.

use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use heval_core::model::{FinishReason, TokenUsage};
use heval_core::prompt::PromptRequest;
use serde_json::{json, Map, Value};

use super::{Backend, CallError, RawCompletion};
use crate::config::{ProviderDescriptor, ProviderKind};

/// Per-image size limits as published by each provider.
pub(crate) fn attachment_limit(kind: ProviderKind) -> usize {
    match kind {
        ProviderKind::Anthropic => 5 * 1024 * 1024,
        ProviderKind::OpenAi | ProviderKind::Gemini => 20 * 1024 * 1024,
        ProviderKind::Mock => usize::MAX,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HttpReply {
    Status(u16, String),
    /// Connection failure or timeout.
    Failed(String),
}

pub trait Transport: Send + Sync {
    fn post(&self, request: &WireRequest) -> HttpReply;
}

#[derive(Debug, Default)]
pub struct ReqwestTransport {
    client: std::sync::OnceLock<reqwest::blocking::Client>,
}

impl Transport for ReqwestTransport {
    fn post(&self, request: &WireRequest) -> HttpReply {
        let client = self.client.get_or_init(reqwest::blocking::Client::new);
        let mut builder = client
            .post(&request.url)
            .timeout(request.timeout)
            .json(&request.body);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        match builder.send() {
            Ok(resp) => {
                let status = resp.status().as_u16();
                match resp.text() {
                    Ok(text) => HttpReply::Status(status, text),
                    Err(e) => HttpReply::Failed(e.to_string()),
                }
            }
            Err(e) => HttpReply::Failed(e.to_string()),
        }
    }
}

pub struct HttpBackend {
    descriptor: ProviderDescriptor,
    transport: Arc<dyn Transport>,
}

impl HttpBackend {
    pub fn new(descriptor: ProviderDescriptor, transport: Arc<dyn Transport>) -> Self {
        Self {
            descriptor,
            transport,
        }
    }

    pub fn build(&self, request: &PromptRequest, api_key: &str) -> WireRequest {
        let d = &self.descriptor;
        let images = request.attachments.iter().map(|s| (s.media_kind.mime(), B64.encode(&s.image_bytes)));
        let (headers, mut body) = match d.kind {
            ProviderKind::OpenAi => {
                let mut content = vec![json!({"type": "text", "text": request.user_text})];
                content.extend(images.map(|(mime, data)| {
                    json!({"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{data}")}})
                }));
                let mut messages = Vec::new();
                if let Some(system) = &request.system_text {
                    messages.push(json!({"role": "system", "content": system}));
                }
                messages.push(json!({"role": "user", "content": content}));
                (
                    vec![("authorization".into(), format!("Bearer {api_key}"))],
                    json!({"model": d.model_id, "max_tokens": d.max_output_tokens, "messages": messages}),
                )
            }
            ProviderKind::Anthropic => {
                let mut content: Vec<Value> = images
                    .map(|(mime, data)| {
                        json!({"type": "image", "source": {"type": "base64", "media_type": mime, "data": data}})
                    })
                    .collect();
                content.push(json!({"type": "text", "text": request.user_text}));
                let mut body = json!({
                    "model": d.model_id,
                    "max_tokens": d.max_output_tokens,
                    "messages": [{"role": "user", "content": content}],
                });
                if let Some(system) = &request.system_text {
                    body["system"] = json!(system);
                }
                (
                    vec![
                        ("x-api-key".into(), api_key.into()),
                        ("anthropic-version".into(), "2023-06-01".into()),
                    ],
                    body,
                )
            }
            ProviderKind::Gemini => {
                let mut parts = vec![json!({"text": request.user_text})];
                parts.extend(images.map(|(mime, data)| json!({"inline_data": {"mime_type": mime, "data": data}})));
                let mut body = json!({
                    "contents": [{"role": "user", "parts": parts}],
                    "generationConfig": {"maxOutputTokens": d.max_output_tokens},
                });
                if let Some(system) = &request.system_text {
                    body["systemInstruction"] = json!({"parts": [{"text": system}]});
                }
                (vec![("x-goog-api-key".into(), api_key.into())], body)
            }
            ProviderKind::Mock => (Vec::new(), Value::Null),
        };
        merge_sampling(&mut body, d);
        WireRequest {
            url: d.endpoint_url.clone(),
            headers,
            body,
            timeout: d.request_timeout,
        }
    }
}

fn merge_sampling(body: &mut Value, d: &ProviderDescriptor) {
    if d.sampling.is_empty() {
        return;
    }
    let target: Option<&mut Map<String, Value>> = match d.kind {
        ProviderKind::Gemini => body["generationConfig"].as_object_mut(),
        _ => body.as_object_mut(),
    };
    if let Some(obj) = target {
        for (k, v) in &d.sampling {
            obj.insert(k.clone(), v.clone());
        }
    }
}

fn classify_status(status: u16, body: &str) -> CallError {
    let snippet: String = body.chars().take(300).collect();
    let msg = format!("HTTP {status}: {snippet}");
    match status {
        401 | 403 => CallError::Credential(msg),
        413 => CallError::Oversize(msg),
        408 | 409 | 429 | 500..=599 => CallError::Transient(msg),
        _ => CallError::Fatal(msg),
    }
}

fn usage(v: &Value, input: &str, output: &str) -> TokenUsage {
    TokenUsage {
        input: v[input].as_u64().unwrap_or(0),
        output: v[output].as_u64().unwrap_or(0),
    }
}

/// Extracts text, finish reason and usage from a provider's JSON reply.
pub(crate) fn parse_reply(kind: ProviderKind, body: &str) -> Result<RawCompletion, CallError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| CallError::Fatal(format!("response is not JSON: {e}")))?;
    let missing = || CallError::Fatal(format!("unexpected response shape: {}", body.chars().take(300).collect::<String>()));
    match kind {
        ProviderKind::OpenAi => {
            let choice = v["choices"].get(0).ok_or_else(missing)?;
            Ok(RawCompletion {
                text: choice["message"]["content"].as_str().unwrap_or("").into(),
                finish: match choice["finish_reason"].as_str() {
                    Some("stop") => FinishReason::Stop,
                    Some("length") => FinishReason::LengthLimit,
                    _ => FinishReason::Other,
                },
                usage: usage(&v["usage"], "prompt_tokens", "completion_tokens"),
            })
        }
        ProviderKind::Anthropic => {
            let blocks = v["content"].as_array().ok_or_else(missing)?;
            let text: String = blocks.iter().filter_map(|b| b["text"].as_str()).collect();
            Ok(RawCompletion {
                text,
                finish: match v["stop_reason"].as_str() {
                    Some("end_turn") | Some("stop_sequence") => FinishReason::Stop,
                    Some("max_tokens") => FinishReason::LengthLimit,
                    _ => FinishReason::Other,
                },
                usage: usage(&v["usage"], "input_tokens", "output_tokens"),
            })
        }
        ProviderKind::Gemini => {
            let cand = v["candidates"].get(0).ok_or_else(missing)?;
            let text: String = cand["content"]["parts"]
                .as_array()
                .map(|ps| ps.iter().filter_map(|p| p["text"].as_str()).collect())
                .unwrap_or_default();
            Ok(RawCompletion {
                text,
                finish: match cand["finishReason"].as_str() {
                    Some("STOP") => FinishReason::Stop,
                    Some("MAX_TOKENS") => FinishReason::LengthLimit,
                    _ => FinishReason::Other,
                },
                usage: usage(&v["usageMetadata"], "promptTokenCount", "candidatesTokenCount"),
            })
        }
        ProviderKind::Mock => Err(CallError::Fatal("mock has no wire format".into())),
    }
}

impl Backend for HttpBackend {
    fn call(
        &self,
        request: &PromptRequest,
        _account: Option<&str>,
        api_key: Option<&str>,
    ) -> Result<RawCompletion, CallError> {
        let key = api_key.ok_or_else(|| CallError::Credential("no API key".into()))?;
        match self.transport.post(&self.build(request, key)) {
            HttpReply::Status(200..=299, body) => parse_reply(self.descriptor.kind, &body),
            HttpReply::Status(status, body) => Err(classify_status(status, &body)),
            HttpReply::Failed(msg) => Err(CallError::Transient(msg)),
        }
    }
}
