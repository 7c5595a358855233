//! Stage 4: transcription of image segments by vision-capable LLMs.
//!
//! A [`Recognizer`] binds one provider configuration and one prompt profile.
//! Every request is keyed by a digest over model, prompts, PNG bytes and
//! temperature; the digest addresses the on-disk [`ResponseCache`], so a warm
//! cache replays a whole benchmark without touching the network. Refusals are
//! data: they are classified, cached and never retried.

mod cache;
mod dialect;
pub mod limiter;
mod refusal;
pub mod transport;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{hex_digest, RasterImage};
use crate::{Error, Result};

pub use cache::{CacheRecord, ResponseCache};
pub use limiter::{Clock, RateLimiter, Semaphore, SystemClock, VirtualClock};
pub use refusal::{classify_refusal, RefusalClassifier, OBSERVED_REFUSALS};
pub use transport::{HttpRequest, HttpResponse, ReqwestTransport, Transport};

/// Literal written in place of a segment that yielded no transcript.
pub const UNREADABLE: &str = "[UNREADABLE]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptProfile {
    pub name: String,
    pub system_prompt: String,
    pub user_prompt: String,
}

impl PromptProfile {
    pub const PAPER_SYSTEM: &'static str = "You are an OCR system. Your job is to transcribe image text exactly as shown, without interpretation, paraphrasing, translation, summarization, or hallucination.";
    pub const PAPER_USER: &'static str = "Extract the exact text from this image. Preserve sentence structure NOT spacing. If anything is unreadable, write '[UNREADABLE]'.";

    /// The built-in `paper` profile.
    pub fn paper() -> Self {
        Self {
            name: "paper".into(),
            system_prompt: Self::PAPER_SYSTEM.into(),
            user_prompt: Self::PAPER_USER.into(),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        (name == "paper").then(Self::paper)
    }
}

impl Default for PromptProfile {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Chat-completions wire format: OpenAI, aggregators, local gateways.
    OpenaiCompat,
    Anthropic,
    Google,
    /// Fixture lookup by image digest; never touches the network.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    /// Backoff is scaled by a uniform factor in `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_backoff_ms: 1000,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.base_backoff_ms as f64 * 2f64.powi(attempt.saturating_sub(1) as i32);
        let factor = if self.jitter > 0.0 {
            1.0 + self.jitter * rand::rng().random_range(-1.0..=1.0)
        } else {
            1.0
        };
        Duration::from_secs_f64((base * factor).max(0.0) / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub provider_kind: ProviderKind,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Replay fixture (`{"image_digest", "text"}` lines) for [`ProviderKind::Replay`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_fixture: Option<PathBuf>,
}

fn default_max_tokens() -> u32 {
    4096
}

fn default_rpm() -> u32 {
    60
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    120
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, model_name: impl Into<String>) -> Self {
        Self {
            provider_kind: kind,
            model_name: model_name.into(),
            endpoint: None,
            api_key_env: None,
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
            requests_per_minute: default_rpm(),
            max_concurrency: default_concurrency(),
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout(),
            replay_fixture: None,
        }
    }

    pub fn endpoint(&self) -> String {
        if let Some(e) = &self.endpoint {
            return e.clone();
        }
        match self.provider_kind {
            ProviderKind::OpenaiCompat | ProviderKind::Replay => {
                "https://api.openai.com/v1/chat/completions".into()
            }
            ProviderKind::Anthropic => "https://api.anthropic.com/v1/messages".into(),
            ProviderKind::Google => "https://generativelanguage.googleapis.com/v1beta".into(),
        }
    }

    pub fn api_key_var(&self) -> String {
        if let Some(v) = &self.api_key_env {
            return v.clone();
        }
        match self.provider_kind {
            ProviderKind::OpenaiCompat | ProviderKind::Replay => "OPENAI_API_KEY",
            ProviderKind::Anthropic => "ANTHROPIC_API_KEY",
            ProviderKind::Google => "GOOGLE_API_KEY",
        }
        .into()
    }

    pub fn validate(&self) -> Result<()> {
        if self.retry.max_attempts == 0 {
            return Err(Error::Config("retry.max_attempts must be at least 1".into()));
        }
        if self.model_name.is_empty() {
            return Err(Error::Config("model_name must not be empty".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!("temperature {} invalid", self.temperature)));
        }
        if self.provider_kind == ProviderKind::Replay && self.replay_fixture.is_none() {
            return Err(Error::Config("replay provider needs replay_fixture".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionOutcome {
    pub sample_id: String,
    pub model_name: String,
    pub text: String,
    pub refusal: bool,
    pub raw_digest: String,
    pub latency_ms: u64,
    pub from_cache: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

/// Cache key over everything that determines a provider's answer.
pub fn request_digest(
    model_name: &str,
    profile: &PromptProfile,
    image_bytes: &[u8],
    temperature: f64,
) -> String {
    let mut h = Sha256::new();
    for field in [
        model_name.as_bytes(),
        profile.system_prompt.as_bytes(),
        profile.user_prompt.as_bytes(),
        image_bytes,
    ] {
        h.update((field.len() as u64).to_le_bytes());
        h.update(field);
    }
    h.update(temperature.to_bits().to_le_bytes());
    hex_digest(h)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextFixture {
    pub image_digest: String,
    pub text: String,
}

pub fn read_text_fixture(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: TextFixture =
            serde_json::from_str(line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        map.insert(f.image_digest, f.text);
    }
    Ok(map)
}

enum Backend {
    Live {
        transport: Arc<dyn Transport>,
        limiter: RateLimiter,
        gate: Semaphore,
        clock: Arc<dyn Clock>,
    },
    Replay(HashMap<String, String>),
}

/// Shared by all workers; rate and concurrency caps apply across them.
pub struct Recognizer {
    provider: ProviderConfig,
    profile: PromptProfile,
    cache: Option<ResponseCache>,
    classifier: RefusalClassifier,
    backend: Backend,
}

impl Recognizer {
    /// Live providers get an HTTPS transport and the system clock.
    pub fn new(
        provider: ProviderConfig,
        profile: PromptProfile,
        cache: Option<ResponseCache>,
    ) -> Result<Self> {
        provider.validate()?;
        if provider.provider_kind == ProviderKind::Replay {
            let fixture = read_text_fixture(provider.replay_fixture.as_ref().expect("validated"))?;
            return Ok(Self {
                provider,
                profile,
                cache,
                classifier: RefusalClassifier::default(),
                backend: Backend::Replay(fixture),
            });
        }
        let transport = Arc::new(ReqwestTransport::new(Duration::from_secs(provider.timeout_secs))?);
        Self::with_transport(provider, profile, cache, transport, Arc::new(SystemClock::default()))
    }

    pub fn with_transport(
        provider: ProviderConfig,
        profile: PromptProfile,
        cache: Option<ResponseCache>,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        provider.validate()?;
        Ok(Self {
            backend: Backend::Live {
                transport,
                limiter: RateLimiter::per_minute(provider.requests_per_minute, clock.clone()),
                gate: Semaphore::new(provider.max_concurrency),
                clock,
            },
            provider,
            profile,
            cache,
            classifier: RefusalClassifier::default(),
        })
    }

    pub fn with_classifier(mut self, classifier: RefusalClassifier) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn provider(&self) -> &ProviderConfig {
        &self.provider
    }

    pub fn profile(&self) -> &PromptProfile {
        &self.profile
    }

    /// Transcribes one segment. Transport failures end up in
    /// `transport_error`; configuration problems and replay misses are `Err`.
    pub fn transcribe(&self, sample_id: &str, image: &RasterImage) -> Result<RecognitionOutcome> {
        let png = image.to_png_bytes()?;
        let digest = request_digest(
            &self.provider.model_name,
            &self.profile,
            &png,
            self.provider.temperature,
        );
        if let Some(cache) = &self.cache {
            if let Some(rec) = cache.get(&digest)? {
                return Ok(RecognitionOutcome {
                    sample_id: sample_id.to_string(),
                    from_cache: true,
                    ..rec.outcome
                });
            }
        }

        let started = Instant::now();
        let (text, raw, transport_error) = match &self.backend {
            Backend::Replay(fixture) => {
                let key = image.content_digest();
                let text = fixture
                    .get(&key)
                    .cloned()
                    .ok_or(Error::FixtureMiss { digest: key })?;
                (text, None, None)
            }
            Backend::Live {
                transport,
                limiter,
                gate,
                clock,
            } => self.call_live(&png, transport.as_ref(), limiter, gate, clock.as_ref())?,
        };
        let latency_ms = match self.backend {
            Backend::Replay(_) => 0,
            Backend::Live { .. } => started.elapsed().as_millis() as u64,
        };

        let refusal = transport_error.is_none() && self.classifier.is_refusal(&text);
        let outcome = RecognitionOutcome {
            sample_id: sample_id.to_string(),
            model_name: self.provider.model_name.clone(),
            text,
            refusal,
            raw_digest: digest.clone(),
            latency_ms,
            from_cache: false,
            transport_error,
        };
        if let (Some(cache), None) = (&self.cache, &outcome.transport_error) {
            cache.put(
                &digest,
                &CacheRecord {
                    outcome: outcome.clone(),
                    raw_response: raw,
                },
            )?;
        }
        Ok(outcome)
    }

    /// Returns (text, raw body, transport error).
    fn call_live(
        &self,
        png: &[u8],
        transport: &dyn Transport,
        limiter: &RateLimiter,
        gate: &Semaphore,
        clock: &dyn Clock,
    ) -> Result<(String, Option<String>, Option<String>)> {
        let var = self.provider.api_key_var();
        let key = std::env::var(&var).map_err(|_| Error::MissingApiKey(var))?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
        let request = dialect::build_request(&self.provider, &self.profile, &b64, &key);
        let _permit = gate.acquire();

        let retry = &self.provider.retry;
        let mut last_error = String::new();
        for attempt in 1..=retry.max_attempts {
            limiter.acquire();
            match transport.post(&request) {
                Ok(resp) if resp.is_success() => {
                    return Ok(match dialect::parse_response(self.provider.provider_kind, &resp.body) {
                        Ok(text) => (text, Some(resp.body), None),
                        Err(e) => (String::new(), Some(resp.body), Some(e)),
                    });
                }
                Ok(resp) => {
                    let snippet: String = resp.body.chars().take(300).collect();
                    last_error = format!("HTTP {}: {snippet}", resp.status);
                    if !resp.is_retryable() {
                        break;
                    }
                }
                Err(e) => last_error = e,
            }
            if attempt < retry.max_attempts {
                log::debug!("attempt {attempt} failed ({last_error}); backing off");
                clock.sleep(retry.backoff(attempt));
            }
        }
        Ok((String::new(), None, Some(last_error)))
    }
}

/// Joins per-segment transcripts in reading order, one per line. Segments
/// without a transcript (refusals, transport failures) become `[UNREADABLE]`.
pub fn stitch_transcripts(parts: &[RecognitionOutcome]) -> String {
    parts
        .iter()
        .map(|p| {
            if p.refusal || p.transport_error.is_some() {
                UNREADABLE
            } else {
                p.text.as_str()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}
