#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use newsocr_core::pipeline::{PipelineBackends, PipelineConfig};
use newsocr_core::recognize::{
    HttpRequest, HttpResponse, PromptProfile, ProviderConfig, ProviderKind, Recognizer,
    ResponseCache, Transport, VirtualClock,
};
use newsocr_core::{load_manifest, Manifest};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay3")
}

pub fn fixture_manifest() -> Manifest {
    load_manifest(fixture_dir().join("manifest.jsonl")).unwrap()
}

/// The bundled replay config writing to `out`.
pub fn fixture_config(out: &Path, workers: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(fixture_dir().join("pipeline.toml")).unwrap();
    cfg.output_root = out.to_path_buf();
    cfg.workers = workers;
    cfg
}

/// Answers every request with the same chat-completions body.
pub struct CountingTransport {
    pub calls: AtomicUsize,
    pub text: String,
}

impl CountingTransport {
    pub fn new(text: &str) -> Arc<Self> {
        Arc::new(Self { calls: AtomicUsize::new(0), text: text.into() })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for CountingTransport {
    fn post(&self, _request: &HttpRequest) -> Result<HttpResponse, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(HttpResponse {
            status: 200,
            body: serde_json::json!({"choices": [{"message": {"content": self.text}}]}).to_string(),
        })
    }
}

pub fn live_recognizer(transport: Arc<CountingTransport>, cache: Option<ResponseCache>) -> Recognizer {
    let mut provider = ProviderConfig::new(ProviderKind::OpenaiCompat, "mock-vision");
    provider.api_key_env = Some("NEWSOCR_MOCK_KEY".into());
    std::env::set_var("NEWSOCR_MOCK_KEY", "unused");
    Recognizer::with_transport(provider, PromptProfile::paper(), cache, transport, Arc::new(VirtualClock::default()))
        .unwrap()
}

/// Fixture backends with the recognizer swapped for a mock live provider.
pub fn backends_with(config: &PipelineConfig, recognizer: Recognizer) -> PipelineBackends {
    let mut b = PipelineBackends::from_config(config).unwrap();
    b.recognizer = recognizer;
    b
}
