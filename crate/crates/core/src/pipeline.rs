//! The four-stage page flow: article detection, crop upscaling, column
//! detection, column transcription, then per-article stitching.
//!
//! One worker carries a sample through all stages. Everything a worker
//! writes lives under `<output_root>/<sample_id>/`, so workers never share
//! files. `run.jsonl` holds one [`PipelineRecord`] per sample in manifest
//! order; wall-clock timings go to `timings.jsonl` so that the record file is
//! a pure function of inputs and configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::{
    detect_regions, reading_order, DetectorBackend, DetectorConfig, ReplayDetector, Task,
};
use crate::imageops::crop;
use crate::model::{hex_digest, BoundingBox, Manifest, RasterImage, Sample};
use crate::recognize::{
    stitch_transcripts, PromptProfile, ProviderConfig, Recognizer, ResponseCache,
};
use crate::superres::{upscale, BicubicUpscaler, ReplayUpscaler, UpscalerBackend, UpscalerConfig};
use crate::{Error, Result};

pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageBackend {
    /// Answers from a fixture keyed by input image digest.
    Replay,
    /// ONNX model from `model_path`.
    Neural,
    /// Classical interpolation (upscaler only).
    Bicubic,
}

impl std::fmt::Display for StageBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StageBackend::Replay => "replay",
            StageBackend::Neural => "neural",
            StageBackend::Bicubic => "bicubic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JsonMap")]
pub struct DetectorStage {
    pub backend: StageBackend,
    /// Detection records (jsonl) for the replay backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(flatten)]
    pub detector: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JsonMap")]
pub struct UpscalerStage {
    pub backend: StageBackend,
    /// Directory of `<digest>.png` answers for the replay backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(flatten)]
    pub upscaler: UpscalerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JsonMap")]
pub struct RecognizerStage {
    #[serde(default = "default_profile")]
    pub prompt_profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub provider: ProviderConfig,
}

fn default_profile() -> String {
    "paper".into()
}

type JsonMap = serde_json::Map<String, serde_json::Value>;

// Stage tables mix stage keys with the flattened stage config. serde ignores
// `deny_unknown_fields` under `flatten`, so the tables are split by hand and
// the remainder goes through the strict config deserializer.
fn take<T: serde::de::DeserializeOwned>(map: &mut JsonMap, key: &str) -> std::result::Result<Option<T>, String> {
    map.remove(key)
        .map(|v| serde_json::from_value(v).map_err(|e| format!("{key}: {e}")))
        .transpose()
}

fn rest<T: serde::de::DeserializeOwned>(map: JsonMap) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| e.to_string())
}

impl TryFrom<JsonMap> for DetectorStage {
    type Error = String;

    fn try_from(mut map: JsonMap) -> std::result::Result<Self, String> {
        Ok(Self {
            backend: take(&mut map, "backend")?.ok_or("missing field `backend`")?,
            fixture: take(&mut map, "fixture")?,
            detector: rest(map)?,
        })
    }
}

impl TryFrom<JsonMap> for UpscalerStage {
    type Error = String;

    fn try_from(mut map: JsonMap) -> std::result::Result<Self, String> {
        Ok(Self {
            backend: take(&mut map, "backend")?.ok_or("missing field `backend`")?,
            fixture: take(&mut map, "fixture")?,
            upscaler: rest(map)?,
        })
    }
}

impl TryFrom<JsonMap> for RecognizerStage {
    type Error = String;

    fn try_from(mut map: JsonMap) -> std::result::Result<Self, String> {
        Ok(Self {
            prompt_profile: take(&mut map, "prompt_profile")?.unwrap_or_else(default_profile),
            cache_dir: take(&mut map, "cache_dir")?,
            provider: rest(map)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output_root: PathBuf,
    #[serde(default = "default_keep")]
    pub keep_intermediates: bool,
    /// Pixels added around each article box, at page scale, before cropping.
    #[serde(default = "default_padding")]
    pub crop_padding: f64,
    pub article_detector: DetectorStage,
    pub upscaler: UpscalerStage,
    pub column_detector: DetectorStage,
    pub recognizer: RecognizerStage,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn default_keep() -> bool {
    true
}

fn default_padding() -> f64 {
    4.0
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_root);
        for stage in [&mut self.article_detector, &mut self.column_detector] {
            stage.fixture.as_mut().map(fix);
            stage.detector.model_path.as_mut().map(fix);
        }
        self.upscaler.fixture.as_mut().map(fix);
        self.upscaler.upscaler.model_path.as_mut().map(fix);
        self.recognizer.cache_dir.as_mut().map(fix);
        self.recognizer.provider.replay_fixture.as_mut().map(fix);
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !self.crop_padding.is_finite() || self.crop_padding < 0.0 {
            return Err(Error::Config(format!("crop_padding {} invalid", self.crop_padding)));
        }
        for (name, stage, task) in [
            ("article_detector", &self.article_detector, Task::Article),
            ("column_detector", &self.column_detector, Task::Column),
        ] {
            stage.detector.validate()?;
            if stage.detector.task != task {
                return Err(Error::Config(format!("{name}.task must be \"{task}\"")));
            }
            match stage.backend {
                StageBackend::Replay if stage.fixture.is_none() => {
                    return Err(Error::Config(format!("{name}: replay backend needs fixture")))
                }
                StageBackend::Bicubic => {
                    return Err(Error::Config(format!("{name}: bicubic is not a detector backend")))
                }
                _ => {}
            }
        }
        self.upscaler.upscaler.validate()?;
        if self.upscaler.backend == StageBackend::Replay && self.upscaler.fixture.is_none() {
            return Err(Error::Config("upscaler: replay backend needs fixture".into()));
        }
        if PromptProfile::builtin(&self.recognizer.prompt_profile).is_none() {
            return Err(Error::Config(format!(
                "unknown prompt profile {:?}",
                self.recognizer.prompt_profile
            )));
        }
        self.recognizer.provider.validate()
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn digest(&self) -> String {
        config_digest(self)
    }
}

/// SHA-256 of the JSON form of any configuration value.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex_digest(Sha256::new_with_prefix(json))
}

/// Constructed stage backends, shared by all workers.
pub struct PipelineBackends {
    pub article_detector: Box<dyn DetectorBackend>,
    pub upscaler: Box<dyn UpscalerBackend>,
    pub column_detector: Box<dyn DetectorBackend>,
    pub recognizer: Recognizer,
}

/// Constructs the backend a detector stage names.
pub fn build_detector(stage: &DetectorStage) -> Result<Box<dyn DetectorBackend>> {
    match stage.backend {
        StageBackend::Replay => {
            let fixture = stage.fixture.as_ref().ok_or_else(|| Error::Config("replay backend needs fixture".into()))?;
            Ok(Box::new(ReplayDetector::load(fixture)?))
        }
        #[cfg(feature = "neural")]
        StageBackend::Neural => Ok(Box::new(crate::detect::NeuralDetector::from_config(
            &stage.detector,
        )?)),
        #[cfg(not(feature = "neural"))]
        StageBackend::Neural => Err(Error::Config("built without the `neural` feature".into())),
        StageBackend::Bicubic => Err(Error::Config("bicubic is not a detector backend".into())),
    }
}

/// Constructs the backend an upscaler stage names.
pub fn build_upscaler(stage: &UpscalerStage) -> Result<Box<dyn UpscalerBackend>> {
    match stage.backend {
        StageBackend::Replay => {
            let fixture = stage.fixture.clone().ok_or_else(|| Error::Config("replay backend needs fixture".into()))?;
            Ok(Box::new(ReplayUpscaler::new(fixture)?))
        }
        StageBackend::Bicubic => Ok(Box::new(BicubicUpscaler)),
        #[cfg(feature = "neural")]
        StageBackend::Neural => Ok(Box::new(crate::superres::NeuralUpscaler::from_config(
            &stage.upscaler,
        )?)),
        #[cfg(not(feature = "neural"))]
        StageBackend::Neural => Err(Error::Config("built without the `neural` feature".into())),
    }
}

impl PipelineBackends {
    pub fn from_config(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let rec = &config.recognizer;
        let cache = rec.cache_dir.as_ref().map(ResponseCache::open).transpose()?;
        let profile = PromptProfile::builtin(&rec.prompt_profile).expect("validated");
        Ok(Self {
            article_detector: build_detector(&config.article_detector)?,
            upscaler: build_upscaler(&config.upscaler)?,
            column_detector: build_detector(&config.column_detector)?,
            recognizer: Recognizer::new(rec.provider.clone(), profile, cache)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    ArticleDetection,
    Upscale,
    ColumnDetection,
    Recognition,
    Write,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRecord {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub crop_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_path: Option<String>,
    /// Request digest of the recognition call (the cache key).
    pub request_digest: String,
    pub refusal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub crop_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upscaled_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upscaled_path: Option<String>,
    pub columns: Vec<ColumnRecord>,
    /// Stitched transcript; `None` when a stage failed for this article.
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub article_detection_ms: u64,
    pub upscale_ms: u64,
    pub column_detection_ms: u64,
    pub recognition_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_digest: Option<String>,
    pub no_articles: bool,
    pub articles: Vec<ArticleRecord>,
    pub failures: Vec<StageFailure>,
    /// Wall-clock only; written to `timings.jsonl`, never to `run.jsonl`.
    #[serde(skip)]
    pub timings: StageTimings,
}

impl PipelineRecord {
    pub fn is_failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn recognition_calls(&self) -> usize {
        self.articles.iter().map(|a| a.columns.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub config_digest: String,
    pub split_name: String,
    pub sample_count: usize,
    pub failed_samples: usize,
    pub decisions: BTreeMap<String, String>,
}

pub struct PipelineRun {
    pub records: Vec<PipelineRecord>,
    pub manifest: RunManifest,
}

impl PipelineRun {
    pub fn failed_samples(&self) -> usize {
        self.manifest.failed_samples
    }
}

fn decisions(config: &PipelineConfig) -> BTreeMap<String, String> {
    [
        ("article_backend", config.article_detector.backend.to_string()),
        ("upscaler_backend", config.upscaler.backend.to_string()),
        ("column_backend", config.column_detector.backend.to_string()),
        ("recognizer_model", config.recognizer.provider.model_name.clone()),
        ("prompt_profile", config.recognizer.prompt_profile.clone()),
        ("crop_padding_px", format!("{}", config.crop_padding)),
        ("upscale_factor", config.upscaler.upscaler.scale.to_string()),
        ("column_transcription", "independent, stitched with newlines".into()),
        ("column_order", "x-center descending".into()),
        ("article_order", "row bands top to bottom, right to left".into()),
        ("unreadable_column", crate::recognize::UNREADABLE.into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Runs every sample of `manifest` through the pipeline and writes
/// `run.jsonl`, `timings.jsonl` and `run_manifest.json` under `output_root`.
///
/// Configuration and backend construction errors abort before any sample is
/// processed; per-sample errors are recorded in the sample's record.
pub fn run_pipeline(manifest: &Manifest, config: &PipelineConfig) -> Result<PipelineRun> {
    let backends = PipelineBackends::from_config(config)?;
    run_pipeline_with(manifest, config, &backends)
}

pub fn run_pipeline_with(
    manifest: &Manifest,
    config: &PipelineConfig,
    backends: &PipelineBackends,
) -> Result<PipelineRun> {
    config.validate()?;
    let root = &config.output_root;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let probe = root.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    let _ = fs::remove_file(&probe);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let records: Vec<PipelineRecord> = pool.install(|| {
        manifest
            .samples
            .par_iter()
            .map(|s| process_sample(manifest, s, config, backends))
            .collect()
    });

    let mut run_lines = String::new();
    let mut timing_lines = String::new();
    for r in &records {
        run_lines.push_str(&serde_json::to_string(r)?);
        run_lines.push('\n');
        timing_lines.push_str(&serde_json::to_string(&serde_json::json!({
            "sample_id": r.sample_id,
            "timings": r.timings,
        }))?);
        timing_lines.push('\n');
    }
    let failed = records.iter().filter(|r| r.is_failed()).count();
    let run_manifest = RunManifest {
        schema_version: RUN_SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config.digest(),
        split_name: manifest.split_name.clone(),
        sample_count: records.len(),
        failed_samples: failed,
        decisions: decisions(config),
    };
    write_file(&root.join("run.jsonl"), run_lines.as_bytes())?;
    write_file(&root.join("timings.jsonl"), timing_lines.as_bytes())?;
    let mut m = serde_json::to_string_pretty(&run_manifest)?;
    m.push('\n');
    write_file(&root.join("run_manifest.json"), m.as_bytes())?;
    Ok(PipelineRun {
        records,
        manifest: run_manifest,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

struct SampleDir<'a> {
    root: &'a Path,
    id: &'a str,
    keep: bool,
}

impl SampleDir<'_> {
    fn rel(&self, sub: &str, name: &str) -> String {
        format!("{}/{sub}/{name}", self.id)
    }

    /// Saves an intermediate if kept and returns its path relative to the root.
    fn save(&self, sub: &str, name: &str, image: &RasterImage) -> Result<Option<String>> {
        if !self.keep {
            return Ok(None);
        }
        let rel = self.rel(sub, name);
        let path = self.root.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        image.save_png(&path)?;
        Ok(Some(rel))
    }
}

fn process_sample(
    manifest: &Manifest,
    sample: &Sample,
    config: &PipelineConfig,
    backends: &PipelineBackends,
) -> PipelineRecord {
    let mut record = PipelineRecord {
        sample_id: sample.id.clone(),
        page_digest: None,
        no_articles: false,
        articles: Vec::new(),
        failures: Vec::new(),
        timings: StageTimings::default(),
    };
    let fail = |record: &mut PipelineRecord, stage, article, e: Error| {
        log::warn!("sample {}: {stage:?} failed: {e}", record.sample_id);
        record.failures.push(StageFailure {
            stage,
            article,
            message: e.to_string(),
        });
    };

    let page = match RasterImage::load(manifest.resolve(&sample.image_path)) {
        Ok(p) => p,
        Err(e) => {
            fail(&mut record, Stage::Load, None, e);
            return record;
        }
    };
    record.page_digest = Some(page.content_digest());

    let t = Instant::now();
    let articles = detect_regions(
        &page,
        backends.article_detector.as_ref(),
        &config.article_detector.detector,
    );
    record.timings.article_detection_ms = elapsed_ms(t);
    let articles = match articles {
        Ok(a) => reading_order(&a, Task::Article),
        Err(e) => {
            fail(&mut record, Stage::ArticleDetection, None, e);
            return record;
        }
    };
    record.no_articles = articles.is_empty();

    let dir = SampleDir {
        root: &config.output_root,
        id: &sample.id,
        keep: config.keep_intermediates,
    };
    for (n, det) in articles.iter().enumerate() {
        let mut article = ArticleRecord {
            bbox: det.bbox,
            confidence: det.confidence,
            crop_digest: String::new(),
            crop_path: None,
            upscaled_digest: None,
            upscaled_path: None,
            columns: Vec::new(),
            text: None,
            text_path: None,
            error: None,
        };
        if let Err((stage, e)) = process_article(n, &page, &dir, config, backends, &mut article, &mut record.timings) {
            article.error = Some(e.to_string());
            fail(&mut record, stage, Some(n), e);
        }
        record.articles.push(article);
    }
    log::info!(
        target: "sample",
        sample_id = record.sample_id.as_str(),
        articles = record.articles.len(),
        columns = record.recognition_calls(),
        failed = record.is_failed();
        "sample done"
    );
    record
}

fn process_article(
    n: usize,
    page: &RasterImage,
    dir: &SampleDir<'_>,
    config: &PipelineConfig,
    backends: &PipelineBackends,
    article: &mut ArticleRecord,
    timings: &mut StageTimings,
) -> std::result::Result<(), (Stage, Error)> {
    let at = |stage: Stage| move |e: Error| (stage, e);
    let crop_img = crop(page, &article.bbox, config.crop_padding).map_err(at(Stage::Upscale))?;
    article.crop_digest = crop_img.content_digest();
    article.crop_path = dir.save("articles", &format!("{n}.png"), &crop_img).map_err(at(Stage::Write))?;

    let t = Instant::now();
    let up = upscale(&crop_img, backends.upscaler.as_ref(), &config.upscaler.upscaler);
    timings.upscale_ms += elapsed_ms(t);
    let up = up.map_err(at(Stage::Upscale))?;
    article.upscaled_digest = Some(up.content_digest());
    article.upscaled_path = dir.save("upscaled", &format!("{n}.png"), &up).map_err(at(Stage::Write))?;

    let t = Instant::now();
    let cols = detect_regions(&up, backends.column_detector.as_ref(), &config.column_detector.detector);
    timings.column_detection_ms += elapsed_ms(t);
    let cols = reading_order(&cols.map_err(at(Stage::ColumnDetection))?, Task::Column);

    let mut outcomes = Vec::with_capacity(cols.len());
    for (m, col) in cols.iter().enumerate() {
        let img = crop(&up, &col.bbox, 0.0).map_err(at(Stage::ColumnDetection))?;
        let crop_path = dir.save("columns", &format!("{n}_{m}.png"), &img).map_err(at(Stage::Write))?;
        let t = Instant::now();
        let outcome = backends.recognizer.transcribe(dir.id, &img);
        timings.recognition_ms += elapsed_ms(t);
        let outcome = outcome.map_err(at(Stage::Recognition))?;
        article.columns.push(ColumnRecord {
            bbox: col.bbox,
            confidence: col.confidence,
            crop_digest: img.content_digest(),
            crop_path,
            request_digest: outcome.raw_digest.clone(),
            refusal: outcome.refusal,
            transport_error: outcome.transport_error.clone(),
        });
        outcomes.push(outcome);
    }

    let text = stitch_transcripts(&outcomes);
    let rel = dir.rel("text", &format!("{n}.txt"));
    write_file(&dir.root.join(&rel), text.as_bytes()).map_err(at(Stage::Write))?;
    article.text_path = Some(rel);
    article.text = Some(text);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
workers = 2
output_root = "out"

[article_detector]
backend = "replay"
fixture = "articles.jsonl"
task = "article"

[upscaler]
backend = "bicubic"
scale = 4

[column_detector]
backend = "replay"
fixture = "columns.jsonl"
task = "column"
confidence_threshold = 0.3

[recognizer]
provider_kind = "replay"
model_name = "fixture"
replay_fixture = "text.jsonl"
"#;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.workers, 2);
        assert!(cfg.keep_intermediates);
        assert_eq!(cfg.crop_padding, 4.0);
        assert_eq!(cfg.upscaler.upscaler.tile_size, 256);
        assert_eq!(cfg.column_detector.detector.confidence_threshold, 0.3);
        assert_eq!(cfg.article_detector.detector.input_size, 640);
        assert_eq!(cfg.recognizer.prompt_profile, "paper");
        assert_eq!(cfg.recognizer.provider.temperature, 0.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        let again = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest(), again.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("scale = 4", "scale = 4\nsharpen = true");
        assert!(PipelineConfig::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("workers = 2", "workers = 2\nthreads = 3");
        assert!(PipelineConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.output_root, Path::new("/data/run/out"));
        assert_eq!(cfg.article_detector.fixture.unwrap(), Path::new("/data/run/articles.jsonl"));
        assert_eq!(
            cfg.recognizer.provider.replay_fixture.unwrap(),
            Path::new("/data/run/text.jsonl")
        );
    }

    #[test]
    fn validation() {
        let base = PipelineConfig::from_toml(MINIMAL).unwrap();
        let mut c = base.clone();
        c.workers = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.column_detector.detector.task = Task::Article;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.article_detector.backend = StageBackend::Bicubic;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.upscaler.backend = StageBackend::Replay;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.recognizer.prompt_profile = "terse".into();
        assert!(c.validate().is_err());
        let mut c = base;
        c.crop_padding = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_changes_with_config() {
        let a = PipelineConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.crop_padding = 5.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
