use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use newsocr_core::bench::{
    eval_detection, eval_ocr, read_outcomes, Averaging, OcrBenchOptions, RefusalScoring, ResolutionTier,
};
use newsocr_core::detect::{detect_regions, read_detection_records, DetectionRecord, Task};
use newsocr_core::imageops::{crop, degrade, DegradeSpec};
use newsocr_core::metrics::{NormalizationPolicy, PsnrMode};
use newsocr_core::pipeline::{
    build_detector, build_upscaler, config_digest, run_pipeline, DetectorStage, RecognizerStage, UpscalerStage,
};
use newsocr_core::recognize::{PromptProfile, Recognizer, ResponseCache};
use newsocr_core::report::{emit_report, pair_tiers, parse_machine, write_report, ReportFormat, ReportSet};
use newsocr_core::superres::{score_sr_pairs, upscale};
use newsocr_core::{load_manifest, BoundingBox, Manifest, RasterImage, Sample};

use crate::config::Layered;
use crate::{
    Command, DetectorFlags, FormatArg, Global, OcrFlags, RecognizerFlags, ReportOut, TaskArg, TierArg, UpscalerFlags,
};

/// The `[eval]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalConfig {
    failure_threshold: f64,
    averaging: Averaging,
    refusals: RefusalScoring,
    psnr_mode: PsnrMode,
    normalization: NormalizationPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let o = OcrBenchOptions::default();
        Self {
            failure_threshold: o.failure_threshold,
            averaging: o.averaging,
            refusals: o.refusals,
            psnr_mode: PsnrMode::default(),
            normalization: o.policy,
        }
    }
}

impl EvalConfig {
    fn ocr_options(&self) -> OcrBenchOptions {
        OcrBenchOptions {
            policy: self.normalization,
            failure_threshold: self.failure_threshold,
            averaging: self.averaging,
            refusals: self.refusals,
        }
    }
}

fn name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Article => Task::Article,
        TaskArg::Column => Task::Column,
    }
}

fn announce<T: Serialize>(command: &str, config: &T) {
    let digest = config_digest(config);
    log::info!(target: "config", command = command, digest = digest.as_str(); "effective config");
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// Machine output goes to stdout with `--stdout`, else to `path`.
fn emit(global: &Global, path: Option<&Path>, body: &str) -> Result<()> {
    if global.stdout {
        print!("{body}");
        Ok(())
    } else {
        write_file(path.context("no output path given")?, body)
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn emit_set(global: &Global, out: &ReportOut, set: &ReportSet) -> Result<()> {
    if global.stdout {
        let format = match out.format {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Machine => ReportFormat::Machine,
        };
        print!("{}", emit_report(set, format)?);
        return Ok(());
    }
    let dir = out.out.as_ref().context("--out is required without --stdout")?;
    for format in [ReportFormat::Markdown, ReportFormat::Machine] {
        let path = write_report(set, format, dir)?;
        log::info!(target: "run", path = path.display().to_string().as_str(); "report written");
    }
    Ok(())
}

/// Runs `f` over every sample on the pool, keeping manifest order; errors
/// are logged per sample and returned as `None`.
fn per_sample<T: Send>(
    pool: &rayon::ThreadPool,
    manifest: &Manifest,
    f: impl Fn(&Sample) -> Result<T> + Sync,
) -> Vec<Option<T>> {
    pool.install(|| {
        manifest
            .samples
            .par_iter()
            .map(|s| match f(s) {
                Ok(v) => {
                    log::info!(target: "sample", sample_id = s.id.as_str(), failed = false; "sample done");
                    Some(v)
                }
                Err(e) => {
                    log::warn!(target: "sample", sample_id = s.id.as_str(), failed = true; "{e:#}");
                    None
                }
            })
            .collect()
    })
}

fn load_image(manifest: &Manifest, sample: &Sample) -> Result<RasterImage> {
    Ok(RasterImage::load(manifest.resolve(&sample.image_path))?)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}

pub fn run(command: Command, global: &Global) -> Result<usize> {
    let mut cfg = Layered::load(global.config.as_deref())?;
    cfg.apply_sets(&global.sets)?;
    cfg.set_opt("workers", global.workers.map(|w| w as i64));
    let workers = cfg.workers()?;

    match command {
        Command::Degrade {
            manifest,
            out,
            scale,
            quality_reduction,
            base_quality,
        } => {
            cfg.set_opt("degrade.scale_factor", scale.map(i64::from));
            cfg.set_opt("degrade.quality_reduction", quality_reduction.map(i64::from));
            cfg.set_opt("degrade.base_quality", base_quality.map(i64::from));
            let spec: DegradeSpec = cfg.section("degrade")?;
            spec.effective_quality()?;
            announce("degrade", &spec);
            let manifest = load_manifest(&manifest)?;
            degrade_cmd(global, &manifest, &spec, &out, &pool(workers)?)
        }
        Command::Segment {
            manifest,
            task,
            out,
            detector,
        } => {
            let section = match task {
                TaskArg::Article => "article_detector",
                TaskArg::Column => "column_detector",
            };
            detector_flags(&mut cfg, section, &detector);
            cfg.set_default(&format!("{section}.task"), name(task));
            let stage: DetectorStage = cfg.section(section)?;
            stage.detector.validate()?;
            if stage.detector.task != task_of(task) {
                bail!("[{section}] task must be \"{}\"", name(task));
            }
            announce("segment", &stage);
            let backend = build_detector(&stage)?;
            let manifest = load_manifest(&manifest)?;
            let results = per_sample(&pool(workers)?, &manifest, |s| {
                let image = load_image(&manifest, s)?;
                Ok(DetectionRecord {
                    sample_id: Some(s.id.clone()),
                    image_digest: image.content_digest(),
                    task: stage.detector.task,
                    detections: detect_regions(&image, backend.as_ref(), &stage.detector)?,
                })
            });
            let failed = results.iter().filter(|r| r.is_none()).count();
            let records: Vec<DetectionRecord> = results.into_iter().flatten().collect();
            emit(global, out.as_deref(), &jsonl(&records)?)?;
            Ok(failed)
        }
        Command::Enhance { manifest, out, upscaler } => {
            upscaler_flags(&mut cfg, &upscaler);
            let stage: UpscalerStage = cfg.section("upscaler")?;
            stage.upscaler.validate()?;
            announce("enhance", &stage);
            let backend = build_upscaler(&stage)?;
            let manifest = load_manifest(&manifest)?;
            let results = per_sample(&pool(workers)?, &manifest, |s| {
                let image = load_image(&manifest, s)?;
                let output = upscale(&image, backend.as_ref(), &stage.upscaler)?;
                let rel = format!("{}.png", s.id);
                write_file(&out.join(&rel), output.to_png_bytes()?)?;
                let mut row = Sample::new(&s.id, rel);
                row.reference_text = s.reference_text.clone();
                row.pair_path = s.pair_path.as_ref().map(|p| absolute(&manifest.resolve(p))).transpose()?;
                Ok(row)
            });
            let failed = results.iter().filter(|r| r.is_none()).count();
            let rows = Manifest::new(format!("{}-enhanced", manifest.split_name), results.into_iter().flatten().collect())?;
            emit(global, Some(&out.join("enhanced.jsonl")), &rows.to_jsonl()?)?;
            Ok(failed)
        }
        Command::Recognize {
            manifest,
            out,
            recognizer,
        } => {
            recognizer_flags(&mut cfg, &recognizer);
            let stage: RecognizerStage = cfg.section("recognizer")?;
            let profile = PromptProfile::builtin(&stage.prompt_profile)
                .with_context(|| format!("unknown prompt profile {:?}", stage.prompt_profile))?;
            announce("recognize", &stage);
            let cache = stage.cache_dir.as_ref().map(ResponseCache::open).transpose()?;
            let recognizer = Recognizer::new(stage.provider.clone(), profile, cache)?;
            let manifest = load_manifest(&manifest)?;
            let results = per_sample(&pool(workers)?, &manifest, |s| {
                Ok(recognizer.transcribe(&s.id, &load_image(&manifest, s)?)?)
            });
            let mut failed = 0;
            let mut outcomes = Vec::new();
            for r in results {
                match r {
                    Some(o) => {
                        if let Some(e) = &o.transport_error {
                            log::warn!(target: "sample", sample_id = o.sample_id.as_str(), failed = true; "{e}");
                            failed += 1;
                        }
                        outcomes.push(o);
                    }
                    None => failed += 1,
                }
            }
            emit(global, out.as_deref(), &jsonl(&outcomes)?)?;
            Ok(failed)
        }
        Command::Pipeline {
            manifest,
            output_root,
            keep_intermediates,
            crop_padding,
        } => {
            cfg.set_path("output_root", output_root.as_ref());
            cfg.set_opt("keep_intermediates", keep_intermediates);
            cfg.set_opt("crop_padding", crop_padding);
            let config = cfg.pipeline()?;
            announce("pipeline", &config);
            let manifest = load_manifest(&manifest)?;
            let run = run_pipeline(&manifest, &config)?;
            log::info!(
                target: "run",
                samples = run.records.len(),
                failed_samples = run.failed_samples(),
                output_root = config.output_root.display().to_string().as_str();
                "pipeline finished"
            );
            if global.stdout {
                print!("{}", jsonl(&run.records)?);
            }
            Ok(run.failed_samples())
        }
        Command::EvalDet {
            pred,
            reference,
            task,
            report,
        } => {
            let eval: EvalConfig = cfg.section("eval")?;
            announce("eval-det", &eval);
            let predictions = read_detection_records(&pred)?;
            let manifest = load_manifest(&reference)?;
            let tasks: Vec<Task> = match task {
                Some(t) => vec![task_of(t)],
                None => [Task::Article, Task::Column]
                    .into_iter()
                    .filter(|t| predictions.iter().any(|p| p.task == *t))
                    .collect(),
            };
            if tasks.is_empty() {
                bail!("{} holds no predictions", pred.display());
            }
            let detection = pool(workers)?.install(|| {
                tasks
                    .into_iter()
                    .map(|t| eval_detection(&predictions, &manifest, t))
                    .collect::<newsocr_core::Result<Vec<_>>>()
            })?;
            emit_set(global, &report, &ReportSet { detection, ..Default::default() })?;
            Ok(0)
        }
        Command::EvalOcr {
            hyp,
            reference,
            tier,
            model,
            ocr,
            report,
        } => {
            ocr_flags(&mut cfg, &ocr);
            let eval: EvalConfig = cfg.section("eval")?;
            announce("eval-ocr", &eval);
            let tier = match tier {
                TierArg::Low => ResolutionTier::Low,
                TierArg::High => ResolutionTier::High,
            };
            let manifest = load_manifest(&reference)?;
            let outcomes = read_outcomes(&hyp, model.as_deref())?;
            let mut by_model: BTreeMap<String, Vec<_>> = BTreeMap::new();
            for o in outcomes {
                by_model.entry(o.model_name.clone()).or_default().push(o);
            }
            if by_model.is_empty() {
                bail!("{} holds no transcripts", hyp.display());
            }
            let options = eval.ocr_options();
            let results = pool(workers)?.install(|| {
                by_model
                    .values()
                    .map(|group| eval_ocr(&manifest, group, tier, &options))
                    .collect::<newsocr_core::Result<Vec<_>>>()
            })?;
            for r in &results {
                for d in &r.diagnostics {
                    log::warn!(target: "run", model = r.model_name.as_str(); "{d}");
                }
            }
            emit_set(global, &report, &ReportSet { ocr: results, ..Default::default() })?;
            Ok(0)
        }
        Command::EvalPsnr { manifest, mode, report } => {
            cfg.set_opt("eval.psnr_mode", mode.map(name));
            let eval: EvalConfig = cfg.section("eval")?;
            announce("eval-psnr", &eval);
            let manifest = load_manifest(&manifest)?;
            let psnr = pool(workers)?.install(|| score_sr_pairs(&manifest, eval.psnr_mode))?;
            let failed = psnr.failed_pairs;
            emit_set(global, &report, &ReportSet { psnr: Some(psnr), ..Default::default() })?;
            Ok(failed)
        }
        Command::Report { inputs, report } => {
            let mut set = ReportSet::default();
            for path in &inputs {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let part = parse_machine(&text).with_context(|| format!("{}", path.display()))?;
                set.detection.extend(part.detection);
                set.ocr.extend(part.ocr);
                set.comparisons.extend(part.comparisons);
                if part.psnr.is_some() {
                    if set.psnr.is_some() {
                        bail!("more than one PSNR report among the inputs");
                    }
                    set.psnr = part.psnr;
                }
            }
            if set.comparisons.is_empty() {
                set.comparisons = pair_tiers(&set.ocr)?;
            }
            emit_set(global, &report, &set)?;
            Ok(0)
        }
    }
}

fn degrade_cmd(
    global: &Global,
    manifest: &Manifest,
    spec: &DegradeSpec,
    out: &Path,
    pool: &rayon::ThreadPool,
) -> Result<usize> {
    let s = spec.scale_factor;
    let results = per_sample(pool, manifest, |sample| {
        let image = load_image(manifest, sample)?;
        let low = degrade(&image, spec)?;
        // the reference keeps only the pixels the decimation covered
        let (w, h) = (low.image.width() * s, low.image.height() * s);
        let high = crop(&image, &BoundingBox::new(0.0, 0.0, w as f64, h as f64)?, 0.0)?;
        let (low_rel, high_rel) = (format!("low/{}.jpg", sample.id), format!("high/{}.png", sample.id));
        write_file(&out.join(&low_rel), &low.jpeg)?;
        write_file(&out.join(&high_rel), high.to_png_bytes()?)?;
        let mut row = Sample::new(&sample.id, low_rel);
        row.reference_text = sample.reference_text.clone();
        row.pair_path = Some(high_rel.into());
        Ok(row)
    });
    let failed = results.iter().filter(|r| r.is_none()).count();
    let pairs = Manifest::new(format!("{}-pairs", manifest.split_name), results.into_iter().flatten().collect())?;
    emit(global, Some(&out.join("pairs.jsonl")), &pairs.to_jsonl()?)?;
    Ok(failed)
}

fn detector_flags(cfg: &mut Layered, section: &str, f: &DetectorFlags) {
    let key = |k: &str| format!("{section}.{k}");
    cfg.set_opt(&key("backend"), f.backend.map(name));
    cfg.set_path(&key("fixture"), f.fixture.as_ref());
    cfg.set_path(&key("model_path"), f.model.as_ref());
    cfg.set_opt(&key("input_size"), f.input_size.map(i64::from));
    cfg.set_opt(&key("confidence_threshold"), f.confidence);
    cfg.set_opt(&key("nms_iou_threshold"), f.nms_iou);
}

fn upscaler_flags(cfg: &mut Layered, f: &UpscalerFlags) {
    cfg.set_opt("upscaler.backend", f.backend.map(name));
    cfg.set_path("upscaler.fixture", f.fixture.as_ref());
    cfg.set_path("upscaler.model_path", f.model.as_ref());
    cfg.set_opt("upscaler.scale", f.scale.map(i64::from));
    cfg.set_opt("upscaler.tile_size", f.tile_size.map(i64::from));
    cfg.set_opt("upscaler.tile_overlap", f.tile_overlap.map(i64::from));
}

fn recognizer_flags(cfg: &mut Layered, f: &RecognizerFlags) {
    cfg.set_opt("recognizer.provider_kind", f.provider.map(name));
    cfg.set_opt("recognizer.model_name", f.model_name.clone());
    cfg.set_opt("recognizer.endpoint", f.endpoint.clone());
    cfg.set_opt("recognizer.api_key_env", f.api_key_env.clone());
    cfg.set_opt("recognizer.temperature", f.temperature);
    cfg.set_opt("recognizer.max_output_tokens", f.max_output_tokens.map(i64::from));
    cfg.set_opt("recognizer.requests_per_minute", f.requests_per_minute.map(i64::from));
    cfg.set_opt("recognizer.max_concurrency", f.max_concurrency.map(i64::from));
    cfg.set_opt("recognizer.timeout_secs", f.timeout_secs.map(|t| t as i64));
    cfg.set_path("recognizer.replay_fixture", f.replay_fixture.as_ref());
    cfg.set_opt("recognizer.prompt_profile", f.prompt_profile.clone());
    cfg.set_path("recognizer.cache_dir", f.cache_dir.as_ref());
}

fn ocr_flags(cfg: &mut Layered, f: &OcrFlags) {
    cfg.set_opt("eval.failure_threshold", f.failure_threshold);
    cfg.set_opt("eval.averaging", f.averaging.map(name));
    cfg.set_opt("eval.refusals", f.refusals.map(name));
}
