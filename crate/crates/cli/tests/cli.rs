use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use newsocr_core::detect::read_detection_records;
use newsocr_core::model::to_yolo_line;
use newsocr_core::{load_manifest, ColorSpace, GroundTruthBox, Manifest, RasterImage, Sample};

const SUBCOMMANDS: [&str; 9] = [
    "degrade", "segment", "enhance", "recognize", "pipeline", "eval-det", "eval-ocr", "eval-psnr", "report",
];

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/replay3")
}

fn newsocr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newsocr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn digest_line(o: &Output) -> String {
    stderr(o)
        .lines()
        .find(|l| l.contains("effective config"))
        .unwrap_or_else(|| panic!("no config line in {}", stderr(o)))
        .to_string()
}

fn run_fixture_pipeline(out: &Path, extra: &[&str]) -> Output {
    let config = fixture().join("pipeline.toml");
    let manifest = fixture().join("manifest.jsonl");
    let mut args = vec!["pipeline", "--config", s(&config), "--manifest", s(&manifest), "--output-root", s(out)];
    args.extend_from_slice(extra);
    newsocr(&args)
}

#[test]
fn every_subcommand_has_help() {
    for sub in SUBCOMMANDS {
        let o = newsocr(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(stdout(&o).contains("Usage: newsocr"), "{sub}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error_with_a_suggestion() {
    let o = newsocr(&["pipeline", "--manifst", "m.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--manifest"), "{}", stderr(&o));
}

#[test]
fn pipeline_replay_run_directory_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = run_fixture_pipeline(&a, &["--workers", "1"]);
    let rb = run_fixture_pipeline(&b, &["--workers", "4"]);
    assert!(ra.status.success(), "{}", stderr(&ra));
    assert!(rb.status.success(), "{}", stderr(&rb));
    let read = |p: PathBuf| fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    assert_eq!(read(a.join("run.jsonl")), read(b.join("run.jsonl")));
    for rel in ["page-002/text/0.txt", "page-001/upscaled/1.png", "page-001/columns/0_1.png"] {
        assert_eq!(read(a.join(rel)), read(b.join(rel)), "{rel}");
    }
    assert_eq!(fs::read_to_string(a.join("page-002/text/0.txt")).unwrap(), "c\nb\na");
}

#[test]
fn effective_config_digest_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let first = digest_line(&run_fixture_pipeline(&out, &["--workers", "2"]));
    let second = digest_line(&run_fixture_pipeline(&out, &["--workers", "2"]));
    assert_eq!(first, second);
    let changed = digest_line(&run_fixture_pipeline(&out, &["--workers", "2", "--crop-padding", "6"]));
    assert_ne!(first, changed);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert!(changed.contains(manifest["config_digest"].as_str().unwrap()));
}

#[test]
fn flags_override_config_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    // the file keeps intermediates with 4 px padding
    let o = run_fixture_pipeline(
        &out,
        &["--keep-intermediates", "false", "--set", "crop_padding=2.5", "--crop-padding", "4"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.join("page-002/articles").exists());
    let manifest = fs::read_to_string(out.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("\"crop_padding_px\": \"4\""), "{manifest}");

    let o = run_fixture_pipeline(&out, &["--set", "crop_padding=2.5"]);
    let manifest = fs::read_to_string(out.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("\"crop_padding_px\": \"2.5\""), "{manifest}");
    // other crops, so the column replay fixture no longer matches
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn per_sample_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut manifest = load_manifest(fixture().join("manifest.jsonl")).unwrap();
    manifest.samples.push(Sample::new("ghost", "pages/ghost.png"));
    // keep image paths pointing into the fixture
    let manifest_path = fixture_copy(&manifest, tmp.path());
    let config = fixture().join("pipeline.toml");
    let out = tmp.path().join("run");
    let o = newsocr(&["pipeline", "--config", s(&config), "--manifest", s(&manifest_path), "--output-root", s(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("run.jsonl")).unwrap().lines().count(), 4);
}

fn fixture_copy(manifest: &Manifest, dir: &Path) -> PathBuf {
    let mut m = manifest.clone();
    for sample in &mut m.samples {
        sample.image_path = fixture().join(&sample.image_path);
    }
    let path = dir.join("manifest.jsonl");
    m.write(&path).unwrap();
    path
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run_fixture_pipeline(&out, &["--set", "upscaler.tile_size=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = run_fixture_pipeline(&out, &["--set", "recognizer.colour=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = newsocr(&["pipeline", "--manifest", "absent.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}

fn outcome(id: &str, model: &str, text: &str, refusal: bool) -> String {
    serde_json::json!({
        "sample_id": id, "model_name": model, "text": text, "refusal": refusal,
        "raw_digest": "", "latency_ms": 0, "from_cache": false,
    })
    .to_string()
}

fn text_manifest(dir: &Path, texts: &[(&str, &str)]) -> PathBuf {
    let samples = texts
        .iter()
        .map(|(id, t)| {
            let mut s = Sample::new(*id, format!("{id}.png"));
            s.reference_text = Some(t.to_string());
            s
        })
        .collect();
    let path = dir.join("ref.jsonl");
    Manifest::new("ref", samples).unwrap().write(&path).unwrap();
    path
}

const TEXTS: [(&str, &str); 2] = [("p1", "قومی اسمبلی کا اجلاس"), ("p2", "لاہور میں بارش")];

#[test]
fn eval_ocr_on_identical_texts_reports_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = text_manifest(tmp.path(), &TEXTS);
    let hyp = tmp.path().join("hyp.jsonl");
    let lines: Vec<String> = TEXTS.iter().map(|(id, t)| outcome(id, "m", t, false)).collect();
    fs::write(&hyp, lines.join("\n")).unwrap();

    let out = tmp.path().join("report");
    let o = newsocr(&["eval-ocr", "--hyp", s(&hyp), "--ref", s(&reference), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let md = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("| m | - | - | 0.000 | 0.000 |"), "{md}");
    assert!(out.join("report.jsonl").is_file());
    assert!(stdout(&o).is_empty());
}

#[test]
fn stdout_flag_prints_instead_of_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = text_manifest(tmp.path(), &TEXTS);
    let hyp = tmp.path().join("hyp.jsonl");
    let lines: Vec<String> = TEXTS.iter().map(|(id, t)| outcome(id, "m", t, false)).collect();
    fs::write(&hyp, lines.join("\n")).unwrap();
    let o = newsocr(&["eval-ocr", "--hyp", s(&hyp), "--ref", s(&reference), "--stdout", "--format", "machine"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "metadata");
}

#[test]
fn report_merges_tiers_into_a_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = text_manifest(tmp.path(), &TEXTS);
    let low = tmp.path().join("low.jsonl");
    let high = tmp.path().join("high.jsonl");
    fs::write(&low, [outcome("p1", "m", "x", true), outcome("p2", "m", "y", true)].join("\n")).unwrap();
    fs::write(&high, TEXTS.map(|(id, t)| outcome(id, "m", t, false)).join("\n")).unwrap();
    for (tier, hyp) in [("low", &low), ("high", &high)] {
        let out = tmp.path().join(tier);
        let o = newsocr(&["eval-ocr", "--hyp", s(hyp), "--ref", s(&reference), "--tier", tier, "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, b) = (tmp.path().join("low/report.jsonl"), tmp.path().join("high/report.jsonl"));
    let o = newsocr(&["report", "--input", s(&a), "--input", s(&b), "--stdout"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let md = stdout(&o);
    assert!(md.contains("| m | Fail | Fail | 0.000 | 0.000 |"), "{md}");
    assert!(md.contains("| m | Fail → 0.000 | Fail → 0.000 |"), "{md}");
}

#[test]
fn degrade_enhance_and_psnr_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let page = {
        let (w, h) = (66u32, 50u32);
        let data = (0..w * h * 3).map(|i| ((i / 3 % w) * 3 + (i / 3 / w) * 2) as u8).collect();
        RasterImage::new(w, h, ColorSpace::Rgb, data).unwrap()
    };
    page.save_png(tmp.path().join("page.png")).unwrap();
    let mut sample = Sample::new("page", "page.png");
    sample.reference_text = Some("متن".into());
    let manifest = tmp.path().join("pages.jsonl");
    Manifest::new("pages", vec![sample]).unwrap().write(&manifest).unwrap();

    let pairs_dir = tmp.path().join("pairs");
    let o = newsocr(&[
        "degrade", "--manifest", s(&manifest), "--out", s(&pairs_dir), "--scale", "4", "--quality-reduction", "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pairs = load_manifest(pairs_dir.join("pairs.jsonl")).unwrap();
    let row = &pairs.samples[0];
    assert_eq!(row.reference_text.as_deref(), Some("متن"));
    let low = RasterImage::load(pairs.resolve(&row.image_path)).unwrap();
    let high = RasterImage::load(pairs.resolve(row.pair_path.as_ref().unwrap())).unwrap();
    assert_eq!((low.width(), low.height()), (16, 12));
    assert_eq!((high.width(), high.height()), (64, 48));
    assert_eq!(&fs::read(pairs_dir.join("low/page.jpg")).unwrap()[..2], &[0xFF, 0xD8]);

    let enhanced = tmp.path().join("enhanced");
    let o = newsocr(&[
        "enhance", "--manifest", s(&pairs_dir.join("pairs.jsonl")), "--out", s(&enhanced), "--backend", "bicubic",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = newsocr(&["eval-psnr", "--manifest", s(&enhanced.join("enhanced.jsonl")), "--stdout"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean PSNR"), "{}", stdout(&o));
}

#[test]
fn segment_replay_scores_perfectly_against_its_own_boxes() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = load_manifest(fixture().join("manifest.jsonl")).unwrap();
    let records = read_detection_records(fixture().join("articles.jsonl")).unwrap();
    let mut labelled = manifest.clone();
    for sample in &mut labelled.samples {
        let image = RasterImage::load(manifest.resolve(&sample.image_path)).unwrap();
        let rec = records.iter().find(|r| r.sample_id.as_deref() == Some(&sample.id)).unwrap();
        let lines: Vec<String> = rec
            .detections
            .iter()
            .map(|d| to_yolo_line(&GroundTruthBox { bbox: d.bbox, class_id: d.class_id }, image.width(), image.height()))
            .collect();
        let labels = tmp.path().join(format!("{}.txt", sample.id));
        fs::write(&labels, lines.join("\n")).unwrap();
        sample.labels_path = Some(labels);
    }
    let labelled_path = fixture_copy(&labelled, tmp.path());

    let dets = tmp.path().join("dets.jsonl");
    let fixture_records = fixture().join("articles.jsonl");
    let o = newsocr(&[
        "segment", "--manifest", s(&labelled_path), "--task", "article", "--backend", "replay",
        "--fixture", s(&fixture_records), "--out", s(&dets),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_detection_records(&dets).unwrap().len(), 3);

    let o = newsocr(&["eval-det", "--pred", s(&dets), "--ref", s(&labelled_path), "--stdout"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let md = stdout(&o);
    assert!(md.contains("| Precision | 1.000 | - |"), "{md}");
    assert!(md.contains("| mAP@50:95 | 1.000 | - |"), "{md}");
}

#[test]
fn jsonl_log_has_one_event_per_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_fixture_pipeline(&tmp.path().join("run"), &["--log", "jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let events: Vec<serde_json::Value> = stderr(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}")))
        .collect();
    let samples: Vec<&str> = events
        .iter()
        .filter(|e| e["target"] == "sample")
        .map(|e| e["sample_id"].as_str().unwrap())
        .collect();
    assert_eq!(samples.len(), 3);
    assert!(events.iter().any(|e| e["target"] == "config" && e["digest"].as_str().map(str::len) == Some(64)));
}

#[test]
fn recognize_replays_column_crops() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert!(run_fixture_pipeline(&run, &[]).status.success());
    let mut crops: Vec<PathBuf> = ["page-001", "page-002"]
        .iter()
        .flat_map(|p| fs::read_dir(run.join(p).join("columns")).unwrap())
        .map(|e| e.unwrap().path())
        .collect();
    crops.sort();
    let samples = crops
        .iter()
        .enumerate()
        .map(|(i, p)| Sample::new(format!("col-{i}"), p.clone()))
        .collect();
    let manifest = tmp.path().join("columns.jsonl");
    Manifest::new("columns", samples).unwrap().write(&manifest).unwrap();

    let text = fixture().join("text.jsonl");
    let o = newsocr(&[
        "recognize", "--manifest", s(&manifest), "--provider", "replay", "--model-name", "replay-fixture",
        "--replay-fixture", s(&text), "--stdout",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let outcomes: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(outcomes.len(), 7);
    assert_eq!(outcomes.iter().filter(|o| o["refusal"] == true).count(), 1);
    assert!(outcomes.iter().all(|o| o["model_name"] == "replay-fixture"));
}
