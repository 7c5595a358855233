//! Markdown tables in the layouts of the segmentation and recognition
//! results, and a schema-versioned jsonl stream of the same numbers.
//!
//! Output is a pure function of the inputs: models sort alphabetically,
//! tasks and tiers have a fixed order, and every score is printed with three
//! decimals rounded half to even.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bench::{compare_tiers, format_score, tier_cell, DetectionRow, OcrBenchResult, ResolutionTier, TierComparison};
use crate::detect::Task;
use crate::superres::SrPairsReport;
use crate::{Error, Result};

pub const REPORT_SCHEMA: &str = "newsocr.report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Machine,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Machine => "jsonl",
            ReportFormat::Markdown => "md",
        }
    }
}

/// Everything one report can hold; empty parts are rendered as header-only
/// tables (markdown) or omitted (machine).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    #[serde(default)]
    pub detection: Vec<DetectionRow>,
    #[serde(default)]
    pub ocr: Vec<OcrBenchResult>,
    #[serde(default)]
    pub comparisons: Vec<TierComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr: Option<SrPairsReport>,
}

/// Scoring conventions, written into every machine report.
pub fn scoring_decisions() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("wer_tokens", "whitespace-separated after normalization; punctuation attached"),
        ("cer_unit", "unicode codepoints after NFC"),
        ("normalization", "strip zero-width and bidi controls, NFC, collapse whitespace"),
        ("ocr_averaging", "micro unless stated per result"),
        ("refusals", "excluded from WER/CER unless stated per result"),
        ("fail_rule", "refusal rate above failure_threshold"),
        ("ap_interpolation", "101-point"),
        ("map50_95", "mean over IoU 0.50:0.05:0.95, classes averaged first"),
        ("precision_recall", "pooled over classes at the best-F1 confidence, IoU 0.50"),
        ("psnr", "MAX 255, RGB mean over channels, exact matches reported as inf"),
        ("rounding", "3 decimals, half to even"),
    ])
}

fn task_order(t: Task) -> u8 {
    match t {
        Task::Article => 0,
        Task::Column => 1,
    }
}

/// Metric × task table.
pub fn detection_table(rows: &[DetectionRow]) -> String {
    let mut out = String::from("| Metric | Article | Column |\n|:--|--:|--:|\n");
    if rows.is_empty() {
        return out;
    }
    let find = |task: Task| rows.iter().find(|r| r.task == task).map(|r| &r.score);
    let (article, column) = (find(Task::Article), find(Task::Column));
    let metrics: [(&str, fn(&crate::metrics::DetectionScore) -> f64); 4] = [
        ("Precision", |s| s.precision),
        ("Recall", |s| s.recall),
        ("mAP@50", |s| s.map50),
        ("mAP@50:95", |s| s.map50_95),
    ];
    for (name, get) in metrics {
        let cell = |s: Option<&crate::metrics::DetectionScore>| s.map_or("-".to_string(), |s| format_score(get(s)));
        out.push_str(&format!("| {name} | {} | {} |\n", cell(article), cell(column)));
    }
    out
}

/// LLM × {low, high} × {WER, CER} table.
pub fn ocr_table(results: &[OcrBenchResult]) -> String {
    let mut out = String::from(
        "| LLM | Low-Res WER | Low-Res CER | High-Res WER | High-Res CER |\n|:--|--:|--:|--:|--:|\n",
    );
    let mut by_model: BTreeMap<&str, [Option<&OcrBenchResult>; 2]> = BTreeMap::new();
    for r in results {
        let slot = match r.resolution_tier {
            ResolutionTier::Low => 0,
            ResolutionTier::High => 1,
        };
        by_model.entry(&r.model_name).or_default()[slot] = Some(r);
    }
    for (model, tiers) in by_model {
        out.push_str(&format!("| {model} |"));
        for tier in tiers {
            let (wer, cer) = match tier {
                Some(r) => (tier_cell(r.mean_wer, r.failed_flag), tier_cell(r.mean_cer, r.failed_flag)),
                None => ("-".into(), "-".into()),
            };
            out.push_str(&format!(" {wer} | {cer} |"));
        }
        out.push('\n');
    }
    out
}

fn signed(x: f64) -> String {
    let s = format_score(x);
    if s.starts_with('-') || s == "0.000" {
        s
    } else {
        format!("+{s}")
    }
}

/// Low → high transitions per model with paired WER deltas.
pub fn comparison_table(comparisons: &[TierComparison]) -> String {
    let mut out = String::from(
        "| LLM | WER | CER | Mean ΔWER | Improved | Regressed | Unchanged |\n|:--|:-:|:-:|--:|--:|--:|--:|\n",
    );
    let mut sorted: Vec<&TierComparison> = comparisons.iter().collect();
    sorted.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    for c in sorted {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            c.model_name,
            c.wer_cell(),
            c.cer_cell(),
            c.mean_delta.map_or("n/a".to_string(), signed),
            c.improved,
            c.regressed,
            c.unchanged
        ));
    }
    out
}

pub fn psnr_line(report: &SrPairsReport) -> String {
    format!("{}\n", report.summary())
}

pub fn render_markdown(set: &ReportSet) -> String {
    let mut out = String::from("## Segmentation\n\n");
    out.push_str(&detection_table(&set.detection));
    out.push_str("\n## Text recognition\n\n");
    out.push_str(&ocr_table(&set.ocr));
    out.push_str("\n## Low-res vs high-res\n\n");
    out.push_str(&comparison_table(&set.comparisons));
    if let Some(p) = &set.psnr {
        out.push_str("\n## Super-resolution\n\n");
        out.push_str(&psnr_line(p));
    }
    out
}

pub fn render_machine(set: &ReportSet) -> Result<String> {
    let mut lines = vec![json!({
        "schema": REPORT_SCHEMA,
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "metadata",
        "code_version": env!("CARGO_PKG_VERSION"),
        "decisions": scoring_decisions(),
    })];
    let mut detection: Vec<&DetectionRow> = set.detection.iter().collect();
    detection.sort_by_key(|r| task_order(r.task));
    for r in detection {
        lines.push(json!({"kind": "detection", "task": r.task, "score": r.score}));
    }
    let mut ocr: Vec<&OcrBenchResult> = set.ocr.iter().collect();
    ocr.sort_by(|a, b| {
        a.model_name
            .cmp(&b.model_name)
            .then(a.resolution_tier.cmp(&b.resolution_tier))
    });
    for r in ocr {
        lines.push(json!({"kind": "ocr", "result": r}));
    }
    let mut comps: Vec<&TierComparison> = set.comparisons.iter().collect();
    comps.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    for c in comps {
        lines.push(json!({"kind": "comparison", "comparison": c}));
    }
    if let Some(p) = &set.psnr {
        lines.push(json!({"kind": "psnr", "report": p}));
    }
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(&l)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a machine report back into a set; metadata lines are skipped and
/// several reports can be concatenated.
pub fn parse_machine(text: &str) -> Result<ReportSet> {
    let mut set = ReportSet::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut v: serde_json::Value = serde_json::from_str(line)?;
        let bad = |what: &str| Error::Invalid(format!("report line {}: {what}", idx + 1));
        let kind = v.get("kind").and_then(|k| k.as_str()).ok_or_else(|| bad("no kind"))?.to_string();
        let mut take = |key: &str| v.get_mut(key).map(serde_json::Value::take).ok_or_else(|| bad(key));
        match kind.as_str() {
            "metadata" => {
                if v.get("schema_version").and_then(|s| s.as_u64()) != Some(REPORT_SCHEMA_VERSION as u64) {
                    return Err(bad("unsupported schema_version"));
                }
            }
            "detection" => set.detection.push(DetectionRow {
                task: serde_json::from_value(take("task")?)?,
                score: serde_json::from_value(take("score")?)?,
            }),
            "ocr" => set.ocr.push(serde_json::from_value(take("result")?)?),
            "comparison" => set.comparisons.push(serde_json::from_value(take("comparison")?)?),
            "psnr" => set.psnr = Some(serde_json::from_value(take("report")?)?),
            other => return Err(bad(&format!("unknown kind {other:?}"))),
        }
    }
    Ok(set)
}

/// Builds a low → high comparison for every model that has both tiers.
pub fn pair_tiers(results: &[OcrBenchResult]) -> Result<Vec<TierComparison>> {
    let mut by_model: BTreeMap<&str, [Option<&OcrBenchResult>; 2]> = BTreeMap::new();
    for r in results {
        let slot = match r.resolution_tier {
            ResolutionTier::Low => 0,
            ResolutionTier::High => 1,
        };
        let entry = &mut by_model.entry(&r.model_name).or_default()[slot];
        if entry.is_some() {
            return Err(Error::Invalid(format!("{} has two {} results", r.model_name, r.resolution_tier)));
        }
        *entry = Some(r);
    }
    by_model
        .values()
        .filter_map(|t| Some((t[0]?, t[1]?)))
        .map(|(low, high)| compare_tiers(low, high))
        .collect()
}

pub fn emit_report(set: &ReportSet, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Markdown => Ok(render_markdown(set)),
        ReportFormat::Machine => render_machine(set),
    }
}

/// Writes `report.md` or `report.jsonl` into `dir` and returns its path.
pub fn write_report(set: &ReportSet, format: ReportFormat, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("report.{}", format.extension()));
    fs::write(&path, emit_report(set, format)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
