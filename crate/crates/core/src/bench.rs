//! Evaluation protocol: OCR scoring per model and resolution tier, tier
//! comparison, and detection scoring of exported predictions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{DetectionRecord, Task};
use crate::metrics::{detection_score, word_error_rate, DetectionScore, ImageEval, NormalizationPolicy, OcrScore};
use crate::model::{load_yolo_labels, Manifest};
use crate::pipeline::PipelineRecord;
use crate::recognize::RecognitionOutcome;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionTier {
    Low,
    High,
}

impl std::fmt::Display for ResolutionTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResolutionTier::Low => "low",
            ResolutionTier::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Total edits over total reference units across included samples.
    Micro,
    /// Mean of per-sample rates.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefusalScoring {
    /// Refusals are left out of WER/CER.
    Exclude,
    /// Refusals are scored as an empty transcript.
    Penalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcrBenchOptions {
    pub policy: NormalizationPolicy,
    /// A tier is failed when its refusal rate exceeds this value.
    pub failure_threshold: f64,
    pub averaging: Averaging,
    pub refusals: RefusalScoring,
}

impl Default for OcrBenchOptions {
    fn default() -> Self {
        Self {
            policy: NormalizationPolicy::default(),
            failure_threshold: 0.5,
            averaging: Averaging::Micro,
            refusals: RefusalScoring::Exclude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Scored,
    Refusal,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub status: SampleStatus,
    /// Present when the sample counts toward the means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<OcrScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrBenchResult {
    pub model_name: String,
    pub resolution_tier: ResolutionTier,
    /// `None` when no sample was usable.
    pub mean_wer: Option<f64>,
    pub mean_cer: Option<f64>,
    pub refusal_rate: f64,
    pub sample_count: usize,
    pub scored_count: usize,
    pub refusal_count: usize,
    pub transport_error_count: usize,
    pub failure_threshold: f64,
    pub failed_flag: bool,
    pub averaging: Averaging,
    pub refusals: RefusalScoring,
    pub diagnostics: Vec<String>,
    pub per_sample: Vec<SampleScore>,
}

impl OcrBenchResult {
    fn included(&self) -> impl Iterator<Item = (&str, &OcrScore)> {
        self.per_sample
            .iter()
            .filter_map(|s| s.score.as_ref().map(|sc| (s.sample_id.as_str(), sc)))
    }
}

/// Scores one model's transcripts for one tier against the manifest's
/// reference texts. All outcomes must come from the same model.
pub fn eval_ocr(
    manifest: &Manifest,
    outcomes: &[RecognitionOutcome],
    tier: ResolutionTier,
    options: &OcrBenchOptions,
) -> Result<OcrBenchResult> {
    if !(0.0..=1.0).contains(&options.failure_threshold) {
        return Err(Error::Config(format!(
            "failure_threshold {} outside [0,1]",
            options.failure_threshold
        )));
    }
    let models: BTreeSet<&str> = outcomes.iter().map(|o| o.model_name.as_str()).collect();
    if models.len() > 1 {
        return Err(Error::Invalid(format!(
            "outcomes mix models: {}",
            models.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let model_name = models.into_iter().next().unwrap_or_default().to_string();

    let mut seen = BTreeSet::new();
    let mut references = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        if !seen.insert(o.sample_id.as_str()) {
            return Err(Error::DuplicateId(o.sample_id.clone()));
        }
        let sample = manifest
            .get(&o.sample_id)
            .ok_or_else(|| Error::UnknownSample(o.sample_id.clone()))?;
        let reference = sample.reference_text.as_deref().ok_or_else(|| {
            Error::Invalid(format!("sample {} has no reference text", o.sample_id))
        })?;
        references.push(reference);
    }

    let per_sample: Vec<SampleScore> = outcomes
        .par_iter()
        .zip(references.par_iter())
        .map(|(o, reference)| -> Result<SampleScore> {
            let status = if o.transport_error.is_some() {
                SampleStatus::TransportError
            } else if o.refusal {
                SampleStatus::Refusal
            } else {
                SampleStatus::Scored
            };
            let hypothesis = match (status, options.refusals) {
                (SampleStatus::Scored, _) => Some(o.text.as_str()),
                (SampleStatus::Refusal, RefusalScoring::Penalize) => Some(""),
                _ => None,
            };
            let score = hypothesis
                .map(|h| word_error_rate(reference, h, &options.policy))
                .transpose()
                .map_err(|e| Error::Invalid(format!("sample {}: {e}", o.sample_id)))?;
            Ok(SampleScore {
                sample_id: o.sample_id.clone(),
                status,
                score,
            })
        })
        .collect::<Result<_>>()?;

    let count = |st| per_sample.iter().filter(|s| s.status == st).count();
    let refusal_count = count(SampleStatus::Refusal);
    let transport_error_count = count(SampleStatus::TransportError);
    let sample_count = per_sample.len();
    let refusal_rate = if sample_count == 0 {
        0.0
    } else {
        refusal_count as f64 / sample_count as f64
    };

    let scores: Vec<&OcrScore> = per_sample.iter().filter_map(|s| s.score.as_ref()).collect();
    let (mean_wer, mean_cer) = aggregate(&scores, options.averaging);
    let mut diagnostics = Vec::new();
    if scores.is_empty() {
        diagnostics.push(format!(
            "no usable samples: {sample_count} total, {refusal_count} refusals, {transport_error_count} transport errors"
        ));
    } else if refusal_count + transport_error_count > 0 {
        diagnostics.push(format!(
            "excluded {} refusals and {transport_error_count} transport errors",
            if options.refusals == RefusalScoring::Exclude { refusal_count } else { 0 }
        ));
    }

    Ok(OcrBenchResult {
        model_name,
        resolution_tier: tier,
        mean_wer,
        mean_cer,
        refusal_rate,
        sample_count,
        scored_count: scores.len(),
        refusal_count,
        transport_error_count,
        failure_threshold: options.failure_threshold,
        failed_flag: refusal_rate > options.failure_threshold,
        averaging: options.averaging,
        refusals: options.refusals,
        diagnostics,
        per_sample,
    })
}

fn aggregate(scores: &[&OcrScore], averaging: Averaging) -> (Option<f64>, Option<f64>) {
    if scores.is_empty() {
        return (None, None);
    }
    match averaging {
        Averaging::Micro => {
            let (mut we, mut wn, mut ce, mut cn) = (0usize, 0usize, 0usize, 0usize);
            for s in scores {
                we += s.word.distance();
                wn += s.reference_token_count;
                ce += s.char.distance();
                cn += s.reference_char_count;
            }
            (Some(we as f64 / wn as f64), Some(ce as f64 / cn as f64))
        }
        Averaging::Macro => {
            let n = scores.len() as f64;
            (
                Some(scores.iter().map(|s| s.wer).sum::<f64>() / n),
                Some(scores.iter().map(|s| s.cer).sum::<f64>() / n),
            )
        }
    }
}

/// Paired low/high comparison for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierComparison {
    pub model_name: String,
    pub low_wer: Option<f64>,
    pub low_cer: Option<f64>,
    pub high_wer: Option<f64>,
    pub high_cer: Option<f64>,
    pub low_failed: bool,
    pub high_failed: bool,
    /// `high − low` per sample, over samples scored in both tiers.
    pub deltas: Vec<SampleDelta>,
    pub mean_delta: Option<f64>,
    pub improved: usize,
    pub regressed: usize,
    pub unchanged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDelta {
    pub sample_id: String,
    pub low_wer: f64,
    pub high_wer: f64,
    pub delta: f64,
}

impl TierComparison {
    /// `Fail → 0.249` style cell for WER.
    pub fn wer_cell(&self) -> String {
        format!(
            "{} → {}",
            tier_cell(self.low_wer, self.low_failed),
            tier_cell(self.high_wer, self.high_failed)
        )
    }

    pub fn cer_cell(&self) -> String {
        format!(
            "{} → {}",
            tier_cell(self.low_cer, self.low_failed),
            tier_cell(self.high_cer, self.high_failed)
        )
    }
}

/// Three-decimal rendering with half-to-even rounding.
pub fn format_score(x: f64) -> String {
    format!("{:.3}", (x * 1000.0).round_ties_even() / 1000.0)
}

/// One metric cell: `Fail` for failed tiers, `n/a` when nothing was scored.
pub fn tier_cell(value: Option<f64>, failed: bool) -> String {
    match (failed, value) {
        (true, _) => "Fail".into(),
        (false, Some(v)) => format_score(v),
        (false, None) => "n/a".into(),
    }
}

pub fn compare_tiers(low: &OcrBenchResult, high: &OcrBenchResult) -> Result<TierComparison> {
    if low.model_name != high.model_name {
        return Err(Error::Invalid(format!(
            "cannot compare tiers of different models: {} vs {}",
            low.model_name, high.model_name
        )));
    }
    let ids = |r: &OcrBenchResult| -> BTreeSet<String> {
        r.per_sample.iter().map(|s| s.sample_id.clone()).collect()
    };
    let (a, b) = (ids(low), ids(high));
    let diff: Vec<String> = a.symmetric_difference(&b).cloned().collect();
    if !diff.is_empty() {
        return Err(Error::SampleSetMismatch(diff));
    }

    let high_by_id: HashMap<&str, &OcrScore> = high.included().collect();
    let mut deltas: Vec<SampleDelta> = low
        .included()
        .filter_map(|(id, lo)| {
            high_by_id.get(id).map(|hi| SampleDelta {
                sample_id: id.to_string(),
                low_wer: lo.wer,
                high_wer: hi.wer,
                delta: hi.wer - lo.wer,
            })
        })
        .collect();
    deltas.sort_by(|x, y| x.sample_id.cmp(&y.sample_id));
    let mean_delta = (!deltas.is_empty())
        .then(|| deltas.iter().map(|d| d.delta).sum::<f64>() / deltas.len() as f64);

    Ok(TierComparison {
        model_name: low.model_name.clone(),
        low_wer: low.mean_wer,
        low_cer: low.mean_cer,
        high_wer: high.mean_wer,
        high_cer: high.mean_cer,
        low_failed: low.failed_flag,
        high_failed: high.failed_flag,
        improved: deltas.iter().filter(|d| d.delta < 0.0).count(),
        regressed: deltas.iter().filter(|d| d.delta > 0.0).count(),
        unchanged: deltas.iter().filter(|d| d.delta == 0.0).count(),
        mean_delta,
        deltas,
    })
}

/// Reads transcripts from a jsonl file of recognition outcomes or of
/// pipeline records (`run.jsonl`).
pub fn read_outcomes(path: impl AsRef<Path>, model_name: Option<&str>) -> Result<Vec<RecognitionOutcome>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        let outcome = if value.get("articles").is_some() {
            let rec: PipelineRecord = serde_json::from_value(value)
                .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
            outcome_from_record(&rec, model_name.unwrap_or("pipeline"))
        } else {
            let mut o: RecognitionOutcome = serde_json::from_value(value)
                .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
            if let Some(m) = model_name {
                o.model_name = m.to_string();
            }
            o
        };
        out.push(outcome);
    }
    Ok(out)
}

/// Page-level transcript of a pipeline record: article texts in reading
/// order, one per line. A page whose every column was refused counts as a
/// refusal; a page with any stage failure counts as an error.
pub fn outcome_from_record(record: &PipelineRecord, model_name: &str) -> RecognitionOutcome {
    let columns: Vec<_> = record.articles.iter().flat_map(|a| &a.columns).collect();
    let failure = record
        .failures
        .first()
        .map(|f| format!("{:?}: {}", f.stage, f.message))
        .or_else(|| columns.iter().find_map(|c| c.transport_error.clone()));
    RecognitionOutcome {
        sample_id: record.sample_id.clone(),
        model_name: model_name.to_string(),
        text: record
            .articles
            .iter()
            .filter_map(|a| a.text.as_deref())
            .collect::<Vec<_>>()
            .join("\n"),
        refusal: !columns.is_empty() && columns.iter().all(|c| c.refusal),
        raw_digest: record.page_digest.clone().unwrap_or_default(),
        latency_ms: 0,
        from_cache: false,
        transport_error: failure,
    }
}

/// Detection score for one task, in the fixed report order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub task: Task,
    pub score: DetectionScore,
}

/// Scores exported predictions of `task` against the manifest's YOLO labels.
/// Every labelled sample needs a prediction record and vice versa; a sample
/// with no detections is a record with an empty list.
pub fn eval_detection(
    predictions: &[DetectionRecord],
    manifest: &Manifest,
    task: Task,
) -> Result<DetectionRow> {
    let mut by_id: BTreeMap<&str, &DetectionRecord> = BTreeMap::new();
    for rec in predictions.iter().filter(|r| r.task == task) {
        let id = rec.sample_id.as_deref().ok_or_else(|| {
            Error::Invalid(format!("prediction for image {} has no sample_id", rec.image_digest))
        })?;
        if by_id.insert(id, rec).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    let labelled: BTreeSet<&str> = manifest
        .samples
        .iter()
        .filter(|s| s.labels_path.is_some())
        .map(|s| s.id.as_str())
        .collect();
    let predicted: BTreeSet<&str> = by_id.keys().copied().collect();
    let diff: Vec<String> = labelled
        .symmetric_difference(&predicted)
        .map(|s| s.to_string())
        .collect();
    if !diff.is_empty() {
        return Err(Error::SampleSetMismatch(diff));
    }

    let images: Vec<ImageEval> = manifest
        .samples
        .par_iter()
        .filter(|s| s.labels_path.is_some())
        .map(|s| -> Result<ImageEval> {
            let image_path = manifest.resolve(&s.image_path);
            let (w, h) = image::image_dimensions(&image_path)
                .map_err(|e| Error::Codec(format!("{}: {e}", image_path.display())))?;
            let labels = load_yolo_labels(manifest.resolve(s.labels_path.as_ref().expect("filtered")), w, h)?;
            Ok(ImageEval {
                detections: by_id[s.id.as_str()].detections.clone(),
                ground_truth: labels.boxes,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DetectionRow {
        task,
        score: detection_score(&images)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sample;
    use proptest::prelude::*;

    fn manifest(refs: &[(&str, &str)]) -> Manifest {
        let samples = refs
            .iter()
            .map(|(id, text)| {
                let mut s = Sample::new(*id, format!("{id}.png"));
                s.reference_text = Some(text.to_string());
                s
            })
            .collect();
        Manifest::new("test", samples).unwrap()
    }

    fn outcome(id: &str, text: &str, refusal: bool) -> RecognitionOutcome {
        RecognitionOutcome {
            sample_id: id.into(),
            model_name: "m".into(),
            text: text.into(),
            refusal,
            raw_digest: String::new(),
            latency_ms: 0,
            from_cache: false,
            transport_error: None,
        }
    }

    #[test]
    fn identical_transcripts_score_zero() {
        let m = manifest(&[("a", "یہ ایک جملہ ہے"), ("b", "دوسرا")]);
        let outs = [outcome("a", "یہ ایک جملہ ہے", false), outcome("b", "دوسرا", false)];
        let r = eval_ocr(&m, &outs, ResolutionTier::High, &OcrBenchOptions::default()).unwrap();
        assert_eq!((r.mean_wer, r.mean_cer), (Some(0.0), Some(0.0)));
        assert!(!r.failed_flag);
    }

    #[test]
    fn six_refusals_of_ten_fail_the_tier() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let m = manifest(&ids.iter().map(|i| (i.as_str(), "ا ب ج د")).collect::<Vec<_>>());
        // the four transcribed samples: 0, 1, 1 and 2 word errors over 4 tokens each
        let hyps = ["ا ب ج د", "ا ب ج ہ", "ا ب ج", "ا ب"];
        let outs: Vec<_> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| match hyps.get(i) {
                Some(h) => outcome(id, h, false),
                None => outcome(id, "Unfortunately, I am unable to extract text from the image...", true),
            })
            .collect();
        let r = eval_ocr(&m, &outs, ResolutionTier::Low, &OcrBenchOptions::default()).unwrap();
        assert_eq!((r.sample_count, r.refusal_count, r.scored_count), (10, 6, 4));
        assert_eq!(r.refusal_rate, 0.6);
        assert!(r.failed_flag);
        assert_eq!(r.mean_wer, Some(4.0 / 16.0));
        assert_eq!(tier_cell(r.mean_wer, r.failed_flag), "Fail");
    }

    #[test]
    fn refusal_rate_at_threshold_is_not_failed() {
        let m = manifest(&[("a", "x"), ("b", "y")]);
        let outs = [outcome("a", "x", false), outcome("b", "I can't", true)];
        let r = eval_ocr(&m, &outs, ResolutionTier::Low, &OcrBenchOptions::default()).unwrap();
        assert_eq!(r.refusal_rate, 0.5);
        assert!(!r.failed_flag);
    }

    #[test]
    fn penalized_refusals_count_as_deletions() {
        let m = manifest(&[("a", "x y"), ("b", "p q")]);
        let outs = [outcome("a", "x y", false), outcome("b", "no", true)];
        let opts = OcrBenchOptions {
            refusals: RefusalScoring::Penalize,
            ..Default::default()
        };
        let r = eval_ocr(&m, &outs, ResolutionTier::Low, &opts).unwrap();
        assert_eq!(r.mean_wer, Some(0.5));
        assert_eq!(r.scored_count, 2);
    }

    #[test]
    fn unusable_tier_reports_instead_of_crashing() {
        let m = manifest(&[("a", "x")]);
        let mut o = outcome("a", "", false);
        o.transport_error = Some("timeout".into());
        let r = eval_ocr(&m, &[o], ResolutionTier::Low, &OcrBenchOptions::default()).unwrap();
        assert_eq!(r.mean_wer, None);
        assert_eq!(r.transport_error_count, 1);
        assert!(r.diagnostics[0].starts_with("no usable samples"));
        assert_eq!(tier_cell(r.mean_wer, r.failed_flag), "n/a");
    }

    #[test]
    fn unknown_and_duplicate_samples_error() {
        let m = manifest(&[("a", "x")]);
        let opts = OcrBenchOptions::default();
        assert!(matches!(
            eval_ocr(&m, &[outcome("zz", "x", false)], ResolutionTier::Low, &opts),
            Err(Error::UnknownSample(_))
        ));
        assert!(matches!(
            eval_ocr(&m, &[outcome("a", "x", false), outcome("a", "x", false)], ResolutionTier::Low, &opts),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn compare_identical_tiers() {
        let m = manifest(&[("a", "x y"), ("b", "p q r")]);
        let outs = [outcome("a", "x z", false), outcome("b", "p q r", false)];
        let r = eval_ocr(&m, &outs, ResolutionTier::Low, &OcrBenchOptions::default()).unwrap();
        let c = compare_tiers(&r, &r).unwrap();
        assert!(c.deltas.iter().all(|d| d.delta == 0.0));
        assert_eq!((c.mean_delta, c.unchanged), (Some(0.0), 2));
    }

    #[test]
    fn compare_hand_built_pair() {
        let m = manifest(&[("a", "w1 w2"), ("b", "w1 w2 w3 w4"), ("c", "w1")]);
        let low = [outcome("a", "", false), outcome("b", "w1", false), outcome("c", "w1", false)];
        let high = [outcome("a", "w1 w2", false), outcome("b", "w1 w2", false), outcome("c", "q", false)];
        let opts = OcrBenchOptions::default();
        let lo = eval_ocr(&m, &low, ResolutionTier::Low, &opts).unwrap();
        let hi = eval_ocr(&m, &high, ResolutionTier::High, &opts).unwrap();
        let c = compare_tiers(&lo, &hi).unwrap();
        // per-sample WER low: 1, 0.75, 0; high: 0, 0.5, 1
        assert_eq!(c.mean_delta, Some((-1.0 - 0.25 + 1.0) / 3.0));
        assert_eq!((c.improved, c.regressed, c.unchanged), (2, 1, 0));
    }

    #[test]
    fn fail_rendering() {
        let m = manifest(&[("a", "x y z w"), ("b", "p"), ("c", "q")]);
        let refuse = "I can't directly extract text...when the image quality does not allow for clear text recognition.";
        let low = [outcome("a", refuse, true), outcome("b", refuse, true), outcome("c", "q", false)];
        let high = [outcome("a", "x y z w", false), outcome("b", "p", false), outcome("c", "q", false)];
        let opts = OcrBenchOptions::default();
        let lo = eval_ocr(&m, &low, ResolutionTier::Low, &opts).unwrap();
        let mut hi = eval_ocr(&m, &high, ResolutionTier::High, &opts).unwrap();
        hi.mean_wer = Some(0.249);
        let c = compare_tiers(&lo, &hi).unwrap();
        assert_eq!(c.wer_cell(), "Fail → 0.249");
    }

    #[test]
    fn sample_set_mismatch_lists_difference() {
        let m = manifest(&[("a", "x"), ("b", "y"), ("c", "z")]);
        let opts = OcrBenchOptions::default();
        let lo = eval_ocr(&m, &[outcome("a", "x", false), outcome("b", "y", false)], ResolutionTier::Low, &opts).unwrap();
        let hi = eval_ocr(&m, &[outcome("a", "x", false), outcome("c", "z", false)], ResolutionTier::High, &opts).unwrap();
        match compare_tiers(&lo, &hi) {
            Err(Error::SampleSetMismatch(d)) => assert_eq!(d, vec!["b".to_string(), "c".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn score_formatting_rounds_half_to_even() {
        assert_eq!(format_score(0.1335), "0.134");
        assert_eq!(format_score(0.0325), "0.032");
        assert_eq!(format_score(0.25), "0.250");
        assert_eq!(format_score(1.036), "1.036");
        assert_eq!(format_score(0.0), "0.000");
    }

    fn token_strings(n: usize, len: usize) -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!["ا", "ب", "ت", "ک", "x"]), len)
                .prop_map(|t| t.join(" ")),
            n,
        )
    }

    proptest! {
        #[test]
        fn micro_equals_macro_for_equal_length_references(
            refs in token_strings(6, 5),
            hyps in token_strings(6, 4),
        ) {
            let ids: Vec<String> = (0..refs.len()).map(|i| format!("s{i}")).collect();
            let m = manifest(&ids.iter().map(String::as_str).zip(refs.iter().map(String::as_str)).collect::<Vec<_>>());
            let outs: Vec<_> = ids.iter().zip(&hyps).map(|(i, h)| outcome(i, h, false)).collect();
            let micro = eval_ocr(&m, &outs, ResolutionTier::Low, &OcrBenchOptions::default()).unwrap();
            let macro_ = eval_ocr(&m, &outs, ResolutionTier::Low, &OcrBenchOptions { averaging: Averaging::Macro, ..Default::default() }).unwrap();
            prop_assert!((micro.mean_wer.unwrap() - macro_.mean_wer.unwrap()).abs() < 1e-12);
        }

        #[test]
        fn mean_delta_is_difference_of_means(
            refs in token_strings(5, 3),
            low in token_strings(5, 3),
            high in token_strings(5, 2),
            refused in prop::collection::vec(any::<bool>(), 5),
        ) {
            let ids: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
            let m = manifest(&ids.iter().map(String::as_str).zip(refs.iter().map(String::as_str)).collect::<Vec<_>>());
            let lo: Vec<_> = ids.iter().zip(&low).zip(&refused).map(|((i, h), r)| outcome(i, h, *r)).collect();
            let hi: Vec<_> = ids.iter().zip(&high).map(|(i, h)| outcome(i, h, false)).collect();
            let opts = OcrBenchOptions::default();
            let lo = eval_ocr(&m, &lo, ResolutionTier::Low, &opts).unwrap();
            let hi = eval_ocr(&m, &hi, ResolutionTier::High, &opts).unwrap();
            let c = compare_tiers(&lo, &hi).unwrap();
            let common: Vec<&SampleScore> = lo.per_sample.iter().filter(|s| s.score.is_some()).collect();
            if common.is_empty() {
                prop_assert!(c.mean_delta.is_none());
            } else {
                let n = common.len() as f64;
                let mean_lo = common.iter().map(|s| s.score.as_ref().unwrap().wer).sum::<f64>() / n;
                let mean_hi = common
                    .iter()
                    .map(|s| hi.per_sample.iter().find(|h| h.sample_id == s.sample_id).unwrap().score.as_ref().unwrap().wer)
                    .sum::<f64>() / n;
                prop_assert!((c.mean_delta.unwrap() - (mean_hi - mean_lo)).abs() < 1e-12);
            }
        }
    }
}
