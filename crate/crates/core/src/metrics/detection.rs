//! IoU matching and COCO-style average precision.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, Detection, GroundTruthBox};
use crate::{Error, Result};

/// IoU thresholds 0.50, 0.55, …, 0.95 as integer percentages.
pub const IOU_THRESHOLDS_PERCENT: [u32; 10] = [50, 55, 60, 65, 70, 75, 80, 85, 90, 95];

const RECALL_POINTS: usize = 101;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Greedy one-to-one assignment for one image and one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Detection indices in processing order (descending confidence, stable).
    pub order: Vec<usize>,
    /// Indexed like the input detections.
    pub is_tp: Vec<bool>,
    /// Ground-truth index matched by each input detection.
    pub matched_gt: Vec<Option<usize>>,
    /// Ground-truth boxes left unmatched.
    pub missed: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.is_tp.iter().filter(|&&t| t).count()
    }

    pub fn false_positives(&self) -> usize {
        self.is_tp.len() - self.true_positives()
    }

    /// TP flags in processing order.
    pub fn ordered_flags(&self) -> Vec<bool> {
        self.order.iter().map(|&i| self.is_tp[i]).collect()
    }
}

fn by_confidence_desc(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // stable sort keeps input order among equal confidences
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Each detection, highest confidence first, takes the still-unmatched
/// ground-truth box with the highest IoU at or above `iou_threshold`; equal
/// IoUs go to the lower ground-truth index.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> MatchResult {
    let order = by_confidence_desc(dets);
    let mut gt_taken = vec![false; gts.len()];
    let mut is_tp = vec![false; dets.len()];
    let mut matched_gt = vec![None; dets.len()];

    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let v = iou(&dets[d].bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_taken[g] = true;
            is_tp[d] = true;
            matched_gt[d] = Some(g);
        }
    }
    let missed = gt_taken.iter().filter(|&&t| !t).count();
    MatchResult {
        order,
        is_tp,
        matched_gt,
        missed,
    }
}

/// 101-point interpolated AP from confidence-ordered TP/FP flags.
///
/// Returns `None` when `total_gt == 0`; such a class is left out of any mean.
pub fn average_precision(flags: &[bool], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &flag) in flags.iter().enumerate() {
        tp += usize::from(flag);
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }
    // precision envelope: running max from the right
    for k in (0..precision.len().saturating_sub(1)).rev() {
        if precision[k + 1] > precision[k] {
            precision[k] = precision[k + 1];
        }
    }
    let mut sum = 0.0;
    let mut k = 0;
    for r in 0..RECALL_POINTS {
        let point = r as f64 / (RECALL_POINTS - 1) as f64;
        // recall is non-decreasing, so the first index reaching `point` has the max precision
        while k < recall.len() && recall[k] < point {
            k += 1;
        }
        if k < recall.len() {
            sum += precision[k];
        }
    }
    Some(sum / RECALL_POINTS as f64)
}

/// Detections and ground truth of one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageEval {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
    pub per_threshold_ap: Vec<ThresholdAp>,
    /// Confidence cut at which `precision` and `recall` were taken.
    pub operating_confidence: Option<f64>,
}

/// One detection's outcome placed in the dataset-wide ranking.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    confidence: f64,
    image: usize,
    rank: usize,
    tp: bool,
}

fn rank_cmp(a: &Ranked, b: &Ranked) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then(a.image.cmp(&b.image))
        .then(a.rank.cmp(&b.rank))
}

/// Matches every image for one class at one threshold and returns the
/// globally sorted outcomes together with the class's ground-truth count.
fn ranked_for_class(images: &[ImageEval], class_id: u32, threshold: f64) -> (Vec<Ranked>, usize) {
    let mut ranked = Vec::new();
    let mut total_gt = 0;
    for (image_idx, img) in images.iter().enumerate() {
        let dets: Vec<Detection> = img
            .detections
            .iter()
            .filter(|d| d.class_id == class_id)
            .copied()
            .collect();
        let gts: Vec<GroundTruthBox> = img
            .ground_truth
            .iter()
            .filter(|g| g.class_id == class_id)
            .copied()
            .collect();
        total_gt += gts.len();
        let m = match_detections(&dets, &gts, threshold);
        ranked.extend(m.order.iter().enumerate().map(|(rank, &d)| Ranked {
            confidence: dets[d].confidence,
            image: image_idx,
            rank,
            tp: m.is_tp[d],
        }));
    }
    ranked.sort_by(rank_cmp);
    (ranked, total_gt)
}

/// Dataset-level scores for one task.
///
/// AP is computed per class and IoU threshold, averaged over classes, then
/// over the ten thresholds. Precision and recall are pooled over classes at
/// the confidence cut that maximizes F1 at IoU 0.50.
pub fn detection_score(images: &[ImageEval]) -> Result<DetectionScore> {
    let gt_classes: BTreeSet<u32> = images
        .iter()
        .flat_map(|i| i.ground_truth.iter().map(|g| g.class_id))
        .collect();
    if gt_classes.is_empty() {
        return Err(Error::NoGroundTruth);
    }

    let mut per_threshold_ap = Vec::with_capacity(IOU_THRESHOLDS_PERCENT.len());
    for &pct in &IOU_THRESHOLDS_PERCENT {
        let threshold = pct as f64 / 100.0;
        let mut sum = 0.0;
        for &class_id in &gt_classes {
            let (ranked, total_gt) = ranked_for_class(images, class_id, threshold);
            let flags: Vec<bool> = ranked.iter().map(|r| r.tp).collect();
            sum += average_precision(&flags, total_gt).expect("class drawn from ground truth");
        }
        per_threshold_ap.push(ThresholdAp {
            iou: threshold,
            ap: sum / gt_classes.len() as f64,
        });
    }
    let map50 = per_threshold_ap[0].ap;
    let map50_95 =
        per_threshold_ap.iter().map(|t| t.ap).sum::<f64>() / per_threshold_ap.len() as f64;

    let (precision, recall, operating_confidence) = best_f1_operating_point(images);
    Ok(DetectionScore {
        precision,
        recall,
        map50,
        map50_95,
        per_threshold_ap,
        operating_confidence,
    })
}

fn best_f1_operating_point(images: &[ImageEval]) -> (f64, f64, Option<f64>) {
    let all_classes: BTreeSet<u32> = images
        .iter()
        .flat_map(|i| {
            i.detections
                .iter()
                .map(|d| d.class_id)
                .chain(i.ground_truth.iter().map(|g| g.class_id))
        })
        .collect();
    let mut pooled = Vec::new();
    let mut total_gt = 0;
    for &class_id in &all_classes {
        let (ranked, gt) = ranked_for_class(images, class_id, 0.5);
        pooled.extend(ranked);
        total_gt += gt;
    }
    pooled.sort_by(rank_cmp);

    let mut best = (0.0, 0.0, None);
    let mut best_f1 = -1.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, r) in pooled.iter().enumerate() {
        if r.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        // only evaluate at the end of a run of equal confidences
        if pooled.get(k + 1).is_some_and(|n| n.confidence == r.confidence) {
            continue;
        }
        let p = tp as f64 / (tp + fp) as f64;
        let rc = if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        };
        let f1 = if p + rc > 0.0 {
            2.0 * p * rc / (p + rc)
        } else {
            0.0
        };
        if f1 > best_f1 {
            best_f1 = f1;
            best = (p, rc, Some(r.confidence));
        }
    }
    best
}
