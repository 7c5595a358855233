//! Pure metric engines: WER/CER over normalized text, PSNR over 8-bit images,
//! and IoU-matched detection precision, recall and COCO-style mAP.

pub mod detection;
pub mod psnr;
pub mod text;

pub use detection::{
    average_precision, detection_score, iou, match_detections, DetectionScore, ImageEval,
    MatchResult, ThresholdAp, IOU_THRESHOLDS_PERCENT,
};
pub use psnr::{psnr, PsnrMode, PsnrScore};
pub use text::{
    edit_ops, normalize_text, word_error_rate, EditCounts, NormalizationPolicy, OcrScore,
};
