//! Article and column segmentation: backend dispatch, raw-output decoding,
//! class-wise NMS, and reading order.

#[cfg(feature = "neural")]
mod neural;
mod replay;

use std::cmp::Ordering;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::imageops::{resize, ResizeKernel};
use crate::metrics::iou;
use crate::model::{BoundingBox, ColorSpace, Detection, RasterImage};
use crate::{Error, Result};

#[cfg(feature = "neural")]
pub use neural::NeuralDetector;
pub use replay::{read_detection_records, write_detection_records, DetectionRecord, ReplayDetector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Article,
    Column,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Article => "article",
            Task::Column => "column",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub task: Task,
    #[serde(default = "default_input_size")]
    pub input_size: u32,
    #[serde(default = "default_confidence")]
    pub confidence_threshold: f64,
    #[serde(default = "default_nms_iou")]
    pub nms_iou_threshold: f64,
}

fn default_input_size() -> u32 {
    640
}

fn default_confidence() -> f64 {
    0.25
}

fn default_nms_iou() -> f64 {
    0.45
}

impl DetectorConfig {
    pub fn new(task: Task) -> Self {
        Self {
            model_path: None,
            task,
            input_size: default_input_size(),
            confidence_threshold: default_confidence(),
            nms_iou_threshold: default_nms_iou(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("confidence_threshold", self.confidence_threshold),
            ("nms_iou_threshold", self.nms_iou_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(32) {
            return Err(Error::Config(format!(
                "input_size {} must be a positive multiple of 32",
                self.input_size
            )));
        }
        Ok(())
    }
}

/// One undecoded prediction row in letterboxed input coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCandidate {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class_scores: Vec<f32>,
}

/// Aspect-preserving fit into a square, centered, padded with gray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox {
    pub scale_x: f64,
    pub scale_y: f64,
    pub pad_x: f64,
    pub pad_y: f64,
}

impl Letterbox {
    pub fn fit(width: u32, height: u32, size: u32) -> Self {
        let r = (size as f64 / width as f64).min(size as f64 / height as f64);
        let nw = ((width as f64 * r).round() as u32).clamp(1, size);
        let nh = ((height as f64 * r).round() as u32).clamp(1, size);
        Self {
            scale_x: nw as f64 / width as f64,
            scale_y: nh as f64 / height as f64,
            pad_x: ((size - nw) / 2) as f64,
            pad_y: ((size - nh) / 2) as f64,
        }
    }

    pub fn content_size(&self, width: u32, height: u32) -> (u32, u32) {
        (
            (width as f64 * self.scale_x).round() as u32,
            (height as f64 * self.scale_y).round() as u32,
        )
    }

    pub fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.scale_x + self.pad_x, y * self.scale_y + self.pad_y)
    }

    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.pad_x) / self.scale_x, (y - self.pad_y) / self.scale_y)
    }
}

const LETTERBOX_FILL: u8 = 114;

/// Letterboxed RGB copy of `image` at `size × size`.
pub fn letterbox(image: &RasterImage, size: u32) -> Result<(RasterImage, Letterbox)> {
    let lb = Letterbox::fit(image.width(), image.height(), size);
    let (nw, nh) = lb.content_size(image.width(), image.height());
    let scaled = resize(&image.to_rgb(), nw, nh, ResizeKernel::Bilinear)?;
    let mut data = vec![LETTERBOX_FILL; size as usize * size as usize * 3];
    let (px, py) = (lb.pad_x as usize, lb.pad_y as usize);
    let row = nw as usize * 3;
    for y in 0..nh as usize {
        let dst = ((y + py) * size as usize + px) * 3;
        data[dst..dst + row].copy_from_slice(&scaled.data()[y * row..(y + 1) * row]);
    }
    Ok((RasterImage::new(size, size, ColorSpace::Rgb, data)?, lb))
}

pub enum BackendOutput {
    /// Rows to decode, threshold and suppress.
    Raw {
        candidates: Vec<RawCandidate>,
        letterbox: Letterbox,
    },
    /// Already final, e.g. served from a replay fixture.
    Final(Vec<Detection>),
}

/// A detection model. Implementations must tolerate concurrent calls.
pub trait DetectorBackend: Send + Sync {
    fn infer(&self, image: &RasterImage, config: &DetectorConfig) -> Result<BackendOutput>;
}

pub fn detect_regions(
    image: &RasterImage,
    backend: &dyn DetectorBackend,
    config: &DetectorConfig,
) -> Result<Vec<Detection>> {
    config.validate()?;
    match backend.infer(image, config)? {
        BackendOutput::Final(dets) => Ok(dets),
        BackendOutput::Raw {
            candidates,
            letterbox,
        } => {
            let decoded = decode_candidates(&candidates, &letterbox, image, config.confidence_threshold);
            Ok(non_max_suppression(decoded, config.nms_iou_threshold))
        }
    }
}

/// Best-class decoding, threshold, and mapping back to source pixels.
pub fn decode_candidates(
    candidates: &[RawCandidate],
    letterbox: &Letterbox,
    image: &RasterImage,
    confidence_threshold: f64,
) -> Vec<Detection> {
    let (w, h) = (image.width() as f64, image.height() as f64);
    candidates
        .iter()
        .filter_map(|c| {
            let (class_id, score) = c
                .class_scores
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, f32)>, (i, &s)| match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((i, s)),
                })?;
            let confidence = (score as f64).clamp(0.0, 1.0);
            if confidence < confidence_threshold {
                return None;
            }
            let (x0, y0) = letterbox.inverse(c.cx - c.w / 2.0, c.cy - c.h / 2.0);
            let (x1, y1) = letterbox.inverse(c.cx + c.w / 2.0, c.cy + c.h / 2.0);
            let raw = BoundingBox {
                x_min: x0,
                y_min: y0,
                x_max: x1,
                y_max: y1,
            };
            let bbox = raw.clamp_to(w, h)?;
            Some(Detection {
                bbox,
                class_id: class_id as u32,
                confidence,
            })
        })
        .collect()
}

fn confidence_desc(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
}

/// Class-wise greedy NMS; the result is sorted by descending confidence.
pub fn non_max_suppression(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(confidence_desc);
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for d in dets {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Columns run right to left (ties top to bottom). Articles are grouped into
/// rows of vertically overlapping boxes; rows go top to bottom, right to left
/// within a row.
pub fn reading_order(detections: &[Detection], task: Task) -> Vec<Detection> {
    let mut out = detections.to_vec();
    let x_desc = |a: &Detection, b: &Detection| {
        b.bbox.center().0.total_cmp(&a.bbox.center().0)
    };
    match task {
        Task::Column => {
            out.sort_by(|a, b| x_desc(a, b).then(a.bbox.center().1.total_cmp(&b.bbox.center().1)));
            out
        }
        Task::Article => {
            out.sort_by(|a, b| {
                a.bbox
                    .center()
                    .1
                    .total_cmp(&b.bbox.center().1)
                    .then(x_desc(a, b))
            });
            let mut rows: Vec<Vec<Detection>> = Vec::new();
            for d in out {
                let row = rows
                    .iter_mut()
                    .find(|row| row.iter().any(|m| shares_band(m, &d)));
                match row {
                    Some(row) => row.push(d),
                    None => rows.push(vec![d]),
                }
            }
            for row in &mut rows {
                row.sort_by(|a, b| x_desc(a, b).then(a.bbox.y_min.total_cmp(&b.bbox.y_min)));
            }
            rows.into_iter().flatten().collect()
        }
    }
}

fn shares_band(a: &Detection, b: &Detection) -> bool {
    let overlap = a.bbox.y_max.min(b.bbox.y_max) - a.bbox.y_min.max(b.bbox.y_min);
    overlap > 0.0 && overlap >= 0.5 * a.bbox.height().min(b.bbox.height())
}
