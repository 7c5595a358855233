//! Batch OCR pipeline engine for complex newspaper scans.
//!
//! The pipeline runs four stages over every page of a manifest:
//!
//! 1. article segmentation ([`detect`]),
//! 2. ×4 super-resolution of each article crop ([`superres`]),
//! 3. column segmentation of each upscaled article ([`detect`]),
//! 4. vision-LLM transcription of each column ([`recognize`]),
//!
//! followed by right-to-left stitching of the column transcripts. The
//! evaluation side ([`metrics`], [`bench`], [`report`]) scores every stage:
//! detection precision/recall/mAP, PSNR for the upscaler, and WER/CER for
//! recognition at low and high resolution.
//!
//! Every model-backed stage has a deterministic replay backend keyed by image
//! content digest, so whole runs can be reproduced without weights or network.

pub mod bench;
pub mod detect;
mod error;
pub mod imageops;
pub mod metrics;
pub mod model;
#[cfg(feature = "neural")]
mod onnx;
pub mod pipeline;
pub mod recognize;
pub mod report;
pub mod superres;

pub use error::{Error, Result};
pub use model::{
    load_manifest, load_yolo_labels, BoundingBox, ColorSpace, Detection, GroundTruthBox, LabelSet,
    Manifest, RasterImage, Sample,
};
