//! Shared domain types: raster images, boxes, detections, and dataset manifests.
//!
//! Coordinates use the usual image convention: origin at the top-left corner,
//! x to the right, y downward, boxes stored as real-valued corners.

use std::collections::HashSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Gray,
    Rgb,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb => 3,
        }
    }
}

/// An 8-bit image with row-major interleaved samples.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    color: ColorSpace,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("color", &self.color)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, color: ColorSpace, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * color.channels();
        if data.len() != expected {
            return Err(Error::Invalid(format!(
                "pixel buffer holds {} samples, {width}x{height}x{} needs {expected}",
                data.len(),
                color.channels()
            )));
        }
        Ok(Self {
            width,
            height,
            color,
            data,
        })
    }

    /// Image where every sample equals `value`.
    pub fn filled(width: u32, height: u32, color: ColorSpace, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * color.channels();
        Self::new(width, height, color, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn color(&self) -> ColorSpace {
        self.color
    }

    pub fn channels(&self) -> usize {
        self.color.channels()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels())
    }

    #[inline]
    pub fn sample(&self, x: u32, y: u32, c: usize) -> u8 {
        self.data[(y as usize * self.width as usize + x as usize) * self.channels() + c]
    }

    /// Three-channel copy; gray samples are replicated.
    pub fn to_rgb(&self) -> RasterImage {
        match self.color {
            ColorSpace::Rgb => self.clone(),
            ColorSpace::Gray => {
                let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
                RasterImage {
                    width: self.width,
                    height: self.height,
                    color: ColorSpace::Rgb,
                    data,
                }
            }
        }
    }

    pub fn from_dynamic(img: DynamicImage) -> Result<Self> {
        match img {
            DynamicImage::ImageLuma8(gray) => {
                let (w, h) = gray.dimensions();
                Self::new(w, h, ColorSpace::Gray, gray.into_raw())
            }
            other => {
                let rgb = other.into_rgb8();
                let (w, h) = rgb.dimensions();
                Self::new(w, h, ColorSpace::Rgb, rgb.into_raw())
            }
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        match self.color {
            ColorSpace::Gray => DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer length validated at construction"),
            ),
            ColorSpace::Rgb => DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer length validated at construction"),
            ),
        }
    }

    /// Decodes PNG, JPEG, or anything else the `image` crate recognises.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Codec(msg) => Error::Codec(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes).map_err(|e| Error::Codec(e.to_string()))?;
        Self::from_dynamic(img)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::Codec(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_png_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 over the dimensions, channel count and raw samples, as lowercase hex.
    ///
    /// Independent of any file encoding; replay fixtures are keyed by this value.
    pub fn content_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.width.to_le_bytes());
        hasher.update(self.height.to_le_bytes());
        hasher.update([self.channels() as u8]);
        hasher.update(&self.data);
        hex_digest(hasher)
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(format!(
                "box coordinates must be finite and non-negative: {self:?}"
            )));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::Invalid(format!("zero-area box: {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Clamps to `[0,w]×[0,h]`; `None` if nothing with positive area remains.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<Self> {
        let b = Self {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        };
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub class_id: u32,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class_id: u32, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!(
                "confidence {confidence} outside [0,1]"
            )));
        }
        bbox.validate()?;
        Ok(Self {
            bbox,
            class_id,
            confidence,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub class_id: u32,
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    #[serde(rename = "image")]
    pub image_path: PathBuf,
    #[serde(rename = "text", default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
    #[serde(rename = "labels", default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    #[serde(rename = "pair", default, skip_serializing_if = "Option::is_none")]
    pub pair_path: Option<PathBuf>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image_path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            image_path: image_path.into(),
            reference_text: None,
            labels_path: None,
            pair_path: None,
        }
    }

    /// True when the row carries at least one kind of ground truth.
    pub fn is_evaluable(&self) -> bool {
        self.reference_text.is_some() || self.labels_path.is_some() || self.pair_path.is_some()
    }
}

/// Ordered sample collection. Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub split_name: String,
    pub samples: Vec<Sample>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(split_name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let m = Self {
            split_name: split_name.into(),
            samples,
            base_dir: PathBuf::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Canonical serialization: one compact JSON object per line, keys in
    /// `id, image, text, labels, pair` order, absent keys omitted.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut samples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sample: Sample = serde_json::from_str(line)
                .map_err(|e| Error::parse(origin, idx + 1, e.to_string()))?;
            samples.push(sample);
        }
        let split_name = origin
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self {
            split_name,
            samples,
            base_dir,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Reads a line-delimited manifest. Image files are not checked here.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::parse(&text, path)
}

/// Boxes read from a YOLO label file plus the count of boxes that clamped to nothing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSet {
    pub boxes: Vec<GroundTruthBox>,
    pub dropped: usize,
}

pub fn parse_yolo_labels(
    text: &str,
    origin: &Path,
    image_width: u32,
    image_height: u32,
) -> Result<LabelSet> {
    let (w, h) = (image_width as f64, image_height as f64);
    let mut set = LabelSet::default();
    for (idx, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::parse(
                origin,
                idx + 1,
                format!("expected 5 fields `class cx cy w h`, found {}", fields.len()),
            ));
        }
        let class_id: u32 = fields[0].parse().map_err(|_| {
            Error::parse(origin, idx + 1, format!("bad class id `{}`", fields[0]))
        })?;
        let mut nums = [0.0f64; 4];
        for (slot, raw) in nums.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(origin, idx + 1, format!("bad number `{raw}`")))?;
        }
        let [cx, cy, bw, bh] = nums;
        let raw = BoundingBox {
            x_min: (cx - bw / 2.0) * w,
            y_min: (cy - bh / 2.0) * h,
            x_max: (cx + bw / 2.0) * w,
            y_max: (cy + bh / 2.0) * h,
        };
        match raw.clamp_to(w, h) {
            Some(bbox) => set.boxes.push(GroundTruthBox { bbox, class_id }),
            None => set.dropped += 1,
        }
    }
    if set.dropped > 0 {
        log::warn!(
            "{}: dropped {} zero-area label(s) after clamping",
            origin.display(),
            set.dropped
        );
    }
    Ok(set)
}

pub fn load_yolo_labels(
    label_path: impl AsRef<Path>,
    image_width: u32,
    image_height: u32,
) -> Result<LabelSet> {
    let path = label_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_yolo_labels(&text, path, image_width, image_height)
}

/// Inverse of label parsing: `class cx cy w h` with normalized coordinates.
pub fn to_yolo_line(gt: &GroundTruthBox, image_width: u32, image_height: u32) -> String {
    let (w, h) = (image_width as f64, image_height as f64);
    let (cx, cy) = gt.bbox.center();
    format!(
        "{} {} {} {} {}",
        gt.class_id,
        cx / w,
        cy / h,
        gt.bbox.width() / w,
        gt.bbox.height() / h
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, w: u32, h: u32) -> LabelSet {
        parse_yolo_labels(text, Path::new("t.txt"), w, h).unwrap()
    }

    #[test]
    fn manifest_keeps_file_order() {
        let text = concat!(
            "{\"id\":\"b\",\"image\":\"b.png\",\"text\":\"x\"}\n",
            "{\"id\":\"a\",\"image\":\"a.png\",\"labels\":\"a.txt\"}\n",
            "{\"image\":\"c.png\",\"id\":\"c\",\"pair\":\"hr/c.png\"}\n",
        );
        let m = Manifest::parse(text, Path::new("/data/test.jsonl")).unwrap();
        let ids: Vec<_> = m.samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(m.split_name, "test");
        assert_eq!(m.resolve(Path::new("a.png")), Path::new("/data/a.png"));
        assert_eq!(m.samples[2].pair_path.as_deref(), Some(Path::new("hr/c.png")));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"a\",\"image\":\"1.png\"}\n{\"id\":\"a\",\"image\":\"2.png\"}\n";
        let err = Manifest::parse(text, Path::new("m.jsonl")).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn empty_manifest() {
        let m = Manifest::parse("", Path::new("m.jsonl")).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "{\"id\":\"a\",\"image\":\"1.png\"}\n{\"id\":\"b\"\n";
        match Manifest::parse(text, Path::new("m.jsonl")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn canonical_manifest_round_trips_bytes() {
        let text = concat!(
            "{\"id\":\"p1\",\"image\":\"pages/p1.png\",\"text\":\"سلام دنیا\",\"labels\":\"l/p1.txt\"}\n",
            "{\"id\":\"p2\",\"image\":\"pages/p2.png\",\"pair\":\"hr/p2.png\"}\n",
        );
        let m = Manifest::parse(text, Path::new("m.jsonl")).unwrap();
        assert_eq!(m.to_jsonl().unwrap(), text);
    }

    #[test]
    fn yolo_center_box() {
        let set = parse("0 0.5 0.5 0.5 0.5", 100, 100);
        assert_eq!(set.boxes.len(), 1);
        let b = set.boxes[0];
        assert_eq!(b.class_id, 0);
        assert_eq!(
            (b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max),
            (25.0, 25.0, 75.0, 75.0)
        );
    }

    #[test]
    fn yolo_clamps_at_edges() {
        let b = parse("0 0.0 0.0 0.1 0.1", 100, 100).boxes[0].bbox;
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (0.0, 0.0, 5.0, 5.0));
    }

    #[test]
    fn yolo_empty_and_dropped() {
        assert_eq!(parse("", 10, 10), LabelSet::default());
        // entirely outside the image
        let set = parse("1 1.5 1.5 0.2 0.2\n0 0.5 0.5 0.2 0.2\n", 10, 10);
        assert_eq!(set.boxes.len(), 1);
        assert_eq!(set.dropped, 1);
    }

    #[test]
    fn yolo_errors_carry_line_numbers() {
        let err = parse_yolo_labels("0 0.5 0.5 0.5 0.5\n0 0.5 x 0.5 0.5", Path::new("l"), 8, 8)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_yolo_labels("0 0.5 0.5 0.5", Path::new("l"), 8, 8).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn raster_validates_buffer() {
        assert!(RasterImage::new(2, 2, ColorSpace::Rgb, vec![0; 11]).is_err());
        assert!(RasterImage::new(0, 2, ColorSpace::Gray, vec![]).is_err());
        assert!(RasterImage::new(2, 2, ColorSpace::Gray, vec![0; 4]).is_ok());
    }

    #[test]
    fn png_round_trip_preserves_digest() {
        let data: Vec<u8> = (0..5 * 3 * 3).map(|v| (v * 7) as u8).collect();
        let img = RasterImage::new(5, 3, ColorSpace::Rgb, data).unwrap();
        let back = RasterImage::decode(&img.to_png_bytes().unwrap()).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.content_digest(), img.content_digest());
        let gray = RasterImage::filled(5, 3, ColorSpace::Gray, 9).unwrap();
        assert_ne!(gray.content_digest(), gray.to_rgb().content_digest());
    }

    #[test]
    fn box_validation() {
        assert!(BoundingBox::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BoundingBox::new(-1.0, 1.0, 3.0, 2.0).is_err());
        assert!(Detection::new(BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn yolo_round_trip_within_tolerance(
            w in 16u32..2000, h in 16u32..2000,
            x0 in 0.0f64..0.45, y0 in 0.0f64..0.45,
            bw in 0.05f64..0.5, bh in 0.05f64..0.5,
            class_id in 0u32..5,
        ) {
            let (wf, hf) = (w as f64, h as f64);
            let gt = GroundTruthBox {
                bbox: BoundingBox::new(x0 * wf, y0 * hf, (x0 + bw) * wf, (y0 + bh) * hf).unwrap(),
                class_id,
            };
            let line = to_yolo_line(&gt, w, h);
            let set = parse(&line, w, h);
            prop_assert_eq!(set.boxes.len(), 1);
            let back = set.boxes[0];
            prop_assert_eq!(back.class_id, class_id);
            for (a, b) in [
                (back.bbox.x_min, gt.bbox.x_min),
                (back.bbox.y_min, gt.bbox.y_min),
                (back.bbox.x_max, gt.bbox.x_max),
                (back.bbox.y_max, gt.bbox.y_max),
            ] {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }
}
