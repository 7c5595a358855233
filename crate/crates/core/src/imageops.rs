//! Deterministic image manipulation: dataset degradation, crops, resampling,
//! and a pinned JPEG codec.

use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, ColorSpace, RasterImage};
use crate::{Error, Result};

/// Integer-factor downscale followed by a lossy JPEG round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeSpec {
    pub scale_factor: u32,
    /// Points subtracted from `base_quality` on the 1–100 encoder scale.
    pub quality_reduction: u8,
    pub base_quality: u8,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self {
            scale_factor: 4,
            quality_reduction: 30,
            base_quality: 100,
        }
    }
}

impl DegradeSpec {
    pub fn effective_quality(&self) -> Result<u8> {
        if self.scale_factor == 0 {
            return Err(Error::Invalid("scale factor must be at least 1".into()));
        }
        if self.quality_reduction >= 100 || !(1..=100).contains(&self.base_quality) {
            return Err(Error::Invalid(format!(
                "quality reduction {} / base quality {} out of range",
                self.quality_reduction, self.base_quality
            )));
        }
        match self.base_quality.checked_sub(self.quality_reduction) {
            Some(q) if q >= 1 => Ok(q),
            _ => Err(Error::Invalid(format!(
                "effective JPEG quality {} - {} is below 1",
                self.base_quality, self.quality_reduction
            ))),
        }
    }
}

pub trait JpegCodec: Send + Sync {
    fn encode(&self, image: &RasterImage, quality: u8) -> Result<Vec<u8>>;
    fn decode(&self, bytes: &[u8]) -> Result<RasterImage>;
}

/// Baseline JPEG with 4:2:0 chroma subsampling.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardJpeg;

impl JpegCodec for StandardJpeg {
    fn encode(&self, image: &RasterImage, quality: u8) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut encoder = Encoder::new(&mut out, quality);
        encoder.set_sampling_factor(SamplingFactor::F_2_2);
        let color = match image.color() {
            ColorSpace::Gray => ColorType::Luma,
            ColorSpace::Rgb => ColorType::Rgb,
        };
        let (w, h) = (image.width(), image.height());
        if w > u16::MAX as u32 || h > u16::MAX as u32 {
            return Err(Error::Codec(format!("{w}x{h} exceeds JPEG dimension limits")));
        }
        encoder
            .encode(image.data(), w as u16, h as u16, color)
            .map_err(|e| Error::Codec(e.to_string()))?;
        Ok(out)
    }

    fn decode(&self, bytes: &[u8]) -> Result<RasterImage> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
            .map_err(|e| Error::Codec(e.to_string()))?;
        RasterImage::from_dynamic(img)
    }
}

#[derive(Debug, Clone)]
pub struct Degraded {
    pub image: RasterImage,
    /// Encoded bytes; written verbatim as the low-resolution file.
    pub jpeg: Vec<u8>,
    pub quality: u8,
}

pub fn degrade(image: &RasterImage, spec: &DegradeSpec) -> Result<Degraded> {
    degrade_with(image, spec, &StandardJpeg)
}

pub fn degrade_with(
    image: &RasterImage,
    spec: &DegradeSpec,
    codec: &dyn JpegCodec,
) -> Result<Degraded> {
    let quality = spec.effective_quality()?;
    let s = spec.scale_factor;
    if image.width() < s || image.height() < s {
        return Err(Error::Invalid(format!(
            "{}x{} image is smaller than scale factor {s}",
            image.width(),
            image.height()
        )));
    }
    let small = box_decimate(image, s);
    let jpeg = codec.encode(&small, quality)?;
    let decoded = codec.decode(&jpeg)?;
    Ok(Degraded {
        image: decoded,
        jpeg,
        quality,
    })
}

/// Round-half-up for non-negative values, clamped to the 8-bit range.
#[inline]
fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Averages each `s×s` block; trailing rows/columns that do not fill a block are dropped.
fn box_decimate(image: &RasterImage, s: u32) -> RasterImage {
    let (w, h) = (image.width() / s, image.height() / s);
    let ch = image.channels();
    let n = s * s;
    let mut data = Vec::with_capacity(w as usize * h as usize * ch);
    for oy in 0..h {
        for ox in 0..w {
            for c in 0..ch {
                let mut sum = 0u32;
                for dy in 0..s {
                    for dx in 0..s {
                        sum += image.sample(ox * s + dx, oy * s + dy, c) as u32;
                    }
                }
                data.push(((2 * sum + n) / (2 * n)) as u8);
            }
        }
    }
    RasterImage::new(w, h, image.color(), data).expect("dimensions derived from source")
}

/// Pads the box, clamps it to the image, rounds outward to whole pixels, and copies.
pub fn crop(image: &RasterImage, bbox: &BoundingBox, padding: f64) -> Result<RasterImage> {
    let (x0, y0, x1, y1) = crop_window(image.width(), image.height(), bbox, padding)
        .ok_or_else(|| Error::Invalid(format!("crop of {bbox:?} is empty inside the image")))?;
    let ch = image.channels();
    let mut data = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize * ch);
    let row = image.width() as usize * ch;
    for y in y0..y1 {
        let start = y as usize * row + x0 as usize * ch;
        data.extend_from_slice(&image.data()[start..start + (x1 - x0) as usize * ch]);
    }
    RasterImage::new(x1 - x0, y1 - y0, image.color(), data)
}

/// Integer pixel window `[x0,x1)×[y0,y1)` that `crop` would copy.
pub fn crop_window(
    width: u32,
    height: u32,
    bbox: &BoundingBox,
    padding: f64,
) -> Option<(u32, u32, u32, u32)> {
    let (w, h) = (width as f64, height as f64);
    let x0 = (bbox.x_min - padding).max(0.0).floor();
    let y0 = (bbox.y_min - padding).max(0.0).floor();
    let x1 = (bbox.x_max + padding).min(w).ceil();
    let y1 = (bbox.y_max + padding).min(h).ceil();
    (x0 < x1 && y0 < y1).then_some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeKernel {
    /// Area average; exact block mean for integer downscales.
    Box,
    Bilinear,
    /// Keys cubic convolution, a = -0.5.
    Bicubic,
}

/// Per-output-index contributions along one axis: (first source index, weights).
type AxisWeights = Vec<(usize, Vec<f64>)>;

fn area_weights(src: usize, dst: usize) -> AxisWeights {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = lo + scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            let weights: Vec<f64> = (first..last)
                .map(|i| (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0) / scale)
                .collect();
            (first, weights)
        })
        .collect()
}

fn kernel_weights(src: usize, dst: usize, radius: isize, kernel: impl Fn(f64) -> f64) -> AxisWeights {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let base = center.floor() as isize;
            let first = base - radius + 1;
            let last = base + radius;
            let clamp = |t: isize| t.clamp(0, src as isize - 1) as usize;
            let lowest = clamp(first);
            let mut weights = vec![0.0; clamp(last) - lowest + 1];
            // taps outside the image fold onto the edge sample
            for t in first..=last {
                weights[clamp(t) - lowest] += kernel(center - t as f64);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            (lowest, weights)
        })
        .collect()
}

fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

fn linear(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

fn axis_weights(src: usize, dst: usize, kernel: ResizeKernel) -> AxisWeights {
    match kernel {
        ResizeKernel::Box => area_weights(src, dst),
        ResizeKernel::Bilinear => kernel_weights(src, dst, 1, linear),
        ResizeKernel::Bicubic => kernel_weights(src, dst, 2, cubic),
    }
}

/// Separable resample in double precision with a single rounding at the end.
pub fn resize(
    image: &RasterImage,
    new_width: u32,
    new_height: u32,
    kernel: ResizeKernel,
) -> Result<RasterImage> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::Invalid(format!(
            "resize target {new_width}x{new_height} must be positive"
        )));
    }
    if (new_width, new_height) == (image.width(), image.height()) {
        return Ok(image.clone());
    }
    let (sw, sh) = (image.width() as usize, image.height() as usize);
    let (dw, dh) = (new_width as usize, new_height as usize);
    let ch = image.channels();
    let xw = axis_weights(sw, dw, kernel);
    let yw = axis_weights(sh, dh, kernel);

    // horizontal pass into f64 rows
    let mut horiz = vec![0.0f64; sh * dw * ch];
    let src = image.data();
    for y in 0..sh {
        for (ox, (first, weights)) in xw.iter().enumerate() {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    acc += w * src[(y * sw + first + k) * ch + c] as f64;
                }
                horiz[(y * dw + ox) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0u8; dh * dw * ch];
    for (oy, (first, weights)) in yw.iter().enumerate() {
        for ox in 0..dw {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    acc += w * horiz[((first + k) * dw + ox) * ch + c];
                }
                out[(oy * dw + ox) * ch + c] = quantize(acc);
            }
        }
    }
    RasterImage::new(new_width, new_height, image.color(), out)
}
