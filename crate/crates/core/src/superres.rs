//! ×N super-resolution of article crops with tiled inference, plus PSNR
//! scoring of upscaled/reference pairs.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imageops::{resize, ResizeKernel};
use crate::metrics::{psnr, PsnrMode, PsnrScore};
use crate::model::{ColorSpace, Manifest, RasterImage};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpscalerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default = "default_scale")]
    pub scale: u32,
    #[serde(default = "default_tile")]
    pub tile_size: u32,
    #[serde(default = "default_overlap")]
    pub tile_overlap: u32,
}

fn default_scale() -> u32 {
    4
}

fn default_tile() -> u32 {
    256
}

fn default_overlap() -> u32 {
    16
}

impl Default for UpscalerConfig {
    fn default() -> Self {
        Self {
            model_path: None,
            scale: default_scale(),
            tile_size: default_tile(),
            tile_overlap: default_overlap(),
        }
    }
}

impl UpscalerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::Config("upscaler scale must be at least 1".into()));
        }
        if self.tile_size == 0 || self.tile_overlap >= self.tile_size {
            return Err(Error::Config(format!(
                "tile_overlap {} must be smaller than tile_size {}",
                self.tile_overlap, self.tile_size
            )));
        }
        Ok(())
    }
}

/// An upscaling model. Output must be exactly `scale·W × scale·H`.
pub trait UpscalerBackend: Send + Sync {
    fn upscale(&self, image: &RasterImage, config: &UpscalerConfig) -> Result<RasterImage>;
}

pub fn upscale(
    image: &RasterImage,
    backend: &dyn UpscalerBackend,
    config: &UpscalerConfig,
) -> Result<RasterImage> {
    config.validate()?;
    let out = backend.upscale(image, config)?;
    let (w, h) = (image.width() * config.scale, image.height() * config.scale);
    if (out.width(), out.height()) != (w, h) {
        return Err(Error::ShapeMismatch {
            left: format!("expected {w}x{h}"),
            right: format!("backend returned {}x{}", out.width(), out.height()),
        });
    }
    Ok(out)
}

/// Classical bicubic interpolation; needs no model file.
#[derive(Debug, Clone, Copy, Default)]
pub struct BicubicUpscaler;

impl UpscalerBackend for BicubicUpscaler {
    fn upscale(&self, image: &RasterImage, config: &UpscalerConfig) -> Result<RasterImage> {
        resize(
            image,
            image.width() * config.scale,
            image.height() * config.scale,
            ResizeKernel::Bicubic,
        )
    }
}

/// Serves `<digest>.png` files from a directory, keyed by input content digest.
#[derive(Debug, Clone)]
pub struct ReplayUpscaler {
    dir: PathBuf,
}

impl ReplayUpscaler {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "replay upscaler directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }

    pub fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.png"))
    }

    /// Stores `output` as the replay answer for `input`.
    pub fn record(&self, input: &RasterImage, output: &RasterImage) -> Result<()> {
        output.save_png(self.entry_path(&input.content_digest()))
    }
}

impl UpscalerBackend for ReplayUpscaler {
    fn upscale(&self, image: &RasterImage, _config: &UpscalerConfig) -> Result<RasterImage> {
        let digest = image.content_digest();
        let path = self.entry_path(&digest);
        if !path.is_file() {
            return Err(Error::FixtureMiss { digest });
        }
        RasterImage::load(path)
    }
}

/// One model evaluation on a square CHW float tile in [0,1].
pub trait TileModel: Sync {
    /// `tile` holds `3·t·t` values; the result must hold `3·(s·t)²`.
    fn run_tile(&self, tile: &[f32], tile_size: usize) -> Result<Vec<f32>>;
}

/// Mirror index without repeating the edge sample, for any overshoot.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Smallest padded length `tile + k·stride` covering `len`.
fn padded_len(len: usize, tile: usize, stride: usize) -> usize {
    if len <= tile {
        tile
    } else {
        tile + (len - tile).div_ceil(stride) * stride
    }
}

/// Overlapping-tile inference with reflective padding and unweighted
/// averaging where tiles overlap. Tiles run in parallel; blending order is
/// fixed, so the result does not depend on scheduling.
pub fn tiled_upscale(
    image: &RasterImage,
    scale: u32,
    tile_size: u32,
    tile_overlap: u32,
    model: &dyn TileModel,
) -> Result<RasterImage> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let (s, t) = (scale as usize, tile_size as usize);
    let stride = t - tile_overlap as usize;
    let (pw, ph) = (padded_len(w, t, stride), padded_len(h, t, stride));
    let rgb = image.to_rgb();

    let plane_at = |c: usize, x: usize, y: usize| -> f32 {
        let sx = reflect(x as isize, w);
        let sy = reflect(y as isize, h);
        rgb.data()[(sy * w + sx) * 3 + c] as f32 / 255.0
    };

    let origins: Vec<(usize, usize)> = (0..=(ph - t) / stride)
        .flat_map(|ty| (0..=(pw - t) / stride).map(move |tx| (tx * stride, ty * stride)))
        .collect();

    let outputs: Vec<Vec<f32>> = origins
        .par_iter()
        .map(|&(ox, oy)| {
            let mut tile = vec![0.0f32; 3 * t * t];
            for c in 0..3 {
                for y in 0..t {
                    for x in 0..t {
                        tile[(c * t + y) * t + x] = plane_at(c, ox + x, oy + y);
                    }
                }
            }
            let out = model.run_tile(&tile, t)?;
            if out.len() != 3 * s * t * s * t {
                return Err(Error::ShapeMismatch {
                    left: format!("expected 3x{}x{} tile output", s * t, s * t),
                    right: format!("{} values", out.len()),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let (ow, oh) = (s * w, s * h);
    let st = s * t;
    let mut sum = vec![0.0f64; 3 * ow * oh];
    let mut count = vec![0u32; ow * oh];
    for (&(ox, oy), out) in origins.iter().zip(&outputs) {
        for y in 0..st {
            let gy = s * oy + y;
            if gy >= oh {
                break;
            }
            for x in 0..st {
                let gx = s * ox + x;
                if gx >= ow {
                    break;
                }
                count[gy * ow + gx] += 1;
                for c in 0..3 {
                    sum[(gy * ow + gx) * 3 + c] += out[(c * st + y) * st + x] as f64;
                }
            }
        }
    }
    let data: Vec<u8> = sum
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mean = v / count[i / 3] as f64;
            (mean * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect();
    let out = RasterImage::new(ow as u32, oh as u32, ColorSpace::Rgb, data)?;
    Ok(match image.color() {
        ColorSpace::Rgb => out,
        ColorSpace::Gray => to_gray(&out),
    })
}

fn to_gray(rgb: &RasterImage) -> RasterImage {
    let data = rgb
        .data()
        .chunks_exact(3)
        .map(|p| ((p[0] as u32 + p[1] as u32 + p[2] as u32 + 1) / 3) as u8)
        .collect();
    RasterImage::new(rgb.width(), rgb.height(), ColorSpace::Gray, data)
        .expect("same dimensions as source")
}

#[cfg(feature = "neural")]
pub use neural::NeuralUpscaler;

#[cfg(feature = "neural")]
mod neural {
    use super::*;
    use crate::onnx::OnnxModel;

    /// ONNX upscaler taking `1×3×T×T` tiles and returning `1×3×sT×sT`.
    pub struct NeuralUpscaler {
        model: OnnxModel,
        scale: u32,
    }

    impl NeuralUpscaler {
        pub fn from_config(config: &UpscalerConfig) -> Result<Self> {
            config.validate()?;
            let path = config
                .model_path
                .as_ref()
                .ok_or_else(|| Error::Config("neural upscaler needs model_path".into()))?;
            let t = config.tile_size as usize;
            Ok(Self {
                model: OnnxModel::load(path, [1, 3, t, t])?,
                scale: config.scale,
            })
        }
    }

    impl TileModel for NeuralUpscaler {
        fn run_tile(&self, tile: &[f32], tile_size: usize) -> Result<Vec<f32>> {
            let (shape, data) = self.model.run(tile.to_vec())?;
            let st = self.scale as usize * tile_size;
            if shape != [1, 3, st, st] {
                return Err(Error::ShapeMismatch {
                    left: format!("expected upscaler output [1, 3, {st}, {st}]"),
                    right: format!("model returned {shape:?}"),
                });
            }
            Ok(data)
        }
    }

    impl UpscalerBackend for NeuralUpscaler {
        fn upscale(&self, image: &RasterImage, config: &UpscalerConfig) -> Result<RasterImage> {
            if config.scale != self.scale
                || self.model.input_shape()[3] != config.tile_size as usize
            {
                return Err(Error::ShapeMismatch {
                    left: format!(
                        "model built for scale {} tile {}",
                        self.scale,
                        self.model.input_shape()[3]
                    ),
                    right: format!("config scale {} tile {}", config.scale, config.tile_size),
                });
            }
            tiled_upscale(image, config.scale, config.tile_size, config.tile_overlap, self)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<PsnrScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean of per-pair PSNR over finite pairs; exact (infinite) pairs are counted apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrPairsReport {
    pub mode: PsnrMode,
    pub mean_psnr_db: Option<f64>,
    pub scored_pairs: usize,
    pub exact_pairs: usize,
    pub failed_pairs: usize,
    pub pairs: Vec<PairScore>,
}

impl SrPairsReport {
    pub fn from_pairs(mode: PsnrMode, pairs: Vec<PairScore>) -> Result<Self> {
        let ok: Vec<&PsnrScore> = pairs.iter().filter_map(|p| p.score.as_ref()).collect();
        let failed = pairs.len() - ok.len();
        if ok.is_empty() {
            return Err(Error::Invalid(format!(
                "no PSNR pair could be scored ({failed} failed)"
            )));
        }
        let finite: Vec<f64> = ok.iter().filter(|s| !s.is_exact()).map(|s| s.psnr_db).collect();
        let mean = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
        Ok(Self {
            mode,
            mean_psnr_db: mean,
            scored_pairs: ok.len(),
            exact_pairs: ok.len() - finite.len(),
            failed_pairs: failed,
            pairs,
        })
    }

    pub fn summary(&self) -> String {
        match self.mean_psnr_db {
            None => format!("all exact ({} pairs)", self.exact_pairs),
            Some(db) => format!(
                "mean PSNR {db:.2} dB over {} pairs ({} exact, {} failed)",
                self.scored_pairs - self.exact_pairs,
                self.exact_pairs,
                self.failed_pairs
            ),
        }
    }
}

pub fn score_image_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a RasterImage, &'a RasterImage)>,
    mode: PsnrMode,
) -> Result<SrPairsReport> {
    let scored = pairs
        .into_iter()
        .map(|(id, output, reference)| pair_score(id, psnr(reference, output, mode)))
        .collect();
    SrPairsReport::from_pairs(mode, scored)
}

fn pair_score(id: &str, r: Result<PsnrScore>) -> PairScore {
    match r {
        Ok(score) => PairScore {
            sample_id: id.to_string(),
            score: Some(score),
            error: None,
        },
        Err(e) => PairScore {
            sample_id: id.to_string(),
            score: None,
            error: Some(e.to_string()),
        },
    }
}

/// Scores every manifest row whose `image` is an upscaled output and whose
/// `pair` is the reference.
pub fn score_sr_pairs(manifest: &Manifest, mode: PsnrMode) -> Result<SrPairsReport> {
    let pairs: Vec<PairScore> = manifest
        .samples
        .par_iter()
        .map(|s| {
            let r = (|| {
                let pair = s
                    .pair_path
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("sample has no `pair` reference".into()))?;
                let output = RasterImage::load(manifest.resolve(&s.image_path))?;
                let reference = RasterImage::load(manifest.resolve(pair))?;
                psnr(&reference, &output, mode)
            })();
            pair_score(&s.id, r)
        })
        .collect();
    for p in &pairs {
        if let Some(e) = &p.error {
            log::warn!("psnr pair {}: {e}", p.sample_id);
        }
    }
    SrPairsReport::from_pairs(mode, pairs)
}

/// Writes every digest-keyed output produced by `backend` into a replay directory.
pub fn record_replay(
    dir: &Path,
    inputs: &[RasterImage],
    backend: &dyn UpscalerBackend,
    config: &UpscalerConfig,
) -> Result<HashMap<String, PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let replay = ReplayUpscaler::new(dir)?;
    let mut written = HashMap::new();
    for img in inputs {
        let out = upscale(img, backend, config)?;
        replay.record(img, &out)?;
        let digest = img.content_digest();
        written.insert(digest.clone(), replay.entry_path(&digest));
    }
    Ok(written)
}
