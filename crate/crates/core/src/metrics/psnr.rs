use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{ColorSpace, RasterImage};
use crate::{Error, Result};

const MAX_SAMPLE: f64 = 255.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsnrMode {
    /// Every channel of both images, which must share a shape.
    #[default]
    Rgb,
    /// BT.601 luma of both images; gray and RGB can be mixed.
    Luma,
}

/// `psnr_db` is `f64::INFINITY` exactly when `mse == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsnrScore {
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub mse: f64,
}

impl PsnrScore {
    pub fn from_mse(mse: f64) -> Self {
        let psnr_db = if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (MAX_SAMPLE * MAX_SAMPLE / mse).log10()
        };
        Self { psnr_db, mse }
    }

    pub fn is_exact(&self) -> bool {
        self.psnr_db.is_infinite()
    }
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("bad dB value `{t}`"))),
    }
}

fn luma(img: &RasterImage) -> Vec<f64> {
    match img.color() {
        ColorSpace::Gray => img.data().iter().map(|&v| v as f64).collect(),
        ColorSpace::Rgb => img
            .data()
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect(),
    }
}

pub fn psnr(reference: &RasterImage, candidate: &RasterImage, mode: PsnrMode) -> Result<PsnrScore> {
    let mismatch = || Error::ShapeMismatch {
        left: reference.shape_string(),
        right: candidate.shape_string(),
    };
    if reference.width() != candidate.width() || reference.height() != candidate.height() {
        return Err(mismatch());
    }
    let mse = match mode {
        PsnrMode::Rgb => {
            if reference.channels() != candidate.channels() {
                return Err(mismatch());
            }
            let sum: f64 = reference
                .data()
                .iter()
                .zip(candidate.data())
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            sum / reference.data().len() as f64
        }
        PsnrMode::Luma => {
            let (a, b) = (luma(reference), luma(candidate));
            let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            sum / a.len() as f64
        }
    };
    Ok(PsnrScore::from_mse(mse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ColorSpace;

    fn constant(v: u8) -> RasterImage {
        RasterImage::filled(7, 5, ColorSpace::Rgb, v).unwrap()
    }

    #[test]
    fn self_comparison_is_infinite() {
        let img = constant(42);
        let s = psnr(&img, &img, PsnrMode::Rgb).unwrap();
        assert_eq!(s.mse, 0.0);
        assert!(s.is_exact());
    }

    #[test]
    fn full_scale_difference_is_zero_db() {
        let s = psnr(&constant(0), &constant(255), PsnrMode::Rgb).unwrap();
        assert_eq!(s.mse, 65025.0);
        assert!(s.psnr_db.abs() < 1e-9);
    }

    #[test]
    fn unit_difference() {
        let s = psnr(&constant(10), &constant(11), PsnrMode::Rgb).unwrap();
        // 10*log10(255^2 / 1) = 20*log10(255) = 48.13080360867910...
        assert!((s.psnr_db - 48.130_803_608_679_1).abs() < 1e-9);
    }

    #[test]
    fn luma_mode_mixes_gray_and_rgb() {
        let gray = RasterImage::filled(7, 5, ColorSpace::Gray, 100).unwrap();
        let s = psnr(&gray, &constant(100), PsnrMode::Luma).unwrap();
        assert!(s.mse < 1e-20);
        assert!(psnr(&gray, &constant(100), PsnrMode::Rgb).is_err());
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = constant(0);
        let b = RasterImage::filled(5, 7, ColorSpace::Rgb, 0).unwrap();
        let msg = psnr(&a, &b, PsnrMode::Rgb).unwrap_err().to_string();
        assert!(msg.contains("7x5x3") && msg.contains("5x7x3"), "{msg}");
    }

    #[test]
    fn infinity_serializes_as_text() {
        let s = PsnrScore::from_mse(0.0);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"psnr_db":"inf","mse":0.0}"#);
        let back: PsnrScore = serde_json::from_str(&json).unwrap();
        assert!(back.is_exact());
    }

    #[test]
    fn larger_noise_never_raises_psnr() {
        use rand::{Rng, SeedableRng};
        let base = constant(128);
        let mut prev = f64::INFINITY;
        for amp in [0u8, 1, 2, 4, 8, 16, 32, 64, 127] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            // noise magnitude is exactly `amp` with random sign
            let data = base
                .data()
                .iter()
                .map(|&v| if rng.random::<bool>() { v + amp } else { v - amp })
                .collect();
            let noisy = RasterImage::new(7, 5, ColorSpace::Rgb, data).unwrap();
            let db = psnr(&base, &noisy, PsnrMode::Rgb).unwrap().psnr_db;
            assert!(db <= prev);
            prev = db;
        }
    }
}
