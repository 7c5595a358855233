use std::path::Path;

use super::{letterbox, BackendOutput, DetectorBackend, DetectorConfig, RawCandidate};
use crate::model::RasterImage;
use crate::onnx::{to_chw, OnnxModel};
use crate::{Error, Result};

/// ONNX detector with a `1×3×S×S` input in [0,1].
///
/// The output is `1×(4+C)×N` (or its transpose `1×N×(4+C)`): per anchor,
/// `cx, cy, w, h` in input pixels followed by C class scores. The smaller of
/// the two trailing axes is taken as the attribute axis.
pub struct NeuralDetector {
    model: OnnxModel,
}

impl NeuralDetector {
    pub fn load(path: impl AsRef<Path>, input_size: u32) -> Result<Self> {
        let s = input_size as usize;
        let model = OnnxModel::load(path.as_ref(), [1, 3, s, s])?;
        Ok(Self { model })
    }

    pub fn from_config(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let path = config
            .model_path
            .as_ref()
            .ok_or_else(|| Error::Config("neural detector needs model_path".into()))?;
        Self::load(path, config.input_size)
    }
}

pub(crate) fn decode_output(shape: &[usize], data: &[f32]) -> Result<Vec<RawCandidate>> {
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::Model(format!(
            "detector output shape {shape:?}, expected [1, 4+C, N]"
        )));
    }
    let attrs_first = shape[1] <= shape[2];
    let (attrs, anchors) = if attrs_first {
        (shape[1], shape[2])
    } else {
        (shape[2], shape[1])
    };
    if attrs < 5 {
        return Err(Error::Model(format!(
            "detector output shape {shape:?} has fewer than 5 attributes per anchor"
        )));
    }
    let at = |anchor: usize, attr: usize| {
        if attrs_first {
            data[attr * anchors + anchor]
        } else {
            data[anchor * attrs + attr]
        }
    };
    Ok((0..anchors)
        .map(|a| RawCandidate {
            cx: at(a, 0) as f64,
            cy: at(a, 1) as f64,
            w: at(a, 2) as f64,
            h: at(a, 3) as f64,
            class_scores: (4..attrs).map(|k| at(a, k)).collect(),
        })
        .collect())
}

impl DetectorBackend for NeuralDetector {
    fn infer(&self, image: &RasterImage, config: &DetectorConfig) -> Result<BackendOutput> {
        let expected = self.model.input_shape()[3] as u32;
        if config.input_size != expected {
            return Err(Error::ShapeMismatch {
                left: format!("model input {expected}x{expected}"),
                right: format!("config input_size {}", config.input_size),
            });
        }
        let (boxed, geometry) = letterbox(image, config.input_size)?;
        let (shape, data) = self.model.run(to_chw(&boxed))?;
        Ok(BackendOutput::Raw {
            candidates: decode_output(&shape, &data)?,
            letterbox: geometry,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_both_layouts() {
        // six anchors, one class: rows (cx, cy, w, h, score)
        let rows: Vec<[f32; 5]> = (0..6)
            .map(|i| [10.0 * i as f32, 20.0, 4.0, 6.0, 0.1 * i as f32])
            .collect();
        let anchor_major: Vec<f32> = rows.iter().flatten().copied().collect();
        let attr_major: Vec<f32> = (0..5).flat_map(|k| rows.iter().map(move |r| r[k])).collect();
        let a = decode_output(&[1, 6, 5], &anchor_major).unwrap();
        let b = decode_output(&[1, 5, 6], &attr_major).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!(a[3].cx, 30.0);
        assert_eq!(a[2].class_scores, vec![0.2]);
        assert!(decode_output(&[1, 4, 9], &[0.0; 36]).is_err());
    }
}
