//! Thin wrapper over tract for fixed-shape NCHW float models.

use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use crate::{Error, Result};

pub(crate) struct OnnxModel {
    plan: Arc<TypedRunnableModel>,
    input_shape: [usize; 4],
}

fn model_err(path: &Path) -> impl Fn(TractError) -> Error + '_ {
    move |e| Error::Model(format!("{}: {e:#}", path.display()))
}

impl OnnxModel {
    /// Loads the model with its single input pinned to `input_shape`.
    pub(crate) fn load(path: &Path, input_shape: [usize; 4]) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Model(format!("{}: model file not found", path.display())));
        }
        let err = model_err(path);
        let model = tract_onnx::onnx().model_for_path(path).map_err(&err)?;
        if model.inputs.len() != 1 {
            return Err(Error::Model(format!(
                "{}: expected a single input tensor, found {}",
                path.display(),
                model.inputs.len()
            )));
        }
        let plan = model
            .with_input_fact(0, f32::fact(input_shape).into())
            .map_err(&err)?
            .into_optimized()
            .map_err(&err)?
            .into_runnable()
            .map_err(&err)?;
        Ok(Self { plan, input_shape })
    }

    pub(crate) fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    /// Runs one input; returns the first output's shape and data.
    pub(crate) fn run(&self, input: Vec<f32>) -> Result<(Vec<usize>, Vec<f32>)> {
        let tensor = Tensor::from_shape(&self.input_shape, &input)
            .map_err(|e| Error::Model(format!("input tensor: {e}")))?;
        let outputs = self
            .plan
            .run(tvec!(tensor.into()))
            .map_err(|e| Error::Model(format!("inference failed: {e:#}")))?;
        let first = outputs
            .first()
            .ok_or_else(|| Error::Model("model produced no outputs".into()))?;
        let view = first
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Model(format!("output is not f32: {e}")))?;
        Ok((view.shape().to_vec(), view.iter().copied().collect()))
    }
}

/// NCHW float planes in [0,1]; gray images fill all three planes.
pub(crate) fn to_chw(image: &crate::RasterImage) -> Vec<f32> {
    let rgb = image.to_rgb();
    let plane = rgb.width() as usize * rgb.height() as usize;
    let mut out = vec![0.0f32; plane * 3];
    for (i, px) in rgb.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c] as f32 / 255.0;
        }
    }
    out
}
