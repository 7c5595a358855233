//! ONNX backends against tiny models assembled here from protobuf messages.
#![cfg(feature = "neural")]

use std::path::Path;

use newsocr_core::detect::{detect_regions, DetectorConfig, NeuralDetector, Task};
use newsocr_core::superres::{upscale, NeuralUpscaler, UpscalerConfig};
use newsocr_core::{ColorSpace, Error, RasterImage};
use prost::Message;
use tract_onnx::pb::{
    attribute_proto::AttributeType, tensor_proto::DataType, tensor_shape_proto, type_proto,
    AttributeProto, GraphProto, ModelProto, NodeProto, OperatorSetIdProto, TensorProto,
    TensorShapeProto, TypeProto, ValueInfoProto,
};

fn float_tensor(name: &str, dims: &[i64], data: Vec<f32>) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: dims.to_vec(),
        data_type: DataType::Float as i32,
        float_data: data,
        ..Default::default()
    }
}

fn int_tensor(name: &str, data: &[i64]) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: vec![data.len() as i64],
        data_type: DataType::Int64 as i32,
        int64_data: data.to_vec(),
        ..Default::default()
    }
}

fn ints(name: &str, v: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Ints as i32,
        ints: v.to_vec(),
        ..Default::default()
    }
}

fn value_info(name: &str, dims: &[i64]) -> ValueInfoProto {
    let dim = dims
        .iter()
        .map(|&d| tensor_shape_proto::Dimension {
            value: Some(tensor_shape_proto::dimension::Value::DimValue(d)),
            ..Default::default()
        })
        .collect();
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: DataType::Float as i32,
                shape: Some(TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str, attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        name: format!("{op}_{output}"),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        attribute,
        ..Default::default()
    }
}

fn save(path: &Path, graph: GraphProto) {
    let model = ModelProto {
        ir_version: 8,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        producer_name: "newsocr-tests".into(),
        graph: Some(graph),
        ..Default::default()
    };
    std::fs::write(path, model.encode_to_vec()).unwrap();
}

/// `1×3×S×S → 1×6×(S/8)²`: a zero-weight 8×8 stride-8 convolution whose
/// bias makes every anchor predict the same `(cx, cy, w, h, s0, s1)`.
fn write_detector(path: &Path, size: i64, row: [f32; 6]) {
    let cells = (size / 8) * (size / 8);
    let graph = GraphProto {
        name: "detector".into(),
        node: vec![
            node("Conv", &["images", "w", "b"], "grid", vec![ints("kernel_shape", &[8, 8]), ints("strides", &[8, 8])]),
            node("Reshape", &["grid", "shape"], "output0", vec![]),
        ],
        initializer: vec![
            float_tensor("w", &[6, 3, 8, 8], vec![0.0; 6 * 3 * 64]),
            float_tensor("b", &[6], row.to_vec()),
            int_tensor("shape", &[1, 6, cells]),
        ],
        input: vec![value_info("images", &[1, 3, size, size])],
        output: vec![value_info("output0", &[1, 6, cells])],
        ..Default::default()
    };
    save(path, graph);
}

/// `1×3×T×T → 1×3×4T×4T` nearest-neighbour: a 1×1 convolution copies each
/// channel sixteen times, then depth-to-space unfolds the copies.
fn write_upscaler(path: &Path, tile: i64) {
    let mut w = vec![0.0f32; 48 * 3];
    for o in 0..48 {
        w[o * 3 + o / 16] = 1.0;
    }
    let depth_mode = AttributeProto {
        name: "mode".into(),
        r#type: AttributeType::String as i32,
        s: b"CRD".to_vec(),
        ..Default::default()
    };
    let blocksize = AttributeProto {
        name: "blocksize".into(),
        r#type: AttributeType::Int as i32,
        i: 4,
        ..Default::default()
    };
    let graph = GraphProto {
        name: "upscaler".into(),
        node: vec![
            node("Conv", &["input", "w"], "copies", vec![ints("kernel_shape", &[1, 1])]),
            node("DepthToSpace", &["copies"], "output", vec![blocksize, depth_mode]),
        ],
        initializer: vec![float_tensor("w", &[48, 3, 1, 1], w)],
        input: vec![value_info("input", &[1, 3, tile, tile])],
        output: vec![value_info("output", &[1, 3, 4 * tile, 4 * tile])],
        ..Default::default()
    };
    save(path, graph);
}

fn page(w: u32, h: u32) -> RasterImage {
    let data = (0..w * h * 3).map(|i| (i * 37 % 251) as u8).collect();
    RasterImage::new(w, h, ColorSpace::Rgb, data).unwrap()
}

#[test]
fn detector_output_maps_back_to_page_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.onnx");
    write_detector(&path, 64, [32.0, 32.0, 20.0, 10.0, 0.1, 0.9]);

    let mut config = DetectorConfig::new(Task::Article);
    config.model_path = Some(path);
    config.input_size = 64;
    let detector = NeuralDetector::from_config(&config).unwrap();

    // 128×64 fits at scale 0.5 with 16 px of padding above and below:
    // (32, 32, 20, 10) in model space is (64, 32, 40, 20) on the page.
    let dets = detect_regions(&page(128, 64), &detector, &config).unwrap();
    assert_eq!(dets.len(), 1, "identical anchors collapse under NMS");
    let d = dets[0];
    assert_eq!(d.class_id, 1);
    assert!((d.confidence - 0.9).abs() < 1e-6);
    for (got, want) in [
        (d.bbox.x_min, 44.0),
        (d.bbox.y_min, 22.0),
        (d.bbox.x_max, 84.0),
        (d.bbox.y_max, 42.0),
    ] {
        assert!((got - want).abs() < 1e-4, "{:?}", d.bbox);
    }

    config.confidence_threshold = 0.95;
    assert!(detect_regions(&page(128, 64), &detector, &config).unwrap().is_empty());
}

#[test]
fn detector_rejects_mismatched_input_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.onnx");
    write_detector(&path, 64, [1.0, 1.0, 1.0, 1.0, 0.5, 0.5]);
    let detector = NeuralDetector::load(&path, 64).unwrap();
    let mut config = DetectorConfig::new(Task::Column);
    config.input_size = 96;
    assert!(matches!(
        detect_regions(&page(40, 40), &detector, &config),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn missing_or_corrupt_model_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(NeuralDetector::load(dir.path().join("none.onnx"), 64), Err(Error::Model(_))));
    let junk = dir.path().join("junk.onnx");
    std::fs::write(&junk, b"not a model").unwrap();
    assert!(matches!(NeuralDetector::load(&junk, 64), Err(Error::Model(_))));
}

fn nearest_x4(img: &RasterImage) -> RasterImage {
    let (w, h) = (img.width() * 4, img.height() * 4);
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data.push(img.sample(x / 4, y / 4, c));
            }
        }
    }
    RasterImage::new(w, h, ColorSpace::Rgb, data).unwrap()
}

#[test]
fn tiled_neural_upscale_matches_direct_nearest_neighbour() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sr.onnx");
    write_upscaler(&path, 16);
    let config = UpscalerConfig {
        model_path: Some(path),
        scale: 4,
        tile_size: 16,
        tile_overlap: 4,
    };
    let backend = NeuralUpscaler::from_config(&config).unwrap();
    // not a multiple of the tile stride, so edge tiles use reflected padding
    for (w, h) in [(37, 23), (16, 16), (5, 40)] {
        let img = page(w, h);
        let out = upscale(&img, &backend, &config).unwrap();
        assert_eq!(out, nearest_x4(&img), "{w}x{h}");
    }
}

#[test]
fn upscaler_config_must_match_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sr.onnx");
    write_upscaler(&path, 16);
    let mut config = UpscalerConfig {
        model_path: Some(path),
        scale: 4,
        tile_size: 16,
        tile_overlap: 4,
    };
    let backend = NeuralUpscaler::from_config(&config).unwrap();
    config.tile_size = 32;
    assert!(matches!(upscale(&page(8, 8), &backend, &config), Err(Error::ShapeMismatch { .. })));
}
