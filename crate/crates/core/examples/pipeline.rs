//! Writes a self-contained 3-page replay fixture and runs the pipeline on it.
//!
//! ```text
//! cargo run -p newsocr-core --example pipeline -- <dir>
//! ```
//!
//! The fixture holds synthetic pages, replay answers for both detectors and
//! the recognizer (keyed by image digest), a manifest with page-level
//! reference texts, and `pipeline.toml`. The upscaler is bicubic, so column
//! fixtures are keyed by the digests of bicubic-upscaled article crops.

use std::path::{Path, PathBuf};

use newsocr_core::detect::{write_detection_records, DetectionRecord, Task};
use newsocr_core::imageops::crop;
use newsocr_core::pipeline::{run_pipeline, PipelineConfig};
use newsocr_core::recognize::TextFixture;
use newsocr_core::superres::{upscale, BicubicUpscaler, UpscalerConfig};
use newsocr_core::{BoundingBox, ColorSpace, Detection, Manifest, RasterImage, Sample};

const PADDING: f64 = 4.0;

const CONFIG: &str = r#"workers = 2
output_root = "out"
keep_intermediates = true
crop_padding = 4.0

[article_detector]
backend = "replay"
fixture = "articles.jsonl"
task = "article"

[upscaler]
backend = "bicubic"
scale = 4

[column_detector]
backend = "replay"
fixture = "columns.jsonl"
task = "column"

[recognizer]
provider_kind = "replay"
model_name = "replay-fixture"
replay_fixture = "text.jsonl"
"#;

struct Column {
    x: (f64, f64),
    text: &'static str,
}

struct Article {
    bbox: (f64, f64, f64, f64),
    columns: Vec<Column>,
}

struct Page {
    id: &'static str,
    size: (u32, u32),
    articles: Vec<Article>,
}

fn pages() -> Vec<Page> {
    let col = |x0, x1, text| Column { x: (x0, x1), text };
    vec![
        Page {
            id: "page-001",
            size: (200, 160),
            articles: vec![
                Article {
                    bbox: (10.0, 10.0, 95.0, 150.0),
                    columns: vec![
                        col(20.0, 170.0, "لاہور میں بارش کا امکان ہے۔"),
                        col(200.0, 350.0, "محکمہ موسمیات نے خبردار کیا۔"),
                    ],
                },
                Article {
                    bbox: (105.0, 10.0, 190.0, 150.0),
                    columns: vec![
                        col(20.0, 170.0, "قومی اسمبلی کا اجلاس آج ہوگا۔"),
                        col(200.0, 350.0, "Unfortunately, I am unable to extract text from the image..."),
                    ],
                },
            ],
        },
        Page {
            id: "page-002",
            size: (200, 160),
            articles: vec![Article {
                bbox: (20.0, 20.0, 176.0, 120.0),
                // x-centers 100, 300, 500 in the upscaled crop
                columns: vec![col(60.0, 140.0, "a"), col(260.0, 340.0, "b"), col(460.0, 540.0, "c")],
            }],
        },
        Page {
            id: "page-003",
            size: (160, 120),
            articles: Vec::new(),
        },
    ]
}

fn render(page_index: u32, (w, h): (u32, u32)) -> RasterImage {
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            data.push(((x * 7 + y * 3 + page_index * 50) % 256) as u8);
            data.push(((x * y + page_index * 11) % 256) as u8);
            data.push((((x / 8 + y / 8) % 2) * 200 + 20) as u8);
        }
    }
    RasterImage::new(w, h, ColorSpace::Rgb, data).expect("consistent dimensions")
}

pub fn write_fixture(dir: &Path) -> newsocr_core::Result<()> {
    std::fs::create_dir_all(dir.join("pages")).map_err(|e| newsocr_core::Error::Config(e.to_string()))?;
    let scaler = UpscalerConfig::default();
    let mut article_records = Vec::new();
    let mut column_records = Vec::new();
    let mut texts = Vec::new();
    let mut samples = Vec::new();

    for (i, page) in pages().into_iter().enumerate() {
        let image = render(i as u32, page.size);
        let rel = format!("pages/{}.png", page.id);
        image.save_png(dir.join(&rel))?;
        let mut detections = Vec::new();
        let mut reference = Vec::new();
        for art in &page.articles {
            let (x0, y0, x1, y1) = art.bbox;
            let bbox = BoundingBox::new(x0, y0, x1, y1)?;
            detections.push(Detection::new(bbox, 0, 0.9)?);
            let up = upscale(&crop(&image, &bbox, PADDING)?, &BicubicUpscaler, &scaler)?;
            let mut cols = Vec::new();
            for c in &art.columns {
                let cb = BoundingBox::new(c.x.0, 8.0, c.x.1, up.height() as f64 - 8.0)?;
                cols.push(Detection::new(cb, 0, 0.8)?);
                texts.push(TextFixture {
                    image_digest: crop(&up, &cb, 0.0)?.content_digest(),
                    text: c.text.to_string(),
                });
            }
            // stored left to right; the pipeline orders them
            column_records.push(DetectionRecord {
                sample_id: Some(page.id.to_string()),
                image_digest: up.content_digest(),
                task: Task::Column,
                detections: cols,
            });
            let mut transcripts: Vec<&str> = art.columns.iter().rev().map(|c| c.text).collect();
            if transcripts.iter().any(|t| t.starts_with("Unfortunately")) {
                transcripts.retain(|t| !t.starts_with("Unfortunately"));
            }
            reference.push(transcripts.join("\n"));
        }
        // right-hand article first in reading order
        reference.reverse();
        article_records.push(DetectionRecord {
            sample_id: Some(page.id.to_string()),
            image_digest: image.content_digest(),
            task: Task::Article,
            detections,
        });
        let mut sample = Sample::new(page.id, rel);
        if !reference.is_empty() {
            sample.reference_text = Some(reference.join("\n"));
        }
        samples.push(sample);
    }

    write_detection_records(dir.join("articles.jsonl"), &article_records)?;
    write_detection_records(dir.join("columns.jsonl"), &column_records)?;
    let mut lines = String::new();
    for t in &texts {
        lines.push_str(&serde_json::to_string(t)?);
        lines.push('\n');
    }
    let io = |p: PathBuf, body: &str| {
        std::fs::write(&p, body).map_err(|e| newsocr_core::Error::Config(format!("{}: {e}", p.display())))
    };
    io(dir.join("text.jsonl"), &lines)?;
    io(dir.join("pipeline.toml"), CONFIG)?;
    Manifest::new("replay-fixture", samples)?.write(dir.join("manifest.jsonl"))
}

fn main() -> newsocr_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "replay-fixture".into()));
    write_fixture(&dir)?;
    let config = PipelineConfig::load(dir.join("pipeline.toml"))?;
    let manifest = newsocr_core::load_manifest(dir.join("manifest.jsonl"))?;
    let run = run_pipeline(&manifest, &config)?;
    for record in &run.records {
        println!("== {} ({} articles)", record.sample_id, record.articles.len());
        for (n, a) in record.articles.iter().enumerate() {
            println!("-- article {n}\n{}", a.text.as_deref().unwrap_or("<failed>"));
        }
    }
    println!("config digest {}", run.manifest.config_digest);
    Ok(())
}
