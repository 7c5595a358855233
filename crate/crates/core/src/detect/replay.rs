use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendOutput, DetectorBackend, DetectorConfig, Task};
use crate::model::{Detection, RasterImage};
use crate::{Error, Result};

/// Replay fixture line, also used for detection exports (with `sample_id`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub image_digest: String,
    pub task: Task,
    pub detections: Vec<Detection>,
}

pub fn read_detection_records(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        for d in &rec.detections {
            Detection::new(d.bbox, d.class_id, d.confidence)
                .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_detection_records(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Serves recorded detections keyed by image content digest and task.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    entries: HashMap<(String, Task), Vec<Detection>>,
}

impl ReplayDetector {
    pub fn from_records(records: Vec<DetectionRecord>) -> Result<Self> {
        let mut entries: HashMap<(String, Task), Vec<Detection>> = HashMap::new();
        for r in records {
            let key = (r.image_digest.clone(), r.task);
            match entries.get(&key) {
                Some(existing) if *existing != r.detections => {
                    return Err(Error::Config(format!(
                        "replay fixture has conflicting entries for digest {} ({})",
                        r.image_digest, r.task
                    )));
                }
                Some(_) => {}
                None => {
                    entries.insert(key, r.detections);
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(read_detection_records(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl DetectorBackend for ReplayDetector {
    fn infer(&self, image: &RasterImage, config: &DetectorConfig) -> Result<BackendOutput> {
        let digest = image.content_digest();
        match self.entries.get(&(digest.clone(), config.task)) {
            Some(dets) => Ok(BackendOutput::Final(dets.clone())),
            None => Err(Error::FixtureMiss { digest }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::detect_regions;
    use crate::model::{BoundingBox, ColorSpace};

    #[test]
    fn replays_exact_detections_and_misses_loudly() {
        let img = RasterImage::filled(8, 8, ColorSpace::Rgb, 3).unwrap();
        let dets = vec![
            Detection::new(BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap(), 0, 0.9).unwrap(),
            Detection::new(BoundingBox::new(4.0, 4.0, 8.0, 8.0).unwrap(), 0, 0.4).unwrap(),
        ];
        let backend = ReplayDetector::from_records(vec![DetectionRecord {
            sample_id: None,
            image_digest: img.content_digest(),
            task: Task::Article,
            detections: dets.clone(),
        }])
        .unwrap();
        let cfg = DetectorConfig::new(Task::Article);
        assert_eq!(detect_regions(&img, &backend, &cfg).unwrap(), dets);
        assert_eq!(detect_regions(&img, &backend, &cfg).unwrap(), dets);

        let other = RasterImage::filled(8, 8, ColorSpace::Rgb, 4).unwrap();
        assert!(matches!(
            detect_regions(&other, &backend, &cfg),
            Err(Error::FixtureMiss { .. })
        ));
        // same image, other task
        assert!(detect_regions(&img, &backend, &DetectorConfig::new(Task::Column)).is_err());
    }

    #[test]
    fn fixture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        fs::write(
            &path,
            "{\"image_digest\":\"ab\",\"task\":\"column\",\"detections\":[{\"x_min\":1.0,\"y_min\":2.0,\"x_max\":3.0,\"y_max\":4.0,\"class_id\":0,\"confidence\":0.5}]}\n",
        )
        .unwrap();
        let recs = read_detection_records(&path).unwrap();
        assert_eq!(recs[0].detections[0].bbox.y_max, 4.0);
        let out = dir.path().join("out.jsonl");
        write_detection_records(&out, &recs).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn invalid_fixture_box_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        fs::write(
            &path,
            "{\"image_digest\":\"ab\",\"task\":\"column\",\"detections\":[{\"x_min\":3.0,\"y_min\":2.0,\"x_max\":3.0,\"y_max\":4.0,\"class_id\":0,\"confidence\":0.5}]}\n",
        )
        .unwrap();
        assert!(matches!(read_detection_records(&path), Err(Error::Parse { line: 1, .. })));
    }
}
