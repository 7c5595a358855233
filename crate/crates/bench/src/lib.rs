//! Seeded inputs shared by the benchmarks.

use newsocr_core::metrics::ImageEval;
use newsocr_core::{BoundingBox, ColorSpace, Detection, GroundTruthBox, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LETTERS: [char; 12] = ['ا', 'ب', 'پ', 'ت', 'ج', 'د', 'ر', 'س', 'ع', 'ک', 'ل', 'م'];

/// `tokens` Urdu-letter words and a copy with roughly `error_rate` of its
/// characters replaced.
pub fn text_pair(tokens: usize, error_rate: f64, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..tokens)
        .map(|_| {
            let len = rng.random_range(2..7);
            (0..len).map(|_| LETTERS[rng.random_range(0..LETTERS.len())]).collect()
        })
        .collect();
    let reference = words.join(" ");
    let hypothesis = reference
        .chars()
        .map(|c| {
            if c != ' ' && rng.random_bool(error_rate) {
                LETTERS[rng.random_range(0..LETTERS.len())]
            } else {
                c
            }
        })
        .collect();
    (reference, hypothesis)
}

/// Pages with `boxes` ground-truth boxes each and jittered detections,
/// some missed and some spurious.
pub fn detection_scenes(images: usize, boxes: usize, seed: u64) -> Vec<ImageEval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..images)
        .map(|_| {
            let mut ground_truth = Vec::new();
            let mut detections = Vec::new();
            for _ in 0..boxes {
                let (x, y) = (rng.random_range(8.0..900.0), rng.random_range(8.0..1300.0));
                let (w, h) = (rng.random_range(40.0..100.0), rng.random_range(60.0..200.0));
                let bbox = BoundingBox::new(x, y, x + w, y + h).expect("ordered corners");
                let class_id = rng.random_range(0..2);
                ground_truth.push(GroundTruthBox { bbox, class_id });
                if rng.random_bool(0.9) {
                    let j = |rng: &mut ChaCha8Rng| rng.random_range(-6.0..6.0);
                    let moved = BoundingBox::new(x + j(&mut rng), y + j(&mut rng), x + w + j(&mut rng), y + h + j(&mut rng))
                        .expect("jitter is smaller than the box and the margin");
                    detections.push(Detection::new(moved, class_id, rng.random_range(0.3..1.0)).expect("valid"));
                }
            }
            for _ in 0..boxes / 10 {
                let (x, y) = (rng.random_range(0.0..900.0), rng.random_range(0.0..1300.0));
                let bbox = BoundingBox::new(x, y, x + 50.0, y + 80.0).expect("ordered corners");
                detections.push(Detection::new(bbox, rng.random_range(0..2), rng.random_range(0.0..0.6)).expect("valid"));
            }
            ImageEval { detections, ground_truth }
        })
        .collect()
}

/// Deterministic RGB image with texture in every channel.
pub fn textured_image(width: u32, height: u32, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width as usize * height as usize * 3)
        .map(|i| ((i as u32 % (width * 3)) as u8).wrapping_mul(7) ^ rng.random::<u8>() >> 4)
        .collect();
    RasterImage::new(width, height, ColorSpace::Rgb, data).expect("consistent dimensions")
}
