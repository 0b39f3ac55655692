//! Seeded synthetic camera-trap corpora.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trapeval::dataset::{AnnotationSet, CategoryInfo, ImageRecord};
use trapeval::{BoundingBox, GroundTruth};

pub const EMPTY_CATEGORY: u32 = 30;

/// `n_locations` locations, images grouped into bursts of 1 to 5 that
/// share a sequence id and a date. Roughly a tenth of images are empty,
/// either with no annotations or only an `empty` label.
pub fn corpus(seed: u64, n_locations: u32) -> AnnotationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2011, 1, 1).unwrap();
    let mut images = Vec::new();
    let mut next_id = 0usize;
    for loc in 0..n_locations {
        let location = loc * 7 + 3;
        let bursts = rng.gen_range(2..25);
        for b in 0..bursts {
            let date = start + Days::new(rng.gen_range(0..1500));
            let seq = if rng.gen_bool(0.8) { Some(format!("seq{location}_{b}")) } else { None };
            for _ in 0..rng.gen_range(1..=5) {
                let image_id = format!("img{next_id}");
                next_id += 1;
                let (w, h) = (rng.gen_range(64..2048u32), rng.gen_range(64..1536u32));
                let annotations = match rng.gen_range(0..20) {
                    0 => Vec::new(),
                    1 => vec![GroundTruth::new(image_id.clone(), EMPTY_CATEGORY, BoundingBox::new(0.0, 0.0, 1.0, 1.0))],
                    _ => (0..rng.gen_range(1..4))
                        .map(|_| {
                            let x1 = rng.gen_range(0.0..w as f64 - 8.0);
                            let y1 = rng.gen_range(0.0..h as f64 - 8.0);
                            let x2 = rng.gen_range(x1 + 4.0..=w as f64);
                            let y2 = rng.gen_range(y1 + 4.0..=h as f64);
                            GroundTruth::new(image_id.clone(), rng.gen_range(1..=15), BoundingBox::new(x1, y1, x2, y2))
                        })
                        .collect(),
                };
                images.push(ImageRecord {
                    image_id,
                    location,
                    date,
                    width: w,
                    height: h,
                    file_name: Some(format!("{location}/{next_id}.jpg")),
                    seq_id: seq.clone(),
                    annotations,
                });
            }
        }
    }
    let mut categories: Vec<CategoryInfo> = (1..=15)
        .map(|id| CategoryInfo {
            id,
            name: format!("species{id}"),
        })
        .collect();
    categories.push(CategoryInfo {
        id: EMPTY_CATEGORY,
        name: "empty".into(),
    });
    AnnotationSet { images, categories }
}
