//! Geometric and photometric transforms that keep boxes in step with the
//! pixels.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::coco::ImageRecord;
use super::DatasetError;
use crate::bbox::{BoundingBox, GroundTruth};
use crate::graph::{resize_nearest, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    /// Quarter turn: pixel `(x, y)` moves to `(y, W - 1 - x)`.
    Rotate90,
    /// Resize both axes by this factor, in `[0.5, 1.5]`.
    Scale(f64),
    /// Added to every channel, in `[-64, 64]`.
    Brightness(f64),
    /// Multiplies the distance from mid-grey 128, in `[0.5, 1.5]`.
    Contrast(f64),
}

impl AugmentOp {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let (name, v, lo, hi) = match *self {
            Self::Rotate90 => return Ok(()),
            Self::Scale(s) => ("scale", s, 0.5, 1.5),
            Self::Brightness(b) => ("brightness", b, -64.0, 64.0),
            Self::Contrast(c) => ("contrast", c, 0.5, 1.5),
        };
        if !(lo..=hi).contains(&v) {
            return Err(DatasetError::InvalidParameter(format!("{name} {v} is outside [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// A random pipeline: each transform is included with probability 1/2.
pub fn random_ops(seed: u64) -> Vec<AugmentOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        ops.push(AugmentOp::Rotate90);
    }
    if rng.gen_bool(0.5) {
        ops.push(AugmentOp::Scale(rng.gen_range(0.5..=1.5)));
    }
    if rng.gen_bool(0.5) {
        ops.push(AugmentOp::Brightness(rng.gen_range(-64.0..=64.0)));
    }
    if rng.gen_bool(0.5) {
        ops.push(AugmentOp::Contrast(rng.gen_range(0.5..=1.5)));
    }
    ops
}

fn check_raster(record: &ImageRecord, raster: &Tensor3) -> Result<(), DatasetError> {
    if (raster.width, raster.height) != (record.width as usize, record.height as usize) {
        return Err(DatasetError::InvalidParameter(format!(
            "raster is {}x{} but image {} is {}x{}",
            raster.width, raster.height, record.image_id, record.width, record.height
        )));
    }
    Ok(())
}

/// Clamps boxes to the image and drops those under one square pixel.
fn tidy(annotations: Vec<GroundTruth>, width: u32, height: u32) -> Vec<GroundTruth> {
    annotations
        .into_iter()
        .map(|g| GroundTruth {
            bbox: g.bbox.clamp_to(f64::from(width), f64::from(height)),
            ..g
        })
        .filter(|g| g.bbox.area() >= 1.0)
        .collect()
}

fn resize_to(
    record: &ImageRecord,
    raster: &Tensor3,
    width: u32,
    height: u32,
) -> Result<(ImageRecord, Tensor3), DatasetError> {
    let out = resize_nearest(raster, height as usize, width as usize)
        .map_err(|e| DatasetError::InvalidParameter(e.to_string()))?;
    let sx = f64::from(width) / f64::from(record.width);
    let sy = f64::from(height) / f64::from(record.height);
    let annotations = record
        .annotations
        .iter()
        .map(|g| GroundTruth {
            bbox: g.bbox.scale(sx, sy),
            ..g.clone()
        })
        .collect();
    let rec = ImageRecord {
        width,
        height,
        annotations: tidy(annotations, width, height),
        ..record.clone()
    };
    Ok((rec, out))
}

/// Nearest-neighbour resize to `target x target` with boxes scaled per axis.
pub fn resize_with_boxes(
    record: &ImageRecord,
    raster: &Tensor3,
    target: u32,
) -> Result<(ImageRecord, Tensor3), DatasetError> {
    check_raster(record, raster)?;
    if target == 0 {
        return Err(DatasetError::InvalidParameter("target size must be positive".into()));
    }
    resize_to(record, raster, target, target)
}

fn rotate90(record: &ImageRecord, raster: &Tensor3) -> (ImageRecord, Tensor3) {
    let (w, h) = (raster.width, raster.height);
    let mut out = Tensor3::zeros(raster.channels, w, h);
    for c in 0..raster.channels {
        for y in 0..h {
            for x in 0..w {
                out.set(c, w - 1 - x, y, raster.get(c, y, x));
            }
        }
    }
    // pixel edges: x in [x1, x2] maps to y' in [W - x2, W - x1]
    let wf = f64::from(record.width);
    let annotations = record
        .annotations
        .iter()
        .map(|g| {
            let b = g.bbox;
            GroundTruth {
                bbox: BoundingBox::new(b.y1, wf - b.x2, b.y2, wf - b.x1),
                ..g.clone()
            }
        })
        .collect();
    let rec = ImageRecord {
        width: record.height,
        height: record.width,
        annotations,
        ..record.clone()
    };
    (rec, out)
}

/// Applies `ops` in order.
pub fn augment(
    record: &ImageRecord,
    raster: &Tensor3,
    ops: &[AugmentOp],
) -> Result<(ImageRecord, Tensor3), DatasetError> {
    check_raster(record, raster)?;
    for op in ops {
        op.validate()?;
    }
    let mut rec = record.clone();
    let mut img = raster.clone();
    for op in ops {
        match *op {
            AugmentOp::Rotate90 => (rec, img) = rotate90(&rec, &img),
            AugmentOp::Scale(s) => {
                if s != 1.0 {
                    let w = ((f64::from(rec.width) * s).round() as u32).max(1);
                    let h = ((f64::from(rec.height) * s).round() as u32).max(1);
                    (rec, img) = resize_to(&rec, &img, w, h)?;
                }
            }
            AugmentOp::Brightness(b) => img = img.map(|v| (v + b).clamp(0.0, 255.0)),
            AugmentOp::Contrast(c) => img = img.map(|v| ((v - 128.0) * c + 128.0).clamp(0.0, 255.0)),
        }
    }
    rec.annotations = tidy(rec.annotations, rec.width, rec.height);
    Ok((rec, img))
}
