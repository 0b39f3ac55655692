//! Axis-aligned box geometry in corner form.
//!
//! Every box is stored as `(x1, y1, x2, y2)` in pixels with `x1 <= x2` and
//! `y1 <= y2`. Center form is derived on demand. Zero-area boxes are legal
//! everywhere; their IoU with anything is defined as 0 when the union is empty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoxError {
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("box coordinate is not finite: ({0}, {1}, {2}, {3})")]
    NonFinite(f64, f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    /// Builds a box from two opposite corners, swapping coordinates as needed.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1: x1.min(x2),
            y1: y1.min(y2),
            x2: x1.max(x2),
            y2: y1.max(y2),
        }
    }

    /// Builds a box from COCO-style `[x, y, w, h]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    pub fn is_normalized(&self) -> bool {
        self.x1 <= self.x2 && self.y1 <= self.y2
    }

    pub fn normalized(&self) -> Self {
        Self::new(self.x1, self.y1, self.x2, self.y2)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<(), BoxError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(BoxError::NonFinite(self.x1, self.y1, self.x2, self.y2))
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn union_area(&self, other: &Self) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    pub fn iou(&self, other: &Self) -> f64 {
        iou(self, other)
    }

    /// Returns true when the point lies inside the closed box.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    /// Scales both axes about the origin.
    pub fn scale(&self, sx: f64, sy: f64) -> Self {
        Self::new(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)
    }

    /// Clamps the box into `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> Self {
        self.clamp_within(&BoundingBox::new(0.0, 0.0, width, height))
    }

    pub fn clamp_within(&self, arena: &BoundingBox) -> Self {
        Self {
            x1: self.x1.clamp(arena.x1, arena.x2),
            y1: self.y1.clamp(arena.y1, arena.y2),
            x2: self.x2.clamp(arena.x1, arena.x2),
            y2: self.y2.clamp(arena.y1, arena.y2),
        }
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Smallest axis-aligned box containing both inputs.
pub fn enclosing_box(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    BoundingBox {
        x1: a.x1.min(b.x1),
        y1: a.y1.min(b.y1),
        x2: a.x2.max(b.x2),
        y2: a.y2.max(b.y2),
    }
}

/// Squared Euclidean distance between box centers.
pub fn center_distance_sq(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).powi(2) + (ay - by).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BoundingBox,
    pub category_id: u32,
    pub image_id: String,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, category_id: u32, bbox: BoundingBox) -> Self {
        Self {
            bbox,
            category_id,
            image_id: image_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub category_id: u32,
    pub confidence: f64,
    pub image_id: String,
}

impl Detection {
    pub fn new(
        image_id: impl Into<String>,
        category_id: u32,
        confidence: f64,
        bbox: BoundingBox,
    ) -> Result<Self, BoxError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(BoxError::InvalidConfidence(confidence));
        }
        bbox.validate()?;
        Ok(Self {
            bbox,
            category_id,
            confidence,
            image_id: image_id.into(),
        })
    }
}
