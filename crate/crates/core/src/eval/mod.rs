//! Detection evaluation: matching, precision/recall, PR curves, AP and mAP.
//!
//! Matching follows the confusion-matrix flowchart: a detection is first
//! gated by IoU against the still-unmatched ground truths, and only then is
//! its category compared. Detections are taken in decreasing confidence and
//! each one claims the best remaining ground truth.
//!
//! There is no true-negative count anywhere in this module; object detection
//! has no well-defined negative class.

mod confusion;
mod io;
mod matching;
mod pr;
mod report;

use std::collections::BTreeSet;

use thiserror::Error;

pub use confusion::ConfusionMatrix;
pub use io::{read_detections_csv, write_detections_csv, DETECTIONS_CSV_HEADER};
pub use matching::{match_corpus, match_detections, DetectionStatus, GtStatus, ImageOutcome, MatchOutcome};
pub use pr::{
    average_precision, coco_iou_thresholds, interpolate_precision, map_over_iou_range,
    mean_average_precision, per_category_ap, pr_curve, precision, recall, ApMode, PrEnvelope,
    PrPoint,
};
pub use report::{evaluate_corpus, CategoryMetrics, EvalReport, METRICS_CSV_HEADER};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("category {0} is not in the configured category set")]
    UnknownCategory(u32),
    #[error("detections and ground truths passed to per-image matching span several images")]
    MixedImages,
    #[error("category {0} has no ground truth, AP is undefined")]
    NoGroundTruth(u32),
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("{name} = {value} is out of range")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("detections csv, line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Minimum IoU for a detection to claim a ground truth.
    pub iou_threshold: f64,
    /// Detections below this confidence are dropped before matching.
    pub confidence_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.45,
            confidence_threshold: 0.25,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        validate_iou_threshold(self.iou_threshold)?;
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(EvalError::InvalidThreshold {
                name: "confidence_threshold",
                value: self.confidence_threshold,
            });
        }
        Ok(())
    }
}

pub(crate) fn validate_iou_threshold(t: f64) -> Result<(), EvalError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidThreshold {
            name: "iou_threshold",
            value: t,
        })
    }
}

/// The set of category ids an evaluation accepts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategorySet(BTreeSet<u32>);

impl CategorySet {
    pub fn new(ids: impl IntoIterator<Item = u32>) -> Self {
        Self(ids.into_iter().collect())
    }

    pub fn contains(&self, id: u32) -> bool {
        self.0.contains(&id)
    }

    pub fn check(&self, id: u32) -> Result<(), EvalError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(EvalError::UnknownCategory(id))
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<u32> for CategorySet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        Self::new(iter)
    }
}
