//! Greedy one-to-one matching of detections to ground truths.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{CategorySet, EvalError, MatchConfig};
use crate::bbox::{iou, Detection, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionStatus {
    /// Below the confidence threshold, never considered.
    Discarded,
    /// Claimed a ground truth of its own category.
    TruePositive { gt: usize },
    /// Claimed a ground truth of another category. Counts as a false positive.
    Misclassified { gt: usize },
    /// Found no ground truth above the IoU threshold.
    Unmatched,
}

impl DetectionStatus {
    pub fn is_tp(self) -> bool {
        matches!(self, Self::TruePositive { .. })
    }

    pub fn is_fp(self) -> bool {
        matches!(self, Self::Misclassified { .. } | Self::Unmatched)
    }

    pub fn matched_gt(self) -> Option<usize> {
        match self {
            Self::TruePositive { gt } | Self::Misclassified { gt } => Some(gt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStatus {
    Matched { detection: usize },
    /// Claimed by a detection of another category; still a false negative.
    Confused { detection: usize },
    Missed,
}

impl GtStatus {
    pub fn is_fn(self) -> bool {
        !matches!(self, Self::Matched { .. })
    }
}

/// Result of matching one image. Indices refer to the slices passed to
/// [`match_detections`]; the category ids are copied so the outcome can be
/// tallied without the original inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    pub detections: Vec<DetectionStatus>,
    pub detection_categories: Vec<u32>,
    pub ground_truths: Vec<GtStatus>,
    pub gt_categories: Vec<u32>,
}

impl MatchOutcome {
    pub fn tp(&self) -> usize {
        self.detections.iter().filter(|d| d.is_tp()).count()
    }

    pub fn fp(&self) -> usize {
        self.detections.iter().filter(|d| d.is_fp()).count()
    }

    pub fn fn_count(&self) -> usize {
        self.ground_truths.iter().filter(|g| g.is_fn()).count()
    }

    pub fn retained(&self) -> usize {
        self.detections.iter().filter(|d| **d != DetectionStatus::Discarded).count()
    }

    /// `(tp, fp, fn)` restricted to one category.
    pub fn counts_for(&self, category: u32) -> (usize, usize, usize) {
        let tp = self
            .detections
            .iter()
            .zip(&self.detection_categories)
            .filter(|(d, c)| **c == category && d.is_tp())
            .count();
        let fp = self
            .detections
            .iter()
            .zip(&self.detection_categories)
            .filter(|(d, c)| **c == category && d.is_fp())
            .count();
        let fn_ = self
            .ground_truths
            .iter()
            .zip(&self.gt_categories)
            .filter(|(g, c)| **c == category && g.is_fn())
            .count();
        (tp, fp, fn_)
    }
}

/// Indices of `confidences` in decreasing order; ties keep input order.
pub(crate) fn confidence_order(confidences: impl Iterator<Item = f64>) -> Vec<usize> {
    let conf: Vec<f64> = confidences.collect();
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]));
    order
}

/// Visits detections in `order`, letting each claim the unclaimed ground
/// truth with the highest IoU at or above `threshold` (lowest index on ties).
/// Returns the claimed ground truth per detection, indexed like `dets`.
pub(crate) fn greedy_assign(
    dets: &[&Detection],
    gts: &[&GroundTruth],
    order: &[usize],
    threshold: f64,
) -> Vec<Option<usize>> {
    let mut claimed = vec![false; gts.len()];
    let mut assignment = vec![None; dets.len()];
    for &d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] {
                continue;
            }
            let o = iou(&dets[d].bbox, &gt.bbox);
            if o >= threshold && best.map_or(true, |(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
            assignment[d] = Some(g);
        }
    }
    assignment
}

/// Matches the detections of a single image against its ground truths.
///
/// Detections below the confidence threshold are discarded. The rest are
/// visited by decreasing confidence and may claim a ground truth of any
/// category; the category decides between TP and misclassification.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &MatchConfig,
    categories: &CategorySet,
) -> Result<MatchOutcome, EvalError> {
    cfg.validate()?;
    let image = dets
        .first()
        .map(|d| &d.image_id)
        .or_else(|| gts.first().map(|g| &g.image_id));
    if let Some(image) = image {
        let foreign = dets.iter().any(|d| &d.image_id != image) || gts.iter().any(|g| &g.image_id != image);
        if foreign {
            return Err(EvalError::MixedImages);
        }
    }
    for d in dets {
        categories.check(d.category_id)?;
    }
    for g in gts {
        categories.check(g.category_id)?;
    }
    Ok(match_unchecked(dets, gts, cfg))
}

fn match_unchecked(dets: &[Detection], gts: &[GroundTruth], cfg: &MatchConfig) -> MatchOutcome {
    let kept: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].confidence >= cfg.confidence_threshold)
        .collect();
    let kept_refs: Vec<&Detection> = kept.iter().map(|&i| &dets[i]).collect();
    let gt_refs: Vec<&GroundTruth> = gts.iter().collect();
    let order = confidence_order(kept_refs.iter().map(|d| d.confidence));
    let assignment = greedy_assign(&kept_refs, &gt_refs, &order, cfg.iou_threshold);

    let mut detections = vec![DetectionStatus::Discarded; dets.len()];
    let mut ground_truths = vec![GtStatus::Missed; gts.len()];
    for (k, &d) in kept.iter().enumerate() {
        detections[d] = match assignment[k] {
            Some(g) if gts[g].category_id == dets[d].category_id => {
                ground_truths[g] = GtStatus::Matched { detection: d };
                DetectionStatus::TruePositive { gt: g }
            }
            Some(g) => {
                ground_truths[g] = GtStatus::Confused { detection: d };
                DetectionStatus::Misclassified { gt: g }
            }
            None => DetectionStatus::Unmatched,
        };
    }
    MatchOutcome {
        detections,
        detection_categories: dets.iter().map(|d| d.category_id).collect(),
        ground_truths,
        gt_categories: gts.iter().map(|g| g.category_id).collect(),
    }
}

/// One image's inputs and matching result.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub ground_truths: Vec<GroundTruth>,
    pub outcome: MatchOutcome,
}

/// Detection and ground-truth indices per image id.
pub(crate) fn group_by_image<'a>(
    dets: &'a [Detection],
    gts: &'a [GroundTruth],
) -> BTreeMap<&'a str, (Vec<usize>, Vec<usize>)> {
    let mut groups: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry(d.image_id.as_str()).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        groups.entry(g.image_id.as_str()).or_default().1.push(i);
    }
    groups
}

/// Matches every image of a corpus. Images are processed in parallel; the
/// result is ordered by image id.
pub fn match_corpus(
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &MatchConfig,
    categories: &CategorySet,
) -> Result<Vec<ImageOutcome>, EvalError> {
    cfg.validate()?;
    for d in dets {
        categories.check(d.category_id)?;
    }
    for g in gts {
        categories.check(g.category_id)?;
    }
    let groups: Vec<(String, Vec<Detection>, Vec<GroundTruth>)> = group_by_image(dets, gts)
        .into_iter()
        .map(|(id, (d, g))| {
            (
                id.to_string(),
                d.into_iter().map(|i| dets[i].clone()).collect(),
                g.into_iter().map(|i| gts[i].clone()).collect(),
            )
        })
        .collect();
    Ok(groups
        .into_par_iter()
        .map(|(image_id, detections, ground_truths)| {
            let outcome = match_unchecked(&detections, &ground_truths, cfg);
            ImageOutcome {
                image_id,
                detections,
                ground_truths,
                outcome,
            }
        })
        .collect())
}
