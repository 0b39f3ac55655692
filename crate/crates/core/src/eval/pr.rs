//! Precision/recall, PR curves, interpolation, AP and mAP.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::matching::{confidence_order, greedy_assign, group_by_image};
use super::{validate_iou_threshold, EvalError};
use crate::bbox::{Detection, GroundTruth};

/// `tp / (tp + fp)`, or 1.0 when nothing was predicted.
pub fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// `tp / (tp + fn)`, or 0.0 when there is no ground truth.
pub fn recall(tp: usize, fn_: usize) -> f64 {
    if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub confidence: f64,
    pub cum_tp: usize,
    pub cum_fp: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Cumulative precision/recall table for one category.
///
/// No confidence threshold is applied: every detection becomes a row. Rows
/// are sorted by decreasing confidence, ties kept in input order. Within each
/// image detections claim ground truths of this category greedily, exactly as
/// in [`super::match_detections`].
pub fn pr_curve(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> Result<Vec<PrPoint>, EvalError> {
    validate_iou_threshold(iou_threshold)?;
    if gts.is_empty() {
        return Err(EvalError::NoGroundTruth(dets.first().map_or(0, |d| d.category_id)));
    }

    let groups: Vec<(Vec<usize>, Vec<usize>)> = group_by_image(dets, gts).into_values().collect();
    let per_image: Vec<Vec<(usize, bool)>> = groups
        .par_iter()
        .map(|(di, gi)| {
            let d: Vec<&Detection> = di.iter().map(|&i| &dets[i]).collect();
            let g: Vec<&GroundTruth> = gi.iter().map(|&i| &gts[i]).collect();
            let order = confidence_order(d.iter().map(|x| x.confidence));
            let assignment = greedy_assign(&d, &g, &order, iou_threshold);
            di.iter().zip(assignment).map(|(&i, a)| (i, a.is_some())).collect()
        })
        .collect();
    let mut is_tp = vec![false; dets.len()];
    for (i, flag) in per_image.into_iter().flatten() {
        is_tp[i] = flag;
    }

    let n_gt = gts.len();
    let order = confidence_order(dets.iter().map(|d| d.confidence));
    let mut cum_tp = 0;
    let mut cum_fp = 0;
    let mut curve = Vec::with_capacity(dets.len());
    for i in order {
        if is_tp[i] {
            cum_tp += 1;
        } else {
            cum_fp += 1;
        }
        curve.push(PrPoint {
            confidence: dets[i].confidence,
            cum_tp,
            cum_fp,
            precision: precision(cum_tp, cum_fp),
            recall: recall(cum_tp, n_gt - cum_tp),
        });
    }
    Ok(curve)
}

/// Non-increasing precision envelope of a PR curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PrEnvelope {
    recalls: Vec<f64>,
    /// `best[i]` is the largest precision among points `i..`.
    best: Vec<f64>,
}

impl PrEnvelope {
    /// `max { precision : recall >= r }`, 0 when no point reaches `r`.
    pub fn at(&self, r: f64) -> f64 {
        let i = self.recalls.partition_point(|&x| x < r);
        self.best.get(i).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.recalls.is_empty()
    }
}

pub fn interpolate_precision(curve: &[PrPoint]) -> PrEnvelope {
    let mut points: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = vec![0.0; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].1);
        best[i] = running;
    }
    PrEnvelope {
        recalls: points.into_iter().map(|p| p.0).collect(),
        best,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApMode {
    /// Mean of the interpolated precision at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Interpolated101,
    /// Trapezoidal area under the same 101 interpolated samples.
    Trapezoid,
}

fn recall_grid() -> impl Iterator<Item = f64> {
    (0..=100).map(|k| k as f64 / 100.0)
}

pub fn average_precision(curve: &[PrPoint], mode: ApMode) -> f64 {
    let env = interpolate_precision(curve);
    let samples: Vec<f64> = recall_grid().map(|r| env.at(r)).collect();
    match mode {
        ApMode::Interpolated101 => samples.iter().sum::<f64>() / samples.len() as f64,
        ApMode::Trapezoid => samples.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>() / 100.0,
    }
}

/// Unweighted mean over the categories present in the map.
pub fn mean_average_precision(per_category: &BTreeMap<u32, f64>) -> Result<f64, EvalError> {
    if per_category.is_empty() {
        return Err(EvalError::EmptyInput("per-category AP map"));
    }
    Ok(per_category.values().sum::<f64>() / per_category.len() as f64)
}

/// AP per category for every category with at least one ground truth.
/// Detections of categories without ground truth are ignored.
pub fn per_category_ap(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
    mode: ApMode,
) -> Result<BTreeMap<u32, f64>, EvalError> {
    let categories: BTreeSet<u32> = gts.iter().map(|g| g.category_id).collect();
    let mut out = BTreeMap::new();
    for c in categories {
        let d: Vec<Detection> = dets.iter().filter(|d| d.category_id == c).cloned().collect();
        let g: Vec<GroundTruth> = gts.iter().filter(|g| g.category_id == c).cloned().collect();
        out.insert(c, average_precision(&pr_curve(&d, &g, iou_threshold)?, mode));
    }
    Ok(out)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// Mean over `thresholds` of the mAP at each threshold.
pub fn map_over_iou_range(
    dets: &[Detection],
    gts: &[GroundTruth],
    thresholds: &[f64],
    mode: ApMode,
) -> Result<f64, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::EmptyInput("IoU threshold list"));
    }
    let mut total = 0.0;
    for &t in thresholds {
        total += mean_average_precision(&per_category_ap(dets, gts, t, mode)?)?;
    }
    Ok(total / thresholds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BoundingBox;

    fn det(img: &str, x1: f64, x2: f64, conf: f64) -> Detection {
        Detection::new(img, 1, conf, BoundingBox::new(x1, 0., x2, 10.)).unwrap()
    }

    fn gt(img: &str, x1: f64, x2: f64) -> GroundTruth {
        GroundTruth::new(img, 1, BoundingBox::new(x1, 0., x2, 10.))
    }

    fn point(r: f64, p: f64) -> PrPoint {
        PrPoint {
            confidence: 0.5,
            cum_tp: 0,
            cum_fp: 0,
            precision: p,
            recall: r,
        }
    }

    #[test]
    fn precision_recall_examples() {
        assert_eq!(precision(2, 0), 1.0);
        assert_eq!(precision(0, 5), 0.0);
        assert_eq!(precision(3, 1), 0.75);
        assert_eq!(precision(0, 0), 1.0);
        assert_eq!(recall(2, 0), 1.0);
        assert_eq!(recall(0, 4), 0.0);
        assert_eq!(recall(3, 1), 0.75);
        assert_eq!(recall(0, 0), 0.0);
    }

    #[test]
    fn single_tp_curve() {
        let c = pr_curve(&[det("a", 0., 10., 0.9)], &[gt("a", 0., 10.)], 0.5).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].precision, c[0].recall), (1.0, 1.0));
        assert_eq!(average_precision(&c, ApMode::Interpolated101), 1.0);
        assert_eq!(average_precision(&c, ApMode::Trapezoid), 1.0);
    }

    #[test]
    fn all_fp_curve_has_zero_precision() {
        let c = pr_curve(
            &[det("a", 50., 60., 0.9), det("a", 70., 80., 0.4), det("b", 0., 10., 0.3)],
            &[gt("a", 0., 10.)],
            0.5,
        )
        .unwrap();
        assert!(c.iter().all(|p| p.precision == 0.0));
        assert_eq!(average_precision(&c, ApMode::Interpolated101), 0.0);
    }

    #[test]
    fn cumulative_columns_are_running_sums() {
        let dets = [
            det("a", 0., 10., 0.95),
            det("a", 0., 10., 0.9),
            det("b", 20., 30., 0.8),
            det("a", 40., 50., 0.7),
            det("b", 100., 110., 0.6),
        ];
        let gts = [gt("a", 0., 10.), gt("a", 40., 50.), gt("b", 20., 30.), gt("b", 60., 70.)];
        let c = pr_curve(&dets, &gts, 0.5).unwrap();
        let flags = [true, false, true, true, false];
        let (mut tp, mut fp) = (0, 0);
        for (p, f) in c.iter().zip(flags) {
            if f {
                tp += 1
            } else {
                fp += 1
            }
            assert_eq!((p.cum_tp, p.cum_fp), (tp, fp));
            assert_eq!(p.recall, tp as f64 / 4.0);
        }
    }

    #[test]
    fn missing_ground_truth_is_an_error() {
        assert!(matches!(
            pr_curve(&[det("a", 0., 1., 0.5)], &[], 0.5),
            Err(EvalError::NoGroundTruth(1))
        ));
    }

    #[test]
    fn envelope_examples() {
        let env = interpolate_precision(&[point(0.2, 1.0), point(0.5, 0.6), point(0.5, 0.8)]);
        assert_eq!(env.at(0.3), 0.8);
        assert_eq!(env.at(0.0), 1.0);
        assert_eq!(env.at(0.6), 0.0);

        let sawtooth: Vec<PrPoint> = (1..=10)
            .map(|i| point(i as f64 / 10.0, if i % 2 == 0 { 0.9 } else { 0.3 }))
            .collect();
        let env = interpolate_precision(&sawtooth);
        let samples: Vec<f64> = (0..=100).map(|k| env.at(k as f64 / 100.0)).collect();
        assert!(samples.windows(2).all(|w| w[0] >= w[1]));

        let monotone = [point(0.25, 1.0), point(0.5, 0.8), point(0.75, 0.6)];
        let env = interpolate_precision(&monotone);
        for p in monotone {
            assert_eq!(env.at(p.recall), p.precision);
        }
    }

    #[test]
    fn map_examples() {
        let m: BTreeMap<u32, f64> = [(1, 1.0)].into();
        assert_eq!(mean_average_precision(&m).unwrap(), 1.0);
        let m: BTreeMap<u32, f64> = [(1, 1.0), (2, 0.0)].into();
        assert_eq!(mean_average_precision(&m).unwrap(), 0.5);
        let aps: BTreeMap<u32, f64> = (0..16).map(|c| (c, c as f64 / 20.0)).collect();
        let expected = (0..16).map(|c| c as f64 / 20.0).sum::<f64>() / 16.0;
        assert!((mean_average_precision(&aps).unwrap() - expected).abs() < 1e-15);
        assert!(mean_average_precision(&BTreeMap::new()).is_err());
    }

    #[test]
    fn thresholds_are_exact_decimals() {
        let t = coco_iou_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[2], 0.6);
        assert_eq!(t[9], 0.95);
    }

    #[test]
    fn iou_point_six_detector_scores_three_tenths() {
        let gts = [GroundTruth::new("a", 1, BoundingBox::new(0., 0., 10., 10.))];
        let dets = [Detection::new("a", 1, 0.8, BoundingBox::new(0., 0., 10., 6.)).unwrap()];
        let ap50 = map_over_iou_range(&dets, &gts, &[0.5], ApMode::Interpolated101).unwrap();
        assert_eq!(ap50, 1.0);
        let full = map_over_iou_range(&dets, &gts, &coco_iou_thresholds(), ApMode::Interpolated101).unwrap();
        assert!((full - 0.3 * ap50).abs() < 1e-12);
    }
}
