use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use super::pr::{average_precision, coco_iou_thresholds, map_over_iou_range, pr_curve, precision, recall, ApMode, PrPoint};
use super::{match_corpus, CategorySet, ConfusionMatrix, EvalError, ImageOutcome, MatchConfig};
use crate::bbox::{Detection, GroundTruth};

pub const METRICS_CSV_HEADER: &str = "category_id,ap,precision,recall,tp,fp,fn";

/// Per-category row of the results table. `precision`, `recall` and the
/// counts come from the thresholded operating point; the AP columns come
/// from the unthresholded PR curve at IoU 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMetrics {
    pub category_id: u32,
    pub ap50: f64,
    pub ap50_trapezoid: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_category: Vec<CategoryMetrics>,
    pub map50: f64,
    pub map50_95: f64,
    pub map50_trapezoid: f64,
    pub confusion: ConfusionMatrix,
    /// PR curves at IoU 0.5 for categories with ground truth.
    pub curves: BTreeMap<u32, Vec<PrPoint>>,
    pub images: Vec<ImageOutcome>,
}

/// Full evaluation of a corpus: operating-point matching and confusion
/// matrix under `cfg`, PR curves and AP/mAP over all detections.
///
/// Categories without ground truth get no row and do not enter the mAP.
pub fn evaluate_corpus(
    dets: &[Detection],
    gts: &[GroundTruth],
    categories: &CategorySet,
    cfg: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    let images = match_corpus(dets, gts, cfg, categories)?;
    let confusion = ConfusionMatrix::from_outcomes(categories, images.iter().map(|i| &i.outcome));

    let present: BTreeSet<u32> = gts.iter().map(|g| g.category_id).collect();
    if present.is_empty() {
        return Err(EvalError::EmptyInput("ground truth"));
    }
    let mut per_category = Vec::new();
    let mut curves = BTreeMap::new();
    for &c in &present {
        let d: Vec<Detection> = dets.iter().filter(|d| d.category_id == c).cloned().collect();
        let g: Vec<GroundTruth> = gts.iter().filter(|g| g.category_id == c).cloned().collect();
        let curve = pr_curve(&d, &g, 0.5)?;
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for img in &images {
            let (a, b, c) = img.outcome.counts_for(c);
            tp += a;
            fp += b;
            fn_ += c;
        }
        per_category.push(CategoryMetrics {
            category_id: c,
            ap50: average_precision(&curve, ApMode::Interpolated101),
            ap50_trapezoid: average_precision(&curve, ApMode::Trapezoid),
            precision: precision(tp, fp),
            recall: recall(tp, fn_),
            tp,
            fp,
            fn_,
        });
        curves.insert(c, curve);
    }
    let n = per_category.len() as f64;
    let map50 = per_category.iter().map(|m| m.ap50).sum::<f64>() / n;
    let map50_trapezoid = per_category.iter().map(|m| m.ap50_trapezoid).sum::<f64>() / n;
    let map50_95 = map_over_iou_range(dets, gts, &coco_iou_thresholds(), ApMode::Interpolated101)?;
    Ok(EvalReport {
        per_category,
        map50,
        map50_95,
        map50_trapezoid,
        confusion,
        curves,
        images,
    })
}

impl EvalReport {
    pub fn total_tp(&self) -> usize {
        self.per_category.iter().map(|m| m.tp).sum()
    }

    pub fn write_metrics_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{METRICS_CSV_HEADER}")?;
        for m in &self.per_category {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{},{},{}",
                m.category_id, m.ap50, m.precision, m.recall, m.tp, m.fp, m.fn_
            )?;
        }
        writeln!(out, "mAP50,{:?}", self.map50)?;
        writeln!(out, "mAP50-95,{:?}", self.map50_95)?;
        writeln!(out, "mAP50-trapezoid,{:?}", self.map50_trapezoid)?;
        Ok(())
    }

    pub fn metrics_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_metrics_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}
