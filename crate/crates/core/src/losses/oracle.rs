//! Value-only loss evaluation and the central-difference gradient oracle.
//!
//! Nothing here shares code with the differentiable path in `mod.rs`; the
//! values are rebuilt from the plain geometry helpers in [`crate::bbox`].

use super::{aspect_consistency, focusing_coefficient, LossError, LossKind, LossParams, WiouState};
use crate::bbox::{center_distance_sq, enclosing_box, iou, BoundingBox};

/// Quantities held constant while differentiating.
#[derive(Debug, Clone, Copy)]
struct Frozen {
    hull_norm: f64,
    focusing: f64,
}

fn hull_norm(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    let c = enclosing_box(pred, gt);
    c.width().powi(2) + c.height().powi(2)
}

fn freeze(
    kind: LossKind,
    pred: &BoundingBox,
    gt: &BoundingBox,
    params: &LossParams,
    state: &WiouState,
) -> Frozen {
    let hull_norm = hull_norm(pred, gt);
    let focusing = if kind == LossKind::WiouV3 {
        let l = 1.0 - iou(pred, gt);
        let s = state.observe(l, params.running_mean_momentum);
        focusing_coefficient(s.outlier_degree(l), params)
    } else {
        1.0
    };
    Frozen { hull_norm, focusing }
}

fn value_with(
    kind: LossKind,
    p: &BoundingBox,
    g: &BoundingBox,
    params: &LossParams,
    frozen: Frozen,
) -> Result<f64, LossError> {
    let l_iou = 1.0 - iou(p, g);
    let hull = enclosing_box(p, g);
    let diag_sq = hull.width().powi(2) + hull.height().powi(2);
    let dist_sq = center_distance_sq(p, g);
    let distance = |kind| {
        if diag_sq <= 0.0 {
            Err(LossError::DegenerateHull { kind })
        } else {
            Ok(dist_sq / diag_sq)
        }
    };
    let eiou = || -> Result<f64, LossError> {
        if hull.width() <= 0.0 || hull.height() <= 0.0 {
            return Err(LossError::ZeroHullSide { kind: LossKind::Eiou });
        }
        Ok(l_iou
            + distance(LossKind::Eiou)?
            + (p.width() - g.width()).powi(2) / hull.width().powi(2)
            + (p.height() - g.height()).powi(2) / hull.height().powi(2))
    };
    let wiou_v1 = |kind| {
        if frozen.hull_norm <= 0.0 {
            Err(LossError::DegenerateHull { kind })
        } else {
            Ok((dist_sq / frozen.hull_norm).exp() * l_iou)
        }
    };
    Ok(match kind {
        LossKind::Iou => l_iou,
        LossKind::Giou => {
            let c = hull.area();
            if c <= 0.0 {
                l_iou
            } else {
                l_iou + (c - p.union_area(g)) / c
            }
        }
        LossKind::Diou => l_iou + distance(kind)?,
        LossKind::Ciou => {
            if p.height() <= 0.0 || g.height() <= 0.0 {
                return Err(LossError::ZeroHeight { kind });
            }
            let v = aspect_consistency(p.width(), p.height(), g.width(), g.height());
            let alpha = if l_iou + v > 0.0 { v / (l_iou + v) } else { 0.0 };
            l_iou + distance(kind)? + alpha * v
        }
        LossKind::Eiou => eiou()?,
        LossKind::FocalEiou => {
            let e = eiou()?;
            let o = iou(p, g);
            if params.gamma == 0.0 {
                e
            } else if o <= 0.0 {
                0.0
            } else {
                o.powf(params.gamma) * e
            }
        }
        LossKind::WiouV1 => wiou_v1(kind)?,
        LossKind::WiouV3 => frozen.focusing * wiou_v1(kind)?,
    })
}

/// Loss value computed without the differentiable machinery.
pub fn reference_value(
    kind: LossKind,
    pred: &BoundingBox,
    gt: &BoundingBox,
    params: &LossParams,
    state: &WiouState,
) -> Result<f64, LossError> {
    let frozen = freeze(kind, pred, gt, params, state);
    value_with(kind, pred, gt, params, frozen)
}

/// Central-difference gradient of a loss with respect to the predicted
/// corners. The WIoU normaliser and WIoUv3's `r` are frozen at `pred`,
/// matching the analytic gradients. `state` is not modified.
pub fn finite_diff_grad(
    kind: LossKind,
    pred: &BoundingBox,
    gt: &BoundingBox,
    h: f64,
    params: &LossParams,
    state: &WiouState,
) -> Result<[f64; 4], LossError> {
    if !(h > 0.0) {
        return Err(LossError::InvalidParameter {
            name: "h",
            value: h,
            reason: "finite-difference step must be > 0",
        });
    }
    let frozen = freeze(kind, pred, gt, params, state);
    let base = pred.to_array();
    let mut grad = [0.0; 4];
    for (i, slot) in grad.iter_mut().enumerate() {
        let shifted = |delta: f64| {
            let mut c = base;
            c[i] += delta;
            // Raw corners: the oracle must not reorder them.
            BoundingBox {
                x1: c[0],
                y1: c[1],
                x2: c[2],
                y2: c[3],
            }
        };
        let up = value_with(kind, &shifted(h), gt, params, frozen)?;
        let down = value_with(kind, &shifted(-h), gt, params, frozen)?;
        *slot = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// True when `pred` sits within `margin` of a configuration where one of the
/// losses is not differentiable: coincident edges, edges that just touch, or
/// a collapsed side.
pub fn near_kink(pred: &BoundingBox, gt: &BoundingBox, margin: f64) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() < margin;
    let axis = |p1, p2, g1, g2| close(p1, g1) || close(p2, g2) || close(p2, g1) || close(p1, g2);
    axis(pred.x1, pred.x2, gt.x1, gt.x2)
        || axis(pred.y1, pred.y2, gt.y1, gt.y2)
        || pred.width() < margin
        || pred.height() < margin
}
