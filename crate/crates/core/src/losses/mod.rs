//! IoU-family bounding-box regression losses with analytic gradients.
//!
//! Every loss returns a [`LossEval`]: the loss value and its gradient with
//! respect to the predicted box corners `(x1, y1, x2, y2)`. The ground-truth
//! box is a constant.
//!
//! Two quantities are detached (treated as constants when differentiating):
//! the `W_g² + H_g²` normaliser inside the WIoU exponent, and the outlier
//! degree `β` together with the focusing coefficient `r` of WIoUv3.
//!
//! Where the loss is not differentiable the gradient uses these conventions:
//! an overlap or hull edge on which both boxes coincide takes the midpoint of
//! the one-sided derivatives (so `pred == gt` is stationary for every loss),
//! and an intersection that has just closed to zero width contributes zero.

mod diff;
mod oracle;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BoundingBox;
use diff::Diff;

pub use oracle::{finite_diff_grad, near_kink, reference_value};
pub use trajectory::{simulate_regression, RegressionConfig, Trajectory, TrajectoryPoint};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("{kind}: enclosing box is degenerate (W_g^2 + H_g^2 = 0)")]
    DegenerateHull { kind: LossKind },
    #[error("{kind}: enclosing box has a zero-length side")]
    ZeroHullSide { kind: LossKind },
    #[error("{kind}: box with zero height has no aspect ratio")]
    ZeroHeight { kind: LossKind },
    #[error("box is not normalized or not finite: {0:?}")]
    InvalidBox(BoundingBox),
    #[error("invalid loss parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{kind}: trajectory diverged at iteration {iteration}")]
    Diverged { kind: LossKind, iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossKind {
    Iou,
    Giou,
    Diou,
    Ciou,
    Eiou,
    FocalEiou,
    WiouV1,
    WiouV3,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::Iou,
        LossKind::Giou,
        LossKind::Diou,
        LossKind::Ciou,
        LossKind::Eiou,
        LossKind::FocalEiou,
        LossKind::WiouV1,
        LossKind::WiouV3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Iou => "iou",
            LossKind::Giou => "giou",
            LossKind::Diou => "diou",
            LossKind::Ciou => "ciou",
            LossKind::Eiou => "eiou",
            LossKind::FocalEiou => "focal-eiou",
            LossKind::WiouV1 => "wiou-v1",
            LossKind::WiouV3 => "wiou-v3",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().replace('-', "") == key)
            .ok_or_else(|| format!("unknown loss kind '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    /// Focal-EIoU exponent.
    pub gamma: f64,
    /// WIoU focusing base.
    pub alpha: f64,
    /// WIoU focusing offset; `r(delta) == 1`.
    pub delta: f64,
    /// Weight kept by the running mean of the IoU loss on each update.
    pub running_mean_momentum: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            alpha: 1.9,
            delta: 3.0,
            running_mean_momentum: 0.99,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |name, value, reason| Err(LossError::InvalidParameter { name, value, reason });
        if !(self.gamma >= 0.0) {
            return bad("gamma", self.gamma, "must be >= 0");
        }
        if !(self.alpha > 1.0) {
            return bad("alpha", self.alpha, "must be > 1");
        }
        if !(self.delta > 0.0) {
            return bad("delta", self.delta, "must be > 0");
        }
        let m = self.running_mean_momentum;
        if !(m > 0.0 && m <= 1.0) {
            return bad("running_mean_momentum", m, "must be in (0, 1]");
        }
        Ok(())
    }
}

/// Running mean of the plain IoU loss, the denominator of WIoUv3's `β`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WiouState {
    pub mean_iou_loss: f64,
    pub sample_count: u64,
}

impl WiouState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one detached IoU loss into the exponential running mean.
    /// The first observation seeds the mean.
    pub fn observe(&self, iou_loss: f64, momentum: f64) -> Self {
        let mean_iou_loss = if self.sample_count == 0 {
            iou_loss
        } else {
            momentum * self.mean_iou_loss + (1.0 - momentum) * iou_loss
        };
        Self {
            mean_iou_loss,
            sample_count: self.sample_count + 1,
        }
    }

    /// `β = L*_IoU / mean(L_IoU)`. A zero mean only arises when every
    /// observed loss (the current one included) was zero; `β` is then 0.
    pub fn outlier_degree(&self, iou_loss: f64) -> f64 {
        if self.mean_iou_loss > 0.0 {
            iou_loss / self.mean_iou_loss
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEval {
    pub value: f64,
    /// `∂loss/∂(x1, y1, x2, y2)` of the predicted box.
    pub grad: [f64; 4],
}

impl LossEval {
    fn from_diff(d: Diff) -> Self {
        Self { value: d.v, grad: d.g }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Result of a WIoUv3 evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WiouV3Eval {
    pub eval: LossEval,
    pub beta: f64,
    pub focusing: f64,
    pub state: WiouState,
}

/// Non-monotonic focusing coefficient `r(β) = β / (δ α^(β-δ))`.
///
/// Peaks at `β = 1 / ln α`, equals 1 at `β = δ`, and tends to 0 for `β → ∞`.
pub fn focusing_coefficient(beta: f64, params: &LossParams) -> f64 {
    if beta.is_infinite() {
        return 0.0;
    }
    beta / (params.delta * params.alpha.powf(beta - params.delta))
}

// ---------------------------------------------------------------------------
// Differentiable geometry

/// Per-box quantities shared by every loss.
struct Geometry {
    gt: BoundingBox,
    width: Diff,
    height: Diff,
    inter: Diff,
    union: Diff,
    hull_w: Diff,
    hull_h: Diff,
    center_dist_sq: Diff,
}

fn var(v: f64, idx: usize, sign: f64) -> Diff {
    let mut g = [0.0; 4];
    g[idx] = sign;
    Diff::new(v, g)
}

/// Overlap length of `[p1, p2]` and `[g1, g2]` as a function of `p1`, `p2`
/// (gradient slots `i1`, `i2`).
fn overlap(p1: f64, p2: f64, g1: f64, g2: f64, i1: usize, i2: usize) -> Diff {
    let lo = p1.max(g1);
    let hi = p2.min(g2);
    if hi <= lo {
        return Diff::constant(0.0);
    }
    let mut g = [0.0; 4];
    g[i1] = tie_slope(p1, g1, -1.0, true);
    g[i2] = tie_slope(p2, g2, 1.0, false);
    Diff::new(hi - lo, g)
}

/// Length of the hull of `[p1, p2]` and `[g1, g2]`.
fn hull_extent(p1: f64, p2: f64, g1: f64, g2: f64, i1: usize, i2: usize) -> Diff {
    let mut g = [0.0; 4];
    g[i1] = tie_slope(p1, g1, -1.0, false);
    g[i2] = tie_slope(p2, g2, 1.0, true);
    Diff::new(p2.max(g2) - p1.min(g1), g)
}

/// Slope contributed by a `max`/`min` edge selection: `slope` when the
/// predicted edge is the active one, 0 when the ground truth's is, and the
/// midpoint when they coincide. `active_if_greater` selects `max`.
fn tie_slope(p: f64, g: f64, slope: f64, active_if_greater: bool) -> f64 {
    if p == g {
        0.5 * slope
    } else if (p > g) == active_if_greater {
        slope
    } else {
        0.0
    }
}

impl Geometry {
    fn new(pred: &BoundingBox, gt: &BoundingBox) -> Result<Self, LossError> {
        for b in [pred, gt] {
            if !b.is_finite() || !b.is_normalized() {
                return Err(LossError::InvalidBox(*b));
            }
        }
        let (p, t) = (pred, gt);
        let width = var(p.x2, 2, 1.0) - var(p.x1, 0, 1.0);
        let height = var(p.y2, 3, 1.0) - var(p.y1, 1, 1.0);
        let inter = overlap(p.x1, p.x2, t.x1, t.x2, 0, 2) * overlap(p.y1, p.y2, t.y1, t.y2, 1, 3);
        let union = width * height + t.area() - inter;
        let hull_w = hull_extent(p.x1, p.x2, t.x1, t.x2, 0, 2);
        let hull_h = hull_extent(p.y1, p.y2, t.y1, t.y2, 1, 3);
        let (gcx, gcy) = t.center();
        let cx = (var(p.x1, 0, 1.0) + var(p.x2, 2, 1.0)).scale(0.5);
        let cy = (var(p.y1, 1, 1.0) + var(p.y2, 3, 1.0)).scale(0.5);
        let center_dist_sq = (cx + -gcx).square() + (cy + -gcy).square();
        Ok(Self {
            gt: *gt,
            width,
            height,
            inter,
            union,
            hull_w,
            hull_h,
            center_dist_sq,
        })
    }

    fn iou(&self) -> Diff {
        if self.union.v <= 0.0 {
            Diff::constant(0.0)
        } else {
            self.inter / self.union
        }
    }

    fn iou_loss(&self) -> Diff {
        1.0 - self.iou()
    }

    fn hull_diag_sq(&self, kind: LossKind) -> Result<Diff, LossError> {
        let d = self.hull_w.square() + self.hull_h.square();
        if d.v <= 0.0 {
            Err(LossError::DegenerateHull { kind })
        } else {
            Ok(d)
        }
    }

    fn distance_penalty(&self, kind: LossKind) -> Result<Diff, LossError> {
        Ok(self.center_dist_sq / self.hull_diag_sq(kind)?)
    }
}

// ---------------------------------------------------------------------------
// Losses

/// `L_IoU = 1 - IoU`.
pub fn loss_iou(pred: &BoundingBox, gt: &BoundingBox) -> Result<LossEval, LossError> {
    let geo = Geometry::new(pred, gt)?;
    Ok(LossEval::from_diff(geo.iou_loss()))
}

/// `L_GIoU = L_IoU + |C - (A ∪ B)| / |C|`.
pub fn loss_giou(pred: &BoundingBox, gt: &BoundingBox) -> Result<LossEval, LossError> {
    let geo = Geometry::new(pred, gt)?;
    let hull = geo.hull_w * geo.hull_h;
    let penalty = if hull.v <= 0.0 {
        Diff::constant(0.0)
    } else {
        (hull - geo.union) / hull
    };
    Ok(LossEval::from_diff(geo.iou_loss() + penalty))
}

/// `L_DIoU = L_IoU + ρ²(centers) / (W_g² + H_g²)`.
pub fn loss_diou(pred: &BoundingBox, gt: &BoundingBox) -> Result<LossEval, LossError> {
    let geo = Geometry::new(pred, gt)?;
    Ok(LossEval::from_diff(
        geo.iou_loss() + geo.distance_penalty(LossKind::Diou)?,
    ))
}

/// Aspect-ratio consistency term `v` of CIoU.
pub fn aspect_consistency(w: f64, h: f64, w_gt: f64, h_gt: f64) -> f64 {
    let d = (w / h).atan() - (w_gt / h_gt).atan();
    4.0 / (std::f64::consts::PI * std::f64::consts::PI) * d * d
}

/// `L_CIoU = L_DIoU + α v` with `α = v / (L_IoU + v)`.
pub fn loss_ciou(pred: &BoundingBox, gt: &BoundingBox) -> Result<LossEval, LossError> {
    let kind = LossKind::Ciou;
    let geo = Geometry::new(pred, gt)?;
    if geo.height.v <= 0.0 || gt.height() <= 0.0 {
        return Err(LossError::ZeroHeight { kind });
    }
    let iou_loss = geo.iou_loss();
    let gt_angle = (gt.width() / gt.height()).atan();
    let v = ((geo.width / geo.height).atan() + -gt_angle)
        .square()
        .scale(4.0 / (std::f64::consts::PI * std::f64::consts::PI));
    let denom = iou_loss + v;
    // α v = v² / (L_IoU + v); both vanish together only at pred == gt.
    let aspect = if denom.v <= 0.0 {
        Diff::constant(0.0)
    } else {
        v * v / denom
    };
    Ok(LossEval::from_diff(
        iou_loss + geo.distance_penalty(kind)? + aspect,
    ))
}

fn eiou_diff(geo: &Geometry) -> Result<Diff, LossError> {
    let kind = LossKind::Eiou;
    if geo.hull_w.v <= 0.0 || geo.hull_h.v <= 0.0 {
        return Err(LossError::ZeroHullSide { kind });
    }
    let dw = (geo.width + -geo.gt.width()).square() / geo.hull_w.square();
    let dh = (geo.height + -geo.gt.height()).square() / geo.hull_h.square();
    Ok(geo.iou_loss() + geo.distance_penalty(kind)? + dw + dh)
}

/// `L_EIoU = L_IoU + ρ²/(W_g²+H_g²) + (w - w_gt)²/W_g² + (h - h_gt)²/H_g²`.
pub fn loss_eiou(pred: &BoundingBox, gt: &BoundingBox) -> Result<LossEval, LossError> {
    let geo = Geometry::new(pred, gt)?;
    Ok(LossEval::from_diff(eiou_diff(&geo)?))
}

/// `L_Focal-EIoU = IoU^γ · L_EIoU`.
///
/// For `γ > 0` this is exactly zero (with zero gradient) whenever the boxes
/// do not overlap, as the formula dictates.
pub fn loss_focal_eiou(
    pred: &BoundingBox,
    gt: &BoundingBox,
    params: &LossParams,
) -> Result<LossEval, LossError> {
    params.validate()?;
    let geo = Geometry::new(pred, gt)?;
    let eiou = eiou_diff(&geo)?;
    let iou = geo.iou();
    let weight = if params.gamma == 0.0 {
        Diff::constant(1.0)
    } else if iou.v <= 0.0 {
        Diff::constant(0.0)
    } else {
        iou.powf(params.gamma)
    };
    Ok(LossEval::from_diff(weight * eiou))
}

fn wiou_v1_diff(geo: &Geometry, kind: LossKind) -> Result<Diff, LossError> {
    let norm = geo.hull_diag_sq(kind)?.detach();
    Ok((geo.center_dist_sq / norm).exp() * geo.iou_loss())
}

/// `L_WIoUv1 = exp(ρ² / (W_g² + H_g²)) · L_IoU`, normaliser detached.
pub fn loss_wiou_v1(pred: &BoundingBox, gt: &BoundingBox) -> Result<LossEval, LossError> {
    let geo = Geometry::new(pred, gt)?;
    Ok(LossEval::from_diff(wiou_v1_diff(&geo, LossKind::WiouV1)?))
}

/// `L_WIoUv3 = r · L_WIoUv1` with `β` measured against the running mean
/// after folding in the current IoU loss. `β` and `r` are detached.
pub fn loss_wiou_v3(
    pred: &BoundingBox,
    gt: &BoundingBox,
    state: &WiouState,
    params: &LossParams,
) -> Result<WiouV3Eval, LossError> {
    params.validate()?;
    let geo = Geometry::new(pred, gt)?;
    let v1 = wiou_v1_diff(&geo, LossKind::WiouV3)?;
    let iou_loss = geo.iou_loss().v;
    let state = state.observe(iou_loss, params.running_mean_momentum);
    let beta = state.outlier_degree(iou_loss);
    let focusing = focusing_coefficient(beta, params);
    Ok(WiouV3Eval {
        eval: LossEval::from_diff(v1.scale(focusing)),
        beta,
        focusing,
        state,
    })
}

/// Evaluates any loss kind, updating `state` when the kind is WIoUv3.
pub fn evaluate(
    kind: LossKind,
    pred: &BoundingBox,
    gt: &BoundingBox,
    params: &LossParams,
    state: &mut WiouState,
) -> Result<LossEval, LossError> {
    match kind {
        LossKind::Iou => loss_iou(pred, gt),
        LossKind::Giou => loss_giou(pred, gt),
        LossKind::Diou => loss_diou(pred, gt),
        LossKind::Ciou => loss_ciou(pred, gt),
        LossKind::Eiou => loss_eiou(pred, gt),
        LossKind::FocalEiou => loss_focal_eiou(pred, gt, params),
        LossKind::WiouV1 => loss_wiou_v1(pred, gt),
        LossKind::WiouV3 => {
            let out = loss_wiou_v3(pred, gt, state, params)?;
            *state = out.state;
            Ok(out.eval)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::iou;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2)
    }

    const TOL: f64 = 1e-12;

    #[test]
    fn iou_loss_examples() {
        let a = b(0., 0., 2., 2.);
        assert_eq!(loss_iou(&a, &a).unwrap().value, 0.0);
        let far = loss_iou(&b(0., 0., 1., 1.), &b(5., 5., 6., 6.)).unwrap();
        assert_eq!(far.value, 1.0);
        assert_eq!(far.grad, [0.0; 4]);
        let v = loss_iou(&a, &b(1., 1., 3., 3.)).unwrap().value;
        assert!((v - 6.0 / 7.0).abs() < TOL);
    }

    #[test]
    fn giou_examples() {
        let a = b(0., 0., 1., 1.);
        assert!(loss_giou(&a, &a).unwrap().value.abs() < TOL);
        // hull 9, union 2
        let e = loss_giou(&a, &b(2., 2., 3., 3.)).unwrap();
        assert!((e.value - (1.0 + 7.0 / 9.0)).abs() < TOL);
        assert!(e.grad_norm() > 0.0);
    }

    #[test]
    fn diou_examples() {
        let a = b(0., 0., 1., 1.);
        // W_g = H_g = 3, center distance² = 8
        let v = loss_diou(&a, &b(2., 2., 3., 3.)).unwrap().value;
        assert!((v - (1.0 + 8.0 / 18.0)).abs() < TOL);
        assert!(loss_diou(&a, &a).unwrap().value.abs() < TOL);
        let inner = b(0.25, 0.25, 0.75, 0.75);
        let d = loss_diou(&inner, &a).unwrap().value;
        assert_eq!(d, loss_iou(&inner, &a).unwrap().value);
    }

    #[test]
    fn diou_degenerate_hull_is_error() {
        let p = b(1., 1., 1., 1.);
        assert_eq!(
            loss_diou(&p, &p),
            Err(LossError::DegenerateHull { kind: LossKind::Diou })
        );
        assert!(loss_wiou_v1(&p, &p).is_err());
    }

    #[test]
    fn ciou_examples() {
        let a = b(0., 0., 1., 1.);
        let c = b(2., 2., 3., 3.);
        assert_eq!(loss_ciou(&a, &c).unwrap().value, loss_diou(&a, &c).unwrap().value);
        let v = aspect_consistency(2.0, 1.0, 1.0, 1.0);
        let expect = 4.0 / std::f64::consts::PI.powi(2) * (2f64.atan() - std::f64::consts::FRAC_PI_4).powi(2);
        assert!((v - expect).abs() < TOL);
        assert!((v - 0.04196).abs() < 1e-5);
        assert!(loss_ciou(&a, &a).unwrap().value.abs() < TOL);
        assert_eq!(
            loss_ciou(&b(0., 0., 1., 0.), &c),
            Err(LossError::ZeroHeight { kind: LossKind::Ciou })
        );
    }

    #[test]
    fn eiou_examples() {
        let a = b(0., 0., 2., 2.);
        let v = loss_eiou(&a, &b(1., 1., 3., 3.)).unwrap().value;
        assert!((v - (6.0 / 7.0 + 2.0 / 18.0)).abs() < TOL);
        let v = loss_eiou(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.)).unwrap().value;
        assert!((v - (1.0 + 8.0 / 18.0)).abs() < TOL);
        assert!(loss_eiou(&a, &a).unwrap().value.abs() < TOL);
        let flat = b(0., 1., 4., 1.);
        assert_eq!(
            loss_eiou(&flat, &flat),
            Err(LossError::ZeroHullSide { kind: LossKind::Eiou })
        );
    }

    #[test]
    fn focal_eiou_examples() {
        let p = LossParams::default();
        let far = loss_focal_eiou(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.), &p).unwrap();
        assert_eq!(far.value, 0.0);
        assert_eq!(far.grad, [0.0; 4]);
        let (a, c) = (b(0., 0., 2., 2.), b(1., 1., 3., 3.));
        let v = loss_focal_eiou(&a, &c, &p).unwrap().value;
        let eiou = 6.0 / 7.0 + 2.0 / 18.0;
        assert!((v - (1.0f64 / 7.0).sqrt() * eiou).abs() < TOL);
        assert!((v - 0.36597).abs() < 1e-5);
        let p0 = LossParams { gamma: 0.0, ..p };
        assert_eq!(
            loss_focal_eiou(&a, &c, &p0).unwrap().value,
            loss_eiou(&a, &c).unwrap().value
        );
    }

    #[test]
    fn wiou_v1_examples() {
        let (a, c) = (b(0., 0., 2., 2.), b(1., 1., 3., 3.));
        let v = loss_wiou_v1(&a, &c).unwrap().value;
        assert!((v - (2.0f64 / 18.0).exp() * 6.0 / 7.0).abs() < TOL);
        // exp(1/9) * 6/7 = 0.9578735 (hand arithmetic)
        assert!((v - 0.957_873_5).abs() < 1e-5);
        assert!(loss_wiou_v1(&a, &a).unwrap().value.abs() < TOL);
        let inner = b(0.5, 0.5, 1.5, 1.5);
        assert_eq!(
            loss_wiou_v1(&inner, &a).unwrap().value,
            loss_iou(&inner, &a).unwrap().value
        );
    }

    #[test]
    fn focusing_examples() {
        let p = LossParams::default();
        assert_eq!(focusing_coefficient(3.0, &p), 1.0);
        assert_eq!(focusing_coefficient(0.0, &p), 0.0);
        assert!((focusing_coefficient(1.0, &p) - 1.9f64.powi(2) / 3.0).abs() < TOL);
        assert_eq!(focusing_coefficient(f64::INFINITY, &p), 0.0);
    }

    #[test]
    fn focusing_peak_and_monotonicity() {
        let p = LossParams::default();
        let peak = 1.0 / p.alpha.ln();
        let (best, _) = (0..=10_000)
            .map(|i| i as f64 * 0.001)
            .map(|beta| (beta, focusing_coefficient(beta, &p)))
            .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((best - peak).abs() < 0.002, "{best} vs {peak}");
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.005).collect();
        for w in grid.windows(2) {
            let (r0, r1) = (focusing_coefficient(w[0], &p), focusing_coefficient(w[1], &p));
            if w[1] <= peak {
                assert!(r1 > r0);
            } else if w[0] >= peak {
                assert!(r1 < r0);
            }
        }
    }

    #[test]
    fn wiou_v3_scales_v1_by_frozen_r() {
        let p = LossParams::default();
        let (a, c) = (b(0., 0., 2., 2.), b(1., 1., 3., 3.));
        let state = WiouState {
            mean_iou_loss: 0.4,
            sample_count: 10,
        };
        let out = loss_wiou_v3(&a, &c, &state, &p).unwrap();
        let v1 = loss_wiou_v1(&a, &c).unwrap();
        assert_eq!(out.eval.value, out.focusing * v1.value);
        for i in 0..4 {
            assert_eq!(out.eval.grad[i], out.focusing * v1.grad[i]);
        }
        let expected_mean = 0.99 * 0.4 + 0.01 * (6.0 / 7.0);
        assert!((out.state.mean_iou_loss - expected_mean).abs() < TOL);
        assert!((out.beta - (6.0 / 7.0) / expected_mean).abs() < TOL);
        assert_eq!(out.state.sample_count, 11);
    }

    #[test]
    fn wiou_v3_bootstrap_gives_unit_beta() {
        let p = LossParams::default();
        let out = loss_wiou_v3(&b(0., 0., 2., 2.), &b(1., 1., 3., 3.), &WiouState::new(), &p).unwrap();
        assert_eq!(out.beta, 1.0);
        assert!((out.focusing - 1.9f64.powi(2) / 3.0).abs() < TOL);
        let same = loss_wiou_v3(&b(1., 1., 3., 3.), &b(1., 1., 3., 3.), &WiouState::new(), &p).unwrap();
        assert_eq!(same.eval.value, 0.0);
    }

    #[test]
    fn running_mean_converges() {
        let mut s = WiouState {
            mean_iou_loss: 0.9,
            sample_count: 3,
        };
        for _ in 0..5000 {
            s = s.observe(0.25, 0.99);
        }
        assert!((s.mean_iou_loss - 0.25).abs() < 1e-12);
    }

    #[test]
    fn every_loss_is_stationary_at_ground_truth() {
        let gt = b(1.0, 2.0, 4.0, 3.5);
        let p = LossParams::default();
        for kind in LossKind::ALL {
            let mut s = WiouState::new();
            let e = evaluate(kind, &gt, &gt, &p, &mut s).unwrap();
            assert!(e.value.abs() < TOL, "{kind}");
            assert!(e.grad.iter().all(|g| g.abs() < TOL), "{kind}: {:?}", e.grad);
        }
    }

    #[test]
    fn ciou_equals_diou_for_equal_aspect() {
        let (a, c) = (b(0., 0., 2., 1.), b(1., 0.5, 5., 2.5));
        let ci = loss_ciou(&a, &c).unwrap();
        let di = loss_diou(&a, &c).unwrap();
        assert_eq!(ci.value, di.value);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert_eq!("WIoUv3".parse::<LossKind>().unwrap(), LossKind::WiouV3);
        assert_eq!("Focal_EIoU".parse::<LossKind>().unwrap(), LossKind::FocalEiou);
        assert!("siou".parse::<LossKind>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(LossParams::default().validate().is_ok());
        assert!(LossParams { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(LossParams { gamma: -0.1, ..Default::default() }.validate().is_err());
        assert!(LossParams { delta: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossParams { running_mean_momentum: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn value_paths_agree() {
        let p = LossParams::default();
        let pairs = [
            (b(0., 0., 2., 2.), b(1., 1., 3., 3.)),
            (b(0., 0., 1., 1.), b(2., 2., 3., 3.)),
            (b(0.2, 0.1, 3.0, 1.7), b(1.0, 0.5, 2.0, 4.0)),
        ];
        for (a, c) in pairs {
            assert!((iou(&a, &c) - (1.0 - loss_iou(&a, &c).unwrap().value)).abs() < TOL);
            for kind in LossKind::ALL {
                let state = WiouState::new();
                let mut s = state;
                let analytic = evaluate(kind, &a, &c, &p, &mut s).unwrap().value;
                let reference = reference_value(kind, &a, &c, &p, &state).unwrap();
                assert!((analytic - reference).abs() < 1e-12, "{kind}");
            }
        }
    }
}
