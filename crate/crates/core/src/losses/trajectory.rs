//! Plain gradient descent on the predicted corners, one loss at a time.

use std::io::{self, Write};

use super::{evaluate, LossError, LossKind, LossParams, WiouState};
use crate::bbox::{center_distance_sq, iou, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionConfig {
    pub step: f64,
    pub iters: usize,
    /// Boxes are clamped into this region after every step when set.
    pub arena: Option<BoundingBox>,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            iters: 500,
            arena: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub loss: f64,
    pub iou: f64,
    /// Euclidean distance between the box centers.
    pub center_dist: f64,
    pub area: f64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: LossKind,
    /// Row `i` describes the box before step `i`; the last row is the final box.
    pub points: Vec<TrajectoryPoint>,
    pub final_state: WiouState,
}

pub const TRAJECTORY_CSV_HEADER: &str = "iter,loss,iou,center_dist,area,x1,y1,x2,y2";

impl Trajectory {
    pub fn first(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least one point")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
        for p in &self.points {
            let b = &p.bbox;
            writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                p.iter, p.loss, p.iou, p.center_dist, p.area, b.x1, b.y1, b.x2, b.y2
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// Runs `iters` descent steps of size `step` from `start` towards `gt`.
///
/// Corner order is re-normalized after every step. A non-finite box or loss
/// stops the run with [`LossError::Diverged`].
pub fn simulate_regression(
    kind: LossKind,
    start: &BoundingBox,
    gt: &BoundingBox,
    config: &RegressionConfig,
    params: &LossParams,
    state: WiouState,
) -> Result<Trajectory, LossError> {
    if !(config.step > 0.0) {
        return Err(LossError::InvalidParameter {
            name: "step",
            value: config.step,
            reason: "must be > 0",
        });
    }
    if config.iters == 0 {
        return Err(LossError::InvalidParameter {
            name: "iters",
            value: 0.0,
            reason: "must be >= 1",
        });
    }
    params.validate()?;

    let mut state = state;
    let mut current = start.normalized();
    let mut points = Vec::with_capacity(config.iters + 1);
    for iter in 0..=config.iters {
        let eval = evaluate(kind, &current, gt, params, &mut state)?;
        if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            return Err(LossError::Diverged { kind, iteration: iter });
        }
        points.push(TrajectoryPoint {
            iter,
            loss: eval.value,
            iou: iou(&current, gt),
            center_dist: center_distance_sq(&current, gt).sqrt(),
            area: current.area(),
            bbox: current,
        });
        if iter == config.iters {
            break;
        }
        let c = current.to_array();
        let mut next = BoundingBox::from_array(std::array::from_fn(|i| c[i] - config.step * eval.grad[i]));
        if let Some(arena) = &config.arena {
            next = next.clamp_within(arena);
        }
        if !next.is_finite() {
            return Err(LossError::Diverged { kind, iteration: iter + 1 });
        }
        current = next;
    }
    Ok(Trajectory {
        kind,
        points,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn iou_descent_from_disjoint_start_is_stationary() {
        let t = simulate_regression(
            LossKind::Iou,
            &b(0., 0., 1., 1.),
            &b(2., 2., 3., 3.),
            &RegressionConfig::default(),
            &LossParams::default(),
            WiouState::new(),
        )
        .unwrap();
        assert_eq!(t.points.len(), 501);
        assert!(t.points.iter().all(|p| p.bbox == b(0., 0., 1., 1.) && p.loss == 1.0));
    }

    #[test]
    fn diou_descent_closes_center_gap() {
        let t = simulate_regression(
            LossKind::Diou,
            &b(0., 0., 1., 1.),
            &b(2., 2., 3., 3.),
            &RegressionConfig::default(),
            &LossParams::default(),
            WiouState::new(),
        )
        .unwrap();
        assert!(t.last().center_dist < t.first().center_dist);
        assert!(t.last().loss < t.first().loss);
    }

    #[test]
    fn giou_expands_the_box_first() {
        let t = simulate_regression(
            LossKind::Giou,
            &b(0., 0., 1., 1.),
            &b(2., 2., 3., 3.),
            &RegressionConfig { step: 0.05, iters: 20, arena: None },
            &LossParams::default(),
            WiouState::new(),
        )
        .unwrap();
        assert!(t.points[20].area > t.points[0].area);
    }

    #[test]
    fn start_at_ground_truth_stays_at_zero() {
        let gt = b(2., 2., 3., 4.);
        for kind in LossKind::ALL {
            let t = simulate_regression(
                kind,
                &gt,
                &gt,
                &RegressionConfig { step: 0.1, iters: 25, arena: None },
                &LossParams::default(),
                WiouState::new(),
            )
            .unwrap();
            assert!(t.points.iter().all(|p| p.loss.abs() < 1e-12), "{kind}");
        }
    }

    #[test]
    fn arena_clamps_boxes() {
        let arena = b(0., 0., 1.2, 1.2);
        let t = simulate_regression(
            LossKind::Giou,
            &b(0., 0., 1., 1.),
            &b(2., 2., 3., 3.),
            &RegressionConfig { step: 1.0, iters: 50, arena: Some(arena) },
            &LossParams::default(),
            WiouState::new(),
        )
        .unwrap();
        assert!(t.points.iter().all(|p| arena.contains(&p.bbox)));
    }

    #[test]
    fn huge_steps_report_divergence() {
        let err = simulate_regression(
            LossKind::WiouV1,
            &b(0., 0., 1., 1.),
            &b(2., 2., 3., 3.),
            &RegressionConfig { step: 1e305, iters: 10, arena: None },
            &LossParams::default(),
            WiouState::new(),
        )
        .unwrap_err();
        assert!(matches!(err, LossError::Diverged { kind: LossKind::WiouV1, .. }));
    }

    #[test]
    fn csv_header_and_rows() {
        let t = simulate_regression(
            LossKind::Iou,
            &b(0., 0., 2., 2.),
            &b(1., 1., 3., 3.),
            &RegressionConfig { step: 0.01, iters: 2, arena: None },
            &LossParams::default(),
            WiouState::new(),
        )
        .unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines[1].split(',').count(), 9);
    }

    #[test]
    fn rejects_bad_config() {
        let a = b(0., 0., 1., 1.);
        let p = LossParams::default();
        let bad_step = RegressionConfig { step: 0.0, ..Default::default() };
        assert!(simulate_regression(LossKind::Iou, &a, &a, &bad_step, &p, WiouState::new()).is_err());
        let bad_iters = RegressionConfig { iters: 0, ..Default::default() };
        assert!(simulate_regression(LossKind::Iou, &a, &a, &bad_iters, &p, WiouState::new()).is_err());
    }
}
