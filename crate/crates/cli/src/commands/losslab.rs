use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::bail;
use clap::Args;
use trapeval::losses::{focusing_coefficient, simulate_regression, LossKind, LossParams, RegressionConfig, WiouState};
use trapeval::BoundingBox;

use super::{ensure_dir, write_file};
use crate::svg::LinePlot;

/// Box given as `x1,y1,x2,y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxArg(pub BoundingBox);

impl FromStr for BoxArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("`{s}` is not four comma-separated numbers"))?;
        let [x1, y1, x2, y2] = v[..] else {
            return Err(format!("`{s}` needs exactly four numbers"));
        };
        let b = BoundingBox::new(x1, y1, x2, y2);
        b.validate().map_err(|e| e.to_string())?;
        Ok(Self(b))
    }
}

#[derive(Debug, Args)]
pub struct LosslabArgs {
    /// Loss kinds, comma separated (default: all eight)
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<LossKind>,
    #[arg(long, default_value = "0,0,1,1")]
    pub start: BoxArg,
    #[arg(long, default_value = "2,2,3,3")]
    pub gt: BoxArg,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    /// Focal-EIoU exponent
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// WIoU focusing base
    #[arg(long, default_value_t = 1.9)]
    pub alpha: f64,
    /// WIoU focusing offset
    #[arg(long, default_value_t = 3.0)]
    pub delta: f64,
    #[arg(long, default_value = "losslab_out")]
    pub out_dir: PathBuf,
}

/// `(β, r(β))` for β from 0 to 10 in steps of 0.01.
pub fn focusing_curve(params: &LossParams) -> Vec<(f64, f64)> {
    (0..=1000)
        .map(|i| {
            let beta = i as f64 / 100.0;
            (beta, focusing_coefficient(beta, params))
        })
        .collect()
}

pub fn run(args: &LosslabArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let params = LossParams {
        gamma: args.gamma,
        alpha: args.alpha,
        delta: args.delta,
        ..LossParams::default()
    };
    params.validate()?;
    let config = RegressionConfig {
        step: args.step,
        iters: args.iters,
        arena: None,
    };
    let kinds = if args.kinds.is_empty() { LossKind::ALL.to_vec() } else { args.kinds.clone() };
    ensure_dir(&args.out_dir)?;

    let mut plot = LinePlot::new("Loss during descent", "iteration", "loss");
    let mut failures = Vec::new();
    writeln!(out, "kind,initial_loss,final_loss,initial_center_dist,final_center_dist,final_iou")?;
    for kind in kinds {
        match simulate_regression(kind, &args.start.0, &args.gt.0, &config, &params, WiouState::new()) {
            Ok(t) => {
                write_file(&args.out_dir, &format!("trajectory_{kind}.csv"), t.to_csv())?;
                let (a, b) = (t.first(), t.last());
                writeln!(
                    out,
                    "{kind},{:?},{:?},{:?},{:?},{:?}",
                    a.loss, b.loss, a.center_dist, b.center_dist, b.iou
                )?;
                plot = plot.series(kind.name(), t.points.iter().map(|p| (p.iter as f64, p.loss)).collect());
            }
            Err(e) => {
                eprintln!("{kind}: {e}");
                failures.push(kind.name());
            }
        }
    }
    write_file(&args.out_dir, "loss_curves.svg", plot.render())?;

    let curve = focusing_curve(&params);
    let mut csv = String::from("beta,r\n");
    for (b, r) in &curve {
        csv.push_str(&format!("{b:?},{r:?}\n"));
    }
    write_file(&args.out_dir, "focusing_curve.csv", csv)?;
    let peak = 1.0 / params.alpha.ln();
    let focus = LinePlot::new(
        format!("Focusing coefficient r(β), α = {}, δ = {}", params.alpha, params.delta),
        "β",
        "r",
    )
    .series("r(β)", curve)
    .marker(peak, format!("β = 1/ln α = {peak:.3}"))
    .marker(params.delta, "r = 1");
    write_file(&args.out_dir, "focusing_curve.svg", focus.render())?;

    if !failures.is_empty() {
        bail!("trajectory diverged for {}", failures.join(", "));
    }
    Ok(())
}
