use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use trapeval::dataset::AnnotationSet;
use trapeval::eval::{evaluate_corpus, read_detections_csv, EvalReport, MatchConfig, PrPoint};

use super::{ensure_dir, write_file};
use crate::svg::LinePlot;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detections CSV: image_id,category_id,confidence,x1,y1,x2,y2
    pub detections: PathBuf,
    /// COCO-style annotation JSON
    pub annotations: PathBuf,
    #[arg(long, default_value_t = 0.45)]
    pub iou_thresh: f64,
    #[arg(long, default_value_t = 0.25)]
    pub conf_thresh: f64,
    #[arg(long, default_value = "eval_out")]
    pub out_dir: PathBuf,
}

fn curve_points(curve: &[PrPoint]) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(curve.len() + 1);
    if let Some(first) = curve.first() {
        pts.push((0.0, first.precision));
    }
    pts.extend(curve.iter().map(|p| (p.recall, p.precision)));
    pts
}

fn pr_plot(title: String) -> LinePlot {
    LinePlot::new(title, "recall", "precision").x_range(0.0, 1.0).y_range(0.0, 1.0)
}

pub fn evaluate_files(args: &EvalArgs) -> anyhow::Result<(AnnotationSet, EvalReport)> {
    let set = AnnotationSet::read(&args.annotations)
        .with_context(|| format!("reading annotations {}", args.annotations.display()))?;
    let file = File::open(&args.detections).with_context(|| format!("opening {}", args.detections.display()))?;
    let dets = read_detections_csv(file).with_context(|| format!("reading detections {}", args.detections.display()))?;
    let cfg = MatchConfig {
        iou_threshold: args.iou_thresh,
        confidence_threshold: args.conf_thresh,
    };
    let report = evaluate_corpus(&dets, &set.ground_truths(), &set.category_set(), &cfg)?;
    Ok((set, report))
}

pub fn run(args: &EvalArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let (set, report) = evaluate_files(args)?;
    ensure_dir(&args.out_dir)?;
    let metrics = report.metrics_csv();
    write_file(&args.out_dir, "metrics.csv", &metrics)?;
    let mut confusion = Vec::new();
    report.confusion.write_csv(&mut confusion)?;
    write_file(&args.out_dir, "confusion.csv", confusion)?;

    let names: HashMap<u32, &str> = set.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let label = |id: u32| match names.get(&id) {
        Some(n) if !n.is_empty() => format!("{id} {n}"),
        _ => id.to_string(),
    };
    let mut all = pr_plot("PR curves, IoU 0.5".into());
    for (id, curve) in &report.curves {
        let ap = report
            .per_category
            .iter()
            .find(|m| m.category_id == *id)
            .map_or(0.0, |m| m.ap50);
        let pts = curve_points(curve);
        let single = pr_plot(format!("{} (AP50 {ap:.3})", label(*id))).series(label(*id), pts.clone());
        write_file(&args.out_dir, &format!("pr_{id}.svg"), single.render())?;
        all = all.series(format!("{} {ap:.3}", label(*id)), pts);
    }
    write_file(&args.out_dir, "pr_all.svg", all.render())?;
    out.write_all(metrics.as_bytes())?;
    Ok(())
}
