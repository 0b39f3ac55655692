//! Command-line front end for the `trapeval` library.
//!
//! Every subcommand writes its files under `--out-dir` and prints a short
//! CSV summary on stdout. Diagnostics go to stderr.

pub mod commands;
pub mod svg;

use std::io::Write;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "trapeval", version, about = "Detector evaluation, box-loss studies, Grad-CAM and camera-trap splits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score detections against annotations: AP, mAP, confusion matrix, PR curves.
    Eval(commands::eval::EvalArgs),
    /// Gradient-descent trajectories for the IoU loss family.
    Losslab(commands::losslab::LosslabArgs),
    /// Grad-CAM heatmap and overlay for one image.
    Gradcam(commands::gradcam::GradcamArgs),
    /// Cis/trans location split of an annotation file.
    Split(commands::split::SplitArgs),
    /// Per-layer output shapes of the baseline or improved graph.
    Shapes(commands::shapes::ShapesArgs),
}

/// Runs one parsed command, writing its summary to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Eval(a) => commands::eval::run(&a, out),
        Command::Losslab(a) => commands::losslab::run(&a, out),
        Command::Gradcam(a) => commands::gradcam::run(&a, out),
        Command::Split(a) => commands::split::run(&a, out),
        Command::Shapes(a) => commands::shapes::run(&a, out),
    }
}

/// Thread count from `TRAPEVAL_THREADS`; 0 or unset means automatic.
pub fn threads_from_env() -> anyhow::Result<usize> {
    match std::env::var("TRAPEVAL_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("TRAPEVAL_THREADS must be a non-negative integer, got `{v}`")),
        Err(_) => Ok(0),
    }
}
