use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use trapeval::dataset::{encode_pnm, read_ppm};
use trapeval::gradcam::{class_activation_map, normalize_to, overlay};
use trapeval::graph::{resize_nearest, GraphSpec, Init, Network, ScoreSelector};

use super::shapes::{graph_from, parse_size, FusionArg, VariantArg};
use super::{ensure_dir, write_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Uniform,
    Zeros,
}

#[derive(Debug, Args)]
pub struct GradcamArgs {
    /// Binary PPM (P6) input image
    pub image: PathBuf,
    /// Layer whose activations are explained
    #[arg(long)]
    pub layer: String,
    /// Category whose largest logit is the explained score
    #[arg(long)]
    pub category: usize,
    /// Restrict the score to one head scale
    #[arg(long)]
    pub scale: Option<usize>,
    /// Graph description file (as written by `shapes --emit`); overrides --variant
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "improved")]
    pub variant: VariantArg,
    #[arg(long, default_value = "640", value_parser = parse_size)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "merged")]
    pub fusion: FusionArg,
    #[arg(long, default_value_t = 15)]
    pub classes: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub init: InitArg,
    /// Weight seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha_overlay: f64,
    #[arg(long, default_value = "gradcam_out")]
    pub out_dir: PathBuf,
}

fn load_graph(args: &GradcamArgs) -> anyhow::Result<GraphSpec> {
    let mut spec = match &args.graph {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            GraphSpec::parse_text(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => graph_from(args.variant, args.size, args.fusion, args.classes, args.seed)?,
    };
    if args.graph.is_none() || args.init == InitArg::Zeros {
        spec.init = match args.init {
            InitArg::Uniform => Init::Uniform,
            InitArg::Zeros => Init::Zeros,
        };
    }
    Ok(spec)
}

pub fn run(args: &GradcamArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let spec = load_graph(args)?;
    let image = read_ppm(&args.image).with_context(|| format!("reading {}", args.image.display()))?;
    let (_, gh, gw) = spec.input;
    let net = Network::new(spec)?;
    // the graph sees the image resized to its input and scaled to [0, 1]
    let input = resize_nearest(&image, gh, gw)?.map(|v| v / 255.0);
    let run = net.forward(&input)?;
    let selector = ScoreSelector::MaxCategory {
        category: args.category,
        scale: args.scale,
    };
    let score = run.score(&selector)?;
    let grads = run.backward_to_layer(&selector, &args.layer)?;
    let cam = class_activation_map(run.activation(&args.layer)?, &grads)?;
    let heat = normalize_to(&cam, image.height, image.width)?;
    let blended = overlay(&image, &heat, args.alpha_overlay)?;

    ensure_dir(&args.out_dir)?;
    write_file(&args.out_dir, "heatmap.ppm", encode_pnm(&heat.colorize())?)?;
    let mut gray = format!("P5\n{} {}\n255\n", heat.width, heat.height).into_bytes();
    gray.extend(heat.to_gray());
    write_file(&args.out_dir, "heatmap.pgm", gray)?;
    write_file(&args.out_dir, "overlay.ppm", encode_pnm(&blended)?)?;
    writeln!(out, "layer,category,score,heat_max")?;
    writeln!(out, "{},{},{:?},{:?}", args.layer, args.category, score, heat.max())?;
    Ok(())
}
