use std::io::Write;
use std::path::PathBuf;

use anyhow::bail;
use clap::{Args, ValueEnum};
use trapeval::graph::{build_graph, reference_shape_checks, FusionWiring, GraphOptions, GraphSpec, Variant};

use super::write_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Baseline,
    Improved,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::Improved => Variant::Improved,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    /// Layer-2 fusion folded back into the stride-8 path
    Merged,
    /// Layer-2 fusion also feeds a stride-4 detect scale
    Extra,
}

impl From<FusionArg> for FusionWiring {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Merged => FusionWiring::MergedIntoP3,
            FusionArg::Extra => FusionWiring::ExtraScale,
        }
    }
}

pub fn parse_size(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a size"))?;
    if n == 0 || n % 32 != 0 {
        return Err(format!("input size must be a positive multiple of 32, got {n}"));
    }
    Ok(n)
}

#[derive(Debug, Args)]
pub struct ShapesArgs {
    #[arg(value_enum)]
    pub variant: VariantArg,
    #[arg(default_value = "640", value_parser = parse_size)]
    pub size: usize,
    /// Compare against the reference backbone table and fail on mismatch
    #[arg(long)]
    pub check: bool,
    /// Also write the graph description to this file
    #[arg(long)]
    pub emit: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "merged")]
    pub fusion: FusionArg,
    #[arg(long, default_value_t = 15)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn graph_from(variant: VariantArg, size: usize, fusion: FusionArg, classes: usize, seed: u64) -> anyhow::Result<GraphSpec> {
    let opts = GraphOptions {
        classes,
        fusion: fusion.into(),
        seed,
        ..GraphOptions::default()
    };
    Ok(build_graph(variant.into(), size, &opts)?)
}

fn dims((c, h, w): (usize, usize, usize)) -> String {
    format!("{h}x{w}x{c}")
}

pub fn run(args: &ShapesArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let spec = graph_from(args.variant, args.size, args.fusion, args.classes, args.seed)?;
    let shapes = spec.infer_shapes()?;
    writeln!(out, "layer,kind,from,output")?;
    for (layer, s) in spec.layers.iter().zip(&shapes) {
        let from: Vec<String> = layer.inputs.iter().map(|i| spec.layers[*i].name.clone()).collect();
        let from = if from.is_empty() { "input".to_string() } else { from.join(" ") };
        let output = s.output.map_or("-".to_string(), dims);
        writeln!(out, "{},{},{},{}", layer.name, layer.kind.name(), from, output)?;
        for st in &s.stages {
            writeln!(out, "{}.{},stage,,{}", layer.name, st.name, dims(st.shape))?;
        }
    }
    if let Some(path) = &args.emit {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("graph.txt");
        write_file(dir, name, spec.to_text())?;
    }
    if args.check {
        let checks = reference_shape_checks(&spec)?;
        writeln!(out, "check,expected,found,status")?;
        let mut failed = Vec::new();
        for c in &checks {
            let found = c.found.map_or("missing".to_string(), dims);
            let status = if c.passed() { "PASS" } else { "FAIL" };
            writeln!(out, "{},{},{},{status}", c.what, dims(c.expected), found)?;
            if !c.passed() {
                failed.push(c.what.clone());
            }
        }
        if !failed.is_empty() {
            bail!("shape check failed: {}", failed.join("; "));
        }
    }
    Ok(())
}
