//! Declarative layer lists, the two YOLOv8s topologies and shape propagation.

use std::fmt::Write as _;
use std::str::FromStr;

use super::tensor::{conv_output_dim, Shape, ShapeSpec};
use super::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Convolution with padding `kernel / 2`, followed by SiLU.
    Conv { out: usize, kernel: usize, stride: usize },
    /// Split, `n` bottlenecks, concatenate, fuse.
    C2f { out: usize, n: usize, shortcut: bool },
    /// Three chained stride-1 max pools, concatenated with the input, fused.
    Sppf { out: usize, kernel: usize },
    Upsample { factor: usize },
    Concat,
    /// Channel attention then spatial attention; `reduction` applies to the
    /// spatial convs (the channel MLP always uses C/4).
    Gam { reduction: usize },
    /// Decoupled head stub, one scale per input.
    Detect { classes: usize },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Conv { .. } => "conv",
            Self::C2f { .. } => "c2f",
            Self::Sppf { .. } => "sppf",
            Self::Upsample { .. } => "upsample",
            Self::Concat => "concat",
            Self::Gam { .. } => "gam",
            Self::Detect { .. } => "detect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Indices of earlier layers; empty means the graph input.
    pub inputs: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, bias zero.
    #[default]
    Uniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSpec {
    pub input: Shape,
    pub init: Init,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    Improved,
}

impl FromStr for Variant {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "improved" => Ok(Self::Improved),
            other => Err(GraphError::InvalidParameter(format!("unknown graph variant `{other}`"))),
        }
    }
}

/// Where the layer-2 fusion branch of the improved graph ends up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionWiring {
    /// The fused high-resolution map is downsampled back into the stride-8
    /// path; the head keeps three scales.
    #[default]
    MergedIntoP3,
    /// The fused map also feeds a fourth, stride-4 detect scale.
    ExtraScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    pub classes: usize,
    pub gam_reduction: usize,
    pub fusion: FusionWiring,
    pub seed: u64,
    pub init: Init,
    /// Bottleneck counts of the four backbone C2f stages.
    pub backbone_depths: [usize; 4],
    /// Bottleneck count of every neck C2f.
    pub neck_depth: usize,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            classes: 15,
            gam_reduction: 4,
            fusion: FusionWiring::default(),
            seed: 0,
            init: Init::Uniform,
            backbone_depths: [1, 2, 2, 1],
            neck_depth: 1,
        }
    }
}

struct Builder {
    seed: u64,
    layers: Vec<LayerSpec>,
}

impl Builder {
    fn push(&mut self, kind: LayerKind, inputs: &[usize]) -> usize {
        let i = self.layers.len();
        let inputs = if inputs.is_empty() && i > 0 { vec![i - 1] } else { inputs.to_vec() };
        self.layers.push(LayerSpec {
            name: i.to_string(),
            kind,
            inputs,
            seed: self.seed.wrapping_add(i as u64),
        });
        i
    }

    fn conv(&mut self, out: usize, stride: usize, from: &[usize]) -> usize {
        self.push(LayerKind::Conv { out, kernel: 3, stride }, from)
    }

    fn c2f(&mut self, out: usize, n: usize, shortcut: bool, from: &[usize]) -> usize {
        self.push(LayerKind::C2f { out, n, shortcut }, from)
    }
}

/// The YOLOv8s layer list at the given square input size.
///
/// Baseline: layers 0-9 backbone, 10-21 neck, 22 detect. Improved: GAM at
/// 9 before the SPPF at 10, the baseline neck at 11-16, then the layer-2
/// fusion branch (17 upsample, 18 concat with layer 2, 19 C2f, 20 stride-2
/// conv, 21 concat, 22 C2f) and the bottom-up path 23-28, detect at 29.
pub fn build_graph(variant: Variant, input_size: usize, options: &GraphOptions) -> Result<GraphSpec, GraphError> {
    if input_size == 0 || input_size % 32 != 0 {
        return Err(GraphError::InvalidParameter(format!(
            "input size {input_size} is not a positive multiple of 32"
        )));
    }
    let [d2, d4, d6, d8] = options.backbone_depths;
    let n = options.neck_depth;
    let mut b = Builder {
        seed: options.seed,
        layers: Vec::new(),
    };
    b.conv(32, 2, &[]);
    b.conv(64, 2, &[]);
    let l2 = b.c2f(64, d2, true, &[]);
    b.conv(128, 2, &[]);
    let l4 = b.c2f(128, d4, true, &[]);
    b.conv(256, 2, &[]);
    let l6 = b.c2f(256, d6, true, &[]);
    b.conv(512, 2, &[]);
    b.c2f(512, d8, true, &[]);
    if variant == Variant::Improved {
        b.push(
            LayerKind::Gam {
                reduction: options.gam_reduction,
            },
            &[],
        );
    }
    let sppf = b.push(LayerKind::Sppf { out: 512, kernel: 5 }, &[]);

    b.push(LayerKind::Upsample { factor: 2 }, &[]);
    let cat = b.push(LayerKind::Concat, &[sppf + 1, l6]);
    let p4_td = b.c2f(256, n, false, &[cat]);
    b.push(LayerKind::Upsample { factor: 2 }, &[]);
    let cat = b.push(LayerKind::Concat, &[p4_td + 1, l4]);
    let p3_td = b.c2f(128, n, false, &[cat]);

    let mut scales = Vec::new();
    let p3 = match variant {
        Variant::Baseline => p3_td,
        Variant::Improved => {
            b.push(LayerKind::Upsample { factor: 2 }, &[]);
            let cat = b.push(LayerKind::Concat, &[p3_td + 1, l2]);
            let p2 = b.c2f(128, n, false, &[cat]);
            if options.fusion == FusionWiring::ExtraScale {
                scales.push(p2);
            }
            let down = b.conv(128, 2, &[p2]);
            let cat = b.push(LayerKind::Concat, &[down, p3_td]);
            b.c2f(128, n, false, &[cat])
        }
    };
    scales.push(p3);
    let down = b.conv(128, 2, &[p3]);
    let cat = b.push(LayerKind::Concat, &[down, p4_td]);
    let p4 = b.c2f(256, n, false, &[cat]);
    scales.push(p4);
    let down = b.conv(256, 2, &[p4]);
    let cat = b.push(LayerKind::Concat, &[down, sppf]);
    let p5 = b.c2f(512, n, false, &[cat]);
    scales.push(p5);
    b.push(
        LayerKind::Detect {
            classes: options.classes,
        },
        &scales,
    );

    let spec = GraphSpec {
        input: (3, input_size, input_size),
        init: options.init,
        layers: b.layers,
    };
    spec.infer_shapes()?;
    Ok(spec)
}

/// Intermediate shape inside a block, e.g. the SPPF concat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub name: String,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShapes {
    pub inputs: Vec<Shape>,
    /// `None` for the detect head, whose outputs are listed as stages.
    pub output: Option<Shape>,
    pub stages: Vec<Stage>,
}

/// Bottleneck width of a C2f block.
pub(crate) fn c2f_hidden(out: usize) -> usize {
    (out / 2).max(1)
}

/// Hidden widths `(box, class)` of the detect branches, from the first
/// scale's channel count.
pub(crate) fn detect_hidden(first_channels: usize, classes: usize) -> (usize, usize) {
    ((first_channels / 4).max(16).max(64), first_channels.max(classes.min(100)))
}

fn stage(name: impl Into<String>, shape: Shape) -> Stage {
    Stage {
        name: name.into(),
        shape,
    }
}

impl GraphSpec {
    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Propagates shapes through every layer, checking all constraints.
    pub fn infer_shapes(&self) -> Result<Vec<LayerShapes>, GraphError> {
        let (c0, h0, w0) = self.input;
        if c0 == 0 || h0 == 0 || w0 == 0 {
            return Err(GraphError::InvalidParameter("graph input has a zero dimension".into()));
        }
        let mut names = std::collections::HashSet::new();
        let mut out: Vec<LayerShapes> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |message: String| GraphError::Layer {
                layer: layer.name.clone(),
                message,
            };
            if !names.insert(layer.name.as_str()) {
                return Err(fail("duplicate layer name".into()));
            }
            let mut inputs = Vec::new();
            if layer.inputs.is_empty() {
                inputs.push(self.input);
            }
            for &j in &layer.inputs {
                if j >= i {
                    return Err(fail(format!("input {j} does not come earlier in the graph")));
                }
                match out[j].output {
                    Some(s) => inputs.push(s),
                    None => {
                        return Err(fail(format!(
                            "input layer {} has no single output",
                            self.layers[j].name
                        )))
                    }
                }
            }
            let single = |what: &str| {
                if inputs.len() == 1 {
                    Ok(inputs[0])
                } else {
                    Err(fail(format!("{what} takes exactly one input, got {}", inputs.len())))
                }
            };
            let spatial = |(c, h, w): Shape, spec: ShapeSpec| -> Result<Shape, GraphError> {
                let map = |e: GraphError| fail(e.to_string());
                Ok((c, conv_output_dim(h, spec).map_err(map)?, conv_output_dim(w, spec).map_err(map)?))
            };
            let mut stages = Vec::new();
            let output = match layer.kind {
                LayerKind::Conv { out: oc, kernel, stride } => {
                    if oc == 0 {
                        return Err(fail("zero output channels".into()));
                    }
                    let (_, h, w) = spatial(single("conv")?, ShapeSpec::same(kernel, stride))?;
                    Some((oc, h, w))
                }
                LayerKind::C2f { out: oc, n, .. } => {
                    let (_, h, w) = single("c2f")?;
                    if oc == 0 {
                        return Err(fail("zero output channels".into()));
                    }
                    let c = c2f_hidden(oc);
                    stages.push(stage("split", (2 * c, h, w)));
                    stages.push(stage("concat", ((2 + n) * c, h, w)));
                    Some((oc, h, w))
                }
                LayerKind::Sppf { out: oc, kernel } => {
                    let s = single("sppf")?;
                    let pooled = spatial(s, ShapeSpec::new(kernel, 1, kernel / 2))?;
                    if pooled != s {
                        return Err(fail(format!("pool kernel {kernel} changes the spatial size")));
                    }
                    for k in 1..=3 {
                        stages.push(stage(format!("pool{k}"), pooled));
                    }
                    stages.push(stage("concat", (4 * s.0, s.1, s.2)));
                    Some((oc, s.1, s.2))
                }
                LayerKind::Upsample { factor } => {
                    if factor == 0 {
                        return Err(fail("upsample factor must be >= 1".into()));
                    }
                    let (c, h, w) = single("upsample")?;
                    Some((c, h * factor, w * factor))
                }
                LayerKind::Concat => {
                    let (_, h, w) = inputs[0];
                    if let Some((k, bad)) = inputs.iter().enumerate().find(|(_, s)| (s.1, s.2) != (h, w)) {
                        return Err(fail(format!(
                            "concat input {} is {}x{}, expected {h}x{w} like {}",
                            self.layers[layer.inputs[k]].name,
                            bad.1,
                            bad.2,
                            self.layers[layer.inputs[0]].name
                        )));
                    }
                    Some((inputs.iter().map(|s| s.0).sum(), h, w))
                }
                LayerKind::Gam { reduction } => {
                    let s @ (c, h, w) = single("gam")?;
                    if c % 4 != 0 {
                        return Err(fail(format!("{c} channels are not divisible by 4")));
                    }
                    if reduction == 0 || c % reduction != 0 {
                        return Err(fail(format!("{c} channels are not divisible by reduction {reduction}")));
                    }
                    stages.push(stage("channel.positions", (1, h * w, c)));
                    stages.push(stage("channel.hidden", (1, h * w, c / 4)));
                    stages.push(stage("channel.out", (1, h * w, c)));
                    stages.push(stage("spatial.hidden", (c / reduction, h, w)));
                    Some(s)
                }
                LayerKind::Detect { classes } => {
                    if inputs.is_empty() || layer.inputs.is_empty() {
                        return Err(fail("detect needs explicit input layers".into()));
                    }
                    if classes == 0 {
                        return Err(fail("detect needs at least one class".into()));
                    }
                    for (k, &(_, h, w)) in inputs.iter().enumerate() {
                        stages.push(stage(format!("scale{k}.box"), (4, h, w)));
                        stages.push(stage(format!("scale{k}.cls"), (classes, h, w)));
                    }
                    None
                }
            };
            out.push(LayerShapes { inputs, output, stages });
        }
        Ok(out)
    }

    /// Line-based description: an `input` line, then one `name kind key=value`
    /// line per layer.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let init = match self.init {
            Init::Uniform => "uniform",
            Init::Zeros => "zeros",
        };
        let (c, h, w) = self.input;
        let _ = writeln!(s, "input channels={c} height={h} width={w} init={init}");
        for (i, l) in self.layers.iter().enumerate() {
            let _ = write!(s, "{} {}", l.name, l.kind.name());
            match l.kind {
                LayerKind::Conv { out, kernel, stride } => {
                    let _ = write!(s, " out={out} k={kernel} s={stride}");
                }
                LayerKind::C2f { out, n, shortcut } => {
                    let _ = write!(s, " out={out} n={n} shortcut={shortcut}");
                }
                LayerKind::Sppf { out, kernel } => {
                    let _ = write!(s, " out={out} k={kernel}");
                }
                LayerKind::Upsample { factor } => {
                    let _ = write!(s, " factor={factor}");
                }
                LayerKind::Concat => {}
                LayerKind::Gam { reduction } => {
                    let _ = write!(s, " r={reduction}");
                }
                LayerKind::Detect { classes } => {
                    let _ = write!(s, " classes={classes}");
                }
            }
            let implicit = if i == 0 { l.inputs.is_empty() } else { l.inputs == [i - 1] };
            if !implicit {
                let from: Vec<String> = l.inputs.iter().map(|j| j.to_string()).collect();
                let _ = write!(s, " from={}", from.join(","));
            }
            let _ = writeln!(s, " seed={}", l.seed);
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self, GraphError> {
        let mut input = None;
        let mut init = Init::Uniform;
        let mut base_seed = 0u64;
        let mut layers: Vec<LayerSpec> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| GraphError::Parse {
                line: lineno + 1,
                message,
            };
            let mut words = line.split_whitespace();
            let head = words.next().unwrap_or_default();
            let mut kv = std::collections::BTreeMap::new();
            let mut kind_word = None;
            for w in words {
                match w.split_once('=') {
                    Some((k, v)) => {
                        if kv.insert(k, v).is_some() {
                            return Err(err(format!("`{k}` given twice")));
                        }
                    }
                    None if kind_word.is_none() => kind_word = Some(w),
                    None => return Err(err(format!("unexpected token `{w}`"))),
                }
            }
            let num = |kv: &std::collections::BTreeMap<&str, &str>, key: &str, default: Option<usize>| {
                match kv.get(key) {
                    Some(v) => v.parse::<usize>().map_err(|_| err(format!("`{key}={v}` is not a non-negative integer"))),
                    None => default.ok_or_else(|| err(format!("missing `{key}=`"))),
                }
            };
            if head == "input" {
                if kind_word.is_some() {
                    return Err(err("input line takes only key=value pairs".into()));
                }
                input = Some((
                    num(&kv, "channels", Some(3))?,
                    num(&kv, "height", None)?,
                    num(&kv, "width", None)?,
                ));
                init = match kv.get("init").copied().unwrap_or("uniform") {
                    "uniform" => Init::Uniform,
                    "zeros" => Init::Zeros,
                    other => return Err(err(format!("unknown init `{other}`"))),
                };
                base_seed = num(&kv, "seed", Some(0))? as u64;
                continue;
            }
            if input.is_none() {
                return Err(err("the `input` line must come before any layer".into()));
            }
            let kind_word = kind_word.ok_or_else(|| err(format!("layer `{head}` has no kind")))?;
            let i = layers.len();
            let kind = match kind_word {
                "conv" => LayerKind::Conv {
                    out: num(&kv, "out", None)?,
                    kernel: num(&kv, "k", Some(3))?,
                    stride: num(&kv, "s", Some(1))?,
                },
                "c2f" => LayerKind::C2f {
                    out: num(&kv, "out", None)?,
                    n: num(&kv, "n", Some(1))?,
                    shortcut: match kv.get("shortcut").copied().unwrap_or("true") {
                        "true" => true,
                        "false" => false,
                        other => return Err(err(format!("shortcut must be true or false, got `{other}`"))),
                    },
                },
                "sppf" => LayerKind::Sppf {
                    out: num(&kv, "out", None)?,
                    kernel: num(&kv, "k", Some(5))?,
                },
                "upsample" => LayerKind::Upsample {
                    factor: num(&kv, "factor", Some(2))?,
                },
                "concat" => LayerKind::Concat,
                "gam" => LayerKind::Gam {
                    reduction: num(&kv, "r", Some(4))?,
                },
                "detect" => LayerKind::Detect {
                    classes: num(&kv, "classes", Some(15))?,
                },
                other => return Err(err(format!("unknown layer kind `{other}`"))),
            };
            let inputs = match kv.get("from") {
                None => {
                    if i == 0 {
                        vec![]
                    } else {
                        vec![i - 1]
                    }
                }
                Some(list) => list
                    .split(',')
                    .map(|t| {
                        let t = t.trim();
                        if let Ok(rel) = t.parse::<i64>() {
                            let abs = if rel < 0 { i as i64 + rel } else { rel };
                            if abs < 0 || abs as usize >= i {
                                return Err(err(format!("`from` entry {t} does not name an earlier layer")));
                            }
                            Ok(abs as usize)
                        } else {
                            layers
                                .iter()
                                .position(|l| l.name == t)
                                .ok_or_else(|| err(format!("`from` entry `{t}` does not name an earlier layer")))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let seed = match kv.get("seed") {
                Some(v) => v.parse::<u64>().map_err(|_| err(format!("bad seed `{v}`")))?,
                None => base_seed.wrapping_add(i as u64),
            };
            let known: &[&str] = &["out", "k", "s", "n", "shortcut", "factor", "r", "classes", "from", "seed"];
            if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
                return Err(err(format!("unknown key `{k}`")));
            }
            layers.push(LayerSpec {
                name: head.to_string(),
                kind,
                inputs,
                seed,
            });
        }
        let input = input.ok_or(GraphError::Parse {
            line: 0,
            message: "missing `input` line".into(),
        })?;
        let spec = GraphSpec { input, init, layers };
        spec.infer_shapes()?;
        Ok(spec)
    }
}

/// One row of the reference-shape comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeCheck {
    pub what: String,
    pub expected: Shape,
    pub found: Option<Shape>,
}

impl ShapeCheck {
    pub fn passed(&self) -> bool {
        self.found == Some(self.expected)
    }
}

/// Compares a graph built at input size `size` against the YOLOv8s
/// backbone dimensions (320x320x32 through the 20x20x512 SPPF output at
/// 640, scaled linearly for other sizes). GAM rows are added when the graph
/// has a GAM layer.
pub fn reference_shape_checks(spec: &GraphSpec) -> Result<Vec<ShapeCheck>, GraphError> {
    let shapes = spec.infer_shapes()?;
    let size = spec.input.1;
    let at = |stride: usize, c: usize| (c, size / stride, size / stride);
    let output = |i: usize| shapes.get(i).and_then(|s| s.output);
    let input = |i: usize| shapes.get(i).and_then(|s| s.inputs.first().copied());
    let mut checks = Vec::new();
    let mut push = |what: String, expected: Shape, found: Option<Shape>| {
        checks.push(ShapeCheck { what, expected, found });
    };
    let backbone = [(0, 2, 32, "conv"), (1, 4, 64, "conv"), (2, 4, 64, "c2f"), (3, 8, 128, "conv"), (4, 8, 128, "c2f"), (5, 16, 256, "conv"), (6, 16, 256, "c2f"), (7, 32, 512, "conv"), (8, 32, 512, "c2f")];
    push("input".into(), (3, size, size), Some(spec.input));
    for (i, stride, c, kind) in backbone {
        if kind == "c2f" {
            push(format!("layer {i} c2f input"), at(stride, c), input(i));
        }
        push(format!("layer {i} {kind} output"), at(stride, c), output(i));
    }
    if let Some(g) = spec.layers.iter().position(|l| matches!(l.kind, LayerKind::Gam { .. })) {
        push(format!("layer {g} gam input"), at(32, 512), input(g));
        push(format!("layer {g} gam output"), at(32, 512), output(g));
    }
    let sppf = spec.layers.iter().position(|l| matches!(l.kind, LayerKind::Sppf { .. }));
    match sppf {
        Some(s) => {
            let stage = |name: &str| shapes[s].stages.iter().find(|st| st.name == name).map(|st| st.shape);
            push(format!("layer {s} sppf input"), at(32, 512), input(s));
            for k in 1..=3 {
                push(format!("layer {s} sppf maxpool {k}"), at(32, 512), stage(&format!("pool{k}")));
            }
            push(format!("layer {s} sppf concat"), at(32, 2048), stage("concat"));
            push(format!("layer {s} sppf output"), at(32, 512), output(s));
        }
        None => push("sppf output".into(), at(32, 512), None),
    }
    Ok(checks)
}
