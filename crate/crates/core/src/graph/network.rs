//! Instantiated graphs: weights for every layer, forward passes and
//! gradients of head scores with respect to intermediate activations.

use super::blocks::{C2fBlock, ConvUnit, DetectScale, GamBlock, SppfBlock, WeightInit};
use super::spec::{GraphSpec, LayerKind, LayerShapes};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor3;
use super::GraphError;

#[derive(Debug, Clone)]
enum Block {
    Conv(ConvUnit),
    C2f(C2fBlock),
    Sppf(SppfBlock),
    Gam(GamBlock),
    Upsample(usize),
    Concat,
    Detect(Vec<DetectScale>),
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: GraphSpec,
    shapes: Vec<LayerShapes>,
    blocks: Vec<Block>,
}

/// A scalar read off the graph outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreSelector {
    /// One class logit at one cell of one head scale.
    Cell { scale: usize, category: usize, y: usize, x: usize },
    /// The largest logit of a category, over one scale or all of them.
    MaxCategory { category: usize, scale: Option<usize> },
    /// One element of an intermediate activation.
    Activation { layer: String, channel: usize, y: usize, x: usize },
}

impl Network {
    pub fn new(spec: GraphSpec) -> Result<Self, GraphError> {
        let shapes = spec.infer_shapes()?;
        let mut blocks = Vec::with_capacity(spec.layers.len());
        for (layer, shape) in spec.layers.iter().zip(&shapes) {
            let mut init = WeightInit::new(layer.seed, spec.init);
            let cin = shape.inputs[0].0;
            let block = match layer.kind {
                LayerKind::Conv { out, kernel, stride } => Block::Conv(ConvUnit::new(&mut init, cin, out, kernel, stride)),
                LayerKind::C2f { out, n, shortcut } => Block::C2f(C2fBlock::new(&mut init, cin, out, n, shortcut)),
                LayerKind::Sppf { out, kernel } => Block::Sppf(SppfBlock::new(&mut init, cin, out, kernel)),
                LayerKind::Gam { reduction } => Block::Gam(GamBlock::new(&mut init, cin, reduction).map_err(|e| {
                    GraphError::Layer {
                        layer: layer.name.clone(),
                        message: e.to_string(),
                    }
                })?),
                LayerKind::Upsample { factor } => Block::Upsample(factor),
                LayerKind::Concat => Block::Concat,
                LayerKind::Detect { classes } => Block::Detect(
                    shape
                        .inputs
                        .iter()
                        .map(|s| DetectScale::new(&mut init, s.0, cin, classes))
                        .collect(),
                ),
            };
            blocks.push(block);
        }
        Ok(Self { spec, shapes, blocks })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[LayerShapes] {
        &self.shapes
    }

    pub fn forward(&self, image: &Tensor3) -> Result<GraphRun, GraphError> {
        self.run(image, None)
    }

    /// Forward pass in which `layer`'s output is replaced by `value`.
    pub fn forward_with_override(&self, image: &Tensor3, layer: &str, value: &Tensor3) -> Result<GraphRun, GraphError> {
        let idx = self
            .spec
            .layer_index(layer)
            .ok_or_else(|| GraphError::UnknownLayer(layer.to_string()))?;
        match self.shapes[idx].output {
            Some(s) if s == value.shape() => {}
            Some(s) => {
                return Err(GraphError::ShapeMismatch(format!(
                    "override for layer {layer} is {:?}, expected {s:?}",
                    value.shape()
                )))
            }
            None => return Err(GraphError::InvalidSelector(format!("layer {layer} has no single output"))),
        }
        self.run(image, Some((idx, value)))
    }

    fn run(&self, image: &Tensor3, replace: Option<(usize, &Tensor3)>) -> Result<GraphRun, GraphError> {
        if image.shape() != self.spec.input {
            return Err(GraphError::ShapeMismatch(format!(
                "image is {:?}, graph expects {:?}",
                image.shape(),
                self.spec.input
            )));
        }
        let mut tape = Tape::new();
        let input = tape.input(image.clone());
        let mut nodes: Vec<Option<NodeId>> = Vec::with_capacity(self.blocks.len());
        let mut heads = Vec::new();
        for (i, (layer, block)) in self.spec.layers.iter().zip(&self.blocks).enumerate() {
            let ins: Vec<NodeId> = if layer.inputs.is_empty() {
                vec![input]
            } else {
                layer.inputs.iter().map(|&j| nodes[j].expect("shape inference checked inputs")).collect()
            };
            let wrap = |e: GraphError| GraphError::Layer {
                layer: layer.name.clone(),
                message: e.to_string(),
            };
            let node = match block {
                Block::Conv(b) => Some(b.emit(&mut tape, ins[0]).map_err(wrap)?),
                Block::C2f(b) => Some(b.emit(&mut tape, ins[0]).map_err(wrap)?),
                Block::Sppf(b) => Some(b.emit(&mut tape, ins[0]).map_err(wrap)?),
                Block::Gam(b) => Some(b.emit(&mut tape, ins[0]).map_err(wrap)?),
                Block::Upsample(f) => Some(tape.upsample(ins[0], *f).map_err(wrap)?),
                Block::Concat => Some(tape.concat(&ins).map_err(wrap)?),
                Block::Detect(scales) => {
                    for (scale, &x) in scales.iter().zip(&ins) {
                        let (b, c) = scale.emit(&mut tape, x).map_err(wrap)?;
                        if !tape.value(b).is_finite() || !tape.value(c).is_finite() {
                            return Err(GraphError::NonFinite { layer: layer.name.clone() });
                        }
                        heads.push((b, c));
                    }
                    None
                }
            };
            let node = match (node, replace) {
                (Some(_), Some((j, value))) if j == i => Some(tape.input(value.clone())),
                (n, _) => n,
            };
            if let Some(n) = node {
                if !tape.value(n).is_finite() {
                    return Err(GraphError::NonFinite { layer: layer.name.clone() });
                }
            }
            nodes.push(node);
        }
        Ok(GraphRun {
            tape,
            names: self.spec.layers.iter().map(|l| l.name.clone()).collect(),
            nodes,
            heads,
        })
    }
}

/// The recorded result of one forward pass.
pub struct GraphRun {
    tape: Tape,
    names: Vec<String>,
    nodes: Vec<Option<NodeId>>,
    heads: Vec<(NodeId, NodeId)>,
}

impl GraphRun {
    fn node(&self, layer: &str) -> Result<NodeId, GraphError> {
        let i = self
            .names
            .iter()
            .position(|n| n == layer)
            .ok_or_else(|| GraphError::UnknownLayer(layer.to_string()))?;
        self.nodes[i].ok_or_else(|| GraphError::InvalidSelector(format!("layer {layer} has no single output")))
    }

    pub fn activation(&self, layer: &str) -> Result<&Tensor3, GraphError> {
        Ok(self.tape.value(self.node(layer)?))
    }

    pub fn scales(&self) -> usize {
        self.heads.len()
    }

    /// Raw `(boxes, class logits)` of one head scale.
    pub fn head(&self, scale: usize) -> Option<(&Tensor3, &Tensor3)> {
        self.heads
            .get(scale)
            .map(|&(b, c)| (self.tape.value(b), self.tape.value(c)))
    }

    /// Resolves a selector to the node and flat index it reads.
    fn locate(&self, sel: &ScoreSelector) -> Result<(NodeId, usize), GraphError> {
        let bad = |m: String| GraphError::InvalidSelector(m);
        match sel {
            ScoreSelector::Cell { scale, category, y, x } => {
                let &(_, c) = self.heads.get(*scale).ok_or_else(|| bad(format!("no head scale {scale}")))?;
                let t = self.tape.value(c);
                if *category >= t.channels || *y >= t.height || *x >= t.width {
                    return Err(bad(format!("cell ({category},{y},{x}) is outside {:?}", t.shape())));
                }
                Ok((c, t.index(*category, *y, *x)))
            }
            ScoreSelector::MaxCategory { category, scale } => {
                let scales: Vec<usize> = match scale {
                    Some(s) if *s < self.heads.len() => vec![*s],
                    Some(s) => return Err(bad(format!("no head scale {s}"))),
                    None => (0..self.heads.len()).collect(),
                };
                let mut best: Option<(f64, NodeId, usize)> = None;
                for s in scales {
                    let c = self.heads[s].1;
                    let t = self.tape.value(c);
                    if *category >= t.channels {
                        return Err(bad(format!("category {category} is outside {} classes", t.channels)));
                    }
                    let plane = t.height * t.width;
                    for (k, &v) in t.data[category * plane..(category + 1) * plane].iter().enumerate() {
                        if best.map_or(true, |(b, _, _)| v > b) {
                            best = Some((v, c, category * plane + k));
                        }
                    }
                }
                best.map(|(_, n, i)| (n, i)).ok_or_else(|| bad("graph has no head".into()))
            }
            ScoreSelector::Activation { layer, channel, y, x } => {
                let n = self.node(layer)?;
                let t = self.tape.value(n);
                if *channel >= t.channels || *y >= t.height || *x >= t.width {
                    return Err(bad(format!("element ({channel},{y},{x}) is outside {:?}", t.shape())));
                }
                Ok((n, t.index(*channel, *y, *x)))
            }
        }
    }

    pub fn score(&self, sel: &ScoreSelector) -> Result<f64, GraphError> {
        let (n, i) = self.locate(sel)?;
        Ok(self.tape.value(n).data[i])
    }

    /// Gradient of the selected score with respect to `layer`'s output.
    pub fn backward_to_layer(&self, sel: &ScoreSelector, layer: &str) -> Result<Tensor3, GraphError> {
        self.backward_combination(&[(sel.clone(), 1.0)], layer)
    }

    /// Gradient of `sum(weight * score)` with respect to `layer`'s output.
    pub fn backward_combination(&self, terms: &[(ScoreSelector, f64)], layer: &str) -> Result<Tensor3, GraphError> {
        let target = self.node(layer)?;
        let mut seeds = Vec::with_capacity(terms.len());
        for (sel, w) in terms {
            let (n, i) = self.locate(sel)?;
            let v = self.tape.value(n);
            let mut g = Tensor3::zeros(v.channels, v.height, v.width);
            g.data[i] = *w;
            seeds.push((n, g));
        }
        let mut grads = self.tape.backward(&seeds);
        grads[target]
            .take()
            .ok_or_else(|| GraphError::NotAncestor { layer: layer.to_string() })
    }
}
