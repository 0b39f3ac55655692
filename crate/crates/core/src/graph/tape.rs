//! Reverse-mode differentiation over a linear record of tensor ops.
//!
//! Nodes are appended in evaluation order, so walking the record backwards
//! visits every consumer before its producers. Only gradients with respect
//! to node values are produced; weights are constants here.

use std::sync::Arc;

use super::tensor::{
    concat_channels, conv2d_input_grad, conv2d_raw, maxpool2d_with_argmax, sigmoid, silu, upsample_nearest,
    ConvWeights, Shape, ShapeSpec, Tensor3,
};
use super::GraphError;

pub(crate) type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Conv { input: NodeId, weights: Arc<ConvWeights>, spec: ShapeSpec },
    /// Rows of a `(1, n, in)` tensor times the weight matrix, plus bias.
    Linear { input: NodeId, weights: Arc<ConvWeights> },
    Silu(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    MaxPool { input: NodeId, argmax: Vec<usize> },
    Upsample { input: NodeId, factor: usize },
    Concat(Vec<NodeId>),
    Slice { input: NodeId, start: usize },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `(C, H, W)` to `(1, H*W, C)`: one row per position.
    ToPositions(NodeId),
    /// Inverse of `ToPositions`.
    FromPositions(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor3,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor3 {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Tensor3) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, t: Tensor3) -> NodeId {
        self.push(Op::Input, t)
    }

    pub fn conv(&mut self, input: NodeId, weights: &Arc<ConvWeights>, spec: ShapeSpec) -> Result<NodeId, GraphError> {
        let w = weights.as_ref();
        let x = self.value(input);
        if w.in_channels != x.channels || w.kernel != spec.kernel {
            return Err(GraphError::ShapeMismatch(format!(
                "conv weights expect {} channels, input has {}",
                w.in_channels, x.channels
            )));
        }
        let v = conv2d_raw(x, w, spec)?;
        let weights = Arc::clone(weights);
        Ok(self.push(Op::Conv { input, weights, spec }, v))
    }

    pub fn linear(&mut self, input: NodeId, weights: &Arc<ConvWeights>) -> Result<NodeId, GraphError> {
        let w = weights.as_ref();
        let x = self.value(input);
        if x.channels != 1 || x.width != w.in_channels {
            return Err(GraphError::ShapeMismatch(format!(
                "linear layer expects rows of {} features, got {}x{}x{}",
                w.in_channels, x.channels, x.height, x.width
            )));
        }
        let (n, fin, fout) = (x.height, w.in_channels, w.out_channels);
        let mut out = Tensor3::zeros(1, n, fout);
        for r in 0..n {
            let row = &x.data[r * fin..(r + 1) * fin];
            for o in 0..fout {
                let wrow = &w.weights[o * fin..(o + 1) * fin];
                out.data[r * fout + o] = w.bias[o] + wrow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let weights = Arc::clone(weights);
        Ok(self.push(Op::Linear { input, weights }, out))
    }

    pub fn silu(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).map(silu);
        self.push(Op::Silu(input), v)
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).map(|x| x.max(0.0));
        self.push(Op::Relu(input), v)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).map(sigmoid);
        self.push(Op::Sigmoid(input), v)
    }

    pub fn maxpool(&mut self, input: NodeId, k: usize) -> Result<NodeId, GraphError> {
        let (v, argmax) = maxpool2d_with_argmax(self.value(input), k, k / 2)?;
        Ok(self.push(Op::MaxPool { input, argmax }, v))
    }

    pub fn upsample(&mut self, input: NodeId, factor: usize) -> Result<NodeId, GraphError> {
        let v = upsample_nearest(self.value(input), factor)?;
        Ok(self.push(Op::Upsample { input, factor }, v))
    }

    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId, GraphError> {
        let refs: Vec<&Tensor3> = inputs.iter().map(|&i| self.value(i)).collect();
        let v = concat_channels(&refs)?;
        Ok(self.push(Op::Concat(inputs.to_vec()), v))
    }

    pub fn slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId, GraphError> {
        let x = self.value(input);
        if start + len > x.channels {
            return Err(GraphError::ShapeMismatch(format!(
                "channel slice {start}..{} of a {}-channel tensor",
                start + len,
                x.channels
            )));
        }
        let n = x.height * x.width;
        let v = Tensor3::from_vec(len, x.height, x.width, x.data[start * n..(start + len) * n].to_vec())?;
        Ok(self.push(Op::Slice { input, start }, v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let v = self.zip(a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let v = self.zip(a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3, GraphError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(GraphError::ShapeMismatch(format!(
                "elementwise op on {:?} and {:?}",
                x.shape(),
                y.shape()
            )));
        }
        Ok(Tensor3 {
            data: x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect(),
            ..*x
        })
    }

    pub fn to_positions(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let (c, n) = (x.channels, x.height * x.width);
        let mut out = Tensor3::zeros(1, n, c);
        for ch in 0..c {
            for p in 0..n {
                out.data[p * c + ch] = x.data[ch * n + p];
            }
        }
        self.push(Op::ToPositions(input), out)
    }

    /// Restores the `(C, H, W)` layout of `reference`.
    pub fn from_positions(&mut self, input: NodeId, reference: Shape) -> Result<NodeId, GraphError> {
        let x = self.value(input);
        let (c, h, w) = reference;
        if x.channels != 1 || x.height != h * w || x.width != c {
            return Err(GraphError::ShapeMismatch(format!(
                "cannot fold {}x{} rows back into {c}x{h}x{w}",
                x.height, x.width
            )));
        }
        let n = h * w;
        let mut out = Tensor3::zeros(c, h, w);
        for ch in 0..c {
            for p in 0..n {
                out.data[ch * n + p] = x.data[p * c + ch];
            }
        }
        Ok(self.push(Op::FromPositions(input), out))
    }

    /// Propagates the given output gradients back through the record.
    /// Entry `i` of the result is `None` when node `i` does not influence
    /// any seeded node.
    pub fn backward(&self, seeds: &[(NodeId, Tensor3)]) -> Vec<Option<Tensor3>> {
        let mut grads: Vec<Option<Tensor3>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            accumulate(&mut grads[*id], g);
        }
        let start = seeds.iter().map(|s| s.0).max().map_or(0, |m| m + 1);
        for id in (0..start).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        grads
    }

    fn propagate(&self, id: NodeId, g: &Tensor3, grads: &mut [Option<Tensor3>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Input => {}
            Op::Conv { input, weights, spec } => {
                let gi = conv2d_input_grad(g, weights, *spec, self.value(*input).shape());
                accumulate(&mut grads[*input], &gi);
            }
            Op::Linear { input, weights } => {
                let w = weights.as_ref();
                let (n, fin, fout) = (g.height, w.in_channels, w.out_channels);
                let mut gi = Tensor3::zeros(1, n, fin);
                for r in 0..n {
                    for o in 0..fout {
                        let go = g.data[r * fout + o];
                        if go == 0.0 {
                            continue;
                        }
                        let wrow = &w.weights[o * fin..(o + 1) * fin];
                        for (k, wv) in wrow.iter().enumerate() {
                            gi.data[r * fin + k] += go * wv;
                        }
                    }
                }
                accumulate(&mut grads[*input], &gi);
            }
            Op::Silu(input) => {
                let x = self.value(*input);
                let gi = elementwise(g, x, |go, x| {
                    let s = sigmoid(x);
                    go * s * (1.0 + x * (1.0 - s))
                });
                accumulate(&mut grads[*input], &gi);
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                let gi = elementwise(g, x, |go, x| if x > 0.0 { go } else { 0.0 });
                accumulate(&mut grads[*input], &gi);
            }
            Op::Sigmoid(input) => {
                let y = &node.value;
                let gi = elementwise(g, y, |go, y| go * y * (1.0 - y));
                accumulate(&mut grads[*input], &gi);
            }
            Op::MaxPool { input, argmax } => {
                let mut gi = Tensor3::zeros(self.value(*input).channels, self.value(*input).height, self.value(*input).width);
                for (o, &src) in argmax.iter().enumerate() {
                    gi.data[src] += g.data[o];
                }
                accumulate(&mut grads[*input], &gi);
            }
            Op::Upsample { input, factor } => {
                let x = self.value(*input);
                let mut gi = Tensor3::zeros(x.channels, x.height, x.width);
                for c in 0..g.channels {
                    for y in 0..g.height {
                        for xx in 0..g.width {
                            let i = gi.index(c, y / factor, xx / factor);
                            gi.data[i] += g.get(c, y, xx);
                        }
                    }
                }
                accumulate(&mut grads[*input], &gi);
            }
            Op::Concat(inputs) => {
                let mut offset = 0;
                for &i in inputs {
                    let x = self.value(i);
                    let len = x.len();
                    let gi = Tensor3 {
                        data: g.data[offset..offset + len].to_vec(),
                        ..*x
                    };
                    offset += len;
                    accumulate(&mut grads[i], &gi);
                }
            }
            Op::Slice { input, start } => {
                let x = self.value(*input);
                let mut gi = Tensor3::zeros(x.channels, x.height, x.width);
                let n = x.height * x.width;
                gi.data[start * n..start * n + g.len()].copy_from_slice(&g.data);
                accumulate(&mut grads[*input], &gi);
            }
            Op::Add(a, b) => {
                accumulate(&mut grads[*a], g);
                accumulate(&mut grads[*b], g);
            }
            Op::Mul(a, b) => {
                let ga = elementwise(g, self.value(*b), |go, y| go * y);
                let gb = elementwise(g, self.value(*a), |go, x| go * x);
                accumulate(&mut grads[*a], &ga);
                accumulate(&mut grads[*b], &gb);
            }
            Op::ToPositions(input) => {
                let x = self.value(*input);
                let (c, n) = (x.channels, x.height * x.width);
                let mut gi = Tensor3::zeros(c, x.height, x.width);
                for ch in 0..c {
                    for p in 0..n {
                        gi.data[ch * n + p] = g.data[p * c + ch];
                    }
                }
                accumulate(&mut grads[*input], &gi);
            }
            Op::FromPositions(input) => {
                let (c, n) = (g.channels, g.height * g.width);
                let mut gi = Tensor3::zeros(1, n, c);
                for ch in 0..c {
                    for p in 0..n {
                        gi.data[p * c + ch] = g.data[ch * n + p];
                    }
                }
                accumulate(&mut grads[*input], &gi);
            }
        }
    }
}

fn elementwise(g: &Tensor3, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Tensor3 {
    Tensor3 {
        data: g.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ..*g
    }
}

fn accumulate(slot: &mut Option<Tensor3>, g: &Tensor3) {
    match slot {
        Some(acc) => acc.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.clone()),
    }
}
