//! The building blocks of the YOLOv8s graph, each usable on its own.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{c2f_hidden, detect_hidden, Init};
use super::tape::{NodeId, Tape};
use super::tensor::{ConvWeights, Shape, ShapeSpec, Tensor3};
use super::GraphError;

/// Produces weights for one layer from its seed.
pub struct WeightInit {
    rng: ChaCha8Rng,
    init: Init,
}

impl WeightInit {
    pub fn new(seed: u64, init: Init) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            init,
        }
    }

    pub fn conv(&mut self, out: usize, input: usize, kernel: usize) -> Arc<ConvWeights> {
        let mut w = ConvWeights::zeros(out, input, kernel);
        if self.init == Init::Uniform {
            let bound = 1.0 / (w.fan_in() as f64).sqrt();
            for v in &mut w.weights {
                *v = self.rng.gen_range(-bound..=bound);
            }
        }
        Arc::new(w)
    }
}

fn run(x: &Tensor3, emit: impl FnOnce(&mut Tape, NodeId) -> Result<NodeId, GraphError>) -> Result<Tensor3, GraphError> {
    let mut tape = Tape::new();
    let i = tape.input(x.clone());
    let o = emit(&mut tape, i)?;
    Ok(tape.value(o).clone())
}

/// Convolution with padding `kernel / 2`, optionally followed by SiLU.
#[derive(Debug, Clone)]
pub struct ConvUnit {
    pub weights: Arc<ConvWeights>,
    pub stride: usize,
    pub activation: bool,
}

impl ConvUnit {
    pub fn new(init: &mut WeightInit, input: usize, out: usize, kernel: usize, stride: usize) -> Self {
        Self {
            weights: init.conv(out, input, kernel),
            stride,
            activation: true,
        }
    }

    pub fn linear_output(mut self) -> Self {
        self.activation = false;
        self
    }

    pub fn spec(&self) -> ShapeSpec {
        ShapeSpec::same(self.weights.kernel, self.stride)
    }

    pub(crate) fn emit(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, GraphError> {
        let c = tape.conv(x, &self.weights, self.spec())?;
        Ok(if self.activation { tape.silu(c) } else { c })
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3, GraphError> {
        run(x, |t, i| self.emit(t, i))
    }
}

/// Split into two halves, run `n` bottlenecks on the second half keeping
/// every intermediate, concatenate all of them and fuse with a 1x1 conv.
#[derive(Debug, Clone)]
pub struct C2fBlock {
    pub cv1: ConvUnit,
    /// Two 3x3 convs per bottleneck.
    pub bottlenecks: Vec<[ConvUnit; 2]>,
    pub cv2: ConvUnit,
    pub shortcut: bool,
}

impl C2fBlock {
    pub fn new(init: &mut WeightInit, input: usize, out: usize, n: usize, shortcut: bool) -> Self {
        let c = c2f_hidden(out);
        let cv1 = ConvUnit::new(init, input, 2 * c, 1, 1);
        let bottlenecks = (0..n)
            .map(|_| [ConvUnit::new(init, c, c, 3, 1), ConvUnit::new(init, c, c, 3, 1)])
            .collect();
        let cv2 = ConvUnit::new(init, (2 + n) * c, out, 1, 1);
        Self {
            cv1,
            bottlenecks,
            cv2,
            shortcut,
        }
    }

    pub(crate) fn emit(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, GraphError> {
        let y = self.cv1.emit(tape, x)?;
        let c = tape.value(y).channels / 2;
        let mut parts = vec![tape.slice(y, 0, c)?, tape.slice(y, c, c)?];
        for [a, b] in &self.bottlenecks {
            let last = *parts.last().expect("two parts exist");
            let h = a.emit(tape, last)?;
            let h = b.emit(tape, h)?;
            parts.push(if self.shortcut { tape.add(last, h)? } else { h });
        }
        let cat = tape.concat(&parts)?;
        self.cv2.emit(tape, cat)
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3, GraphError> {
        run(x, |t, i| self.emit(t, i))
    }
}

/// Three chained stride-1 max pools; the input and the three pooled maps
/// are concatenated (4C channels) and fused back by a 1x1 conv.
#[derive(Debug, Clone)]
pub struct SppfBlock {
    pub kernel: usize,
    pub fuse: ConvUnit,
}

impl SppfBlock {
    pub fn new(init: &mut WeightInit, input: usize, out: usize, kernel: usize) -> Self {
        Self {
            kernel,
            fuse: ConvUnit::new(init, 4 * input, out, 1, 1),
        }
    }

    pub(crate) fn emit(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, GraphError> {
        let p1 = tape.maxpool(x, self.kernel)?;
        let p2 = tape.maxpool(p1, self.kernel)?;
        let p3 = tape.maxpool(p2, self.kernel)?;
        let cat = tape.concat(&[x, p1, p2, p3])?;
        self.fuse.emit(tape, cat)
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3, GraphError> {
        run(x, |t, i| self.emit(t, i))
    }
}

/// Global attention: a per-position channel MLP (C -> C/4 -> C, ReLU in
/// between) gates the input, then two 7x7 convs (C -> C/r -> C, ReLU in
/// between) gate the result spatially. Both gates are sigmoids.
#[derive(Debug, Clone)]
pub struct GamBlock {
    pub fc1: Arc<ConvWeights>,
    pub fc2: Arc<ConvWeights>,
    pub conv1: Arc<ConvWeights>,
    pub conv2: Arc<ConvWeights>,
}

/// Matrix shapes `(rows, cols)` seen by the channel MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelTrace {
    pub permuted: (usize, usize),
    pub hidden: (usize, usize),
    pub output: (usize, usize),
}

impl GamBlock {
    pub fn new(init: &mut WeightInit, channels: usize, reduction: usize) -> Result<Self, GraphError> {
        Self::check(channels, reduction)?;
        Ok(Self {
            fc1: init.conv(channels / 4, channels, 1),
            fc2: init.conv(channels, channels / 4, 1),
            conv1: init.conv(channels / reduction, channels, 7),
            conv2: init.conv(channels, channels / reduction, 7),
        })
    }

    fn check(channels: usize, reduction: usize) -> Result<(), GraphError> {
        if channels == 0 || channels % 4 != 0 {
            return Err(GraphError::InvalidParameter(format!(
                "GAM needs a channel count divisible by 4, got {channels}"
            )));
        }
        if reduction == 0 || channels % reduction != 0 {
            return Err(GraphError::InvalidParameter(format!(
                "GAM channel count {channels} is not divisible by reduction {reduction}"
            )));
        }
        Ok(())
    }

    fn check_input(&self, shape: Shape) -> Result<(), GraphError> {
        if shape.0 != self.fc1.in_channels {
            return Err(GraphError::ShapeMismatch(format!(
                "GAM built for {} channels, input has {}",
                self.fc1.in_channels, shape.0
            )));
        }
        Ok(())
    }

    pub(crate) fn emit_channel(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, GraphError> {
        let shape = tape.value(x).shape();
        self.check_input(shape)?;
        let rows = tape.to_positions(x);
        let h = tape.linear(rows, &self.fc1)?;
        let h = tape.relu(h);
        let o = tape.linear(h, &self.fc2)?;
        let back = tape.from_positions(o, shape)?;
        let gate = tape.sigmoid(back);
        tape.mul(x, gate)
    }

    pub(crate) fn emit_spatial(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, GraphError> {
        self.check_input(tape.value(x).shape())?;
        let spec = ShapeSpec::same(7, 1);
        let h = tape.conv(x, &self.conv1, spec)?;
        let h = tape.relu(h);
        let s = tape.conv(h, &self.conv2, spec)?;
        let gate = tape.sigmoid(s);
        tape.mul(x, gate)
    }

    pub(crate) fn emit(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, GraphError> {
        let c = self.emit_channel(tape, x)?;
        self.emit_spatial(tape, c)
    }

    pub fn channel_attention(&self, x: &Tensor3) -> Result<Tensor3, GraphError> {
        run(x, |t, i| self.emit_channel(t, i))
    }

    pub fn spatial_attention(&self, x: &Tensor3) -> Result<Tensor3, GraphError> {
        run(x, |t, i| self.emit_spatial(t, i))
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3, GraphError> {
        run(x, |t, i| self.emit(t, i))
    }

    /// Runs the channel MLP on `x` and reports the matrix shapes it saw.
    pub fn channel_trace(&self, x: &Tensor3) -> Result<ChannelTrace, GraphError> {
        let mut tape = Tape::new();
        let i = tape.input(x.clone());
        self.check_input(x.shape())?;
        let rows = tape.to_positions(i);
        let h = tape.linear(rows, &self.fc1)?;
        let h = tape.relu(h);
        let o = tape.linear(h, &self.fc2)?;
        let dims = |n: NodeId| (tape.value(n).height, tape.value(n).width);
        Ok(ChannelTrace {
            permuted: dims(rows),
            hidden: dims(h),
            output: dims(o),
        })
    }
}

/// Decoupled head for one scale: a box branch ending in 4 raw outputs per
/// cell and a class branch ending in one logit per category.
#[derive(Debug, Clone)]
pub struct DetectScale {
    pub box_branch: [ConvUnit; 3],
    pub cls_branch: [ConvUnit; 3],
}

impl DetectScale {
    pub fn new(init: &mut WeightInit, input: usize, first_channels: usize, classes: usize) -> Self {
        let (c2, c3) = detect_hidden(first_channels, classes);
        Self {
            box_branch: [
                ConvUnit::new(init, input, c2, 3, 1),
                ConvUnit::new(init, c2, c2, 3, 1),
                ConvUnit::new(init, c2, 4, 1, 1).linear_output(),
            ],
            cls_branch: [
                ConvUnit::new(init, input, c3, 3, 1),
                ConvUnit::new(init, c3, c3, 3, 1),
                ConvUnit::new(init, c3, classes, 1, 1).linear_output(),
            ],
        }
    }

    /// Returns `(boxes, scores)` node ids.
    pub(crate) fn emit(&self, tape: &mut Tape, x: NodeId) -> Result<(NodeId, NodeId), GraphError> {
        let mut b = x;
        for u in &self.box_branch {
            b = u.emit(tape, b)?;
        }
        let mut c = x;
        for u in &self.cls_branch {
            c = u.emit(tape, c)?;
        }
        Ok((b, c))
    }
}
