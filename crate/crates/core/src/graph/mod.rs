//! A small CPU tensor graph for YOLOv8s-style detectors, with shape
//! inference, deterministic weights and reverse-mode gradients.

mod blocks;
mod network;
mod spec;
mod tape;
mod tensor;

use std::io;

use thiserror::Error;

pub use blocks::{C2fBlock, ChannelTrace, ConvUnit, DetectScale, GamBlock, SppfBlock, WeightInit};
pub use network::{GraphRun, Network, ScoreSelector};
pub use spec::{
    build_graph, reference_shape_checks, FusionWiring, GraphOptions, GraphSpec, Init, LayerKind, LayerShapes,
    LayerSpec, ShapeCheck, Stage, Variant,
};
pub use tensor::{
    concat_channels, conv2d, conv_output_dim, maxpool2d, resize_nearest, sigmoid, silu, upsample_nearest,
    ConvWeights, Shape, ShapeSpec, Tensor3,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("expected {expected} values, found {found}")]
    DataLength { expected: usize, found: usize },
    #[error("kernel {kernel} with stride {stride} and padding {padding} does not fit input size {input}")]
    OutputDim {
        input: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("layer {layer}: {message}")]
    Layer { layer: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bad tensor dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("layer {layer} produced a non-finite value")]
    NonFinite { layer: String },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("the score does not depend on layer {layer}")]
    NotAncestor { layer: String },
    #[error("invalid selector: {0}")]
    InvalidSelector(String),
}
