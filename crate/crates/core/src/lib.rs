//! Core library behind the `trapeval` tool.
//!
//! The crate is organised around the pieces needed to study a YOLOv8s-style
//! camera-trap detector at desk scale:
//!
//! - [`bbox`]: corner-form box geometry shared by everything else.
//! - [`losses`]: the IoU loss family up to WIoUv3, with analytic gradients,
//!   a finite-difference oracle and a gradient-descent trajectory simulator.
//! - [`eval`]: detection matching, precision/recall, PR curves, AP and mAP,
//!   confusion matrices.
//! - [`graph`]: a small CHW tensor engine, the baseline and GAM-augmented
//!   graph topologies, forward evaluation and reverse-mode gradients.
//! - [`gradcam`]: Grad-CAM heatmaps and viridis overlays.
//! - [`dataset`]: annotation ingestion, the cis/trans split protocol,
//!   augmentation and PPM/PGM raster I/O.

pub mod bbox;
pub mod dataset;
pub mod eval;
pub mod gradcam;
pub mod graph;
pub mod losses;

pub use bbox::{BoundingBox, Detection, GroundTruth};
