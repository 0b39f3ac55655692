//! Annotation files, the cis/trans split, augmentation and raster I/O.

mod augment;
mod coco;
mod ppm;
mod split;

use std::io;

use thiserror::Error;

pub use augment::{augment, random_ops, resize_with_boxes, AugmentOp};
pub use coco::{
    class_distribution, filter_empty, write_distribution_csv, AnnotationSet, CategoryInfo, ImageRecord,
    DISTRIBUTION_CSV_HEADER,
};
pub use ppm::{decode_pnm, encode_pnm, read_ppm, write_pgm, write_ppm, RasterError};
pub use split::{
    split_cis_trans, DayBasis, ReferenceComparison, SplitConfig, SplitResult, REFERENCE_COUNTS, SPLIT_NAMES,
    TRANS_TEST_LOCATIONS,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("{element}: {message}")]
    Invalid { element: String, message: String },
    #[error("need at least {required} distinct locations, found {found}")]
    TooFewLocations { found: usize, required: usize },
    #[error("invalid split config: {0}")]
    InvalidSplitConfig(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}
