//! Evaluation and dataset tooling for tile-structured image segmentation,
//! such as mosaics whose tesserae are separated by grout.
//!
//! The crate covers mask primitives and connected components, pixel and
//! tile-level benchmark metrics, the soft Dice and confidence losses, the
//! cosine learning-rate schedule with decoupled weight decay, dataset
//! preparation (cropping, augmentation, splitting, prompt points), synthetic
//! mosaics with exact ground truth, and report generation.

pub mod dataset;
pub mod error;
pub mod io;
pub mod losses;
pub mod mask;
pub mod pixel_metrics;
pub mod report;
pub mod schedule;
pub mod synth;
pub mod tile_metrics;

pub use error::{Error, Result};
pub use mask::{BinaryMask, Connectivity, Grid, LabeledMask, Point, SoftMask};
pub use pixel_metrics::{pixel_metrics, PixelMetrics};
pub use tile_metrics::{evaluate_pair, tile_metrics, EvalOptions, GroundTruth, TileMetrics};
