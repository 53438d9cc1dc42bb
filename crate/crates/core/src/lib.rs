//! Histogram-based automatic registration of grayscale image pairs related by
//! a rigid transform (rotation plus translation).
//!
//! The pipeline runs, in order:
//! - [`enhance`]: histogram specification of the moving image onto the
//!   reference, then adaptive Wiener filtering of both;
//! - [`segment`]: histogram-mode thresholding at several relaxation levels α
//!   and connected-component extraction;
//! - [`features`]: area, perimeter, axis ratio, fractal dimension, centroid
//!   and orientation per region;
//! - [`matching`]: pairwise cost between all cross-image regions;
//! - [`estimate`]: modal voting for rotation, then for translation;
//! - [`warp`]: resampling the moving image onto the reference frame.
//!
//! [`pipeline::register_pair`] chains all stages.

pub mod enhance;
pub mod error;
pub mod estimate;
pub mod features;
pub mod matching;
pub mod pipeline;
pub mod raster;
pub mod segment;
pub mod warp;

pub use error::{HistairError, Result};
pub use estimate::RigidTransform;
pub use pipeline::{register_pair, PipelineConfig, Registration};
pub use raster::{compute_histogram, load_image, save_image, GrayImage, Histogram};
