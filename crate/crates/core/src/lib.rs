//! License plate character segmentation toolkit.
//!
//! Five segmenters, the Jaccard-Centroid evaluation measure, a synthetic
//! plate generator, a small HOG recognizer and the benchmark protocol that
//! ties them together.

pub mod bench;
pub mod binarize;
pub mod metric;
pub mod morph;
pub mod ocr;
pub mod raster;
pub mod segment;
pub mod synth;

pub use raster::{BBox, BinaryImage, GrayImage};
