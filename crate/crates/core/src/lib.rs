//! Patch-based image classification for tiny image collections.
//!
//! Source images are cut into a raster grid of equal tiles, a small
//! convolutional network is trained to label tiles, and a new image is mapped
//! tile by tile into a class-probability grid. That grid renders as a heatmap
//! and as a thresholded overlay on the source image.

pub mod dataset;
pub mod error;
pub mod image_io;
pub mod mapping;
pub mod nn;
pub mod persistence;
pub mod tiling;

pub use error::{Error, Result};
