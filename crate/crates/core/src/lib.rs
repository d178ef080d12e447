//! Morphological feature pipeline for thin-smear malaria cell images.
//!
//! Each cell image becomes a 128x128 binary mask, then a feature vector
//! holding foreground area, background area and enclosed-hole count.
//! Classical classifiers run on the area and hole-count features.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod learners;
pub mod matrix;
pub mod morphology;

pub use error::{Error, Result};
pub use matrix::Matrix;
