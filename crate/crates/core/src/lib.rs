//! Semantic-aware landscape animation from a single image.
//!
//! Motion is embedded per semantic region with partial convolutions,
//! regenerated as a dense flow from a latent map and the image, and turned
//! into video frames by warping the first frame with accumulated flows.

pub mod app;
pub mod config;
pub mod encoder;
pub mod eval;
pub mod error;
pub mod flow;
pub mod generator;
pub mod image;
pub mod inference;
pub mod loss;
pub mod mask;
pub mod model;
pub mod synth;
pub mod train;
pub mod nn;

pub use error::{Error, ErrorClass, Result};
