//! Memory-bounded correlation-volume optical flow engine.
//!
//! The pipeline follows the recurrent lookup design: convolutional encoders
//! produce feature maps at 1/8 or 1/16 resolution, an iterative update block
//! reads a small correlation window around each pixel's current flow target,
//! and a gated recurrent unit accumulates flow increments. Instead of
//! materializing the quadratic all-pairs cost volume, the lookup gathers just
//! the features each neighborhood needs, tile by tile, which caps the peak
//! working set at one tile's gather buffer; sub-pixel sampling is done by
//! blending one-pixel-offset slices rather than per-coordinate grid
//! sampling. An analytic accountant reproduces the byte arithmetic of both
//! routes exactly, and a cost model exposes how lookup work scales with
//! iterations, levels, feature width and resolution.

pub mod budget;
pub mod colorize;
pub mod corrvol;
pub mod encoder;
mod error;
pub mod flow;
pub mod init;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod refine;
pub mod sampling;
pub mod selftest;
pub mod tensor;

pub use error::{Error, Result};
