//! File formats: PGM/PPM images, .flo flow fields, the weights container,
//! and the run-configuration text format.

pub mod config;
pub mod flo;
pub mod pnm;
pub mod weights;
