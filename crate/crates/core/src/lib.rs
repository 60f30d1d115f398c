//! Amortized neural posterior inference over partitions, communities,
//! matchings and particle tracks.

pub mod adam;
pub mod assignment;
pub mod checkpoint;
pub mod diagnostics;
pub mod error;
mod factor;
pub mod generative;
pub mod io;
pub mod math;
pub mod nbp;
pub mod ncp;
pub mod npp;
pub mod npt;
pub mod nn;
pub mod rng;
pub mod sequential;
pub mod train;

pub use error::{Error, Result};
