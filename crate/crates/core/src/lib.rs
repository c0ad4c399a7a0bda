//! Turnstile streaming sketches with large approximation factors.
//!
//! Every sketch here is linear in the underlying frequency vector, so two
//! sketches built with the same parameters and seeds merge by adding state.

mod blob;
pub mod bench;
pub mod cascaded;
pub mod error;
pub mod hard;
pub mod hashing;
pub mod heavy;
pub mod l0;
pub mod lp;
pub mod lp_large;
pub mod schatten;
pub mod sketch;
pub mod stream;

pub use error::{Result, SketchError};
pub use sketch::{EstimateReport, LinearSketch, SpaceReport};
