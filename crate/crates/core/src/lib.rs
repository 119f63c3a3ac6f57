//! Simulation toolkit for time-varying, morph-based cancelable face templates.

pub mod adversary;
pub mod delaunay;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod image;
pub mod landmarks;
pub mod morph;
pub mod protocol;
pub mod seeds;
pub mod transforms;
pub mod world;

pub use error::{Error, Result};
