pub mod adam;
pub mod artifacts;
pub mod cli;
pub mod colmap;
pub mod densify;
pub mod enhance;
pub mod fusion;
pub mod error;
pub mod gaussian;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod raster;
pub mod render;
pub mod scene;
pub mod schedule;
pub mod se3;
pub mod synthetic;

pub use error::{Error, Result};
