//! Event-camera optical flow by contrast maximization, steered by orientation
//! priors derived from 3D camera velocities.

pub mod camera;
pub mod cli;
pub mod error;
pub mod events;
pub mod flow;
pub mod metrics;
pub mod objectives;
pub mod optimizer;
pub mod priors;
pub mod raster;
pub mod synth;
pub mod velocity;
pub mod warp;

pub use error::{Error, Result};
