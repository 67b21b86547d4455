//! Neural-signal SLAM workbench.
//!
//! Synthetic multichannel LFP is turned into normalised Morlet wavelet
//! images; decoded position, speed and direction drive a pose-cell attractor
//! network, position-keyed view cells close loops, and an experience map is
//! emitted as the inferred map of the maze.

pub mod csvio;
pub mod decoder;
pub mod error;
pub mod experience_map;
pub mod geom;
pub mod maze;
pub mod metrics;
pub mod pipeline;
pub mod pose_cells;
pub mod signal;
pub mod tensor;
pub mod trajectory;
pub mod view_cells;

pub use error::{Error, Result};
