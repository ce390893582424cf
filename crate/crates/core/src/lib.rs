//! Traffic analytics for fixed, nadir-looking aerial cameras.
//!
//! Per-frame vehicle detections are tracked into persistent identities,
//! georeferenced through the camera's ground sample distance and reduced to
//! traffic insights: speeds, zone occupancy, line crossings, heatmaps, zone
//! transition matrices and distributions. A deterministic traffic simulator
//! provides ground truth for every stage.

pub mod analytics;
pub mod camera;
pub mod config;
pub mod detector_io;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod insights;
pub mod pipeline;
pub mod sim;
pub mod tiler;
pub mod tracker;

pub use error::{Error, Result};
