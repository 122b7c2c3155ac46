//! Panoramic upright rectification.
//!
//! The crate covers the whole pipeline: coordinate conventions
//! ([`geometry`]), image warps ([`resample`]), dataset synthesis and
//! degradation ([`dataset`]), the dual-stream network ([`net`]), its training
//! objective ([`losses`]) and evaluation ([`metrics`]).

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod gradsuite;
pub mod losses;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod net;
pub mod procedural;
pub mod resample;
pub mod run;
pub mod train;
pub mod warp;

pub use error::{Error, Result};
