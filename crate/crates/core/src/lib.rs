//! Tooling for RGB-based 3D perception with multimodal language models.
//!
//! The crate is organised around the pipeline it supports:
//!
//! - [`geom`]: rotations, poses, oriented boxes, exact box IoU and Sim(3) alignment.
//! - [`frame`]: the first-frame metric coordinate convention, scene packs and depth rasters.
//! - [`fusion`]: reference math for gated multi-level token fusion and its ablation variants.
//! - [`sparse`]: generation of prompted-pixel point/label supervision samples.
//! - [`predparse`]: prompt rendering and tolerant parsing of model answers.
//! - [`metrics`]: grounding, detection, captioning and pointmap scoring.
//!
//! Every numeric output that ends up in model-facing text goes through
//! [`frame::quantize_metric`] exactly once.

pub mod error;
pub mod frame;
pub mod fusion;
pub mod geom;
pub mod metrics;
pub mod predparse;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};

/// Version string embedded in every report.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
