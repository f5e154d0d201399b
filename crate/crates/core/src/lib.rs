//! Face-forgery video detection toolkit.
//!
//! The pipeline runs in stages: [`preprocess`] turns videos into face crops
//! plus a [`dataset::Manifest`], [`sampling`] indexes crops into per-frame and
//! per-window samples, [`models`] holds the shared-weight frame encoder and
//! the classifier families, [`training`] fits them with Adam, and
//! [`evaluation`] renders accuracy tables and benchmark files. [`synthgen`]
//! procedurally generates labeled toy videos in the same on-disk layout so
//! every stage can be exercised at desk scale.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod frames;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod sampling;
pub mod synthgen;
pub mod training;
pub mod cli;

pub use crate::dataset::{CompressionLevel, Label, ManipulationMethod, Split};
pub use crate::error::{Error, Result};
pub use crate::exec::ExecMode;
