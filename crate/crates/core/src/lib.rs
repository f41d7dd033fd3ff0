//! Non-neural machinery for open-world corner-case object detection.
//!
//! The crate covers everything around a detector that can be checked without
//! training one:
//!
//! - [`geometry`]: axis-aligned boxes, IoU and generalized IoU.
//! - [`datamodel`]: COCO-format ingestion, common/novel class splits and
//!   class-agnostic remapping.
//! - [`losses`]: box regression (GIoU + L1), focal and soft-token losses with
//!   analytic gradients and a finite-difference checker.
//! - [`matching`]: Hungarian assignment with a DETR-style matching cost.
//! - [`pseudolabel`]: teacher proposals to class-agnostic pseudo-annotations,
//!   and merging of pseudo-labeled geometry-cue images into the labeled set.
//! - [`evaluation`]: AR/AP in the class-agnostic open-world protocol plus the
//!   single-threshold recall/mAP50 protocol.
//! - [`synth`]: seeded synthetic scenes, detector and teacher simulators.
//! - [`report`]: metric deltas against baseline tables.
//! - [`cli`]: the `cornercase` command-line driver.

pub mod cli;
pub mod datamodel;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod losses;
pub mod matching;
pub mod pseudolabel;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::BBox;
