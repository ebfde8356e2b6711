//! Detection of image+text layer groups in UI design drafts.
//!
//! The pipeline: parse draft layer trees ([`draft`]), cut screens into square
//! slices and serialize COCO-style datasets with a text sidecar ([`slicer`],
//! [`coco`]), generate deterministic synthetic corpora for desk-scale runs
//! ([`synth`]), and train/evaluate a two-stage anchor-based detector
//! ([`detector`]) optionally augmented with text fusion and box attention
//! ([`fusion`]). Metrics follow the COCO protocol ([`cocoeval`]).

pub mod coco;
pub mod cocoeval;
pub mod draft;
pub mod error;
pub mod fusion;
pub mod nn;
pub mod slicer;
pub mod synth;
pub mod textenc;
pub mod types;

pub mod detector;

pub use error::{Error, Result};
pub use types::{Detection, GroupLabel, NormBox, Rect, ScreenSample, TextLayerRecord};

/// The single foreground detection category.
pub const GROUP_CATEGORY_ID: u32 = 1;
