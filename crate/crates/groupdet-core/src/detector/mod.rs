//! Two-stage anchor-based group detector with optional fusion hooks.

pub mod anchors;
pub mod boxes;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod resize;
pub mod train;

pub use anchors::{assign_targets, build_anchors, Assignment, LevelAnchors};
pub use boxes::{clip_xyxy, decode_deltas, encode_deltas, iou, nms};
pub use checkpoint::{load_checkpoint, model_from_checkpoint, save_checkpoint};
pub use config::{BackbonePreset, DetectorConfig, FusionMode, STRIDES};
pub use model::{level_shapes_for, GroupDetector, TrainExample};
pub use resize::{image_to_input, ResizePlan};
pub use train::{evaluate_model, prepare_examples, train, EpochLog, TrainOutcome, TrainResult};
