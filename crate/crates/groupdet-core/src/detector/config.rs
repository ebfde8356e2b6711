//! Detector configuration and backbone presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textenc::TextEncoderKind;

/// Pyramid strides, one per level.
pub const STRIDES: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackbonePreset {
    /// 50-layer residual backbone mirroring the reference setup.
    #[default]
    Full,
    /// Same stage/stride layout with few, narrow layers; trains in minutes.
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    None,
    TextFusion,
    BoxAttention,
    Both,
}

impl FusionMode {
    pub fn text_fusion(self) -> bool {
        matches!(self, FusionMode::TextFusion | FusionMode::Both)
    }

    pub fn box_attention(self) -> bool {
        matches!(self, FusionMode::BoxAttention | FusionMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub backbone_preset: BackbonePreset,
    pub fusion: FusionMode,
    /// One anchor size per pyramid level.
    pub anchor_sizes: [f64; 5],
    /// Anchor aspect ratios h/w applied at every level.
    pub anchor_ratios: [f64; 5],
    /// (short side target, long side cap) for input resizing.
    pub resize: (u32, u32),
    /// Foreground classes plus background.
    pub n_classes: usize,
    /// Text embedding length K.
    pub embed_dim: usize,
    pub text_encoder: TextEncoderKind,

    pub rpn_pos_iou: f64,
    pub rpn_neg_iou: f64,
    pub roi_pos_iou: f64,
    /// NMS IoU for proposals and for final detections.
    pub proposal_nms_iou: f64,
    pub final_nms_iou: f64,
    pub score_thresh: f64,
    pub max_dets: usize,

    pub rpn_pre_nms_train: usize,
    pub rpn_post_nms_train: usize,
    pub rpn_pre_nms_test: usize,
    pub rpn_post_nms_test: usize,
    pub rpn_batch: usize,
    pub rpn_pos_fraction: f64,
    pub roi_batch: usize,
    pub roi_pos_fraction: f64,
    pub smooth_l1_beta_rpn: f64,
    pub smooth_l1_beta_roi: f64,

    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_step_epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            backbone_preset: BackbonePreset::Full,
            fusion: FusionMode::None,
            anchor_sizes: [32.0, 64.0, 128.0, 256.0, 512.0],
            anchor_ratios: [0.5, 1.0, 2.0, 4.0, 8.0],
            resize: (800, 1300),
            n_classes: 2,
            embed_dim: 16,
            text_encoder: TextEncoderKind::HashedNgram,
            rpn_pos_iou: 0.7,
            rpn_neg_iou: 0.3,
            roi_pos_iou: 0.5,
            proposal_nms_iou: 0.7,
            final_nms_iou: 0.5,
            score_thresh: 0.05,
            max_dets: 100,
            rpn_pre_nms_train: 2000,
            rpn_post_nms_train: 1000,
            rpn_pre_nms_test: 1000,
            rpn_post_nms_test: 1000,
            rpn_batch: 256,
            rpn_pos_fraction: 0.5,
            roi_batch: 128,
            roi_pos_fraction: 0.25,
            smooth_l1_beta_rpn: 1.0 / 9.0,
            smooth_l1_beta_roi: 1.0,
            lr0: 0.01,
            lr_decay_factor: 0.1,
            lr_step_epochs: 10,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 72,
            batch_size: 2,
            grad_clip_norm: None,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    /// Desk-scale configuration used by tests and small experiments.
    pub fn tiny() -> Self {
        DetectorConfig {
            backbone_preset: BackbonePreset::Tiny,
            anchor_sizes: [16.0, 32.0, 64.0, 128.0, 256.0],
            anchor_ratios: [0.25, 0.5, 1.0, 2.0, 4.0],
            resize: (192, 320),
            rpn_pre_nms_train: 1000,
            rpn_post_nms_train: 300,
            rpn_pre_nms_test: 600,
            rpn_post_nms_test: 300,
            roi_batch: 96,
            epochs: 20,
            ..Default::default()
        }
    }

    /// Learning rate at a given epoch under the step decay schedule.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay_factor.powi((epoch / self.lr_step_epochs) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchor_sizes.iter().any(|&s| s <= 0.0) || self.anchor_ratios.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("anchor sizes and ratios must be positive".into()));
        }
        for (name, v) in [
            ("rpn_pos_iou", self.rpn_pos_iou),
            ("rpn_neg_iou", self.rpn_neg_iou),
            ("roi_pos_iou", self.roi_pos_iou),
            ("proposal_nms_iou", self.proposal_nms_iou),
            ("final_nms_iou", self.final_nms_iou),
            ("score_thresh", self.score_thresh),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.rpn_neg_iou > self.rpn_pos_iou {
            return Err(Error::Config("rpn_neg_iou must not exceed rpn_pos_iou".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must include background".into()));
        }
        if self.resize.0 == 0 || self.resize.1 < self.resize.0 {
            return Err(Error::Config("resize must satisfy 0 < short <= long".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if self.lr_step_epochs == 0 {
            return Err(Error::Config("lr_step_epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Channel/block layout derived from the preset.
#[derive(Debug, Clone, Copy)]
pub struct PresetDims {
    pub stem_channels: usize,
    pub stage_channels: [usize; 4],
    pub blocks: [usize; 4],
    pub bottleneck: bool,
    pub fpn_channels: usize,
    pub roi_fc_dim: usize,
}

impl BackbonePreset {
    pub fn dims(self) -> PresetDims {
        match self {
            BackbonePreset::Full => PresetDims {
                stem_channels: 64,
                stage_channels: [256, 512, 1024, 2048],
                blocks: [3, 4, 6, 3],
                bottleneck: true,
                fpn_channels: 256,
                roi_fc_dim: 1024,
            },
            BackbonePreset::Tiny => PresetDims {
                stem_channels: 16,
                stage_channels: [16, 32, 64, 128],
                blocks: [1, 1, 1, 1],
                bottleneck: false,
                fpn_channels: 32,
                roi_fc_dim: 128,
            },
        }
    }
}
