//! The two-stage group detector: residual backbone + feature pyramid + RPN +
//! RoI-Align second stage, with optional text fusion and box attention hooks.
//!
//! One model instance owns its parameters; every forward pass builds a fresh
//! autodiff graph. Proposal boxes are computed from node values and re-enter
//! the graph as constants, so no gradient flows through box coordinates
//! (standard for this family of detectors).

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::fusion::{
    box_attention_forward, build_box_attention, build_text_map, text_fusion_forward,
    BoxAttentionParams, TextFusionParams,
};
use crate::nn::{self, Arr, Binder, Graph, NodeId, ParamId, ParamStore};
use crate::textenc::{HashedNgramEncoder, TextEncoder};
use crate::types::{Detection, TextLayerRecord};

use super::anchors::{assign_targets, build_anchors, Assignment, LevelAnchors};
use super::boxes::{clip_xyxy, decode_deltas, encode_deltas, iou, nms, xyxy_to_xywh};
use super::config::{BackbonePreset, DetectorConfig, PresetDims, STRIDES};
use super::resize::{image_to_input, ResizePlan};

#[derive(Clone, Copy)]
struct ConvP {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy)]
struct BlockP {
    conv1: ConvP,
    conv2: ConvP,
    conv3: Option<ConvP>,
    down: Option<ConvP>,
    stride: usize,
}

struct Arch {
    dims: PresetDims,
    stem: ConvP,
    stages: Vec<Vec<BlockP>>,
    fpn_lateral: Vec<ConvP>,
    fpn_output: Vec<ConvP>,
    rpn_conv: ConvP,
    rpn_cls: ConvP,
    rpn_reg: ConvP,
    fc1: ConvP,
    fc2: ConvP,
    head_cls: ConvP,
    head_reg: ConvP,
    text_fusion: Option<TextFusionParams>,
    box_attention: Option<BoxAttentionParams>,
}

/// One training example in resized coordinates.
#[derive(Clone)]
pub struct TrainExample {
    pub input: Array3<f64>,
    pub gts: Vec<[f64; 4]>,
    pub texts: Vec<TextLayerRecord>,
}

/// Graph state after the shared trunk (backbone, pyramid, proposal head).
pub struct ForwardPass<'m> {
    pub g: Graph,
    pub binder: Binder<'m>,
    pyramid: Vec<NodeId>,
    rpn_cls_rows: Vec<NodeId>,
    rpn_reg_rows: Vec<NodeId>,
    pub level_shapes: Vec<(usize, usize)>,
    pub input_w: usize,
    pub input_h: usize,
}

/// Loss graph with per-component values.
pub struct LossGraph<'m> {
    pub g: Graph,
    pub binder: Binder<'m>,
    pub loss: NodeId,
    pub stats: LossStats,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub total: f64,
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub roi_cls: f64,
    pub roi_reg: f64,
}

pub struct GroupDetector {
    pub cfg: DetectorConfig,
    pub params: ParamStore,
    arch: Arch,
    encoder: Box<dyn TextEncoder>,
}

fn normal_init(shape: &[usize], std: f64, rng: &mut ChaCha20Rng) -> Arr {
    use rand::Rng;
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
    })
}

fn register_conv(
    store: &mut ParamStore,
    seed: u64,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
    std: Option<f64>,
) -> ConvP {
    let w_name = format!("{name}.w");
    let mut rng = nn::param_rng(seed, &w_name);
    let w_val = match std {
        Some(std) => normal_init(&[c_out, c_in, k, k], std, &mut rng),
        None => nn::he_normal_init(&[c_out, c_in, k, k], c_in * k * k, &mut rng),
    };
    let w = store.register(&w_name, w_val);
    let b = store.register(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[c_out])));
    ConvP { w, b }
}

fn register_linear(
    store: &mut ParamStore,
    seed: u64,
    name: &str,
    d_out: usize,
    d_in: usize,
    std: Option<f64>,
) -> ConvP {
    let w_name = format!("{name}.w");
    let mut rng = nn::param_rng(seed, &w_name);
    let w_val = match std {
        Some(std) => normal_init(&[d_out, d_in], std, &mut rng),
        None => nn::he_normal_init(&[d_out, d_in], d_in, &mut rng),
    };
    let w = store.register(&w_name, w_val);
    let b = store.register(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[d_out])));
    ConvP { w, b }
}

impl GroupDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        let encoder: Box<dyn TextEncoder> = Box::new(HashedNgramEncoder::new(cfg.embed_dim));
        Self::with_encoder(cfg, encoder)
    }

    pub fn with_encoder(cfg: DetectorConfig, encoder: Box<dyn TextEncoder>) -> Result<Self> {
        cfg.validate()?;
        if encoder.dim() != cfg.embed_dim {
            return Err(Error::Config(format!(
                "encoder dim {} does not match embed_dim {}",
                encoder.dim(),
                cfg.embed_dim
            )));
        }
        let dims = cfg.backbone_preset.dims();
        let mut store = ParamStore::new();
        let seed = cfg.seed;

        let stem = register_conv(&mut store, seed, "stem", dims.stem_channels, 3, 7, None);

        let mut stages = Vec::new();
        let mut c_in = dims.stem_channels;
        for (s, (&c_out, &n_blocks)) in dims.stage_channels.iter().zip(dims.blocks.iter()).enumerate() {
            let mut blocks = Vec::new();
            for bi in 0..n_blocks {
                let stride = if s > 0 && bi == 0 { 2 } else { 1 };
                let name = format!("s{s}.b{bi}");
                let block = if dims.bottleneck {
                    let mid = c_out / 4;
                    let conv1 = register_conv(&mut store, seed, &format!("{name}.conv1"), mid, c_in, 1, None);
                    let conv2 = register_conv(&mut store, seed, &format!("{name}.conv2"), mid, mid, 3, None);
                    let conv3 = register_conv(&mut store, seed, &format!("{name}.conv3"), c_out, mid, 1, None);
                    let down = (stride != 1 || c_in != c_out).then(|| {
                        register_conv(&mut store, seed, &format!("{name}.down"), c_out, c_in, 1, None)
                    });
                    BlockP { conv1, conv2, conv3: Some(conv3), down, stride }
                } else {
                    let conv1 = register_conv(&mut store, seed, &format!("{name}.conv1"), c_out, c_in, 3, None);
                    let conv2 = register_conv(&mut store, seed, &format!("{name}.conv2"), c_out, c_out, 3, None);
                    let down = (stride != 1 || c_in != c_out).then(|| {
                        register_conv(&mut store, seed, &format!("{name}.down"), c_out, c_in, 1, None)
                    });
                    BlockP { conv1, conv2, conv3: None, down, stride }
                };
                blocks.push(block);
                c_in = c_out;
            }
            stages.push(blocks);
        }

        let d = dims.fpn_channels;
        let fpn_lateral: Vec<ConvP> = (0..4)
            .map(|i| register_conv(&mut store, seed, &format!("fpn.lat{}", i + 2), d, dims.stage_channels[i], 1, None))
            .collect();
        let fpn_output: Vec<ConvP> = (0..4)
            .map(|i| register_conv(&mut store, seed, &format!("fpn.out{}", i + 2), d, d, 3, None))
            .collect();

        let n_anchors = cfg.anchor_ratios.len();
        let rpn_conv = register_conv(&mut store, seed, "rpn.conv", d, d, 3, Some(0.01));
        let rpn_cls = register_conv(&mut store, seed, "rpn.cls", 2 * n_anchors, d, 1, Some(0.01));
        let rpn_reg = register_conv(&mut store, seed, "rpn.reg", 4 * n_anchors, d, 1, Some(0.01));

        let fc_in = d * 7 * 7;
        let fc1 = register_linear(&mut store, seed, "roi.fc1", dims.roi_fc_dim, fc_in, None);
        let fc2 = register_linear(&mut store, seed, "roi.fc2", dims.roi_fc_dim, dims.roi_fc_dim, None);
        let head_cls = register_linear(&mut store, seed, "roi.cls", cfg.n_classes, dims.roi_fc_dim, Some(0.01));
        let n_fg = cfg.n_classes - 1;
        let head_reg = register_linear(&mut store, seed, "roi.reg", 4 * n_fg, dims.roi_fc_dim, Some(0.001));

        let text_fusion = cfg
            .fusion
            .text_fusion()
            .then(|| TextFusionParams::register(&mut store, cfg.embed_dim, dims.stem_channels, seed));
        let box_attention = cfg
            .fusion
            .box_attention()
            .then(|| BoxAttentionParams::register(&mut store, d));

        let arch = Arch {
            dims,
            stem,
            stages,
            fpn_lateral,
            fpn_output,
            rpn_conv,
            rpn_cls,
            rpn_reg,
            fc1,
            fc2,
            head_cls,
            head_reg,
            text_fusion,
            box_attention,
        };
        Ok(GroupDetector { cfg, params: store, arch, encoder })
    }

    pub fn preset(&self) -> BackbonePreset {
        self.cfg.backbone_preset
    }

    /// Replace parameter values from `(name, tensor)` pairs; the set of names
    /// and every shape must match exactly.
    pub fn load_weights(&mut self, tensors: Vec<(String, Arr)>) -> Result<()> {
        if tensors.len() != self.params.len() {
            return Err(Error::WeightMismatch(format!(
                "checkpoint has {} tensors, model has {}",
                tensors.len(),
                self.params.len()
            )));
        }
        for (name, value) in tensors {
            let Some(id) = self.params.id_of(&name) else {
                return Err(Error::WeightMismatch(format!("unexpected tensor {name}")));
            };
            if self.params.value(id).shape() != value.shape() {
                return Err(Error::WeightMismatch(format!(
                    "tensor {name}: checkpoint shape {:?} vs model shape {:?}",
                    value.shape(),
                    self.params.value(id).shape()
                )));
            }
            *self.params.value_mut(id) = value;
        }
        Ok(())
    }

    fn conv(&self, g: &mut Graph, binder: &mut Binder, x: NodeId, p: ConvP, stride: usize, pad: usize) -> NodeId {
        let w = binder.bind(g, p.w);
        let b = binder.bind(g, p.b);
        g.conv2d(x, w, b, stride, pad)
    }

    fn linear(&self, g: &mut Graph, binder: &mut Binder, x: NodeId, p: ConvP) -> NodeId {
        let w = binder.bind(g, p.w);
        let b = binder.bind(g, p.b);
        g.linear(x, w, b)
    }

    fn block(&self, g: &mut Graph, binder: &mut Binder, x: NodeId, p: &BlockP) -> NodeId {
        let shortcut = match p.down {
            Some(down) => self.conv(g, binder, x, down, p.stride, 0),
            None => x,
        };
        let out = match p.conv3 {
            Some(conv3) => {
                let y = self.conv(g, binder, x, p.conv1, 1, 0);
                let y = g.relu(y);
                let y = self.conv(g, binder, y, p.conv2, p.stride, 1);
                let y = g.relu(y);
                self.conv(g, binder, y, conv3, 1, 0)
            }
            None => {
                let y = self.conv(g, binder, x, p.conv1, p.stride, 1);
                let y = g.relu(y);
                self.conv(g, binder, y, p.conv2, 1, 1)
            }
        };
        let sum = g.add(out, shortcut);
        g.relu(sum)
    }

    /// Run the trunk: backbone (with optional text fusion), pyramid (with
    /// optional box attention) and the shared proposal head on every level.
    pub fn forward_features(
        &self,
        input: &Array3<f64>,
        texts: &[TextLayerRecord],
    ) -> Result<ForwardPass<'_>> {
        let (_, in_h, in_w) = input.dim();
        let mut g = Graph::new();
        let mut binder = Binder::new(&self.params);

        let x = g.input(input.clone().into_dyn());
        let stem = self.conv(&mut g, &mut binder, x, self.arch.stem, 2, 3);
        let stem = g.relu(stem);
        let mut c = g.maxpool2d(stem, 3, 2, 1);

        if let Some(tf) = &self.arch.text_fusion {
            let t_map = build_text_map(texts, self.encoder.as_ref(), in_h, in_w);
            c = text_fusion_forward(&mut g, &mut binder, c, t_map, tf)?;
        }

        let mut stage_outputs = Vec::with_capacity(4);
        for blocks in &self.arch.stages {
            for block in blocks {
                c = self.block(&mut g, &mut binder, c, block);
            }
            stage_outputs.push(c);
        }

        // pyramid: lateral projections + top-down nearest upsampling
        let laterals: Vec<NodeId> = stage_outputs
            .iter()
            .zip(&self.arch.fpn_lateral)
            .map(|(&cx, &lat)| self.conv(&mut g, &mut binder, cx, lat, 1, 0))
            .collect();
        let mut tops = vec![laterals[3]];
        for i in (0..3).rev() {
            let (th, tw) = {
                let s = g.value(laterals[i]).shape();
                (s[1], s[2])
            };
            let prev = *tops.last().unwrap();
            let up = g.upsample2_to(prev, th, tw);
            tops.push(g.add(laterals[i], up));
        }
        tops.reverse(); // p2, p3, p4, p5
        let mut pyramid: Vec<NodeId> = tops
            .iter()
            .zip(&self.arch.fpn_output)
            .map(|(&p, &out)| self.conv(&mut g, &mut binder, p, out, 1, 1))
            .collect();
        let p6 = g.maxpool2d(pyramid[3], 1, 2, 0);
        pyramid.push(p6);

        if let Some(ba) = &self.arch.box_attention {
            for level in pyramid.iter_mut() {
                let (h_i, w_i) = {
                    let s = g.value(*level).shape();
                    (s[1], s[2])
                };
                let b_map = build_box_attention(texts, h_i, w_i);
                *level = box_attention_forward(&mut g, &mut binder, *level, b_map, ba)?;
            }
        }

        let n_anchors = self.cfg.anchor_ratios.len();
        let mut rpn_cls_rows = Vec::with_capacity(5);
        let mut rpn_reg_rows = Vec::with_capacity(5);
        let mut level_shapes = Vec::with_capacity(5);
        for &level in &pyramid {
            let (h_i, w_i) = {
                let s = g.value(level).shape();
                (s[1], s[2])
            };
            level_shapes.push((h_i, w_i));
            let hmap = self.conv(&mut g, &mut binder, level, self.arch.rpn_conv, 1, 1);
            let hmap = g.relu(hmap);
            let cls = self.conv(&mut g, &mut binder, hmap, self.arch.rpn_cls, 1, 0);
            let reg = self.conv(&mut g, &mut binder, hmap, self.arch.rpn_reg, 1, 0);
            // (C,H,W) -> (H,W,C) -> per-anchor rows
            let cls = g.permute(cls, &[1, 2, 0]);
            let cls = g.reshape(cls, &[h_i * w_i * n_anchors, 2]);
            let reg = g.permute(reg, &[1, 2, 0]);
            let reg = g.reshape(reg, &[h_i * w_i * n_anchors, 4]);
            rpn_cls_rows.push(cls);
            rpn_reg_rows.push(reg);
        }

        Ok(ForwardPass {
            g,
            binder,
            pyramid,
            rpn_cls_rows,
            rpn_reg_rows,
            level_shapes,
            input_w: in_w,
            input_h: in_h,
        })
    }

    pub fn anchors_for(&self, level_shapes: &[(usize, usize)]) -> Vec<LevelAnchors> {
        build_anchors(level_shapes, &STRIDES, &self.cfg.anchor_sizes, &self.cfg.anchor_ratios)
    }

    /// Decode, clip, and NMS-filter proposals from the proposal head values.
    pub fn generate_proposals(
        &self,
        fp: &ForwardPass,
        anchors: &[LevelAnchors],
        train: bool,
    ) -> Vec<[f64; 4]> {
        let (pre, post) = if train {
            (self.cfg.rpn_pre_nms_train, self.cfg.rpn_post_nms_train)
        } else {
            (self.cfg.rpn_pre_nms_test, self.cfg.rpn_post_nms_test)
        };
        let (w, h) = (fp.input_w as f64, fp.input_h as f64);
        let mut scored: Vec<([f64; 4], f64)> = Vec::new();
        for (level, level_anchors) in anchors.iter().enumerate() {
            let cls = fp.g.value(fp.rpn_cls_rows[level]);
            let reg = fp.g.value(fp.rpn_reg_rows[level]);
            let cls = cls.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let reg = reg.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            for (i, anchor) in level_anchors.anchors.iter().enumerate() {
                let (bg, fg) = (cls[(i, 0)], cls[(i, 1)]);
                let m = bg.max(fg);
                let score = ((fg - m).exp()) / ((bg - m).exp() + (fg - m).exp());
                let deltas = [reg[(i, 0)], reg[(i, 1)], reg[(i, 2)], reg[(i, 3)]];
                let decoded = clip_xyxy(decode_deltas(*anchor, deltas), w, h);
                if decoded[2] - decoded[0] >= 1.0 && decoded[3] - decoded[1] >= 1.0 {
                    scored.push((decoded, score));
                }
            }
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        scored.truncate(pre);
        let boxes: Vec<[f64; 4]> = scored.iter().map(|s| s.0).collect();
        let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
        let keep = nms(&boxes, &scores, self.cfg.proposal_nms_iou);
        keep.into_iter().take(post).map(|i| boxes[i]).collect()
    }

    /// Second stage on a fixed set of rois: returns `(cls_logits, reg)` nodes
    /// of shapes `(R, n_classes)` and `(R, 4)`.
    fn roi_forward(&self, fp: &mut ForwardPass<'_>, rois: &[[f64; 4]]) -> (NodeId, NodeId) {
        assert!(!rois.is_empty());
        // canonical pyramid assignment: 224^2 boxes map to level 4
        let levels: Vec<usize> = rois
            .iter()
            .map(|r| {
                let area = ((r[2] - r[0]) * (r[3] - r[1])).max(1e-6);
                let k = 4.0 + (area.sqrt() / 224.0).log2();
                (k.floor() as i64).clamp(2, 5) as usize
            })
            .collect();
        let mut per_level_nodes = Vec::new();
        let mut order = Vec::new();
        for level in 2..=5usize {
            let idx: Vec<usize> = (0..rois.len()).filter(|&i| levels[i] == level).collect();
            if idx.is_empty() {
                continue;
            }
            let stride = STRIDES[level - 2] as f64;
            let scaled: Vec<[f64; 4]> = idx
                .iter()
                .map(|&i| {
                    let r = rois[i];
                    [r[0] / stride, r[1] / stride, r[2] / stride, r[3] / stride]
                })
                .collect();
            let feat = fp.pyramid[level - 2];
            let aligned = fp.g.roi_align(feat, &scaled, 7, 7, 2);
            let flat = fp
                .g
                .reshape(aligned, &[idx.len(), self.arch.dims.fpn_channels * 49]);
            per_level_nodes.push(flat);
            order.extend(idx);
        }
        let stacked = if per_level_nodes.len() == 1 {
            per_level_nodes[0]
        } else {
            fp.g.concat_rows(&per_level_nodes)
        };
        // restore original roi order
        let mut inverse = vec![0usize; rois.len()];
        for (pos, &original) in order.iter().enumerate() {
            inverse[original] = pos;
        }
        let ordered = fp.g.gather_rows(stacked, inverse);
        let y = self.linear(&mut fp.g, &mut fp.binder, ordered, self.arch.fc1);
        let y = fp.g.relu(y);
        let y = self.linear(&mut fp.g, &mut fp.binder, y, self.arch.fc2);
        let y = fp.g.relu(y);
        let cls = self.linear(&mut fp.g, &mut fp.binder, y, self.arch.head_cls);
        let reg = self.linear(&mut fp.g, &mut fp.binder, y, self.arch.head_reg);
        (cls, reg)
    }

    /// Full inference on one image.
    pub fn detect(&self, image: &image::RgbImage, texts: &[TextLayerRecord]) -> Result<Vec<Detection>> {
        let plan = ResizePlan::new(image.width(), image.height(), self.cfg.resize.0, self.cfg.resize.1);
        let input = image_to_input(image, &plan);
        let mut fp = self.forward_features(&input, texts)?;
        let anchors = self.anchors_for(&fp.level_shapes);
        let proposals = self.generate_proposals(&fp, &anchors, false);
        if proposals.is_empty() {
            return Ok(Vec::new());
        }
        let (cls_node, reg_node) = self.roi_forward(&mut fp, &proposals);
        let cls = fp.g.value(cls_node).view().into_dimensionality::<ndarray::Ix2>().unwrap().to_owned();
        let reg = fp.g.value(reg_node).view().into_dimensionality::<ndarray::Ix2>().unwrap().to_owned();

        let (w, h) = (fp.input_w as f64, fp.input_h as f64);
        let mut boxes = Vec::new();
        let mut scores = Vec::new();
        for (i, roi) in proposals.iter().enumerate() {
            // softmax over classes; single foreground class sits at index 1
            let row = cls.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let fg = (row[1] - m).exp() / denom;
            if fg < self.cfg.score_thresh {
                continue;
            }
            let deltas = [reg[(i, 0)], reg[(i, 1)], reg[(i, 2)], reg[(i, 3)]];
            let decoded = clip_xyxy(decode_deltas(*roi, deltas), w, h);
            if decoded[2] - decoded[0] <= 0.0 || decoded[3] - decoded[1] <= 0.0 {
                continue;
            }
            boxes.push(decoded);
            scores.push(fg);
        }
        let keep = nms(&boxes, &scores, self.cfg.final_nms_iou);
        let mut detections: Vec<Detection> = keep
            .into_iter()
            .take(self.cfg.max_dets)
            .map(|i| Detection {
                bbox: xyxy_to_xywh(plan.unscale_box(boxes[i])),
                score: scores[i],
                category_id: crate::GROUP_CATEGORY_ID,
            })
            .collect();
        detections.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        Ok(detections)
    }

    /// Precompute the anchor assignment for one example (gt boxes are fixed,
    /// so this only needs to happen once per example).
    pub fn assignment_for(&self, ex: &TrainExample) -> (Vec<LevelAnchors>, Assignment) {
        let shapes = level_shapes_for(self.cfg.backbone_preset, ex.input.dim().1, ex.input.dim().2);
        let anchors = self.anchors_for(&shapes);
        let flat: Vec<[f64; 4]> = anchors.iter().flat_map(|l| l.anchors.iter().copied()).collect();
        let assign = assign_targets(&flat, &ex.gts, self.cfg.rpn_pos_iou, self.cfg.rpn_neg_iou);
        (anchors, assign)
    }

    /// Build the joint loss graph for one image.
    pub fn training_loss(
        &self,
        ex: &TrainExample,
        anchors: &[LevelAnchors],
        assign: &Assignment,
        rng: &mut ChaCha20Rng,
    ) -> Result<LossGraph<'_>> {
        use rand::seq::SliceRandom;
        use rand::Rng;

        let mut fp = self.forward_features(&ex.input, &ex.texts)?;
        let flat_anchors: Vec<[f64; 4]> =
            anchors.iter().flat_map(|l| l.anchors.iter().copied()).collect();

        // --- proposal head loss on a sampled anchor batch ---
        let mut pos: Vec<usize> = (0..flat_anchors.len()).filter(|&i| assign.labels[i] == 1).collect();
        let mut neg: Vec<usize> = (0..flat_anchors.len()).filter(|&i| assign.labels[i] == 0).collect();
        pos.shuffle(rng);
        neg.shuffle(rng);
        let n_pos = pos
            .len()
            .min((self.cfg.rpn_batch as f64 * self.cfg.rpn_pos_fraction) as usize);
        let n_neg = (self.cfg.rpn_batch - n_pos).min(neg.len());
        let sampled: Vec<usize> = pos[..n_pos].iter().chain(neg[..n_neg].iter()).copied().collect();
        let labels: Vec<usize> = sampled.iter().map(|&i| (assign.labels[i] == 1) as usize).collect();

        let cls_all = fp.g.concat_rows(&fp.rpn_cls_rows.clone());
        let cls_sampled = fp.g.gather_rows(cls_all, sampled.clone());
        let rpn_cls_loss = fp.g.softmax_ce_mean(cls_sampled, labels);

        let n_sampled = (n_pos + n_neg).max(1);
        let rpn_reg_loss = if n_pos > 0 {
            let reg_all = fp.g.concat_rows(&fp.rpn_reg_rows.clone());
            let reg_pos = fp.g.gather_rows(reg_all, pos[..n_pos].to_vec());
            let mut target = Array2::<f64>::zeros((n_pos, 4));
            for (r, &a) in pos[..n_pos].iter().enumerate() {
                for j in 0..4 {
                    target[(r, j)] = assign.targets[a][j];
                }
            }
            Some(fp.g.smooth_l1(
                reg_pos,
                target.into_dyn(),
                self.cfg.smooth_l1_beta_rpn,
                n_sampled as f64,
            ))
        } else {
            None
        };

        // --- second stage on sampled proposals ---
        let mut proposals = self.generate_proposals(&fp, anchors, true);
        proposals.extend(ex.gts.iter().copied());
        let mut fg: Vec<(usize, usize)> = Vec::new();
        let mut bg: Vec<usize> = Vec::new();
        for (i, p) in proposals.iter().enumerate() {
            let mut best = 0.0;
            let mut best_gt = 0;
            for (gi, gt) in ex.gts.iter().enumerate() {
                let v = iou(*p, *gt);
                if v > best {
                    best = v;
                    best_gt = gi;
                }
            }
            if !ex.gts.is_empty() && best >= self.cfg.roi_pos_iou {
                fg.push((i, best_gt));
            } else {
                bg.push(i);
            }
        }
        fg.shuffle(rng);
        bg.shuffle(rng);
        let n_fg = fg
            .len()
            .min((self.cfg.roi_batch as f64 * self.cfg.roi_pos_fraction) as usize);
        let n_bg = (self.cfg.roi_batch - n_fg).min(bg.len());
        let mut rois: Vec<[f64; 4]> = Vec::with_capacity(n_fg + n_bg);
        let mut roi_labels: Vec<usize> = Vec::with_capacity(n_fg + n_bg);
        let mut reg_targets = Array2::<f64>::zeros((n_fg, 4));
        for (r, &(i, gi)) in fg[..n_fg].iter().enumerate() {
            rois.push(proposals[i]);
            roi_labels.push(1);
            let t = encode_deltas(proposals[i], ex.gts[gi]);
            for j in 0..4 {
                reg_targets[(r, j)] = t[j];
            }
        }
        for &i in &bg[..n_bg] {
            rois.push(proposals[i]);
            roi_labels.push(0);
        }
        // degenerate corner: no proposals at all (can only happen with no
        // gts and an empty rpn output); fall back to one full-image roi
        if rois.is_empty() {
            rois.push([0.0, 0.0, fp.input_w as f64, fp.input_h as f64]);
            roi_labels.push(0);
        }
        let _ = rng.gen::<u64>(); // keep the stream moving even without sampling

        let (cls_node, reg_node) = self.roi_forward(&mut fp, &rois);
        let roi_cls_loss = fp.g.softmax_ce_mean(cls_node, roi_labels);
        let roi_reg_loss = if n_fg > 0 {
            let fg_rows: Vec<usize> = (0..n_fg).collect();
            let reg_fg = fp.g.gather_rows(reg_node, fg_rows);
            Some(fp.g.smooth_l1(
                reg_fg,
                reg_targets.into_dyn(),
                self.cfg.smooth_l1_beta_roi,
                rois.len() as f64,
            ))
        } else {
            None
        };

        let mut parts = vec![rpn_cls_loss];
        parts.extend(rpn_reg_loss);
        parts.push(roi_cls_loss);
        parts.extend(roi_reg_loss);
        let loss = fp.g.add_n(&parts);

        let stats = LossStats {
            total: fp.g.value(loss).sum(),
            rpn_cls: fp.g.value(rpn_cls_loss).sum(),
            rpn_reg: rpn_reg_loss.map(|n| fp.g.value(n).sum()).unwrap_or(0.0),
            roi_cls: fp.g.value(roi_cls_loss).sum(),
            roi_reg: roi_reg_loss.map(|n| fp.g.value(n).sum()).unwrap_or(0.0),
        };
        let ForwardPass { g, binder, .. } = fp;
        Ok(LossGraph { g, binder, loss, stats })
    }
}

/// Spatial sizes of the five pyramid levels for a given input size. Every
/// stage halves via stride-2 ops with `ceil(n/2)` arithmetic.
pub fn level_shapes_for(_preset: BackbonePreset, h: usize, w: usize) -> Vec<(usize, usize)> {
    let ceil_half = |n: usize| n.div_ceil(2);
    let mut shapes = Vec::with_capacity(5);
    // stem conv /2 then pool /2 -> stride 4
    let (mut ch, mut cw) = (ceil_half(ceil_half(h)), ceil_half(ceil_half(w)));
    shapes.push((ch, cw));
    for _ in 0..3 {
        ch = ceil_half(ch);
        cw = ceil_half(cw);
        shapes.push((ch, cw));
    }
    // p6 via k=1 s=2 pooling: floor((n-1)/2)+1 == ceil(n/2)
    shapes.push((ceil_half(ch), ceil_half(cw)));
    shapes
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn tiny_model(fusion: super::super::config::FusionMode) -> GroupDetector {
        let cfg = DetectorConfig {
            fusion,
            seed: 11,
            ..DetectorConfig::tiny()
        };
        GroupDetector::new(cfg).unwrap()
    }

    fn test_image(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8])
        })
    }

    #[test]
    fn level_shapes_match_forward_shapes() {
        let model = tiny_model(super::super::config::FusionMode::None);
        let img = test_image(100, 160);
        let plan = ResizePlan::new(100, 160, model.cfg.resize.0, model.cfg.resize.1);
        let input = image_to_input(&img, &plan);
        let (_, h, w) = input.dim();
        let fp = model.forward_features(&input, &[]).unwrap();
        assert_eq!(fp.level_shapes, level_shapes_for(BackbonePreset::Tiny, h, w));
    }

    #[test]
    fn detect_is_deterministic() {
        let model = tiny_model(super::super::config::FusionMode::None);
        let img = test_image(128, 128);
        let a = model.detect(&img, &[]).unwrap();
        let b = model.detect(&img, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_init_fusion_matches_baseline_exactly() {
        let base = tiny_model(super::super::config::FusionMode::None);
        let tf = tiny_model(super::super::config::FusionMode::TextFusion);
        let ba = tiny_model(super::super::config::FusionMode::BoxAttention);
        let img = test_image(96, 128);
        let texts = vec![TextLayerRecord {
            content: "price".into(),
            bbox: crate::types::NormBox::new(0.1, 0.1, 0.5, 0.3),
        }];
        let d0 = base.detect(&img, &texts).unwrap();
        let d1 = tf.detect(&img, &texts).unwrap();
        let d2 = ba.detect(&img, &texts).unwrap();
        assert_eq!(d0, d1);
        assert_eq!(d0, d2);
    }

    #[test]
    fn anchor_total_matches_closed_form() {
        let model = tiny_model(super::super::config::FusionMode::None);
        let shapes = level_shapes_for(BackbonePreset::Tiny, 192, 192);
        let anchors = model.anchors_for(&shapes);
        for (level, l) in anchors.iter().enumerate() {
            let (h, w) = shapes[level];
            assert_eq!(l.anchors.len(), 5 * h * w);
        }
    }

    #[test]
    fn training_loss_is_finite_and_decomposes() {
        use rand::SeedableRng;
        let model = tiny_model(super::super::config::FusionMode::None);
        let img = test_image(128, 128);
        let plan = ResizePlan::new(128, 128, 192, 320);
        let ex = TrainExample {
            input: image_to_input(&img, &plan),
            gts: vec![[10.0, 10.0, 60.0, 40.0], [80.0, 90.0, 150.0, 130.0]],
            texts: vec![],
        };
        let (anchors, assign) = model.assignment_for(&ex);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let lg = model.training_loss(&ex, &anchors, &assign, &mut rng).unwrap();
        assert!(lg.stats.total.is_finite());
        let sum = lg.stats.rpn_cls + lg.stats.rpn_reg + lg.stats.roi_cls + lg.stats.roi_reg;
        assert!((lg.stats.total - sum).abs() < 1e-9);
        assert!(lg.stats.rpn_reg > 0.0, "positive anchors must exist for these gts");
    }
}
