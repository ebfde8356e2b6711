//! Anchor generation and ground-truth assignment.

use super::boxes::{encode_deltas, iou};

/// Anchors of one pyramid level, enumerated row-major over cells and then
/// over ratios: index `(y * w + x) * n_ratios + r`. This matches how the
/// proposal head's channel layout is flattened.
#[derive(Debug, Clone)]
pub struct LevelAnchors {
    pub stride: usize,
    pub shape: (usize, usize),
    pub anchors: Vec<[f64; 4]>,
}

/// Generate anchors for each level. One size per level; at every cell center
/// one anchor per ratio with `w = size/sqrt(ratio)`, `h = size*sqrt(ratio)`,
/// so `h/w = ratio` and the area stays `size^2`.
pub fn build_anchors(
    level_shapes: &[(usize, usize)],
    strides: &[usize],
    sizes: &[f64],
    ratios: &[f64],
) -> Vec<LevelAnchors> {
    assert_eq!(level_shapes.len(), strides.len());
    assert_eq!(level_shapes.len(), sizes.len());
    level_shapes
        .iter()
        .zip(strides)
        .zip(sizes)
        .map(|((&(h, w), &stride), &size)| {
            let mut anchors = Vec::with_capacity(h * w * ratios.len());
            for y in 0..h {
                let cy = (y as f64 + 0.5) * stride as f64;
                for x in 0..w {
                    let cx = (x as f64 + 0.5) * stride as f64;
                    for &ratio in ratios {
                        let aw = size / ratio.sqrt();
                        let ah = size * ratio.sqrt();
                        anchors.push([cx - aw / 2.0, cy - ah / 2.0, cx + aw / 2.0, cy + ah / 2.0]);
                    }
                }
            }
            LevelAnchors { stride, shape: (h, w), anchors }
        })
        .collect()
}

/// Assignment of anchors (or proposals) to ground truth boxes.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// 1 positive, 0 negative, -1 ignored.
    pub labels: Vec<i8>,
    /// Matched gt index for positive anchors (unspecified elsewhere).
    pub matched_gt: Vec<usize>,
    /// Regression target for positive anchors, zeros elsewhere.
    pub targets: Vec<[f64; 4]>,
}

/// Label anchors against ground truth: positive when IoU >= `pos_iou` with
/// some gt or when the anchor is a gt's best match (argmax rule); negative
/// when the max IoU falls below `neg_iou`; ignored in between.
pub fn assign_targets(
    anchors: &[[f64; 4]],
    gts: &[[f64; 4]],
    pos_iou: f64,
    neg_iou: f64,
) -> Assignment {
    let n = anchors.len();
    let mut labels = vec![0i8; n];
    let mut matched_gt = vec![0usize; n];
    let mut targets = vec![[0.0; 4]; n];
    if gts.is_empty() {
        return Assignment { labels, matched_gt, targets };
    }
    let mut best_gt_iou = vec![0.0f64; gts.len()];
    let mut max_iou = vec![0.0f64; n];
    let mut ious = vec![0.0f64; n * gts.len()];
    for (a, anchor) in anchors.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(*anchor, *gt);
            ious[a * gts.len() + g] = v;
            if v > max_iou[a] {
                max_iou[a] = v;
                matched_gt[a] = g;
            }
            if v > best_gt_iou[g] {
                best_gt_iou[g] = v;
            }
        }
    }
    for a in 0..n {
        labels[a] = if max_iou[a] >= pos_iou {
            1
        } else if max_iou[a] < neg_iou {
            0
        } else {
            -1
        };
    }
    // argmax rule: every gt keeps its best anchor(s) positive even below the
    // threshold, as long as there is any overlap
    for (g, &best) in best_gt_iou.iter().enumerate() {
        if best <= 0.0 {
            continue;
        }
        for a in 0..n {
            if (ious[a * gts.len() + g] - best).abs() < 1e-9 {
                labels[a] = 1;
                matched_gt[a] = g;
            }
        }
    }
    for a in 0..n {
        if labels[a] == 1 {
            targets[a] = encode_deltas(anchors[a], gts[matched_gt[a]]);
        }
    }
    Assignment { labels, matched_gt, targets }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_geometry_matches_closed_form() {
        let levels = build_anchors(&[(1, 1)], &[32], &[32.0], &[1.0, 4.0]);
        let a = &levels[0].anchors;
        assert_eq!(a.len(), 2);
        // ratio 1: 32x32 centered at (16,16)
        assert_eq!(a[0], [0.0, 0.0, 32.0, 32.0]);
        // ratio 4: w=16, h=64, area 1024
        let w = a[1][2] - a[1][0];
        let h = a[1][3] - a[1][1];
        assert!((w - 16.0).abs() < 1e-12);
        assert!((h - 64.0).abs() < 1e-12);
        assert!((h / w - 4.0).abs() < 1e-12);
        assert!((w * h - 1024.0).abs() < 1e-9);
    }

    #[test]
    fn anchor_count_is_cells_times_ratios() {
        let levels = build_anchors(&[(2, 2), (3, 5)], &[4, 8], &[32.0, 64.0], &[0.5, 1.0, 2.0, 4.0, 8.0]);
        assert_eq!(levels[0].anchors.len(), 20);
        assert_eq!(levels[1].anchors.len(), 75);
    }

    #[test]
    fn exact_match_is_positive_with_zero_targets() {
        let anchors = [[10.0, 10.0, 20.0, 20.0], [100.0, 100.0, 110.0, 110.0]];
        let gts = [[10.0, 10.0, 20.0, 20.0]];
        let assign = assign_targets(&anchors, &gts, 0.7, 0.3);
        assert_eq!(assign.labels[0], 1);
        assert_eq!(assign.targets[0], [0.0, 0.0, 0.0, 0.0]);
        assert_eq!(assign.labels[1], 0);
    }

    #[test]
    fn argmax_rule_rescues_low_iou_best_anchor() {
        // the single anchor overlaps the gt with IoU 0.4: below pos_iou but
        // still the gt's best anchor
        let anchors = [[0.0, 0.0, 10.0, 10.0]];
        let gts = [[0.0, 0.0, 10.0, 25.0]];
        let assign = assign_targets(&anchors, &gts, 0.7, 0.3);
        assert_eq!(assign.labels[0], 1);
    }

    #[test]
    fn iou_between_thresholds_is_ignored() {
        // two anchors on one gt: the better one takes argmax, the other has
        // IoU 0.5 in the ignore band
        let anchors = [
            [0.0, 0.0, 10.0, 10.0],
            [0.0, 0.0, 10.0, 20.0],
        ];
        let gts = [[0.0, 0.0, 10.0, 20.0]];
        let assign = assign_targets(&anchors, &gts, 0.7, 0.3);
        assert_eq!(assign.labels[1], 1);
        assert_eq!(assign.labels[0], -1); // IoU 0.5
    }

    #[test]
    fn no_gt_means_all_negative() {
        let anchors = [[0.0, 0.0, 10.0, 10.0]];
        let assign = assign_targets(&anchors, &[], 0.7, 0.3);
        assert_eq!(assign.labels, vec![0]);
    }
}
