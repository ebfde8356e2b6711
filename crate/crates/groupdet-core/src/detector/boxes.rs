//! Box arithmetic shared by the proposal and RoI stages.
//!
//! Boxes here are `[x_min, y_min, x_max, y_max]` in pixels.

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area_a = (a[2] - a[0]).max(0.0) * (a[3] - a[1]).max(0.0);
    let area_b = (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy non-maximum suppression. Returns indices of kept boxes, highest
/// score first; ties keep the lower input index. Boxes overlapping a kept
/// box with IoU strictly above `thresh` are suppressed.
pub fn nms(boxes: &[[f64; 4]], scores: &[f64], thresh: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len());
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut keep = Vec::new();
    let mut suppressed = vec![false; boxes.len()];
    for &i in &order {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order {
            if !suppressed[j] && j != i && iou(boxes[i], boxes[j]) > thresh {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Standard center/size regression targets of `gt` relative to `anchor`.
pub fn encode_deltas(anchor: [f64; 4], gt: [f64; 4]) -> [f64; 4] {
    let aw = anchor[2] - anchor[0];
    let ah = anchor[3] - anchor[1];
    let ax = anchor[0] + aw / 2.0;
    let ay = anchor[1] + ah / 2.0;
    let gw = gt[2] - gt[0];
    let gh = gt[3] - gt[1];
    let gx = gt[0] + gw / 2.0;
    let gy = gt[1] + gh / 2.0;
    [(gx - ax) / aw, (gy - ay) / ah, (gw / aw).ln(), (gh / ah).ln()]
}

/// Apply regression deltas to an anchor; inverse of [`encode_deltas`].
pub fn decode_deltas(anchor: [f64; 4], deltas: [f64; 4]) -> [f64; 4] {
    let aw = anchor[2] - anchor[0];
    let ah = anchor[3] - anchor[1];
    let ax = anchor[0] + aw / 2.0;
    let ay = anchor[1] + ah / 2.0;
    // cap so a wild regression cannot overflow exp
    let dw = deltas[2].min(8.0);
    let dh = deltas[3].min(8.0);
    let cx = ax + deltas[0] * aw;
    let cy = ay + deltas[1] * ah;
    let w = aw * dw.exp();
    let h = ah * dh.exp();
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

pub fn clip_xyxy(b: [f64; 4], width: f64, height: f64) -> [f64; 4] {
    let x0 = b[0].clamp(0.0, width);
    let y0 = b[1].clamp(0.0, height);
    [x0, y0, b[2].clamp(x0, width), b[3].clamp(y0, height)]
}

pub fn xyxy_to_xywh(b: [f64; 4]) -> [f64; 4] {
    [b[0], b[1], b[2] - b[0], b[3] - b[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identical_and_disjoint() {
        let a = [1.0, 2.0, 5.0, 7.0];
        assert_eq!(iou(a, a), 1.0);
        assert_eq!(iou(a, [10.0, 10.0, 12.0, 12.0]), 0.0);
    }

    #[test]
    fn iou_known_value() {
        let v = iou([0.0, 0.0, 2.0, 2.0], [1.0, 0.0, 3.0, 2.0]);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric() {
        let a = [0.0, 0.0, 3.0, 4.0];
        let b = [1.0, 1.0, 5.0, 2.5];
        assert_eq!(iou(a, b), iou(b, a));
    }

    #[test]
    fn nms_single_box_unchanged() {
        assert_eq!(nms(&[[0.0, 0.0, 1.0, 1.0]], &[0.5], 0.5), vec![0]);
    }

    #[test]
    fn nms_suppresses_duplicate() {
        let boxes = [[0.0, 0.0, 2.0, 2.0], [0.0, 0.0, 2.0, 2.0]];
        assert_eq!(nms(&boxes, &[0.9, 0.8], 0.5), vec![0]);
    }

    #[test]
    fn nms_keeps_non_overlapping() {
        // #2 overlaps #1 with IoU 0.6, #3 overlaps neither
        // IoU([0,0,10,10],[0,2.5,10,12.5]) = 75/125 = 0.6
        let boxes = [
            [0.0, 0.0, 10.0, 10.0],
            [0.0, 2.5, 10.0, 12.5],
            [50.0, 50.0, 60.0, 60.0],
        ];
        assert_eq!(nms(&boxes, &[0.9, 0.8, 0.7], 0.5), vec![0, 2]);
    }

    #[test]
    fn nms_tie_breaks_by_index() {
        let boxes = [[0.0, 0.0, 1.0, 1.0], [5.0, 5.0, 6.0, 6.0]];
        assert_eq!(nms(&boxes, &[0.5, 0.5], 0.5), vec![0, 1]);
    }

    #[test]
    fn delta_round_trip() {
        let anchor = [10.0, 20.0, 40.0, 80.0];
        let gt = [12.0, 25.0, 50.0, 70.0];
        let decoded = decode_deltas(anchor, encode_deltas(anchor, gt));
        for i in 0..4 {
            assert!((decoded[i] - gt[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_deltas_reproduce_anchor() {
        let anchor = [3.0, 4.0, 9.0, 16.0];
        let out = decode_deltas(anchor, [0.0; 4]);
        for i in 0..4 {
            assert!((out[i] - anchor[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_keeps_ordering() {
        let b = clip_xyxy([-5.0, -2.0, 150.0, 90.0], 100.0, 80.0);
        assert_eq!(b, [0.0, 0.0, 100.0, 80.0]);
        let b = clip_xyxy([120.0, 10.0, 150.0, 20.0], 100.0, 80.0);
        assert!(b[0] <= b[2] && b[1] <= b[3]);
    }
}
