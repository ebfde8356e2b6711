//! Self-contained COCO-style detection metrics.
//!
//! Average precision over IoU thresholds 0.50:0.05:0.95 with 101-point
//! interpolated precision-recall curves, plus AP50, AP75 and the three
//! area buckets (small < 32², medium in [32², 96²), large >= 96²).
//!
//! Matching per threshold is greedy in descending score order; a detection
//! takes the not-yet-matched ground truth with the highest IoU at or above
//! the threshold, earliest ground truth winning ties. Ground truths outside
//! the active area range are "ignored": matching them neither scores a true
//! positive nor burns the detection, and unmatched detections whose own area
//! falls outside the range are also ignored. Buckets with no ground truth
//! report the sentinel -1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coco::DatasetManifest;
use crate::error::{Error, Result};
use crate::types::Detection;

pub const MAX_DETECTIONS_PER_IMAGE: usize = 100;

/// `[x, y, w, h]` box IoU.
pub fn iou_xywh(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ax1 = a[0] + a[2];
    let ay1 = a[1] + a[3];
    let bx1 = b[0] + b[2];
    let by1 = b[1] + b[3];
    let iw = (ax1.min(bx1) - a[0].max(b[0])).max(0.0);
    let ih = (ay1.min(by1) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            AreaRange::All => (0.0, f64::INFINITY),
            AreaRange::Small => (0.0, 32.0 * 32.0),
            AreaRange::Medium => (32.0 * 32.0, 96.0 * 96.0),
            AreaRange::Large => (96.0 * 96.0, f64::INFINITY),
        }
    }

    fn contains(self, area: f64) -> bool {
        let (lo, hi) = self.bounds();
        area >= lo && area < hi
    }
}

/// The six headline numbers; -1 marks a bucket with no ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "APs")]
    pub ap_s: f64,
    #[serde(rename = "APm")]
    pub ap_m: f64,
    #[serde(rename = "APl")]
    pub ap_l: f64,
}

struct MatchedDet {
    score: f64,
    /// Per threshold: matched a (non-ignored) gt.
    tp: Vec<bool>,
    /// Per threshold: excluded from the PR curve.
    ignored: Vec<bool>,
}

/// Matching outcome for one (category, area-range) pair.
struct RangeAccumulator {
    dets: Vec<MatchedDet>,
    n_positive_gt: usize,
}

fn match_image(
    gts: &[([f64; 4], f64)],
    dets: &[&Detection],
    range: AreaRange,
    thresholds: &[f64],
    out: &mut RangeAccumulator,
) {
    // ground truths outside the range are ignored; sort non-ignored first
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&g| range.contains(gts[g].1).then_some(0).unwrap_or(1));
    let ignored: Vec<bool> = gts.iter().map(|&(_, area)| !range.contains(area)).collect();
    out.n_positive_gt += ignored.iter().filter(|&&ig| !ig).count();

    let mut gt_matched = vec![vec![false; gts.len()]; thresholds.len()];
    for det in dets {
        let mut tp = Vec::with_capacity(thresholds.len());
        let mut ign = Vec::with_capacity(thresholds.len());
        for (ti, &t) in thresholds.iter().enumerate() {
            let mut best: Option<usize> = None;
            let mut best_iou = 0.0;
            for &g in &order {
                if gt_matched[ti][g] {
                    continue;
                }
                if let Some(b) = best {
                    // never trade a real match for an ignored one
                    if !ignored[b] && ignored[g] {
                        break;
                    }
                }
                let v = iou_xywh(det.bbox, gts[g].0);
                if v < t {
                    continue;
                }
                if best.is_none() || v > best_iou {
                    best_iou = v;
                    best = Some(g);
                }
            }
            match best {
                Some(g) => {
                    gt_matched[ti][g] = true;
                    tp.push(!ignored[g]);
                    ign.push(ignored[g]);
                }
                None => {
                    tp.push(false);
                    let area = det.bbox[2] * det.bbox[3];
                    ign.push(!range.contains(area));
                }
            }
        }
        out.dets.push(MatchedDet { score: det.score, tp, ignored: ign });
    }
}

/// 101-point interpolated AP from matched detections at threshold index `ti`.
fn average_precision(acc: &RangeAccumulator, ti: usize) -> f64 {
    if acc.n_positive_gt == 0 {
        return -1.0;
    }
    let mut order: Vec<usize> = (0..acc.dets.len()).collect();
    order.sort_by(|&a, &b| {
        acc.dets[b]
            .score
            .partial_cmp(&acc.dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut recalls = Vec::new();
    let mut precisions = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for &d in &order {
        if acc.dets[d].ignored[ti] {
            continue;
        }
        if acc.dets[d].tp[ti] {
            tp += 1;
        } else {
            fp += 1;
        }
        recalls.push(tp as f64 / acc.n_positive_gt as f64);
        precisions.push(tp as f64 / (tp + fp) as f64);
    }
    // precision envelope: max to the right
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        // first index with recall >= r
        let idx = recalls.partition_point(|&rec| rec < r);
        if idx < precisions.len() {
            total += precisions[idx];
        }
    }
    total / 101.0
}

fn mean_defined(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        if v >= 0.0 {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        -1.0
    } else {
        sum / n as f64
    }
}

/// Evaluate detections against a manifest.
pub fn evaluate(gts: &DatasetManifest, dets: &BTreeMap<i64, Vec<Detection>>) -> Result<EvalReport> {
    gts.validate()?;
    let image_ids: Vec<i64> = gts.images.iter().map(|i| i.id).collect();
    for id in dets.keys() {
        if !image_ids.contains(id) {
            return Err(Error::UnknownImageId(*id));
        }
    }
    let mut categories: Vec<u32> = gts.categories.iter().map(|c| c.id).collect();
    if categories.is_empty() {
        categories = gts.annotations.iter().map(|a| a.category_id).collect();
        categories.sort_unstable();
        categories.dedup();
    }
    let thresholds = iou_thresholds();
    let ranges = [AreaRange::All, AreaRange::Small, AreaRange::Medium, AreaRange::Large];

    // ap[range][category][threshold]
    let mut ap = vec![vec![[0.0f64; 10]; categories.len()]; ranges.len()];
    for (ci, &cat) in categories.iter().enumerate() {
        // per-image detections: sorted by score, capped
        let mut per_image_dets: BTreeMap<i64, Vec<&Detection>> = BTreeMap::new();
        for (&img, list) in dets {
            let mut sel: Vec<&Detection> =
                list.iter().filter(|d| d.category_id == cat).collect();
            sel.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
            sel.truncate(MAX_DETECTIONS_PER_IMAGE);
            per_image_dets.insert(img, sel);
        }
        for (ri, &range) in ranges.iter().enumerate() {
            let mut acc = RangeAccumulator { dets: Vec::new(), n_positive_gt: 0 };
            for &img in &image_ids {
                let gt_boxes: Vec<([f64; 4], f64)> = gts
                    .annotations
                    .iter()
                    .filter(|a| a.image_id == img && a.category_id == cat)
                    .map(|a| (a.bbox, a.area))
                    .collect();
                let empty = Vec::new();
                let img_dets = per_image_dets.get(&img).unwrap_or(&empty);
                match_image(&gt_boxes, img_dets, range, &thresholds, &mut acc);
            }
            for ti in 0..thresholds.len() {
                ap[ri][ci][ti] = average_precision(&acc, ti);
            }
        }
    }

    fn over_cats(ap: &[Vec<[f64; 10]>], ri: usize, ti: usize) -> f64 {
        mean_defined(ap[ri].iter().map(|per_cat| per_cat[ti]))
    }
    fn over_all(ap: &[Vec<[f64; 10]>], ri: usize) -> f64 {
        mean_defined(ap[ri].iter().flat_map(|per_cat| per_cat.iter().copied()))
    }
    Ok(EvalReport {
        ap: over_all(&ap, 0),
        ap50: over_cats(&ap, 0, 0),
        ap75: over_cats(&ap, 0, 5),
        ap_s: over_all(&ap, 1),
        ap_m: over_all(&ap, 2),
        ap_l: over_all(&ap, 3),
    })
}
