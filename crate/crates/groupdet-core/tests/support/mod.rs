//! Shared test support: an independent brute-force COCO-style evaluator used
//! as the oracle for the fast implementation, plus small data helpers.
//!
//! The oracle follows the stated matching rule (greedy in descending score,
//! highest IoU at or above the threshold wins, earliest ground truth on ties,
//! area-range ignores) with the most literal nested-loop implementation
//! possible: per-threshold re-matching, no envelope precomputation, and
//! interpolated precision computed as an explicit max over the curve.

use std::collections::BTreeMap;

use groupdet_core::coco::{CocoAnnotation, CocoCategory, CocoImage, DatasetManifest};
use groupdet_core::cocoeval::EvalReport;
use groupdet_core::types::Detection;

fn iou_naive(a: [f64; 4], b: [f64; 4]) -> f64 {
    // xywh in, corner arithmetic deliberately ordered differently from the
    // implementation under test
    let ax0 = a[0];
    let ay0 = a[1];
    let ax1 = a[2] + a[0];
    let ay1 = a[3] + a[1];
    let bx0 = b[0];
    let by0 = b[1];
    let bx1 = b[2] + b[0];
    let by1 = b[3] + b[1];
    let ix = f64::max(0.0, f64::min(ax1, bx1) - f64::max(ax0, bx0));
    let iy = f64::max(0.0, f64::min(ay1, by1) - f64::max(ay0, by0));
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

struct PooledDet {
    score: f64,
    tp: bool,
    ignored: bool,
}

fn in_range(area: f64, range: (f64, f64)) -> bool {
    area >= range.0 && area < range.1
}

/// Match one image at one threshold; detections must already be sorted by
/// descending score and capped.
fn match_one_image(
    dets: &[&Detection],
    gts: &[([f64; 4], f64)],
    t: f64,
    range: (f64, f64),
    pooled: &mut Vec<PooledDet>,
) {
    let ignored_gt: Vec<bool> = gts.iter().map(|g| !in_range(g.1, range)).collect();
    let mut taken = vec![false; gts.len()];
    for det in dets {
        // pass 1: best non-ignored candidate; pass 2: best ignored candidate
        let mut choice: Option<usize> = None;
        for pass in 0..2 {
            if choice.is_some() {
                break;
            }
            let mut best_iou = f64::NEG_INFINITY;
            for (gi, gt) in gts.iter().enumerate() {
                if taken[gi] || ignored_gt[gi] != (pass == 1) {
                    continue;
                }
                let v = iou_naive(det.bbox, gt.0);
                if v >= t && v > best_iou {
                    best_iou = v;
                    choice = Some(gi);
                }
            }
        }
        match choice {
            Some(gi) => {
                taken[gi] = true;
                pooled.push(PooledDet {
                    score: det.score,
                    tp: !ignored_gt[gi],
                    ignored: ignored_gt[gi],
                });
            }
            None => {
                let area = det.bbox[2] * det.bbox[3];
                pooled.push(PooledDet {
                    score: det.score,
                    tp: false,
                    ignored: !in_range(area, range),
                });
            }
        }
    }
}

/// Average precision for one (category, range, threshold) cell.
fn brute_ap(
    gt: &DatasetManifest,
    dets: &BTreeMap<i64, Vec<Detection>>,
    category: u32,
    range: (f64, f64),
    t: f64,
) -> f64 {
    let mut pooled: Vec<PooledDet> = Vec::new();
    let mut n_positive = 0usize;
    for image in &gt.images {
        let gts: Vec<([f64; 4], f64)> = gt
            .annotations
            .iter()
            .filter(|a| a.image_id == image.id && a.category_id == category)
            .map(|a| (a.bbox, a.area))
            .collect();
        n_positive += gts.iter().filter(|g| in_range(g.1, range)).count();
        let mut img_dets: Vec<&Detection> = dets
            .get(&image.id)
            .map(|v| v.iter().filter(|d| d.category_id == category).collect())
            .unwrap_or_default();
        img_dets.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        img_dets.truncate(100);
        match_one_image(&img_dets, &gts, t, range, &mut pooled);
    }
    if n_positive == 0 {
        return -1.0;
    }
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[b].score.partial_cmp(&pooled[a].score).unwrap().then(a.cmp(&b)));
    let mut curve: Vec<(f64, f64)> = Vec::new(); // (recall, precision)
    let (mut tp, mut fp) = (0usize, 0usize);
    for &i in &order {
        if pooled[i].ignored {
            continue;
        }
        if pooled[i].tp {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push((tp as f64 / n_positive as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut total = 0.0;
    for step in 0..=100 {
        let r = step as f64 / 100.0;
        let mut best = 0.0;
        for &(recall, precision) in &curve {
            if recall >= r && precision > best {
                best = precision;
            }
        }
        total += best;
    }
    total / 101.0
}

fn mean_defined(values: &[f64]) -> f64 {
    let defined: Vec<f64> = values.iter().copied().filter(|&v| v >= 0.0).collect();
    if defined.is_empty() {
        -1.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Full report from the brute-force path.
pub fn brute_force_report(gt: &DatasetManifest, dets: &BTreeMap<i64, Vec<Detection>>) -> EvalReport {
    let categories: Vec<u32> = gt.categories.iter().map(|c| c.id).collect();
    let thresholds: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    let ranges = [
        (0.0, f64::INFINITY),
        (0.0, 1024.0),
        (1024.0, 9216.0),
        (9216.0, f64::INFINITY),
    ];
    let cell = |range: (f64, f64), t: f64| -> Vec<f64> {
        categories.iter().map(|&c| brute_ap(gt, dets, c, range, t)).collect()
    };
    let over_all = |range: (f64, f64)| -> f64 {
        let mut values = Vec::new();
        for &t in &thresholds {
            values.extend(cell(range, t));
        }
        mean_defined(&values)
    };
    EvalReport {
        ap: over_all(ranges[0]),
        ap50: mean_defined(&cell(ranges[0], 0.50)),
        ap75: mean_defined(&cell(ranges[0], 0.75)),
        ap_s: over_all(ranges[1]),
        ap_m: over_all(ranges[2]),
        ap_l: over_all(ranges[3]),
    }
}

/// Build a manifest from per-image gt boxes (single "group" category).
/// Images mentioned only by detections still need an entry, so the image id
/// list can be given explicitly.
pub fn manifest_from_boxes(boxes: &[(i64, [f64; 4])]) -> DatasetManifest {
    let mut image_ids: Vec<i64> = boxes.iter().map(|b| b.0).collect();
    image_ids.sort_unstable();
    image_ids.dedup();
    manifest_with_images(boxes, image_ids)
}

pub fn manifest_with_images(boxes: &[(i64, [f64; 4])], image_ids: Vec<i64>) -> DatasetManifest {
    DatasetManifest {
        images: image_ids
            .into_iter()
            .map(|id| CocoImage { id, file_name: format!("{id}.png"), width: 4096, height: 4096 })
            .collect(),
        annotations: boxes
            .iter()
            .enumerate()
            .map(|(i, &(image_id, bbox))| CocoAnnotation {
                id: i as i64 + 1,
                image_id,
                category_id: 1,
                bbox,
                area: bbox[2] * bbox[3],
                iscrowd: 0,
            })
            .collect(),
        categories: vec![CocoCategory { id: 1, name: "group".into() }],
        texts: BTreeMap::new(),
    }
}
