//! Square-slice segmentation of tall (or wide) UI screens.
//!
//! Screens are split along the long side into square windows of side
//! `min(width, height)`. Base windows advance by a half-side stride plus a
//! final window flush with the far edge; boxes that no base window contains
//! get a dedicated rescue window centered on them. Only annotations entirely
//! inside a window are recorded for that slice, so one target can appear in
//! several overlapping slices.

use image::imageops;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::types::{GroupLabel, NormBox, Rect, ScreenSample, TextLayerRecord};

/// One square crop window along the long axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Window {
    pub offset: u32,
    pub side: u32,
}

impl Window {
    /// Window rectangle in screen coordinates for a `width x height` screen.
    pub fn rect(&self, width: u32, height: u32) -> Rect {
        let side = self.side as f64;
        if height >= width {
            Rect::new(0.0, self.offset as f64, side, side)
        } else {
            Rect::new(self.offset as f64, 0.0, side, side)
        }
    }
}

/// Why a ground-truth box cannot be covered by any square window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipCause {
    /// Long-axis extent exceeds the window side.
    TooLarge,
    /// Extent fits but no integer window offset can contain the box
    /// (only possible when the extent is within one pixel of the side).
    NoAlignedWindow,
}

#[derive(Debug, Clone, Default)]
pub struct SkipReport {
    /// Indices into the input box list, with the reason.
    pub skipped: Vec<(usize, SkipCause)>,
}

fn long_axis_span(height: u32, width: u32, b: &Rect) -> (f64, f64) {
    if height >= width {
        (b.y, b.bottom())
    } else {
        (b.x, b.right())
    }
}

/// Compute square windows covering a `height x width` screen such that every
/// box whose long-axis extent fits in a square lies entirely inside at least
/// one window.
pub fn compute_windows(height: u32, width: u32, boxes: &[Rect]) -> (Vec<Window>, SkipReport) {
    assert!(height > 0 && width > 0, "screen must have positive extent");
    let side = height.min(width);
    let long = height.max(width);
    let mut report = SkipReport::default();
    if long == side {
        return (vec![Window { offset: 0, side }], report);
    }

    let stride = (side / 2).max(1);
    let mut offsets: Vec<u32> = Vec::new();
    let mut k = 0u32;
    while k * stride + side <= long {
        offsets.push(k * stride);
        k += 1;
    }
    offsets.push(long - side);

    let contains = |offset: u32, lo: f64, hi: f64| -> bool {
        offset as f64 <= lo && hi <= (offset + side) as f64
    };

    for (idx, b) in boxes.iter().enumerate() {
        let (lo, hi) = long_axis_span(height, width, b);
        let extent = hi - lo;
        if extent > side as f64 {
            report.skipped.push((idx, SkipCause::TooLarge));
            continue;
        }
        if offsets.iter().any(|&o| contains(o, lo, hi)) {
            continue;
        }
        // rescue window centered on the box; fall back to the nearest
        // integer offsets when rounding breaks containment
        let max_offset = (long - side) as f64;
        let center = (lo + hi) / 2.0;
        let candidates = [
            (center - side as f64 / 2.0).round(),
            lo.floor(),
            (hi - side as f64).ceil(),
        ];
        let mut rescued = false;
        for cand in candidates {
            let o = cand.clamp(0.0, max_offset) as u32;
            if contains(o, lo, hi) {
                offsets.push(o);
                rescued = true;
                break;
            }
        }
        if !rescued {
            report.skipped.push((idx, SkipCause::NoAlignedWindow));
        }
    }

    offsets.sort_unstable();
    offsets.dedup();
    let windows = offsets.into_iter().map(|offset| Window { offset, side }).collect();
    (windows, report)
}

/// One square slice with window-local annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    pub parent_id: String,
    pub window: Window,
    pub image: image::RgbImage,
    /// Groups entirely inside the window, in slice-local pixels.
    pub groups: Vec<GroupLabel>,
    /// Texts entirely inside the window, renormalized by the slice side.
    pub texts: Vec<TextLayerRecord>,
}

/// Split one screen into square slices. Pixels are cropped, never resized.
pub fn slice_sample(sample: &ScreenSample) -> (Vec<SliceSample>, SkipReport) {
    let group_rects: Vec<Rect> = sample.groups.iter().map(|g| g.bbox).collect();
    let (windows, report) = compute_windows(sample.height, sample.width, &group_rects);
    let (w, h) = (sample.width as f64, sample.height as f64);
    let mut slices = Vec::with_capacity(windows.len());
    for window in windows {
        let wrect = window.rect(sample.width, sample.height);
        let side = window.side as f64;
        let image = imageops::crop_imm(
            &sample.image,
            wrect.x as u32,
            wrect.y as u32,
            window.side,
            window.side,
        )
        .to_image();

        let groups = sample
            .groups
            .iter()
            .filter(|g| wrect.contains_rect(&g.bbox))
            .map(|g| GroupLabel {
                bbox: g.bbox.translate(-wrect.x, -wrect.y),
                category_id: g.category_id,
            })
            .collect();

        let texts = sample
            .texts
            .iter()
            .filter_map(|t| {
                let px = t.bbox.to_rect(w, h);
                if !wrect.contains_rect(&px) {
                    return None;
                }
                let local = px.translate(-wrect.x, -wrect.y);
                Some(TextLayerRecord {
                    content: t.content.clone(),
                    bbox: NormBox::new(
                        (local.x / side).clamp(0.0, 1.0),
                        (local.y / side).clamp(0.0, 1.0),
                        (local.right() / side).clamp(0.0, 1.0),
                        (local.bottom() / side).clamp(0.0, 1.0),
                    ),
                })
            })
            .collect();

        slices.push(SliceSample {
            parent_id: sample.sample_id.clone(),
            window,
            image,
            groups,
            texts,
        });
    }
    (slices, report)
}

/// Partition screens into train/val/test keeping every package in one split.
///
/// Package ids are sorted, shuffled with the seeded generator, then allocated
/// by largest remainder; any split left empty steals a package from the
/// largest one. Identical inputs and seed give an identical partition.
pub fn split_corpus(
    samples: Vec<ScreenSample>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<[Vec<ScreenSample>; 3]> {
    let (r0, r1, r2) = ratios;
    if !(r0 > 0.0 && r1 > 0.0 && r2 > 0.0) {
        return Err(Error::Config("split ratios must be positive".into()));
    }
    if (r0 + r1 + r2 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {}",
            r0 + r1 + r2
        )));
    }
    let mut packages: Vec<String> = samples.iter().map(|s| s.package_id.clone()).collect();
    packages.sort_unstable();
    packages.dedup();
    let n = packages.len();
    if n < 3 {
        return Err(Error::FewerPackagesThanSplits { packages: n, splits: 3 });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    packages.shuffle(&mut rng);

    let mut counts = [0usize; 3];
    let mut fracs = [(0.0f64, 0usize); 3];
    let mut assigned = 0usize;
    for (i, r) in [r0, r1, r2].into_iter().enumerate() {
        let exact = r * n as f64;
        counts[i] = exact.floor() as usize;
        fracs[i] = (exact - exact.floor(), i);
        assigned += counts[i];
    }
    fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in fracs.iter().cycle().take(n - assigned) {
        counts[i] += 1;
    }
    loop {
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        let largest = (0..3).max_by_key(|&i| counts[i]).unwrap();
        counts[largest] -= 1;
        counts[empty] += 1;
    }

    let mut assignment = std::collections::HashMap::new();
    let mut cursor = 0usize;
    for (split, &count) in counts.iter().enumerate() {
        for pkg in &packages[cursor..cursor + count] {
            assignment.insert(pkg.clone(), split);
        }
        cursor += count;
    }
    let mut out: [Vec<ScreenSample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for sample in samples {
        let split = assignment[&sample.package_id];
        out[split].push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn screen(width: u32, height: u32, groups: Vec<Rect>, texts: Vec<TextLayerRecord>) -> ScreenSample {
        ScreenSample {
            sample_id: "pkg-a".into(),
            package_id: "pkg".into(),
            width,
            height,
            image: RgbImage::from_fn(width, height, |x, y| {
                image::Rgb([(x % 251) as u8, (y % 241) as u8, ((x + y) % 253) as u8])
            }),
            texts,
            groups: groups.into_iter().map(GroupLabel::new).collect(),
        }
    }

    #[test]
    fn square_screen_yields_single_window() {
        let (windows, report) = compute_windows(750, 750, &[]);
        assert_eq!(windows, vec![Window { offset: 0, side: 750 }]);
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn tall_screen_offsets_follow_half_side_stride_plus_flush() {
        let (windows, _) = compute_windows(2000, 750, &[]);
        let offsets: Vec<u32> = windows.iter().map(|w| w.offset).collect();
        assert_eq!(offsets, vec![0, 375, 750, 1125, 1250]);
        assert!(windows.iter().all(|w| w.side == 750));
    }

    #[test]
    fn oversized_box_lands_in_skip_list() {
        let boxes = [Rect::new(0.0, 700.0, 100.0, 760.0)];
        let (windows, report) = compute_windows(2000, 750, &boxes);
        assert_eq!(report.skipped, vec![(0, SkipCause::TooLarge)]);
        let offsets: Vec<u32> = windows.iter().map(|w| w.offset).collect();
        assert_eq!(offsets, vec![0, 375, 750, 1125, 1250]);
    }

    #[test]
    fn rescue_window_covers_box_missed_by_base_grid() {
        // extent 600 <= 750 but no base offset in [150, 300]
        let boxes = [Rect::new(0.0, 300.0, 100.0, 600.0)];
        let (windows, report) = compute_windows(2000, 750, &boxes);
        assert!(report.skipped.is_empty());
        let covered = windows
            .iter()
            .any(|w| w.offset as f64 <= 300.0 && 900.0 <= (w.offset + w.side) as f64);
        assert!(covered, "windows: {windows:?}");
    }

    #[test]
    fn windows_stay_in_bounds() {
        let (windows, _) = compute_windows(2000, 750, &[Rect::new(0.0, 1200.0, 10.0, 740.0)]);
        for w in windows {
            assert!(w.offset + w.side <= 2000);
        }
    }

    #[test]
    fn square_screen_slices_to_identity() {
        let s = screen(
            300,
            300,
            vec![Rect::new(10.0, 20.0, 30.0, 40.0)],
            vec![TextLayerRecord {
                content: "t".into(),
                bbox: NormBox::new(0.1, 0.2, 0.3, 0.4),
            }],
        );
        let (slices, _) = slice_sample(&s);
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].image, s.image);
        assert_eq!(slices[0].groups[0].bbox, Rect::new(10.0, 20.0, 30.0, 40.0));
        assert_eq!(slices[0].texts[0].bbox, NormBox::new(0.1, 0.2, 0.3, 0.4));
    }

    #[test]
    fn box_in_overlap_region_is_annotated_in_both_slices() {
        let s = screen(750, 2000, vec![Rect::new(100.0, 500.0, 50.0, 10.0)], vec![]);
        let (slices, _) = slice_sample(&s);
        let hits: Vec<u32> = slices
            .iter()
            .filter(|sl| !sl.groups.is_empty())
            .map(|sl| sl.window.offset)
            .collect();
        assert_eq!(hits, vec![0, 375]);
        for sl in slices.iter().filter(|sl| !sl.groups.is_empty()) {
            let g = &sl.groups[0].bbox;
            assert_eq!(g.y + sl.window.offset as f64, 500.0);
            assert_eq!(g.x, 100.0);
        }
    }

    #[test]
    fn box_straddling_window_edge_belongs_to_containing_window_only() {
        // y in [370, 380]: inside [0, 750] fully, but crosses the 375 boundary
        let s = screen(750, 2000, vec![Rect::new(0.0, 370.0, 10.0, 10.0)], vec![]);
        let (slices, _) = slice_sample(&s);
        let hits: Vec<u32> = slices
            .iter()
            .filter(|sl| !sl.groups.is_empty())
            .map(|sl| sl.window.offset)
            .collect();
        assert_eq!(hits, vec![0]);
    }

    #[test]
    fn text_straddling_window_bottom_edge_is_dropped_from_that_slice() {
        let s = screen(
            750,
            2000,
            vec![],
            vec![TextLayerRecord {
                content: "t".into(),
                // y in [740, 760] straddles the first window's bottom edge at 750
                bbox: NormBox::new(0.1, 740.0 / 2000.0, 0.2, 760.0 / 2000.0),
            }],
        );
        let (slices, _) = slice_sample(&s);
        let first = slices.iter().find(|sl| sl.window.offset == 0).unwrap();
        assert!(first.texts.is_empty());
        let second = slices.iter().find(|sl| sl.window.offset == 375).unwrap();
        assert_eq!(second.texts.len(), 1);
    }

    #[test]
    fn slice_pixels_match_crop() {
        let s = screen(750, 2000, vec![], vec![]);
        let (slices, _) = slice_sample(&s);
        let w1 = &slices[1];
        assert_eq!(w1.window.offset, 375);
        assert_eq!(w1.image.get_pixel(3, 0), s.image.get_pixel(3, 375));
    }

    fn corpus(n_packages: usize, screens_per_pkg: usize) -> Vec<ScreenSample> {
        let mut out = Vec::new();
        for p in 0..n_packages {
            for s in 0..screens_per_pkg {
                let mut sample = screen(64, 64, vec![], vec![]);
                sample.package_id = format!("pkg{p}");
                sample.sample_id = format!("pkg{p}-s{s}");
                out.push(sample);
            }
        }
        out
    }

    #[test]
    fn split_is_deterministic_and_package_closed() {
        let ratios = (0.8, 0.1, 0.1);
        let a = split_corpus(corpus(10, 3), ratios, 7).unwrap();
        let b = split_corpus(corpus(10, 3), ratios, 7).unwrap();
        for i in 0..3 {
            let ids_a: Vec<&str> = a[i].iter().map(|s| s.sample_id.as_str()).collect();
            let ids_b: Vec<&str> = b[i].iter().map(|s| s.sample_id.as_str()).collect();
            assert_eq!(ids_a, ids_b);
        }
        let pkg_count = |v: &[ScreenSample]| {
            let mut p: Vec<&str> = v.iter().map(|s| s.package_id.as_str()).collect();
            p.sort_unstable();
            p.dedup();
            p.len()
        };
        assert_eq!(pkg_count(&a[0]), 8);
        assert_eq!(pkg_count(&a[1]), 1);
        assert_eq!(pkg_count(&a[2]), 1);
        // package-closure: no package appears in two splits
        for i in 0..3 {
            for j in (i + 1)..3 {
                for s in &a[i] {
                    assert!(a[j].iter().all(|t| t.package_id != s.package_id));
                }
            }
        }
    }

    #[test]
    fn split_rejects_too_few_packages() {
        let err = split_corpus(corpus(2, 1), (0.8, 0.1, 0.1), 0).unwrap_err();
        assert!(matches!(err, Error::FewerPackagesThanSplits { .. }));
    }

    #[test]
    fn split_is_exhaustive() {
        let samples = corpus(7, 2);
        let total = samples.len();
        let splits = split_corpus(samples, (0.6, 0.2, 0.2), 3).unwrap();
        assert_eq!(splits.iter().map(|s| s.len()).sum::<usize>(), total);
        assert!(splits.iter().all(|s| !s.is_empty()));
    }
}
