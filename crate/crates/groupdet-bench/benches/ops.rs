use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use groupdet_core::detector::{iou, nms};
use groupdet_core::fusion::{build_box_attention, build_text_map};
use groupdet_core::nn::Graph;
use groupdet_core::slicer::compute_windows;
use groupdet_core::textenc::{HashedNgramEncoder, TextEncoder};
use groupdet_core::types::{NormBox, Rect, TextLayerRecord};

fn random_boxes(n: usize, extent: f64, rng: &mut ChaCha20Rng) -> Vec<[f64; 4]> {
    (0..n)
        .map(|_| {
            let x = rng.gen_range(0.0..extent * 0.8);
            let y = rng.gen_range(0.0..extent * 0.8);
            let w = rng.gen_range(4.0..extent * 0.2);
            let h = rng.gen_range(4.0..extent * 0.2);
            [x, y, x + w, y + h]
        })
        .collect()
}

fn random_texts(n: usize, rng: &mut ChaCha20Rng) -> Vec<TextLayerRecord> {
    (0..n)
        .map(|i| {
            let x0 = rng.gen_range(0.0..0.7);
            let y0 = rng.gen_range(0.0..0.7);
            TextLayerRecord {
                content: format!("token{i} detail"),
                bbox: NormBox::new(x0, y0, x0 + rng.gen_range(0.05..0.3), y0 + rng.gen_range(0.02..0.1)),
            }
        })
        .collect()
}

fn bench_boxes(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let boxes = random_boxes(256, 800.0, &mut rng);
    let scores: Vec<f64> = (0..boxes.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    c.bench_function("iou_pair", |b| {
        b.iter(|| black_box(iou(black_box(boxes[0]), black_box(boxes[1]))))
    });
    c.bench_function("nms_256", |b| {
        b.iter(|| black_box(nms(black_box(&boxes), black_box(&scores), 0.7)))
    });
}

fn bench_windows(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let boxes: Vec<Rect> = random_boxes(20, 700.0, &mut rng)
        .into_iter()
        .map(Rect::from_xyxy)
        .collect();
    c.bench_function("compute_windows_2000x750", |b| {
        b.iter(|| black_box(compute_windows(2000, 750, black_box(&boxes))))
    });
}

fn bench_fusion_maps(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let texts = random_texts(12, &mut rng);
    let encoder = HashedNgramEncoder::new(16);
    c.bench_function("build_text_map_16x192x192", |b| {
        b.iter(|| black_box(build_text_map(black_box(&texts), &encoder, 192, 192)))
    });
    c.bench_function("build_box_attention_48x48", |b| {
        b.iter(|| black_box(build_box_attention(black_box(&texts), 48, 48)))
    });
}

fn bench_text_encode(c: &mut Criterion) {
    let encoder = HashedNgramEncoder::new(16);
    c.bench_function("encode_short_text", |b| {
        b.iter(|| black_box(encoder.encode(black_box("schedule a viewing today"))))
    });
}

fn bench_roi_align(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let feat = ArrayD::from_shape_fn(ndarray::IxDyn(&[32, 48, 48]), |_| rng.gen_range(-1.0..1.0));
    let rois: Vec<[f64; 4]> = random_boxes(64, 46.0, &mut rng);
    c.bench_function("roi_align_64x32x7x7", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let x = g.input(feat.clone());
            black_box(g.roi_align(x, black_box(&rois), 7, 7, 2))
        })
    });
}

criterion_group!(
    benches,
    bench_boxes,
    bench_windows,
    bench_fusion_maps,
    bench_text_encode,
    bench_roi_align
);
criterion_main!(benches);
