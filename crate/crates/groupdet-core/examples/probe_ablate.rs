// Scratch probe: baseline vs text_fusion on a held-out split.

use groupdet_core::coco::LoadedDataset;
use groupdet_core::detector::{train, DetectorConfig, FusionMode, GroupDetector};
use groupdet_core::slicer::{slice_sample, split_corpus};
use groupdet_core::synth::{generate_corpus, SynthSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_screens: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let lr0: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let density: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let vocab: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(24);
    let spec = SynthSpec {
        seed: 1000 + seed,
        n_screens,
        size_range: (256, 256),
        distractor_density: density,
        vocab_size: vocab,
        ..Default::default()
    };
    let screens = generate_corpus(&spec).unwrap();
    let [train_screens, val_screens, _test] =
        split_corpus(screens, (0.8, 0.1, 0.1), 97 + seed).unwrap();
    let to_ds = |screens: &[groupdet_core::ScreenSample]| {
        let mut slices = Vec::new();
        for s in screens {
            let (sl, _) = slice_sample(s);
            slices.extend(sl);
        }
        LoadedDataset::from_slices(&slices)
    };
    let train_ds = to_ds(&train_screens);
    let val_ds = to_ds(&val_screens);
    eprintln!(
        "train slices={} val slices={} groups={}/{}",
        train_ds.images.len(),
        val_ds.images.len(),
        train_ds.manifest.annotations.len(),
        val_ds.manifest.annotations.len()
    );

    let mut results = Vec::new();
    for fusion in [FusionMode::None, FusionMode::TextFusion] {
        let cfg = DetectorConfig {
            fusion,
            lr0,
            lr_step_epochs: 1000,
            epochs,
            seed,
            grad_clip_norm: Some(10.0),
            ..DetectorConfig::tiny()
        };
        let mut model = GroupDetector::new(cfg).unwrap();
        let t0 = std::time::Instant::now();
        let result = train(&mut model, &train_ds, &val_ds).unwrap();
        eprintln!("--- fusion={fusion:?}");
        for line in &result.log {
            eprintln!("{}", line.to_json_line());
        }
        eprintln!(
            "fusion={fusion:?} best_ap={:.4} iters={} wall={:.0}s",
            result.best_ap,
            result.iterations,
            t0.elapsed().as_secs_f64()
        );
        results.push((fusion, result.best_ap));
    }
    eprintln!("SUMMARY seed={seed}: {results:?}");
}
