// Scratch probe for training dynamics on a small synthetic corpus.

use groupdet_core::coco::LoadedDataset;
use groupdet_core::detector::{train, DetectorConfig, FusionMode, GroupDetector};
use groupdet_core::slicer::slice_sample;
use groupdet_core::synth::{generate_corpus, SynthSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_screens: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr0: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);

    let spec = SynthSpec {
        seed: 42,
        n_screens,
        size_range: (256, 256),
        ..Default::default()
    };
    let screens = generate_corpus(&spec).unwrap();
    let mut slices = Vec::new();
    for s in &screens {
        let (sl, _) = slice_sample(s);
        slices.extend(sl);
    }
    let ds = LoadedDataset::from_slices(&slices);
    let n_groups: usize = ds.manifest.annotations.len();
    eprintln!("slices={} groups={} texts={}", ds.images.len(), n_groups, ds.manifest.texts.len());

    let cfg = DetectorConfig {
        fusion: FusionMode::None,
        lr0,
        lr_step_epochs: 1000,
        epochs,
        seed,
        grad_clip_norm: Some(10.0),
        ..DetectorConfig::tiny()
    };
    let mut model = GroupDetector::new(cfg).unwrap();
    eprintln!("params: {} tensors, {} scalars", model.params.len(), model.params.n_scalars());

    let t0 = std::time::Instant::now();
    let result = train(&mut model, &ds, &ds).unwrap();
    for line in &result.log {
        eprintln!("{}", line.to_json_line());
    }
    eprintln!(
        "outcome={:?} best_ap={:.4} iters={} wall={:.1}s",
        result.outcome,
        result.best_ap,
        result.iterations,
        t0.elapsed().as_secs_f64()
    );
}
