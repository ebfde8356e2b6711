//! Command implementations behind the `groupdet` binary.

use std::fs;
use std::path::Path;

use groupdet_core::coco::{export_split, LoadedDataset, TextRecordJson};
use groupdet_core::detector::{
    model_from_checkpoint, save_checkpoint, train, GroupDetector, TrainOutcome,
};
use groupdet_core::draft::{extract_screen_samples, parse_draft, serialize_draft};
use groupdet_core::slicer::{slice_sample, split_corpus, SliceSample};
use groupdet_core::synth::{corpus_to_drafts, generate_corpus_with_log};
use groupdet_core::{Detection, Error, Result, ScreenSample, TextLayerRecord};

use crate::config::RunConfig;

/// Generate a synthetic corpus and write it in the draft JSON schema.
pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    config.write_snapshot()?;
    let (samples, log) = generate_corpus_with_log(&config.synth)?;
    let drafts = corpus_to_drafts(&samples, &log);
    let root = &config.data.drafts;
    fs::create_dir_all(root.join("images"))?;
    for sample in &samples {
        sample.image.save(root.join("images").join(format!("{}.png", sample.sample_id)))?;
    }
    for draft in &drafts {
        fs::write(root.join(format!("{}.json", draft.package_id)), serialize_draft(draft))?;
    }
    println!(
        "screens={} groups={} texts={} drafts={} -> {}",
        samples.len(),
        log.total_groups(),
        log.total_texts(),
        drafts.len(),
        root.display()
    );
    Ok(())
}

fn slice_all(screens: &[ScreenSample]) -> (Vec<SliceSample>, usize) {
    let mut slices = Vec::new();
    let mut skipped = 0;
    for s in screens {
        let (sl, report) = slice_sample(s);
        skipped += report.skipped.len();
        slices.extend(sl);
    }
    (slices, skipped)
}

fn unique_packages(screens: &[ScreenSample]) -> usize {
    let mut p: Vec<&str> = screens.iter().map(|s| s.package_id.as_str()).collect();
    p.sort_unstable();
    p.dedup();
    p.len()
}

/// Ingest drafts, slice into square windows, split package-wise, write COCO.
pub fn cmd_slice(config: &RunConfig) -> Result<()> {
    config.write_snapshot()?;
    let root = &config.data.drafts;
    let mut entries: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::Schema(format!("no draft JSON files in {}", root.display())));
    }
    let mut screens = Vec::new();
    let mut warnings = 0usize;
    for path in &entries {
        let draft = parse_draft(&fs::read(path)?)?;
        let (samples, report) = extract_screen_samples(&draft, root)?;
        warnings += report.warnings.len() + report.skipped_artboards.len();
        screens.extend(samples);
    }
    let splits = split_corpus(screens, config.data.ratios, config.data.seed)?;
    let names = ["train", "val", "test"];
    let mut totals = (0usize, 0usize, 0usize, 0usize);
    let mut packages = [0usize; 3];
    for (i, split) in splits.iter().enumerate() {
        packages[i] = unique_packages(split);
        let (slices, skipped) = slice_all(split);
        let manifest = export_split(&slices, &config.data.dataset.join(names[i]))?;
        totals.0 += manifest.images.len();
        totals.1 += manifest.annotations.len();
        totals.2 += manifest.texts.values().map(|v| v.len()).sum::<usize>();
        totals.3 += skipped;
    }
    println!(
        "images={} groups={} texts={} skipped={}",
        totals.0, totals.1, totals.2, totals.3
    );
    println!(
        "packages train/val/test = {}/{}/{} (package-closed); warnings={} -> {}",
        packages[0],
        packages[1],
        packages[2],
        warnings,
        config.data.dataset.display()
    );
    Ok(())
}

/// Train on `<dataset>/train`, validate on `<dataset>/val`, write the
/// best-AP checkpoint and an ndjson metric log.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    config.write_snapshot()?;
    let train_ds = LoadedDataset::open(&config.data.dataset.join("train"))?;
    let val_ds = LoadedDataset::open(&config.data.dataset.join("val"))?;
    let mut model = GroupDetector::new(config.model.clone())?;
    let result = train(&mut model, &train_ds, &val_ds)?;

    let ckpt = config.checkpoint_path();
    save_checkpoint(&ckpt, &model.cfg, &model.params)?;
    fs::create_dir_all(&config.io.output)?;
    let log: String = result
        .log
        .iter()
        .map(|l| l.to_json_line() + "\n")
        .collect();
    fs::write(config.io.output.join("metrics.ndjson"), log)?;

    match result.outcome {
        TrainOutcome::Completed => {
            println!(
                "trained {} iterations, best val AP {:.4} -> {}",
                result.iterations,
                result.best_ap,
                ckpt.display()
            );
            Ok(())
        }
        TrainOutcome::Diverged { iteration, loss } => {
            println!(
                "diverged at iteration {iteration} (loss {loss}); last good weights -> {}",
                ckpt.display()
            );
            Err(Error::DivergenceDetected { iteration, loss })
        }
    }
}

/// Evaluate a checkpoint on one split and write the report JSON.
pub fn cmd_eval(config: &RunConfig) -> Result<()> {
    config.write_snapshot()?;
    let split = config.eval.split.as_str();
    if !["train", "val", "test"].contains(&split) {
        return Err(Error::Config(format!("unknown split {split:?}")));
    }
    let ds = LoadedDataset::open(&config.data.dataset.join(split))?;
    let model = model_from_checkpoint(&config.checkpoint_path())?;
    let report = groupdet_core::detector::evaluate_model(&model, &ds)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::create_dir_all(&config.io.output)?;
    fs::write(config.io.output.join(format!("eval_{split}.json")), &json)?;
    println!("{json}");
    Ok(())
}

fn load_texts(path: Option<&Path>) -> Result<Vec<TextLayerRecord>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let records: Vec<TextRecordJson> =
        serde_json::from_slice(&fs::read(path)?).map_err(|e| Error::Schema(e.to_string()))?;
    Ok(records
        .into_iter()
        .map(|r| TextLayerRecord { content: r.content.clone(), bbox: r.norm_box() })
        .collect())
}

/// Single-image inference; detections go to `--out` or stdout.
pub fn cmd_predict(
    config: &RunConfig,
    image_path: &Path,
    texts_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    config.write_snapshot()?;
    let image = image::open(image_path)?.to_rgb8();
    let texts = load_texts(texts_path)?;
    let model = model_from_checkpoint(&config.checkpoint_path())?;
    let detections = model.detect(&image, &texts)?;
    let json = serde_json::to_string_pretty(&detections)?;
    match out {
        Some(path) => fs::write(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Draw detection overlays for figures.
pub fn cmd_render(
    config: &RunConfig,
    image_path: &Path,
    dets_path: &Path,
    out: &Path,
) -> Result<()> {
    config.write_snapshot()?;
    let image = image::open(image_path)?.to_rgb8();
    let detections: Vec<Detection> =
        serde_json::from_slice(&fs::read(dets_path)?).map_err(|e| Error::Schema(e.to_string()))?;
    let rendered = crate::render::render_detections(&image, &detections);
    rendered.save(out)?;
    println!("rendered {} boxes -> {}", detections.len(), out.display());
    Ok(())
}
