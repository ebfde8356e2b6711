//! Seeded training loop: SGD with momentum, step-decayed learning rate,
//! per-epoch validation AP, best-AP checkpointing, divergence detection.

use std::collections::BTreeMap;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::coco::LoadedDataset;
use crate::cocoeval::{evaluate, EvalReport};
use crate::error::{Error, Result};
use crate::nn::{accumulate_grads, Arr, SgdMomentum};
use crate::types::Detection;

use super::model::{GroupDetector, TrainExample};
use super::resize::{image_to_input, ResizePlan};

#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub report: EvalReport,
}

impl EpochLog {
    /// One newline-delimited JSON record.
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"epoch\":{},\"loss\":{:.6},\"lr\":{},\"ap\":{:.6},\"ap50\":{:.6},\"ap75\":{:.6},\"ap_s\":{:.6},\"ap_m\":{:.6},\"ap_l\":{:.6}}}",
            self.epoch,
            self.loss,
            self.lr,
            self.report.ap,
            self.report.ap50,
            self.report.ap75,
            self.report.ap_s,
            self.report.ap_m,
            self.report.ap_l
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    Completed,
    /// Loss went non-finite; the model was rolled back to the last epoch
    /// boundary that was still healthy.
    Diverged { iteration: usize, loss: f64 },
}

pub struct TrainResult {
    pub outcome: TrainOutcome,
    pub log: Vec<EpochLog>,
    pub best_ap: f64,
    pub iterations: usize,
    /// Mean loss per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
}

fn mix_step(seed: u64, iteration: usize, slot: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    h = h.wrapping_mul(0x1_0000_0000_01b3) ^ iteration as u64;
    h = h.wrapping_mul(0x1_0000_0000_01b3) ^ slot as u64;
    h.wrapping_mul(0x1_0000_0000_01b3)
}

/// Turn a dataset into resized training examples, keeping image ids aligned.
pub fn prepare_examples(model: &GroupDetector, ds: &LoadedDataset) -> Vec<(i64, TrainExample)> {
    let (short, long) = model.cfg.resize;
    ds.manifest
        .images
        .iter()
        .zip(&ds.images)
        .map(|(info, image)| {
            let plan = ResizePlan::new(info.width, info.height, short, long);
            let input: Array3<f64> = image_to_input(image, &plan);
            let gts: Vec<[f64; 4]> = ds
                .manifest
                .annotations
                .iter()
                .filter(|a| a.image_id == info.id)
                .map(|a| {
                    plan.scale_box([
                        a.bbox[0],
                        a.bbox[1],
                        a.bbox[0] + a.bbox[2],
                        a.bbox[1] + a.bbox[3],
                    ])
                })
                .collect();
            let texts = ds
                .manifest
                .texts
                .get(&info.id)
                .map(|records| {
                    records
                        .iter()
                        .map(|r| crate::types::TextLayerRecord {
                            content: r.content.clone(),
                            bbox: r.norm_box(),
                        })
                        .collect()
                })
                .unwrap_or_default();
            (info.id, TrainExample { input, gts, texts })
        })
        .collect()
}

/// Run inference over a dataset and score it.
pub fn evaluate_model(model: &GroupDetector, ds: &LoadedDataset) -> Result<EvalReport> {
    let mut dets: BTreeMap<i64, Vec<Detection>> = BTreeMap::new();
    for (info, image) in ds.manifest.images.iter().zip(&ds.images) {
        let texts: Vec<crate::types::TextLayerRecord> = ds
            .manifest
            .texts
            .get(&info.id)
            .map(|records| {
                records
                    .iter()
                    .map(|r| crate::types::TextLayerRecord {
                        content: r.content.clone(),
                        bbox: r.norm_box(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        dets.insert(info.id, model.detect(image, &texts)?);
    }
    evaluate(&ds.manifest, &dets)
}

fn global_grad_norm(grads: &[Option<Arr>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Train in place. The model ends at the best-validation-AP weights; the
/// result carries the per-epoch log.
pub fn train(
    model: &mut GroupDetector,
    train_set: &LoadedDataset,
    val_set: &LoadedDataset,
) -> Result<TrainResult> {
    if train_set.manifest.images.is_empty() || val_set.manifest.images.is_empty() {
        return Err(Error::Config("train and validation sets must be non-empty".into()));
    }
    let cfg = model.cfg.clone();
    let examples = prepare_examples(model, train_set);
    let prepared: Vec<_> = examples
        .iter()
        .map(|(_, ex)| {
            let (anchors, assign) = model.assignment_for(ex);
            (ex, anchors, assign)
        })
        .collect();

    let mut optimizer = SgdMomentum::new(&model.params, cfg.momentum, cfg.weight_decay);
    let mut log = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut best_ap = f64::NEG_INFINITY;
    let mut best_snapshot = model.params.snapshot();
    let mut last_good_snapshot = model.params.snapshot();
    let mut iteration = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut epoch_rng = ChaCha20Rng::seed_from_u64(mix_step(cfg.seed, epoch, usize::MAX));
        order.shuffle(&mut epoch_rng);

        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let per_image: Vec<(Vec<Option<Arr>>, f64)> = if batch.len() == 2 {
                let run = |idx: usize, slot: usize| -> Result<(Vec<Option<Arr>>, f64)> {
                    let (ex, anchors, assign) = &prepared[batch[idx]];
                    let mut rng = ChaCha20Rng::seed_from_u64(mix_step(cfg.seed, iteration, slot));
                    let mut lg = model.training_loss(ex, anchors, assign, &mut rng)?;
                    let grads = lg.g.backward(lg.loss);
                    Ok((lg.binder.param_grads(&grads), lg.stats.total))
                };
                let (a, b) = rayon::join(|| run(0, 0), || run(1, 1));
                vec![a?, b?]
            } else {
                let mut out = Vec::with_capacity(batch.len());
                for (slot, &idx) in batch.iter().enumerate() {
                    let (ex, anchors, assign) = &prepared[idx];
                    let mut rng = ChaCha20Rng::seed_from_u64(mix_step(cfg.seed, iteration, slot));
                    let mut lg = model.training_loss(ex, anchors, assign, &mut rng)?;
                    let grads = lg.g.backward(lg.loss);
                    out.push((lg.binder.param_grads(&grads), lg.stats.total));
                }
                out
            };

            let batch_loss: f64 =
                per_image.iter().map(|(_, l)| l).sum::<f64>() / per_image.len() as f64;
            if !batch_loss.is_finite() {
                model.params.restore(&last_good_snapshot);
                return Ok(TrainResult {
                    outcome: TrainOutcome::Diverged { iteration, loss: batch_loss },
                    log,
                    best_ap: if best_ap.is_finite() { best_ap } else { -1.0 },
                    iterations: iteration,
                    epoch_losses,
                });
            }

            let scale = 1.0 / per_image.len() as f64;
            let mut grads: Vec<Option<Arr>> = vec![None; model.params.len()];
            for (g, _) in per_image {
                accumulate_grads(&mut grads, g);
            }
            for g in grads.iter_mut().flatten() {
                g.mapv_inplace(|v| v * scale);
            }
            if let Some(clip) = cfg.grad_clip_norm {
                let norm = global_grad_norm(&grads);
                if norm > clip {
                    let k = clip / norm;
                    for g in grads.iter_mut().flatten() {
                        g.mapv_inplace(|v| v * k);
                    }
                }
            }
            optimizer.step(&mut model.params, &grads, lr);
            loss_sum += batch_loss;
            steps += 1;
            iteration += 1;
        }

        let epoch_loss = loss_sum / steps.max(1) as f64;
        epoch_losses.push(epoch_loss);
        last_good_snapshot = model.params.snapshot();

        let report = evaluate_model(model, val_set)?;
        if report.ap > best_ap {
            best_ap = report.ap;
            best_snapshot = model.params.snapshot();
        }
        log.push(EpochLog { epoch, loss: epoch_loss, lr, report });
    }

    model.params.restore(&best_snapshot);
    Ok(TrainResult {
        outcome: TrainOutcome::Completed,
        log,
        best_ap,
        iterations: iteration,
        epoch_losses,
    })
}
