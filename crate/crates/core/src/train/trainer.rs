use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_and_apply, AugmentSpec};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::eval::{metrics, pooled_confusion, ConfusionMatrix};
use crate::imaging::{EdgeMap, GrayImage, ProbMap};
use crate::nn::{extract_patch, NestedArch, NestedNet, Parameters, PatchArch, PatchNet, Tensor};
use crate::rng::SplitMix64;

use super::init::{init_nested, init_patch};
use super::loss::{output_loss, total_loss, LossConfig, LossKind};
use super::optim::{optimizer_step, OptimizerConfig, OptimizerState};

// Stream tags keeping shuffling, augmentation and dropout independent.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const SAMPLE_STREAM: u64 = 0x4155_474D;
const VAL_PATCH_STREAM: u64 = 0x5641_4C50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// `lambda_i` per side output; must have one entry per stage.
    pub side_weights: Vec<f64>,
    pub loss: LossKind,
    pub class_balance: bool,
    /// Epochs without a validation F1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Write measured epoch durations to the run log. Off by default so run
    /// logs are byte-reproducible.
    pub record_wall_time: bool,
    /// Patches drawn per training image and epoch (patch model only).
    pub patches_per_image: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            optimizer: OptimizerConfig::default(),
            side_weights: vec![1.0; 3],
            loss: LossKind::Bce,
            class_balance: true,
            patience: 8,
            seed: 42,
            record_wall_time: false,
            patches_per_image: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if self.patches_per_image == 0 {
            return Err(Error::Config("train.patches_per_image must be >= 1".into()));
        }
        if self.side_weights.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("train.side_weights must be finite and >= 0, got {:?}", self.side_weights)));
        }
        self.optimizer.validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { kind: self.loss, class_balance: self.class_balance, side_weights: self.side_weights.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub stopped_early: bool,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_f1,seconds\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.6},{:.4},{:.3}\n", r.epoch, r.train_loss, r.val_f1, r.seconds));
        }
        out
    }
}

/// A model the generic loop can optimise.
pub trait Trainable: Parameters + Clone + Send + Sync {
    fn zeros_like(&self) -> Self;
}

impl Trainable for NestedNet {
    fn zeros_like(&self) -> Self {
        NestedNet::zeros_like(self)
    }
}

impl Trainable for PatchNet {
    fn zeros_like(&self) -> Self {
        PatchNet::zeros_like(self)
    }
}

/// Minibatch loop shared by both models.
///
/// `sample_grad(params, item, seed)` returns one item's loss and gradient.
/// Items of a batch are evaluated in parallel and reduced in batch order, so
/// results do not depend on the thread count. The parameters with the best
/// validation F1 (first epoch on ties) are returned.
pub fn fit<P: Trainable>(
    init: P,
    n_items: usize,
    cfg: &TrainConfig,
    sample_grad: impl Fn(&P, usize, u64) -> Result<(f64, P)> + Sync,
    validate: impl Fn(&P) -> Result<f64>,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(P, RunLog)> {
    cfg.validate()?;
    if n_items == 0 {
        return Err(Error::Missing("training set is empty".into()));
    }
    let mut params = init;
    let mut state = OptimizerState::new(&params);
    let mut best = params.clone();
    let mut log = RunLog { records: Vec::new(), best_epoch: 0, best_val_f1: f64::NEG_INFINITY, stopped_early: false };
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n_items).collect();
        SplitMix64::new(SplitMix64::derive(cfg.seed ^ SHUFFLE_STREAM, epoch as u64)).shuffle(&mut order);
        let epoch_seed = SplitMix64::derive(cfg.seed ^ SAMPLE_STREAM, epoch as u64);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, P)> = batch
                .par_iter()
                .map(|&i| sample_grad(&params, i, SplitMix64::derive(epoch_seed, i as u64)))
                .collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for ((loss, g), &i) in results.iter().zip(batch) {
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("non-finite loss {loss} on item {i} in epoch {epoch}")));
                }
                loss_sum += loss;
                grads.axpy(scale, g);
            }
            optimizer_step(&mut params, &grads, &mut state, &cfg.optimizer)?;
            if !params.is_finite() {
                return Err(Error::Divergence(format!("non-finite parameters after step {} in epoch {epoch}", state.step)));
            }
        }
        let val_f1 = validate(&params)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n_items as f64,
            val_f1,
            seconds: if cfg.record_wall_time { started.elapsed().as_secs_f64() } else { 0.0 },
        };
        progress(&record);
        log.records.push(record);
        if val_f1 > log.best_val_f1 {
            log.best_val_f1 = val_f1;
            log.best_epoch = epoch;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience && epoch < cfg.epochs {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, log))
}

fn check_dims(samples: &[Sample], dims: (usize, usize), what: &str) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.image.dims() != dims || s.label.dims() != dims) {
        return Err(Error::dim(format!("{what} sample {} is {:?}, model expects {dims:?}", s.id, s.image.dims())));
    }
    Ok(())
}

/// Pooled F1 of the nested model's fused map at threshold 0.5.
pub fn nested_f1(net: &NestedNet, samples: &[Sample]) -> Result<f64> {
    let preds: Vec<EdgeMap> = samples
        .par_iter()
        .map(|s| Ok(net.predict(&Tensor::from_image(&s.image))?.threshold(0.5)))
        .collect::<Result<_>>()?;
    let truths: Vec<EdgeMap> = samples.iter().map(|s| s.label.clone()).collect();
    Ok(metrics(&pooled_confusion(&preds, &truths, 0)?)?.f1)
}

pub fn train_nested(
    train: &[Sample],
    val: &[Sample],
    arch: NestedArch,
    cfg: &TrainConfig,
    augment: &AugmentSpec,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(NestedNet, RunLog)> {
    arch.validate()?;
    augment.validate()?;
    if cfg.side_weights.len() != arch.stages() {
        return Err(Error::Config(format!(
            "train.side_weights has {} entries but the model has {} stages",
            cfg.side_weights.len(),
            arch.stages()
        )));
    }
    if val.is_empty() {
        return Err(Error::Missing("validation set is empty".into()));
    }
    let dims = (arch.height, arch.width);
    check_dims(train, dims, "training")?;
    check_dims(val, dims, "validation")?;
    let loss_cfg = cfg.loss_config();
    let net = init_nested(arch, cfg.seed)?;
    fit(
        net,
        train.len(),
        cfg,
        |p: &NestedNet, i, seed| {
            let s = &train[i];
            let (img, label) = sample_and_apply(&s.image, &s.label, augment, seed)?;
            let trace = p.forward(&Tensor::from_image(&img))?;
            let loss = total_loss(&trace, &label, &loss_cfg)?;
            Ok((loss.value, p.backward(&trace, &loss.d_sides, &loss.d_fused)?))
        },
        |p| nested_f1(p, val),
        progress,
    )
}

/// Patch centre for slot `k`: even slots aim at an edge pixel when the label
/// has one, odd slots at any pixel.
fn patch_centre(label: &EdgeMap, k: usize, rng: &mut SplitMix64) -> (usize, usize) {
    let (_, w) = label.dims();
    let n_edges = label.count();
    if k.is_multiple_of(2) && n_edges > 0 {
        let target = rng.index(n_edges);
        let idx = label.data().iter().enumerate().filter(|(_, &v)| v == 1).nth(target).map(|(i, _)| i).unwrap();
        (idx / w, idx % w)
    } else {
        let idx = rng.index(label.len());
        (idx / w, idx % w)
    }
}

/// Fixed validation patches: `per_image` centres per sample.
fn validation_patches(val: &[Sample], per_image: usize, seed: u64) -> Result<Vec<(Tensor, u8)>> {
    let mut out = Vec::with_capacity(val.len() * per_image);
    for (j, s) in val.iter().enumerate() {
        let mut rng = SplitMix64::new(SplitMix64::derive(seed ^ VAL_PATCH_STREAM, j as u64));
        for k in 0..per_image {
            let (r, c) = patch_centre(&s.label, k, &mut rng);
            out.push((extract_patch(&s.image, r, c)?, s.label.get(r, c)));
        }
    }
    Ok(out)
}

fn patch_f1(net: &PatchNet, patches: &[(Tensor, u8)]) -> Result<f64> {
    let cm = patches
        .par_iter()
        .map(|(x, y)| {
            let hit = net.predict(x)? >= 0.5;
            Ok(match (hit, *y == 1) {
                (true, true) => ConfusionMatrix { tp: 1, ..Default::default() },
                (true, false) => ConfusionMatrix { fp: 1, ..Default::default() },
                (false, true) => ConfusionMatrix { fn_: 1, ..Default::default() },
                (false, false) => ConfusionMatrix { tn: 1, ..Default::default() },
            })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(metrics(&cm)?.f1)
}

/// Trains the 28x28 patch classifier on centre-pixel labels. Each epoch draws
/// `patches_per_image` patches per training image, half of them centred on
/// edge pixels; validation uses a fixed patch set drawn the same way.
pub fn train_patch(
    train: &[Sample],
    val: &[Sample],
    arch: PatchArch,
    cfg: &TrainConfig,
    augment: &AugmentSpec,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(PatchNet, RunLog)> {
    arch.validate()?;
    augment.validate()?;
    if val.is_empty() {
        return Err(Error::Missing("validation set is empty".into()));
    }
    let per = cfg.patches_per_image;
    let val_patches = validation_patches(val, per, cfg.seed)?;
    let net = init_patch(arch, cfg.seed)?;
    fit(
        net,
        train.len() * per,
        cfg,
        |p: &PatchNet, item, seed| {
            let s = &train[item / per];
            let mut rng = SplitMix64::new(seed);
            let (img, label): (GrayImage, EdgeMap) = sample_and_apply(&s.image, &s.label, augment, rng.next_u64())?;
            let (r, c) = patch_centre(&label, item % per, &mut rng);
            let trace = p.forward(&extract_patch(&img, r, c)?, true, rng.next_u64())?;
            let target = EdgeMap::new(1, 1, vec![label.get(r, c)])?;
            let (loss, g) = output_loss(&ProbMap::new(1, 1, vec![trace.prob])?, &target, cfg.loss, false)?;
            Ok((loss, p.backward(&trace, g[0])))
        },
        |p| patch_f1(p, &val_patches),
        progress,
    )
}
