//! Training loop: patch pooling, split, augmentation, Adadelta updates with
//! plateau decay, and best-checkpoint retention.

use super::data::{augment, extract_patches, AugmentationSpec, Patch};
use super::loss::dice_batch;
use super::ops::Tensor;
use super::optim::{Adadelta, PlateauSchedule};
use super::{UNet, UNetConfig};
use crate::error::{Error, Result};
use crate::image::{LabelImage, ScalarImage};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Tile stride in pixels; 0 means one patch width (no overlap).
    pub patch_step: usize,
    pub validation_fraction: f64,
    pub augmentation: AugmentationSpec,
    pub base_lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Smoothing constant added to the Dice numerator and denominator.
    pub loss_epsilon: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub keep_checkpoints: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            patch_step: 0,
            validation_fraction: 0.2,
            augmentation: AugmentationSpec::default(),
            base_lr: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
            loss_epsilon: 1.0,
            plateau_patience: 10,
            plateau_factor: 0.5,
            keep_checkpoints: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("training needs at least one epoch"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(0.0 < self.validation_fraction && self.validation_fraction < 1.0) {
            return Err(Error::config("validation fraction must lie in (0, 1)"));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::config("base learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config("rho must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) || !(self.loss_epsilon > 0.0) {
            return Err(Error::config("epsilons must be positive"));
        }
        if self.plateau_patience == 0 || !(0.0 < self.plateau_factor && self.plateau_factor <= 1.0)
        {
            return Err(Error::config("plateau schedule parameters out of range"));
        }
        if self.keep_checkpoints == 0 {
            return Err(Error::config("must retain at least one checkpoint"));
        }
        self.augmentation.validate()
    }
}

/// One row of the loss history. The multiplier column reflects the schedule
/// state after that epoch's validation loss was observed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr_multiplier: f64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub epoch: usize,
    pub val_loss: f64,
    pub params: Vec<f64>,
}

#[derive(Debug)]
pub struct TrainOutput {
    /// Network restored to the best-validation checkpoint.
    pub model: UNet,
    pub history: Vec<EpochStats>,
    /// Best checkpoints by validation loss, ascending (ties keep the earlier
    /// epoch).
    pub checkpoints: Vec<Checkpoint>,
}

fn to_tensor(patch: &Patch) -> Tensor {
    Tensor::from_vec(1, patch.size, patch.size, patch.pixels.clone())
}

/// Trains a segmentation net on (image, labels) slice pairs.
///
/// All slices are tiled into patches, pooled, shuffled, and split; only the
/// training side is augmented so validation scores unmodified data. Slice
/// pixel values are used as-is and should already be normalized to [0, 1].
pub fn train(
    examples: &[(ScalarImage, LabelImage)],
    net_cfg: &UNetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    net_cfg.validate()?;
    cfg.validate()?;
    if net_cfg.in_channels != 1 {
        return Err(Error::config("training slices are single-channel"));
    }
    let step = if cfg.patch_step == 0 { net_cfg.patch_size } else { cfg.patch_step };
    let mut pool = Vec::new();
    for (image, labels) in examples {
        if labels.max_label() as usize >= net_cfg.classes {
            return Err(Error::data(format!(
                "labels reach {} but the network has {} classes",
                labels.max_label(),
                net_cfg.classes
            )));
        }
        pool.extend(extract_patches(image, labels, net_cfg.patch_size, step)?);
    }
    if pool.len() < 2 {
        return Err(Error::config(format!(
            "{} labelled patch(es) cannot be split into train and validation sets",
            pool.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pool.shuffle(&mut rng);
    let n_val = ((cfg.validation_fraction * pool.len() as f64).round() as usize)
        .clamp(1, pool.len() - 1);
    let val_patches: Vec<Patch> = pool[..n_val].to_vec();
    let aug_seed: u64 = rng.random();
    let net_seed: u64 = rng.random();
    let train_patches = augment(&pool[n_val..], &cfg.augmentation, aug_seed)?;

    let train_imgs: Vec<Tensor> = train_patches.iter().map(to_tensor).collect();
    let train_labs: Vec<&[u8]> = train_patches.iter().map(|p| p.labels.as_slice()).collect();
    let val_imgs: Vec<Tensor> = val_patches.iter().map(to_tensor).collect();
    let val_labs: Vec<&[u8]> = val_patches.iter().map(|p| p.labels.as_slice()).collect();

    let mut net = UNet::new(net_cfg.clone(), net_seed)?;
    let mut opt = Adadelta::new(net.param_count(), cfg.rho, cfg.epsilon);
    let mut sched = PlateauSchedule::new(cfg.plateau_patience, cfg.plateau_factor);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut checkpoints: Vec<Checkpoint> = Vec::new();

    let mut order: Vec<usize> = (0..train_imgs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.base_lr * sched.multiplier();
        let mut batch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let imgs: Vec<Tensor> = chunk.iter().map(|&i| train_imgs[i].clone()).collect();
            let labs: Vec<&[u8]> = chunk.iter().map(|&i| train_labs[i]).collect();
            let (loss_value, grads) = net.batch_gradient(&imgs, &labs, cfg.loss_epsilon)?;
            opt.step(&mut net.params, &grads, lr);
            batch_losses.push(loss_value);
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;

        // Validation pools the whole held-out set into one Dice union so the
        // score does not depend on any batch partition.
        let val_probs: Vec<Tensor> =
            val_imgs.par_iter().map(|img| net.forward(img)).collect::<Result<_>>()?;
        let prob_refs: Vec<&Tensor> = val_probs.iter().collect();
        let val_loss = dice_batch(&prob_refs, &val_labs, net_cfg.classes, cfg.loss_epsilon)?;
        let lr_multiplier = sched.observe(val_loss);
        history.push(EpochStats { epoch, train_loss, val_loss, lr_multiplier });

        checkpoints.push(Checkpoint { epoch, val_loss, params: net.params.clone() });
        checkpoints.sort_by(|a, b| {
            a.val_loss.total_cmp(&b.val_loss).then(a.epoch.cmp(&b.epoch))
        });
        checkpoints.truncate(cfg.keep_checkpoints);
    }

    let best = checkpoints.first().expect("at least one epoch ran");
    let model = UNet::from_params(net_cfg.clone(), best.params.clone())?;
    Ok(TrainOutput { model, history, checkpoints })
}
