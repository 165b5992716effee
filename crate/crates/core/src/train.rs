//! Minibatch training of codecs over random channels.
//!
//! Randomness is partitioned by tag so that any epoch can be replayed in
//! isolation: the validation split uses `[SPLIT]`, the epoch shuffle
//! `[SHUFFLE, epoch]`, each training sample `[SAMPLE, epoch, position]`
//! (channel, SNR and noise), and validation sample `i` uses `[VALID, i]`.
//! Resuming from an end-of-epoch checkpoint therefore reproduces an
//! uninterrupted run exactly.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_rayleigh_channel_with, ChannelConfig, ChannelRealization};
use crate::data::ImageSet;
use crate::error::{Error, Result};
use crate::model::{CodecModel, ImageShape, ModelSpec};
use crate::nn::adam::{clip_global_norm, Adam};
use crate::nn::Tensor;
use crate::rng::{child_rng, derive_seed, rng_from, Rng};
use crate::scheme::{ChannelDraw, LinkPath, Scheme, System};

pub const CHECKPOINT_SCHEMA: u32 = 1;

const TAG_SPLIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_SAMPLE: u64 = 3;
const TAG_VALID: u64 = 4;
const TAG_CROSSCHECK: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    /// Fractions of the total epoch budget at which the rate is multiplied by `factor`.
    pub milestones: Vec<f64>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            milestones: vec![0.5, 0.75],
            factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub power: f64,
    pub bandwidth_ratio: f64,
    pub width: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_schedule: LrSchedule,
    pub epochs: usize,
    pub snr_range_db: [f64; 2],
    pub validation_fraction: f64,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: Scheme::Serial,
            n_tx: 2,
            n_rx: 2,
            n_streams: 2,
            power: 1.0,
            bandwidth_ratio: 1.0 / 12.0,
            width: 32,
            batch_size: 32,
            initial_lr: 1e-4,
            lr_schedule: LrSchedule::default(),
            epochs: 100,
            snr_range_db: [0.0, 22.0],
            validation_fraction: 0.1,
            grad_clip: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn antennas(&self) -> ChannelConfig {
        ChannelConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_streams: self.n_streams,
            power: self.power,
            noise_variance: 1.0,
        }
    }

    pub fn validate(&self, image: ImageShape) -> Result<()> {
        self.antennas().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("SNR range [{lo}, {hi}] dB is degenerate")));
        }
        if !(self.initial_lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.initial_lr)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.lr_schedule.factor > 0.0 && self.lr_schedule.factor <= 1.0) {
            return Err(Error::Config("learning-rate decay factor must lie in (0, 1]".into()));
        }
        self.model_spec(image)?.validate()
    }

    pub fn model_spec(&self, image: ImageShape) -> Result<ModelSpec> {
        self.scheme
            .model_spec(image, &self.antennas(), self.bandwidth_ratio, self.width, self.seed)
    }

    /// Freshly initialized system for this configuration.
    pub fn build_system(&self, image: ImageShape) -> Result<System> {
        self.validate(image)?;
        System::new(self.scheme, self.antennas(), self.model_spec(image)?)
    }

    /// Step-decayed learning rate for a (zero-based) epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let progress = epoch as f64 / self.epochs.max(1) as f64;
        let drops = self.lr_schedule.milestones.iter().filter(|&&m| progress >= m).count();
        self.initial_lr * self.lr_schedule.factor.powi(drops as i32)
    }

    pub fn sample_snr_db(&self, rng: &mut Rng) -> f64 {
        let [lo, hi] = self.snr_range_db;
        rng.random_range(lo..=hi)
    }
}

/// `(1/N) Σ_i (1/n) ‖X_i − X̂_i‖²` in the 0–255 domain.
pub fn mse_loss(batch: &[Tensor], reconstructions: &[Tensor]) -> Result<f64> {
    if batch.is_empty() || batch.len() != reconstructions.len() {
        return Err(Error::Input(format!(
            "batch of {} images vs {} reconstructions",
            batch.len(),
            reconstructions.len()
        )));
    }
    let mut total = 0.0;
    for (x, y) in batch.iter().zip(reconstructions) {
        if x.shape() != y.shape() {
            return Err(Error::Input(format!("shape {:?} vs {:?}", x.shape(), y.shape())));
        }
        total += crate::scheme::image_mse(x, y);
    }
    Ok(total / batch.len() as f64)
}

/// A fresh Rayleigh realization plus a system SNR drawn uniformly from the
/// training range. The realization is generated at that SNR's `σ²`.
pub fn sample_training_csi(cfg: &TrainConfig, seed: u64) -> Result<(ChannelRealization, f64)> {
    let mut rng = rng_from(seed);
    let snr = cfg.sample_snr_db(&mut rng);
    let realization = sample_rayleigh_channel_with(&cfg.antennas().with_snr_db(snr), &mut rng)?;
    Ok((realization, snr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: u32,
    pub scheme: Scheme,
    pub antennas: ChannelConfig,
    pub model: ModelSpec,
    /// Parameter arrays keyed by layer path, in allocation order.
    pub params: Vec<NamedArray>,
    pub optimizer: Adam,
    /// Number of completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn capture(system: &System, optimizer: &Adam, epoch: usize, config: &TrainConfig, history: &[EpochRecord]) -> Self {
        let store = &system.model.params;
        Checkpoint {
            schema: CHECKPOINT_SCHEMA,
            scheme: system.scheme,
            antennas: system.antennas,
            model: system.model.spec.clone(),
            params: store
                .slots
                .iter()
                .map(|s| NamedArray {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                    values: store.values[s.range()].to_vec(),
                })
                .collect(),
            optimizer: optimizer.clone(),
            epoch,
            config: config.clone(),
            history: history.to_vec(),
        }
    }

    /// Rebuilds the system and loads every parameter array by name.
    pub fn system(&self) -> Result<System> {
        let mut model = CodecModel::new(self.model.clone())?;
        let by_name: BTreeMap<&str, &NamedArray> = self.params.iter().map(|a| (a.name.as_str(), a)).collect();
        if by_name.len() != model.params.slots.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameter arrays, architecture needs {}",
                by_name.len(),
                model.params.slots.len()
            )));
        }
        for slot in model.params.slots.clone() {
            let arr = by_name
                .get(slot.name.as_str())
                .ok_or_else(|| Error::Config(format!("checkpoint is missing parameter {}", slot.name)))?;
            if arr.shape != slot.shape || arr.values.len() != slot.len() {
                return Err(Error::Config(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    slot.name, arr.shape, slot.shape
                )));
            }
            model.params.values[slot.range()].copy_from_slice(&arr.values);
        }
        System::from_model(self.scheme, self.antennas, model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let json = serde_json::to_vec(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        match value.get("schema").and_then(|s| s.as_u64()) {
            Some(s) if s == CHECKPOINT_SCHEMA as u64 => {}
            other => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset: 0,
                    msg: format!("unsupported checkpoint schema {other:?}, expected {CHECKPOINT_SCHEMA}"),
                })
            }
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Where and what to persist while training.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub checkpoint_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest-validation-loss checkpoint (the deliverable).
    pub best: Checkpoint,
    pub last: Checkpoint,
    /// Minibatch losses in step order, for this invocation only.
    pub step_losses: Vec<f64>,
    /// Largest relative gap between noiseless losses through the equivalent
    /// and the full precoding path on the cross-check batch.
    pub crosscheck_gap: Option<f64>,
}

pub type SampleHook<'a> = dyn FnMut(&ChannelDraw) + 'a;

pub fn train(system: System, dataset: &ImageSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(cfg).run(system, dataset)
}

pub fn resume(checkpoint: &Checkpoint, dataset: &ImageSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(cfg).resume(checkpoint, dataset)
}

pub struct Trainer<'a> {
    cfg: TrainConfig,
    output: TrainOutput,
    hook: Option<Box<SampleHook<'a>>>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &TrainConfig) -> Self {
        Trainer {
            cfg: cfg.clone(),
            output: TrainOutput::default(),
            hook: None,
        }
    }

    pub fn output(mut self, output: TrainOutput) -> Self {
        self.output = output;
        self
    }

    /// Called with every training sample's channel draw before its forward pass.
    pub fn hook(mut self, hook: impl FnMut(&ChannelDraw) + 'a) -> Self {
        self.hook = Some(Box::new(hook));
        self
    }

    pub fn run(self, system: System, dataset: &ImageSet) -> Result<TrainOutcome> {
        let optimizer = Adam::new(system.model.param_count());
        self.run_from(system, optimizer, 0, Vec::new(), dataset)
    }

    pub fn resume(self, checkpoint: &Checkpoint, dataset: &ImageSet) -> Result<TrainOutcome> {
        let system = checkpoint.system()?;
        self.run_from(
            system,
            checkpoint.optimizer.clone(),
            checkpoint.epoch,
            checkpoint.history.clone(),
            dataset,
        )
    }

    fn run_from(
        mut self,
        mut system: System,
        mut optimizer: Adam,
        start_epoch: usize,
        mut history: Vec<EpochRecord>,
        dataset: &ImageSet,
    ) -> Result<TrainOutcome> {
        let cfg = self.cfg.clone();
        cfg.validate(dataset.shape)?;
        if dataset.is_empty() {
            return Err(Error::Input("training set is empty".into()));
        }
        if dataset.shape != system.model.spec.image {
            return Err(Error::Input("dataset image shape does not match the model".into()));
        }
        let (train_set, val_set) = dataset.split(cfg.validation_fraction, derive_seed(cfg.seed, &[TAG_SPLIT]));
        let started = Instant::now();

        let crosscheck_gap = if system.scheme.is_precoded() && start_epoch < cfg.epochs {
            Some(crosscheck_paths(&system, &train_set, &cfg)?)
        } else {
            None
        };

        let mut best: Option<(f64, Checkpoint)> = history
            .iter()
            .map(|r| r.val_loss)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
            .map(|v| (v, Checkpoint::capture(&system, &optimizer, start_epoch, &cfg, &history)));
        let mut step_losses = Vec::new();
        let mut grads = system.model.params.zeros_like();
        let mut log = match &self.output.log_path {
            Some(p) => {
                if let Some(d) = p.parent() {
                    std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                }
                Some(
                    std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(p)
                        .map_err(|e| Error::io(p, e))?,
                )
            }
            None => None,
        };

        for epoch in start_epoch..cfg.epochs {
            let lr = cfg.lr_at(epoch);
            let mut order: Vec<usize> = (0..train_set.len()).collect();
            order.shuffle(&mut child_rng(cfg.seed, &[TAG_SHUFFLE, epoch as u64]));
            let mut epoch_loss = 0.0;
            for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
                grads.iter_mut().for_each(|g| *g = 0.0);
                let weight = 1.0 / batch.len() as f64;
                let mut batch_loss = 0.0;
                for (j, &idx) in batch.iter().enumerate() {
                    let position = (step * cfg.batch_size + j) as u64;
                    let mut rng = child_rng(cfg.seed, &[TAG_SAMPLE, epoch as u64, position]);
                    let snr = cfg.sample_snr_db(&mut rng);
                    let draw = system.sample_draw(snr, &mut rng)?;
                    if let Some(h) = self.hook.as_mut() {
                        h(&draw);
                    }
                    let image = train_set.image(idx);
                    let trace = system.forward(&image, &draw, LinkPath::Equivalent, &mut rng)?;
                    batch_loss += trace.loss * weight;
                    system.backward(&image, &trace, weight, &mut grads);
                }
                let grad_norm = grads.iter().map(|g| g * g).sum::<f64>();
                if !batch_loss.is_finite() || !grad_norm.is_finite() {
                    let diag = Checkpoint::capture(&system, &optimizer, epoch, &cfg, &history);
                    if let Some(dir) = &self.output.checkpoint_dir {
                        diag.save(&dir.join("diverged.json"))?;
                    }
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        loss: batch_loss,
                    });
                }
                if let Some(max) = cfg.grad_clip {
                    clip_global_norm(&mut grads, max);
                }
                optimizer.update(&mut system.model.params.values, &grads, lr);
                step_losses.push(batch_loss);
                epoch_loss += batch_loss * batch.len() as f64;
            }
            let train_loss = epoch_loss / train_set.len() as f64;
            let val_loss = if val_set.is_empty() {
                train_loss
            } else {
                validation_loss(&system, &val_set, &cfg)?
            };
            let record = EpochRecord {
                epoch: epoch + 1,
                lr,
                train_loss,
                val_loss,
                wall_time: started.elapsed().as_secs_f64(),
            };
            log::info!(
                "{} epoch {}/{}: lr {:.2e} train {:.3} val {:.3}",
                system.scheme,
                record.epoch,
                cfg.epochs,
                lr,
                train_loss,
                val_loss
            );
            if let Some(f) = log.as_mut() {
                writeln!(
                    f,
                    "epoch={} lr={} train_loss={} val_loss={} wall_time={:.3}",
                    record.epoch, record.lr, record.train_loss, record.val_loss, record.wall_time
                )
                .map_err(|e| Error::io(self.output.log_path.clone().unwrap_or_default(), e))?;
            }
            history.push(record);
            let ckpt = Checkpoint::capture(&system, &optimizer, epoch + 1, &cfg, &history);
            if let Some(dir) = &self.output.checkpoint_dir {
                ckpt.save(&dir.join("last.json"))?;
            }
            if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
                if let Some(dir) = &self.output.checkpoint_dir {
                    ckpt.save(&dir.join("best.json"))?;
                }
                best = Some((val_loss, ckpt));
            }
        }

        let last = Checkpoint::capture(&system, &optimizer, cfg.epochs.max(start_epoch), &cfg, &history);
        let best = best.map(|(_, c)| c).unwrap_or_else(|| last.clone());
        Ok(TrainOutcome {
            best,
            last,
            step_losses,
            crosscheck_gap,
        })
    }
}

/// Mean per-image MSE over the validation set with fixed per-image draws.
pub fn validation_loss(system: &System, val_set: &ImageSet, cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..val_set.len() {
        let mut rng = child_rng(cfg.seed, &[TAG_VALID, i as u64]);
        let snr = cfg.sample_snr_db(&mut rng);
        let draw = system.sample_draw(snr, &mut rng)?;
        total += system.forward(&val_set.image(i), &draw, LinkPath::Equivalent, &mut rng)?.loss;
    }
    Ok(total / val_set.len() as f64)
}

/// Runs one batch noiselessly through both precoding paths and returns the
/// largest relative loss gap. Fails if the two disagree beyond 1e-6.
fn crosscheck_paths(system: &System, train_set: &ImageSet, cfg: &TrainConfig) -> Result<f64> {
    let mut rng = child_rng(cfg.seed, &[TAG_CROSSCHECK]);
    let n = cfg.batch_size.min(train_set.len());
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let idx = rng.random_range(0..train_set.len());
        let snr = cfg.sample_snr_db(&mut rng);
        let draw = system.sample_draw(snr, &mut rng)?.noiseless();
        let image = train_set.image(idx);
        let a = system.forward(&image, &draw, LinkPath::Equivalent, &mut rng)?.loss;
        let b = system.forward(&image, &draw, LinkPath::Full, &mut rng)?.loss;
        worst = worst.max((a - b).abs() / a.abs().max(1e-12));
    }
    if worst > 1e-6 {
        return Err(Error::Numerical(format!(
            "equivalent and full precoding paths disagree: relative loss gap {worst:e}"
        )));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_hand_values() {
        let x = Tensor::from_vec(1, 1, 2, vec![10.0, 20.0]);
        assert_eq!(mse_loss(&[x.clone()], &[x.clone()]).unwrap(), 0.0);
        let y = Tensor::from_vec(1, 1, 2, vec![11.0, 21.0]);
        assert_eq!(mse_loss(&[x.clone()], &[y]).unwrap(), 1.0);
        let z = Tensor::from_vec(1, 1, 2, vec![13.0, 24.0]);
        assert_eq!(mse_loss(&[x.clone()], &[z]).unwrap(), 12.5);
        let bad = Tensor::from_vec(1, 2, 1, vec![0.0, 0.0]);
        assert!(matches!(mse_loss(&[x], &[bad]), Err(Error::Input(_))));
    }

    #[test]
    fn lr_schedule_steps_down() {
        let cfg = TrainConfig {
            epochs: 8,
            initial_lr: 1.0,
            ..Default::default()
        };
        let lrs: Vec<f64> = (0..8).map(|e| cfg.lr_at(e)).collect();
        assert_eq!(lrs[..4], [1.0; 4]);
        assert!((lrs[4] - 0.1).abs() < 1e-15 && (lrs[5] - 0.1).abs() < 1e-15);
        assert!((lrs[6] - 0.01).abs() < 1e-15);
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn training_csi_draws() {
        let cfg = TrainConfig::default();
        let mut sum = 0.0;
        let n = 100_000;
        for s in 0..n {
            let mut rng = rng_from(s);
            let snr = cfg.sample_snr_db(&mut rng);
            assert!((0.0..=22.0).contains(&snr));
            sum += snr;
        }
        assert!((sum / n as f64 - 11.0).abs() < 0.2);
        let (a, sa) = sample_training_csi(&cfg, 3).unwrap();
        let (b, sb) = sample_training_csi(&cfg, 3).unwrap();
        assert_eq!((a.h, sa), (b.h, sb));
    }

    #[test]
    fn config_validation() {
        let image = ImageShape::new(3, 32, 32);
        assert!(TrainConfig::default().validate(image).is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(image), Err(Error::Config(_))));
        let bad = TrainConfig {
            snr_range_db: [5.0, 5.0],
            ..Default::default()
        };
        assert!(matches!(bad.validate(image), Err(Error::Config(_))));
        let bad = TrainConfig {
            bandwidth_ratio: 1.0 / 7.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(image), Err(Error::Config(_))));
    }
}
