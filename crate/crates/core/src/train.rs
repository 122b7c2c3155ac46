//! Optimization loop: per-sample losses, gradient accumulation over a batch,
//! Adam updates, checkpoints and loss curves.

use std::io::Write;
use std::path::{Path, PathBuf};

use panorect_tensor::container::Entry;
use panorect_tensor::optim::{Adam, AdamConfig};
use panorect_tensor::Tensor;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{seeded_rng, stream, Degradation, Sample, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::evaluate::degrade_inputs;
use crate::geometry::normalize_angles;
use crate::losses::{angle_loss, offset_loss, perceptual_loss, total_loss, LossParts, LossValues, LossWeights, PerceptualBackend};
use crate::net::{image_tensor, load_checkpoint, read_checkpoint_file, save_checkpoint, Model};

pub const OPTIMIZER_FILE: &str = "adam.bin";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Applied to the inputs of every training sample, freshly drawn each
    /// step. Evaluation-only by default.
    pub degradation: Degradation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 6,
            epochs: 1,
            max_steps: None,
            checkpoint_every: 0,
            seed: DEFAULT_SEED,
            degradation: Degradation::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// The sample's ground-truth targets as tensors.
pub struct Targets {
    pub angles_n: Tensor,
    pub upright: Tensor,
    pub lut: Tensor,
}

pub fn targets(s: &Sample) -> Result<Targets> {
    let n = normalize_angles(s.angles_gt)?;
    let g = s.lut_gt.grid;
    Ok(Targets {
        angles_n: Tensor::from_vec(vec![n.pitch, n.roll], &[1, 2])?,
        upright: image_tensor(&s.upright_gt),
        lut: Tensor::from_vec(s.lut_gt.data.clone(), &[3, g.height, g.width])?,
    })
}

/// Forward pass and the full objective for one sample.
pub fn sample_loss(
    model: &mut Model,
    s: &Sample,
    w: &LossWeights,
    backend: Option<&dyn PerceptualBackend>,
    train: bool,
) -> Result<LossParts> {
    let (erp, cube) = model.sample_inputs(s)?;
    let t = targets(s)?;
    let out = model.forward(&erp, &cube, train)?;
    let ang = angle_loss(&out.angles_n, &t.angles_n, &erp, &t.upright)?;
    let off = offset_loss(&out.lut, &t.lut, &erp, &t.upright)?;
    let perc = perceptual_loss(&out.upright, &t.upright, w, backend)?;
    total_loss(ang, off, perc, w)
}

fn check_finite(v: &LossValues, id: &str) -> Result<()> {
    if [v.angle, v.offset, v.perceptual, v.total].iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite loss on sample {id}: {v:?}")))
    }
}

/// One optimizer step on the mean loss of `batch`. Samples run one after
/// another, each backpropagating `1/B` of its loss into the shared gradient
/// slots, so batch-norm statistics are per sample. Parameters are untouched
/// if any loss is non-finite.
pub fn train_step(
    model: &mut Model,
    opt: &mut Adam,
    batch: &[&Sample],
    w: &LossWeights,
    backend: Option<&dyn PerceptualBackend>,
) -> Result<LossValues> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let params = model.parameters();
    Adam::zero_grad(&params);
    let scale = 1.0 / batch.len() as f64;
    let mut mean = LossValues { angle: 0.0, offset: 0.0, perceptual: 0.0, total: 0.0 };
    for s in batch {
        let parts = sample_loss(model, s, w, backend, true)?;
        let v = parts.values();
        check_finite(&v, &s.id)?;
        parts.total.mul_scalar(scale).backward()?;
        mean.angle += v.angle * scale;
        mean.offset += v.offset * scale;
        mean.perceptual += v.perceptual * scale;
        mean.total += v.total * scale;
    }
    for (p, name) in params.iter().zip(&model.params.names) {
        if p.grad().is_some_and(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric(format!("non-finite gradient for {name}")));
        }
    }
    opt.step(&params);
    Ok(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossValues,
}

/// Batches of indices for one epoch, shuffled on the epoch's own stream.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed, stream::BATCH, epoch as u64));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn optimizer_entries(opt: &Adam) -> Vec<Entry> {
    let mut out = vec![Entry::f64("step", &[1], vec![opt.step as f64])];
    for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        out.push(Entry::f64(format!("m:{i}"), &[m.len()], m.clone()));
        out.push(Entry::f64(format!("v:{i}"), &[v.len()], v.clone()));
    }
    out
}

fn restore_optimizer(opt: &mut Adam, entries: &[Entry], origin: &Path) -> Result<()> {
    let find = |name: &str, len: usize| -> Result<Vec<f64>> {
        entries
            .iter()
            .find(|e| e.name == name && e.data.len() == len)
            .map(|e| e.data.clone())
            .ok_or_else(|| Error::data(origin, format!("missing or mis-sized optimizer entry {name}")))
    };
    opt.step = find("step", 1)?[0] as u64;
    for i in 0..opt.m.len() {
        let n = opt.m[i].len();
        opt.m[i] = find(&format!("m:{i}"), n)?;
        opt.v[i] = find(&format!("v:{i}"), n)?;
    }
    Ok(())
}

/// Summary of a finished training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub history: Vec<StepRecord>,
    pub checkpoint: PathBuf,
}

/// Trains `model` on `samples`, writing `out/checkpoint` (and numbered
/// snapshots when `checkpoint_every` is set) plus the loss curve. With
/// `resume`, weights, optimizer moments and the step counter are restored
/// from `out/checkpoint` first. On a non-finite loss the run stops, the last
/// good checkpoint stays on disk and the error is returned.
pub fn train(
    model: &mut Model,
    samples: &[Sample],
    cfg: &TrainConfig,
    w: &LossWeights,
    out: &Path,
    resume: bool,
) -> Result<TrainRun> {
    cfg.validate()?;
    w.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ckpt = out.join("checkpoint");
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut opt = Adam::new(&model.parameters(), adam_cfg);
    let mut step = 0u64;
    if resume && ckpt.join(crate::net::CHECKPOINT_MANIFEST).exists() {
        let (loaded, m) = load_checkpoint(&ckpt, Some(&model.cfg))?;
        *model = loaded;
        let entries = read_checkpoint_file(&ckpt, &m, OPTIMIZER_FILE)?;
        restore_optimizer(&mut opt, &entries, &ckpt.join(OPTIMIZER_FILE))?;
        step = m.step;
    }
    let curve_path = out.join(LOSS_CURVE_FILE);
    let mut curve = std::fs::OpenOptions::new()
        .create(true)
        .append(resume)
        .write(true)
        .truncate(!resume)
        .open(&curve_path)
        .map_err(|e| Error::io(&curve_path, e))?;
    if step == 0 {
        writeln!(curve, "step,epoch,angle,offset,perceptual,total").map_err(|e| Error::io(&curve_path, e))?;
    }
    let save = |model: &Model, opt: &Adam, dir: &Path, step: u64| -> Result<()> {
        save_checkpoint(model, dir, step, cfg.seed, &[(OPTIMIZER_FILE, optimizer_entries(opt))]).map(|_| ())
    };
    let per_epoch = samples.len().div_ceil(cfg.batch_size) as u64;
    let mut history = Vec::new();
    let limit = cfg.max_steps.unwrap_or(u64::MAX).min(per_epoch * cfg.epochs as u64);
    while step < limit {
        let epoch = (step / per_epoch) as usize;
        let batches = epoch_batches(samples.len(), cfg.batch_size, cfg.seed, epoch);
        let b = &batches[(step % per_epoch) as usize];
        let degraded: Vec<Sample>;
        let batch: Vec<&Sample> = if cfg.degradation == Degradation::None {
            b.iter().map(|&i| &samples[i]).collect()
        } else {
            let seed = cfg.seed.wrapping_add(step);
            degraded = b.iter().map(|&i| degrade_inputs(&samples[i], cfg.degradation, seed)).collect::<Result<_>>()?;
            degraded.iter().collect()
        };
        let loss = match train_step(model, &mut opt, &batch, w, None) {
            Ok(l) => l,
            Err(e @ Error::Numeric(_)) => {
                log::error!("aborting at step {step}: {e}; last good checkpoint in {}", ckpt.display());
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        step += 1;
        let rec = StepRecord { step, epoch, loss };
        writeln!(curve, "{},{},{},{},{},{}", step, epoch, loss.angle, loss.offset, loss.perceptual, loss.total)
            .map_err(|e| Error::io(&curve_path, e))?;
        log::info!("step {step} epoch {epoch} total {:.6}", loss.total);
        history.push(rec);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            save(model, &opt, &ckpt, step)?;
            save(model, &opt, &out.join(format!("checkpoint-{step:06}")), step)?;
        }
    }
    save(model, &opt, &ckpt, step)?;
    Ok(TrainRun { history, checkpoint: ckpt })
}

/// Reads back an optimizer state saved beside a checkpoint.
pub fn load_optimizer(dir: &Path, model: &Model, lr: f64) -> Result<Adam> {
    let m = crate::net::read_checkpoint_manifest(dir)?;
    let entries = read_checkpoint_file(dir, &m, OPTIMIZER_FILE)?;
    let mut opt = Adam::new(&model.parameters(), AdamConfig { lr, ..AdamConfig::default() });
    restore_optimizer(&mut opt, &entries, &dir.join(OPTIMIZER_FILE))?;
    Ok(opt)
}
