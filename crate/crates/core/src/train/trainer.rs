use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::{batch_inputs, InputSpec};
use super::loss::{classification_loss, distill_loss, DistillMode};
use super::optim::{lr_at, sgd_momentum_step, OptimConfig};
use crate::checkpoint;
use crate::data::{AugmentConfig, Dataset, StreamBuilder, View};
use crate::error::{Error, Result};
use crate::nn::{build_backbone, update_running_stats, BackboneConfig, Mode, ModelParams, Network};
use crate::rng;
use crate::tensor::Tape;

pub struct Teacher {
    pub cfg: BackboneConfig,
    pub params: ModelParams,
    pub input: InputSpec,
}

pub struct DistillConfig {
    pub teachers: Vec<Teacher>,
    pub mode: DistillMode,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub backbone: BackboneConfig,
    pub optim: OptimConfig,
    /// Training crops use `input.crop_frac`; its value overrides `augment.crop_frac`.
    pub input: InputSpec,
    pub augment: AugmentConfig,
    pub bn_momentum: f64,
    /// Per-epoch checkpoints go here when set.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_cls: f64,
    /// Weighted distillation terms.
    pub loss_mse: Vec<f64>,
    pub train_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.loss_mse.len());
        let mut s = String::from("step,lr,loss_total,loss_cls");
        for i in 0..n {
            let _ = write!(s, ",loss_mse_{}", i + 1);
        }
        s.push_str(",train_acc\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{}", r.step, r.lr, r.loss_total, r.loss_cls);
            for m in &r.loss_mse {
                let _ = write!(s, ",{m}");
            }
            let _ = writeln!(s, ",{}", r.train_acc);
        }
        s
    }

    /// Mean total loss over the first / last `k` steps.
    pub fn mean_loss(&self, first: bool, k: usize) -> f64 {
        let k = k.min(self.rows.len()).max(1);
        let rows = if first { &self.rows[..k] } else { &self.rows[self.rows.len() - k..] };
        rows.iter().map(|r| r.loss_total).sum::<f64>() / k as f64
    }
}

fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best })
}

/// Trains a fresh backbone on `data`. With `distill`, the loss adds logit
/// regression towards frozen teachers that see the same augmented clip.
pub fn train(
    spec: &TrainSpec,
    data: &Dataset,
    builder: &StreamBuilder,
    distill: Option<&DistillConfig>,
) -> Result<(ModelParams, TrainLog)> {
    spec.optim.validate()?;
    if data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if spec.backbone.num_classes != data.num_classes() {
        return Err(Error::config(format!(
            "model has {} classes, data has {}",
            spec.backbone.num_classes,
            data.num_classes()
        )));
    }
    if spec.backbone.in_channels != spec.input.modality.channels() {
        return Err(Error::config(format!(
            "{} input has {} channels, backbone expects {}",
            spec.input.modality.name(),
            spec.input.modality.channels(),
            spec.backbone.in_channels
        )));
    }
    if let Some(d) = distill {
        if d.teachers.is_empty() {
            return Err(Error::contract("distillation needs at least one teacher"));
        }
        for t in &d.teachers {
            checkpoint::check_compatible(&t.params, &t.cfg)?;
            if t.cfg.num_classes != data.num_classes() {
                return Err(Error::config("teacher class count differs from the data"));
            }
        }
    }
    if let Some(dir) = &spec.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let seed = spec.optim.seed;
    let mut params = build_backbone::<f32>(&spec.backbone, seed)?;
    let mut velocity = ModelParams::new();
    let augment = AugmentConfig { crop_frac: spec.input.crop_frac, ..spec.augment };
    let n = data.len();
    let batch = spec.optim.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let mut order: Vec<usize> = Vec::new();
    let mut log = TrainLog::default();

    for step in 0..spec.optim.total_steps {
        let (epoch, pos) = (step / steps_per_epoch, step % steps_per_epoch);
        if pos == 0 {
            if epoch > 0 {
                save_epoch(spec, &params, epoch - 1)?;
            }
            order = (0..n).collect();
            order.shuffle(&mut rng::stream(seed, &format!("augment/shuffle/{epoch}")));
        }
        let idx = &order[pos * batch..((pos + 1) * batch).min(n)];
        let items: Vec<_> = idx
            .iter()
            .map(|&i| {
                let clip = &data.clips[i];
                let s = clip.frames.shape();
                let mut r = rng::stream(seed, &format!("augment/{epoch}/{}", clip.id));
                (clip, View::sample(&augment, s[1], s[2], &mut r))
            })
            .collect();
        let labels: Vec<usize> = items.iter().map(|(c, v)| v.label(c.label, &data.mirror_labels)).collect();
        let student_items: Vec<_> =
            items.iter().map(|(c, v)| (*c, v.with_length(spec.input.clip_length, spec.input.pad))).collect();
        let x = batch_inputs(builder, &student_items, spec.input.modality)?;

        let teacher_logits = match distill {
            Some(d) => d
                .teachers
                .iter()
                .map(|t| {
                    let t_items: Vec<_> =
                        items.iter().map(|(c, v)| (*c, v.with_length(t.input.clip_length, t.input.pad))).collect();
                    let tx = batch_inputs(builder, &t_items, t.input.modality)?;
                    Network::new(&t.cfg, &t.params)?.predict(&tx)
                })
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };

        let net = Network::new(&spec.backbone, &params)?;
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, true);
        let xv = tape.constant(x);
        let fwd = net.forward(&mut tape, &bound, xv, Mode::Train)?;
        let parts = match distill {
            Some(d) => distill_loss(&mut tape, fwd.logits, &teacher_logits, &labels, d.mode, d.weight)?,
            None => classification_loss(&mut tape, fwd.logits, &labels)?,
        };
        let loss = tape.value(parts.total).data()[0];
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss became {loss} at step {step}")));
        }
        let logits = tape.value(fwd.logits).clone();
        let c = spec.backbone.num_classes;
        let correct = logits.data().chunks(c).zip(&labels).filter(|(row, &y)| argmax(row) == y).count();
        tape.backward(parts.total)?;
        let mut grads = ModelParams::new();
        for (name, v) in bound.iter() {
            let g = tape.grad(v).ok_or_else(|| Error::contract(format!("no gradient for {name}")))?;
            grads.insert(name, g)?;
        }
        let stats = fwd.batch_stats;
        drop(tape);

        let lr = lr_at(step + 1, &spec.optim)?;
        sgd_momentum_step(&mut params, &grads, &mut velocity, lr, &spec.optim)?;
        update_running_stats(&mut params, &stats, spec.bn_momentum)?;
        log.rows.push(LogRow {
            step,
            lr,
            loss_total: f64::from(loss),
            loss_cls: f64::from(parts.cls),
            loss_mse: parts.mse.iter().map(|&m| f64::from(m)).collect(),
            train_acc: correct as f64 / labels.len() as f64,
        });
    }
    save_epoch(spec, &params, (spec.optim.total_steps - 1) / steps_per_epoch)?;
    Ok((params, log))
}

fn save_epoch(spec: &TrainSpec, params: &ModelParams, epoch: usize) -> Result<()> {
    match &spec.checkpoint_dir {
        Some(dir) => checkpoint::save(dir.join(format!("epoch_{epoch:03}.perf")), params),
        None => Ok(()),
    }
}
