use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{crop_side, Dataset, Modality, PadMode, StreamBuilder, View};
use crate::error::{Error, Result};
use crate::nn::{BackboneConfig, ModelParams, Network};
use crate::tensor::Tensor;

const EVAL_BATCH: usize = 16;

/// How a model sees a clip at evaluation time: a central crop and a fixed
/// number of frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub modality: Modality,
    pub crop_frac: f64,
    pub clip_length: usize,
    pub pad: PadMode,
}

pub struct EvalModel<'a> {
    pub cfg: &'a BackboneConfig,
    pub params: &'a ModelParams,
    pub input: InputSpec,
}

/// Stacks the inputs of `clips` under their views into `[B, T, H, W, C]`.
pub fn batch_inputs(builder: &StreamBuilder, items: &[(&crate::data::ClipSample, View)], modality: Modality) -> Result<Tensor> {
    let parts = items
        .par_iter()
        .map(|(clip, view)| builder.build(clip, modality, view))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&parts)
}

pub fn eval_view(clip: &crate::data::ClipSample, input: &InputSpec) -> View {
    let s = clip.frames.shape();
    View::center(s[1], s[2], crop_side(s[1], s[2], input.crop_frac)).with_length(input.clip_length, input.pad)
}

/// Eval-mode logits `[N, classes]` for every clip of `data`.
pub fn predict_logits(model: &EvalModel<'_>, data: &Dataset, builder: &StreamBuilder) -> Result<Tensor> {
    let net = Network::new(model.cfg, model.params)?;
    let mut rows = Vec::with_capacity(data.len() * model.cfg.num_classes);
    for chunk in data.clips.chunks(EVAL_BATCH) {
        let items: Vec<_> = chunk.iter().map(|c| (c, eval_view(c, &model.input))).collect();
        let x = batch_inputs(builder, &items, model.input.modality)?;
        rows.extend_from_slice(net.predict(&x)?.data());
    }
    Tensor::new([data.len(), model.cfg.num_classes], rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub top1: f64,
    pub top5: f64,
    pub per_class: Vec<f64>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

/// Position of the true class when logits are ranked in decreasing order,
/// ties broken by class index.
fn rank_of(row: &[f32], label: usize) -> usize {
    let y = row[label];
    row.iter().enumerate().filter(|&(j, &v)| v > y || (v == y && j < label)).count()
}

impl EvalReport {
    pub fn from_logits(logits: &Tensor, labels: &[usize], class_names: &[String]) -> Result<Self> {
        let c = class_names.len();
        if logits.shape() != [labels.len(), c] {
            return Err(Error::shape(format!("logits {:?} for {} clips, {c} classes", logits.shape(), labels.len())));
        }
        let mut confusion = vec![vec![0usize; c]; c];
        let (mut top1, mut top5) = (0usize, 0usize);
        for (row, &y) in logits.data().chunks(c).zip(labels) {
            let r = rank_of(row, y);
            top1 += usize::from(r == 0);
            top5 += usize::from(r < 5);
            let pred = (0..c).find(|&j| rank_of(row, j) == 0).unwrap_or(0);
            confusion[y][pred] += 1;
        }
        let n = labels.len().max(1) as f64;
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: usize = row.iter().sum();
                if total == 0 { 0.0 } else { row[i] as f64 / total as f64 }
            })
            .collect();
        Ok(Self { top1: top1 as f64 / n, top5: top5 as f64 / n, per_class, confusion, class_names: class_names.to_vec() })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let _ = writeln!(s, "top1,{}", self.top1);
        let _ = writeln!(s, "top5,{}", self.top5);
        for (name, acc) in self.class_names.iter().zip(&self.per_class) {
            let _ = writeln!(s, "acc_{name},{acc}");
        }
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "confusion_{name},{}", cells.join(" "));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.class_names.iter().map(|n| n.len()).max().unwrap_or(5).max(5);
        let mut s = format!("top-1 {:.2}%  top-5 {:.2}%\n\n", 100.0 * self.top1, 100.0 * self.top5);
        let _ = write!(s, "{:width$}  {:>7}", "class", "acc");
        for j in 0..self.class_names.len() {
            let _ = write!(s, " {j:>4}");
        }
        s.push('\n');
        for (i, name) in self.class_names.iter().enumerate() {
            let _ = write!(s, "{name:width$}  {:>6.1}%", 100.0 * self.per_class[i]);
            for v in &self.confusion[i] {
                let _ = write!(s, " {v:>4}");
            }
            s.push('\n');
        }
        s
    }
}

/// Sums per-clip logits across models, then scores the sum.
pub fn late_fuse_eval(models: &[EvalModel<'_>], data: &Dataset, builder: &StreamBuilder) -> Result<EvalReport> {
    let logits = models.iter().map(|m| predict_logits(m, data, builder)).collect::<Result<Vec<_>>>()?;
    fuse_logits(&logits, data)
}

pub fn fuse_logits(logits: &[Tensor], data: &Dataset) -> Result<EvalReport> {
    let first = logits.first().ok_or_else(|| Error::config("fusion needs at least one model"))?;
    if let Some(bad) = logits.iter().find(|l| l.shape() != first.shape()) {
        return Err(Error::config(format!("class-count mismatch in fusion: {:?} vs {:?}", bad.shape(), first.shape())));
    }
    if first.shape()[1] != data.num_classes() {
        return Err(Error::config(format!("models predict {} classes, data has {}", first.shape()[1], data.num_classes())));
    }
    let mut sum = first.clone();
    for l in &logits[1..] {
        sum.data_mut().iter_mut().zip(l.data()).for_each(|(a, &b)| *a += b);
    }
    let labels: Vec<usize> = data.clips.iter().map(|c| c.label).collect();
    EvalReport::from_logits(&sum, &labels, &data.class_names)
}
