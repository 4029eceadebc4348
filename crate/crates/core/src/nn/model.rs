//! Gated 3D residual network: stem, spatial pool, bottleneck stages with
//! channel gating, global-average-pool classifier head.

use indexmap::IndexMap;
use rand_distr::{Distribution, StandardNormal};

use super::config::{BackboneConfig, BlockStyle, NormKind};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::tape::BatchStats;
use crate::tensor::{ConvGeometry, Element, NormMode, Padding, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; reports them for running averages.
    Train,
    /// Frozen running statistics.
    Eval,
}

/// Channel gate parameters. `weight` is stored `[C_in, C_out]`, so the gate
/// pre-activation is `mean(x) . weight + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatingParams<E: Element = f32> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

/// `y = sigmoid(mean_thw(x) . W + b) * x`, one gate value per sample and channel.
pub fn feature_gate<E: Element>(tape: &mut Tape<E>, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 5 {
        return Err(Error::shape(format!("gate input must be [B,T,H,W,C], got {shape:?}")));
    }
    let c = shape[4];
    if tape.shape(weight) != [c, c] || tape.shape(bias) != [c] {
        return Err(Error::shape(format!(
            "gate params {:?}/{:?} for {c} channels",
            tape.shape(weight),
            tape.shape(bias)
        )));
    }
    let context = tape.global_avg_pool(x)?;
    let pre = tape.matmul(context, weight)?;
    let pre = tape.add(pre, bias)?;
    let gate = tape.sigmoid(pre);
    let gate = tape.reshape(gate, &[shape[0], 1, 1, 1, c])?;
    tape.mul(x, gate)
}

/// Applies a gate held as plain tensors (no gradient to the parameters).
pub fn apply_gate<E: Element>(tape: &mut Tape<E>, x: Var, gate: &GatingParams<E>) -> Result<Var> {
    let w = tape.constant(gate.weight.clone());
    let b = tape.constant(gate.bias.clone());
    feature_gate(tape, x, w, b)
}

/// Shape description of one residual cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub temporal_kernel: usize,
    pub spatial_stride: usize,
    pub style: BlockStyle,
}

struct ConvSpec {
    name: &'static str,
    kernel: [usize; 3],
    stride: [usize; 3],
    cin: usize,
    cout: usize,
}

impl CellSpec {
    pub fn has_projection(&self) -> bool {
        self.in_channels != self.out_channels || self.spatial_stride != 1
    }

    fn mid_channels(&self) -> usize {
        match self.style {
            BlockStyle::Bottleneck => (self.out_channels / 4).max(1),
            BlockStyle::Factorized => self.out_channels,
        }
    }

    fn convs(&self) -> Vec<ConvSpec> {
        let s = self.spatial_stride;
        let mid = self.mid_channels();
        let mut convs = match self.style {
            BlockStyle::Bottleneck => vec![
                ConvSpec {
                    name: "1",
                    kernel: [self.temporal_kernel, 1, 1],
                    stride: [1, 1, 1],
                    cin: self.in_channels,
                    cout: mid,
                },
                ConvSpec { name: "2", kernel: [1, 3, 3], stride: [1, s, s], cin: mid, cout: mid },
                ConvSpec { name: "3", kernel: [1, 1, 1], stride: [1, 1, 1], cin: mid, cout: self.out_channels },
            ],
            BlockStyle::Factorized => vec![
                ConvSpec { name: "1", kernel: [1, 3, 3], stride: [1, s, s], cin: self.in_channels, cout: mid },
                ConvSpec { name: "2", kernel: [3, 1, 1], stride: [1, 1, 1], cin: mid, cout: self.out_channels },
            ],
        };
        if self.has_projection() {
            convs.push(ConvSpec {
                name: "proj",
                kernel: [1, 1, 1],
                stride: [1, s, s],
                cin: self.in_channels,
                cout: self.out_channels,
            });
        }
        convs
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 5 || input[4] != self.in_channels {
            return Err(Error::shape(format!("cell expects {} input channels, got {input:?}", self.in_channels)));
        }
        let mut shape = input.to_vec();
        for conv in self.convs().iter().filter(|c| c.name != "proj") {
            shape = ConvGeometry::new(&shape, conv.kernel, conv.stride, Padding::Same, conv.cout)?.output_shape();
        }
        Ok(shape)
    }
}

fn conv_param(prefix: &str, conv: &ConvSpec) -> String {
    if conv.name == "proj" {
        format!("{prefix}.proj.w")
    } else {
        format!("{prefix}.conv{}.w", conv.name)
    }
}

fn norm_prefix(prefix: &str, conv: &ConvSpec) -> String {
    if conv.name == "proj" {
        format!("{prefix}.proj_norm")
    } else {
        format!("{prefix}.norm{}", conv.name)
    }
}

fn cell_specs(cfg: &BackboneConfig) -> Vec<(String, CellSpec)> {
    let mut cells = Vec::new();
    let mut channels = cfg.stem.out_channels;
    for (si, stage) in cfg.stages.iter().enumerate() {
        for ci in 0..stage.num_cells {
            let spec = CellSpec {
                in_channels: channels,
                out_channels: stage.out_channels,
                temporal_kernel: stage.temporal_kernels[ci],
                spatial_stride: if ci == 0 { stage.spatial_stride } else { 1 },
                style: cfg.block_style,
            };
            cells.push((format!("{}.cell{}", BackboneConfig::stage_name(si), ci + 1), spec));
            channels = stage.out_channels;
        }
    }
    cells
}

fn gate_tensors<E: Element>(params: &mut ModelParams<E>, prefix: &str, c: usize) -> Result<()> {
    params.insert(format!("{prefix}.w"), Tensor::zeros([c, c]))?;
    params.insert(format!("{prefix}.b"), Tensor::zeros([c]))?;
    Ok(())
}

fn norm_tensors<E: Element>(params: &mut ModelParams<E>, prefix: &str, c: usize) -> Result<()> {
    params.insert(format!("{prefix}.gamma"), Tensor::full([c], E::one()))?;
    params.insert(format!("{prefix}.beta"), Tensor::zeros([c]))?;
    params.insert(format!("{prefix}.running_mean"), Tensor::zeros([c]))?;
    params.insert(format!("{prefix}.running_var"), Tensor::full([c], E::one()))?;
    Ok(())
}

fn he_normal<E: Element>(shape: &[usize], fan_in: usize, gain: f64, rng: &mut rng::Rng) -> Tensor<E> {
    let std = (gain / fan_in as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(rng);
        E::of(z * std)
    })
}

/// Allocates and initializes every tensor of `cfg`. Convolutions get
/// fan-in scaled normals, biases and gate weights zeros, norms unit scale.
pub fn build_backbone<E: Element>(cfg: &BackboneConfig, seed: u64) -> Result<ModelParams<E>> {
    cfg.validate()?;
    let mut rng = rng::stream(seed, "init");
    let mut params = ModelParams::new();
    let stem = &cfg.stem;
    let [kt, kh, kw] = stem.kernel;
    let fan_in = kt * kh * kw * cfg.in_channels;
    params.insert(
        "stem.conv.w",
        he_normal(&[kt, kh, kw, cfg.in_channels, stem.out_channels], fan_in, 2.0, &mut rng),
    )?;
    norm_tensors(&mut params, "stem.norm", stem.out_channels)?;
    let cells = cell_specs(cfg);
    for si in 0..cfg.stages.len() {
        let stage = BackboneConfig::stage_name(si);
        for (prefix, spec) in cells.iter().filter(|(p, _)| p.starts_with(&format!("{stage}."))) {
            for conv in spec.convs() {
                let [kt, kh, kw] = conv.kernel;
                let w = he_normal(&[kt, kh, kw, conv.cin, conv.cout], kt * kh * kw * conv.cin, 2.0, &mut rng);
                params.insert(conv_param(prefix, &conv), w)?;
                norm_tensors(&mut params, &norm_prefix(prefix, &conv), conv.cout)?;
            }
            if cfg.gating_enabled && cfg.gating_per_cell {
                gate_tensors(&mut params, &format!("{prefix}.gate"), spec.out_channels)?;
            }
        }
        if cfg.gating_enabled && !cfg.gating_per_cell {
            gate_tensors(&mut params, &format!("{stage}.gate"), cfg.stages[si].out_channels)?;
        }
    }
    let width = cfg.stages.last().map(|s| s.out_channels).unwrap_or(stem.out_channels);
    params.insert("head.w", he_normal(&[width, cfg.num_classes], width, 1.0, &mut rng))?;
    params.insert("head.b", Tensor::zeros([cfg.num_classes]))?;
    Ok(params)
}

/// Output shapes of the stem, pool and each stage for an input shape,
/// computed with the same geometry rules as the forward pass.
pub fn output_shapes(cfg: &BackboneConfig, input: &[usize]) -> Result<Vec<(String, Vec<usize>)>> {
    cfg.validate()?;
    if input.len() != 5 || input[4] != cfg.in_channels {
        return Err(Error::shape(format!("expected [B,T,H,W,{}] input, got {input:?}", cfg.in_channels)));
    }
    let mut rows = Vec::new();
    let mut shape = ConvGeometry::new(input, cfg.stem.kernel, cfg.stem.stride, Padding::Same, cfg.stem.out_channels)?
        .output_shape();
    rows.push(("stem".to_string(), shape.clone()));
    if let Some(pool) = &cfg.pool {
        shape = ConvGeometry::new(&shape, pool.kernel, pool.stride, Padding::Same, shape[4])?.output_shape();
        rows.push(("pool".to_string(), shape.clone()));
    }
    let cells = cell_specs(cfg);
    for si in 0..cfg.stages.len() {
        let stage = BackboneConfig::stage_name(si);
        for (_, spec) in cells.iter().filter(|(p, _)| p.starts_with(&format!("{stage}."))) {
            shape = spec.output_shape(&shape)?;
        }
        rows.push((stage, shape.clone()));
    }
    rows.push(("logits".to_string(), vec![input[0], cfg.num_classes]));
    Ok(rows)
}

/// Parameters registered on a tape, addressable by name.
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::config(format!("parameter {name} not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl FromIterator<(String, Var)> for Bound {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Self { vars: iter.into_iter().collect() }
    }
}

pub struct Forward<E> {
    pub logits: Var,
    /// Each stage's output after gating, in order (`stage2` .. `stageN`).
    pub stages: Vec<(String, Var)>,
    /// Batch statistics per norm prefix (train mode with batch norm only).
    pub batch_stats: Vec<(String, BatchStats<E>)>,
}

impl<E> Forward<E> {
    pub fn stage(&self, name: &str) -> Result<Var> {
        self.stages
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::config(format!("unknown stage {name}")))
    }
}

/// A backbone configuration paired with its parameters.
pub struct Network<'a, E: Element> {
    cfg: &'a BackboneConfig,
    params: &'a ModelParams<E>,
}

struct Pass<'t, E: Element> {
    tape: &'t mut Tape<E>,
    bound: &'t Bound,
    mode: Mode,
    stats: Vec<(String, BatchStats<E>)>,
}

impl<'a, E: Element> Network<'a, E> {
    pub fn new(cfg: &'a BackboneConfig, params: &'a ModelParams<E>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &BackboneConfig {
        self.cfg
    }

    /// Registers all trainable tensors as tape leaves.
    pub fn bind(&self, tape: &mut Tape<E>, requires_grad: bool) -> Bound {
        let vars = self
            .params
            .trainable()
            .map(|(name, t)| (name.to_string(), tape.leaf(t.clone(), requires_grad)))
            .collect();
        Bound { vars }
    }

    pub fn forward(&self, tape: &mut Tape<E>, bound: &Bound, x: Var, mode: Mode) -> Result<Forward<E>> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 5 || shape[4] != self.cfg.in_channels {
            return Err(Error::shape(format!(
                "expected [B,T,H,W,{}] input, got {shape:?}",
                self.cfg.in_channels
            )));
        }
        let input_t = shape[1];
        let mut pass = Pass { tape, bound, mode, stats: Vec::new() };
        let stem = &self.cfg.stem;
        let w = pass.bound.get("stem.conv.w")?;
        let mut h = pass.tape.conv3d(x, w, stem.stride, Padding::Same)?;
        h = self.norm(&mut pass, "stem.norm", h)?;
        h = pass.tape.relu(h);
        if let Some(pool) = &self.cfg.pool {
            h = pass.tape.maxpool_spatial(h, *pool)?;
        }
        let cells = cell_specs(self.cfg);
        let mut stages = Vec::new();
        for si in 0..self.cfg.stages.len() {
            let stage = BackboneConfig::stage_name(si);
            for (prefix, spec) in cells.iter().filter(|(p, _)| p.starts_with(&format!("{stage}."))) {
                h = self.cell(&mut pass, prefix, spec, h)?;
                if self.cfg.gating_enabled && self.cfg.gating_per_cell {
                    h = self.gate(&mut pass, &format!("{prefix}.gate"), h)?;
                }
            }
            if self.cfg.gating_enabled && !self.cfg.gating_per_cell {
                h = self.gate(&mut pass, &format!("{stage}.gate"), h)?;
            }
            if pass.tape.shape(h)[1] != input_t {
                return Err(Error::contract(format!("{stage} changed the temporal extent")));
            }
            stages.push((stage, h));
        }
        let pooled = pass.tape.global_avg_pool(h)?;
        let w = pass.bound.get("head.w")?;
        let b = pass.bound.get("head.b")?;
        let logits = pass.tape.matmul(pooled, w)?;
        let logits = pass.tape.add(logits, b)?;
        Ok(Forward { logits, stages, batch_stats: pass.stats })
    }

    fn gate(&self, pass: &mut Pass<'_, E>, prefix: &str, x: Var) -> Result<Var> {
        let w = pass.bound.get(&format!("{prefix}.w"))?;
        let b = pass.bound.get(&format!("{prefix}.b"))?;
        feature_gate(pass.tape, x, w, b)
    }

    fn norm(&self, pass: &mut Pass<'_, E>, prefix: &str, x: Var) -> Result<Var> {
        let gamma = pass.bound.get(&format!("{prefix}.gamma"))?;
        let beta = pass.bound.get(&format!("{prefix}.beta"))?;
        let c = *pass.tape.shape(x).last().unwrap_or(&1);
        match (self.cfg.norm, pass.mode) {
            (NormKind::Group(g), _) => {
                let groups = gcd(g, c);
                Ok(pass.tape.norm(x, gamma, beta, NormMode::Group { groups })?.0)
            }
            (NormKind::Batch, Mode::Train) => {
                let (y, stats) = pass.tape.norm(x, gamma, beta, NormMode::BatchTrain)?;
                if let Some(stats) = stats {
                    pass.stats.push((prefix.to_string(), stats));
                }
                Ok(y)
            }
            (NormKind::Batch, Mode::Eval) => {
                let mean = self.params.get(&format!("{prefix}.running_mean"))?.data();
                let var = self.params.get(&format!("{prefix}.running_var"))?.data();
                Ok(pass.tape.norm(x, gamma, beta, NormMode::BatchEval { mean, var })?.0)
            }
        }
    }

    fn cell(&self, pass: &mut Pass<'_, E>, prefix: &str, spec: &CellSpec, x: Var) -> Result<Var> {
        let in_c = pass.tape.shape(x)[4];
        if in_c != spec.in_channels {
            return Err(Error::shape(format!("{prefix}: expected {} channels, got {in_c}", spec.in_channels)));
        }
        let convs = spec.convs();
        let main: Vec<&ConvSpec> = convs.iter().filter(|c| c.name != "proj").collect();
        let mut h = x;
        for (i, conv) in main.iter().enumerate() {
            let w = pass.bound.get(&conv_param(prefix, conv))?;
            h = pass.tape.conv3d(h, w, conv.stride, Padding::Same)?;
            h = self.norm(pass, &norm_prefix(prefix, conv), h)?;
            if i + 1 < main.len() {
                h = pass.tape.relu(h);
            }
        }
        let shortcut = match convs.iter().find(|c| c.name == "proj") {
            Some(proj) => {
                let w = pass.bound.get(&conv_param(prefix, proj))?;
                let s = pass.tape.conv3d(x, w, proj.stride, Padding::Same)?;
                self.norm(pass, &norm_prefix(prefix, proj), s)?
            }
            None => x,
        };
        let sum = pass.tape.add(h, shortcut)?;
        Ok(pass.tape.relu(sum))
    }

    /// Evaluation-mode logits without gradient tracking.
    pub fn predict(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &bound, xv, Mode::Eval)?;
        Ok(tape.value(out.logits).clone())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Folds batch statistics into the running buffers:
/// `running = (1 - momentum) * running + momentum * batch`, with the batch
/// variance made unbiased.
pub fn update_running_stats<E: Element>(
    params: &mut ModelParams<E>,
    stats: &[(String, BatchStats<E>)],
    momentum: f64,
) -> Result<()> {
    let m = E::of(momentum);
    for (prefix, s) in stats {
        let unbias = E::of(s.count as f64 / (s.count.max(2) - 1) as f64);
        let rm = params.get_mut(&format!("{prefix}.running_mean"))?;
        for (r, &b) in rm.data_mut().iter_mut().zip(&s.mean) {
            *r = (E::one() - m) * *r + m * b;
        }
        let rv = params.get_mut(&format!("{prefix}.running_var"))?;
        for (r, &b) in rv.data_mut().iter_mut().zip(&s.var) {
            *r = (E::one() - m) * *r + m * b * unbias;
        }
    }
    Ok(())
}
