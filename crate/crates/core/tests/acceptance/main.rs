//! The ten acceptance criteria, run in order with one PASS/FAIL line each.
//! Pass criterion numbers as arguments to run a subset.

#[path = "../common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use perfnet_core::checkpoint;
use perfnet_core::data::*;
use perfnet_core::explain::{grad_cam, mass_in_boxes};
use perfnet_core::flow::{tvl1_flow, FlowParams};
use perfnet_core::nn::{BackboneConfig, ModelParams};
use perfnet_core::pose::{Background, Person, RenderSpec};
use perfnet_core::train::*;
use perfnet_core::{Tape, Tensor};
use rand::Rng;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Option<Duration>,
}

fn minutes(m: u64) -> Option<Duration> {
    Some(Duration::from_secs(60 * m))
}

// ---------------------------------------------------------------- benchmark

fn bench_data(seed: u64, dropout: f64) -> (Dataset, Dataset) {
    let spec = SyntheticSpec {
        train_clips_per_class: 40,
        val_clips_per_class: 20,
        frame_size: 36,
        clip_length: 8,
        pose_dropout_rate: dropout,
        seed,
        ..Default::default()
    };
    generate_synthetic(&spec).expect("synthetic data")
}

fn render_spec(background: Background) -> RenderSpec {
    // About 2 px limbs on the roughly 20 px figures.
    RenderSpec { background, base_thickness_frac: 0.1, ..Default::default() }
}

fn input(modality: Modality) -> InputSpec {
    InputSpec { modality, crop_frac: 0.875, clip_length: 8, pad: PadMode::Last }
}

fn train_spec(modality: Modality, seed: u64) -> TrainSpec {
    TrainSpec {
        backbone: BackboneConfig::desk(modality.channels(), 6),
        optim: OptimConfig { base_lr: 0.05, warmup_steps: 150, total_steps: 1500, batch_size: 8, seed, ..Default::default() },
        input: input(modality),
        augment: AugmentConfig::default(),
        bn_momentum: 0.1,
        checkpoint_dir: None,
    }
}

struct Model {
    spec: TrainSpec,
    params: ModelParams,
    val_logits: Tensor,
    secs: f64,
}

struct Split {
    train: Dataset,
    val: Dataset,
    builder: StreamBuilder,
    black: StreamBuilder,
}

/// Trained models keyed by `(seed, name)`, shared between criteria.
#[derive(Default)]
struct Zoo {
    splits: HashMap<(u64, bool), Split>,
    models: HashMap<(u64, String), Model>,
}

impl Zoo {
    fn split(&mut self, seed: u64, dropout: bool) -> &Split {
        self.splits.entry((seed, dropout)).or_insert_with(|| {
            let (train, val) = bench_data(seed, if dropout { 0.5 } else { 0.0 });
            Split {
                train,
                val,
                builder: StreamBuilder::new(render_spec(Background::RgbFrame), FlowParams::default()),
                black: StreamBuilder::new(render_spec(Background::Black), FlowParams::default()),
            }
        })
    }

    fn get(&mut self, seed: u64, name: &str) -> &Model {
        let key = (seed, name.to_string());
        if !self.models.contains_key(&key) {
            let model = self.train(seed, name);
            println!(
                "  trained {name:<12} seed {seed}: val top-1 {:.3} ({:.0} s)",
                self.report(seed, &[&model.val_logits]).top1,
                model.secs
            );
            self.models.insert(key.clone(), model);
        }
        &self.models[&key]
    }

    fn train(&mut self, seed: u64, name: &str) -> Model {
        let base = seed * 100;
        let (modality, opt_seed, dropout, black, distill) = match name {
            "rgb" => (Modality::Rgb, base + 1, false, false, None),
            "rgb_b" => (Modality::Rgb, base + 2, false, false, None),
            "pose" => (Modality::Pose, base + 3, false, false, None),
            "flow" => (Modality::Flow, base + 4, false, false, None),
            "student_sl" => (Modality::Rgb, base + 1, false, false, Some(DistillMode::Separate)),
            "student_ul" => (Modality::Rgb, base + 1, false, false, Some(DistillMode::Unified)),
            "pose_d50" => (Modality::Pose, base + 3, true, false, None),
            "black_d50" => (Modality::Pose, base + 3, true, true, None),
            other => panic!("unknown model {other}"),
        };
        let distill = distill.map(|mode| {
            let teachers = ["flow", "pose"]
                .iter()
                .map(|t| {
                    let m = self.get(seed, t);
                    Teacher { cfg: m.spec.backbone.clone(), params: m.params.clone(), input: m.spec.input }
                })
                .collect();
            DistillConfig { teachers, mode, weight: 1.0 }
        });
        let spec = train_spec(modality, opt_seed);
        let split = self.split(seed, dropout);
        let builder = if black { &split.black } else { &split.builder };
        let t0 = Instant::now();
        let (params, _) = train(&spec, &split.train, builder, distill.as_ref()).expect("training");
        let model = EvalModel { cfg: &spec.backbone, params: &params, input: spec.input };
        let val_logits = predict_logits(&model, &split.val, builder).expect("eval");
        let secs = t0.elapsed().as_secs_f64();
        Model { spec, params, val_logits, secs }
    }

    fn report(&mut self, seed: u64, logits: &[&Tensor]) -> EvalReport {
        let owned: Vec<Tensor> = logits.iter().map(|&l| l.clone()).collect();
        fuse_logits(&owned, &self.split(seed, false).val).expect("fusion")
    }

    fn fused_top1(&mut self, seed: u64, names: &[&str]) -> f64 {
        let logits: Vec<Tensor> = names.iter().map(|n| self.get(seed, n).val_logits.clone()).collect();
        self.report(seed, &logits.iter().collect::<Vec<_>>()).top1
    }

    fn secs(&self, names: &[&str]) -> f64 {
        self.models.iter().filter(|((_, n), _)| names.contains(&n.as_str())).map(|(_, m)| m.secs).sum()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

// ---------------------------------------------------------------- criteria

fn c1_gradients(_: &mut Zoo) -> Outcome {
    use common::grad_suite::*;
    let ops = op_errors();
    let models = model_errors();
    let worst_op = ops.iter().cloned().fold(("".to_string(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let worst_model = models.iter().map(|m| m.1).fold(0.0, f64::max);
    Outcome {
        pass: worst_op.1 < OP_TOL && worst_model < MODEL_TOL,
        detail: format!(
            "{} ops, worst {:.1e} ({}) < {OP_TOL:.0e}; full model worst {worst_model:.1e} < {MODEL_TOL:.0e}",
            ops.len(),
            worst_op.1,
            worst_op.0
        ),
        elapsed: Duration::ZERO,
        budget: minutes(2),
    }
}

fn c2_raster(_: &mut Zoo) -> Outcome {
    let bad = common::raster_oracle_mismatches(200, 21);
    Outcome { pass: bad == 0, detail: format!("{bad} mismatching pixels over 200 segments"), elapsed: Duration::ZERO, budget: minutes(1) }
}

fn c3_flow(_: &mut Zoo) -> Outcome {
    let p = FlowParams::default();
    let mut epes = Vec::new();
    let mut zeros = Vec::new();
    for seed in SEEDS {
        let a = common::texture(seed, 48, 48, 0.0, 0.0);
        let b = common::texture(seed, 48, 48, 1.0, 0.0);
        epes.push(common::interior_epe(&tvl1_flow(&a, &b, &p).unwrap(), 1.0, 0.0, 4));
        zeros.push(common::mean_magnitude(&tvl1_flow(&a, &a, &p).unwrap()));
    }
    let (epe, zero) = (epes.iter().cloned().fold(0.0, f64::max), zeros.iter().cloned().fold(0.0, f64::max));
    Outcome {
        pass: epe < 0.3 && zero < 1e-3,
        detail: format!("(1,0) translation EPE {epe:.4} px < 0.3; zero motion |w| {zero:.1e} < 1e-3"),
        elapsed: Duration::ZERO,
        budget: minutes(1),
    }
}

fn c4_losses(_: &mut Zoo) -> Outcome {
    let mut r = common::rng(44);
    let (mut worst_n1, mut worst_same, mut worst_sum) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let student = common::random(&[4, 6], &mut r).map(|v| 4.0 * v);
        let teachers = [common::random(&[4, 6], &mut r), common::random(&[4, 6], &mut r)];
        let labels: Vec<usize> = (0..4).map(|_| r.random_range(0..6)).collect();
        let weight = r.random_range(0.1..3.0);
        let run = |ts: &[Tensor<f64>], mode| {
            let mut tape = Tape::new();
            let s = tape.leaf(student.clone(), true);
            let p = distill_loss(&mut tape, s, ts, &labels, mode, weight).unwrap();
            (tape.value(p.total).item().unwrap(), p.cls, p.mse)
        };
        let sep = run(&teachers[..1], DistillMode::Separate);
        let uni = run(&teachers[..1], DistillMode::Unified);
        worst_n1 = worst_n1.max((sep.0 - uni.0).abs());
        let same = run(&[student.clone(), student.clone()], DistillMode::Separate);
        worst_same = worst_same.max((same.0 - same.1).abs());
        for mode in [DistillMode::Separate, DistillMode::Unified] {
            let (total, cls, mse) = run(&teachers, mode);
            worst_sum = worst_sum.max((total - cls - mse.iter().sum::<f64>()).abs());
        }
    }
    Outcome {
        pass: worst_n1 == 0.0 && worst_same == 0.0 && worst_sum < 1e-6,
        detail: format!("N=1 |SL-UL| {worst_n1:.1e}; teacher=student |L-Lc| {worst_same:.1e}; decomposition {worst_sum:.1e} < 1e-6"),
        elapsed: Duration::ZERO,
        budget: None,
    }
}

fn c5_complementarity(zoo: &mut Zoo) -> Outcome {
    let (mut rr, mut rp, mut rfp) = (Vec::new(), Vec::new(), Vec::new());
    for seed in SEEDS {
        rr.push(zoo.fused_top1(seed, &["rgb", "rgb_b"]));
        rp.push(zoo.fused_top1(seed, &["rgb", "pose"]));
        rfp.push(zoo.fused_top1(seed, &["rgb", "flow", "pose"]));
    }
    let gain = mean(&rp) - mean(&rr);
    Outcome {
        pass: gain >= 0.03 && mean(&rfp) >= mean(&rp),
        detail: format!(
            "RGB+Pose {:.3} ({}) vs RGB+RGB {:.3} ({}): {:+.1} pts >= 3; RGB+Flow+Pose {:.3} ({}) >= RGB+Pose",
            mean(&rp),
            fmt(&rp),
            mean(&rr),
            fmt(&rr),
            100.0 * gain,
            mean(&rfp),
            fmt(&rfp)
        ),
        elapsed: Duration::from_secs_f64(zoo.secs(&["rgb", "rgb_b", "pose", "flow"])),
        budget: minutes(30),
    }
}

fn c6_black_background(zoo: &mut Zoo) -> Outcome {
    let (mut overlay, mut black) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let o = zoo.get(seed, "pose_d50").val_logits.clone();
        let b = zoo.get(seed, "black_d50").val_logits.clone();
        let val = &zoo.split(seed, true).val;
        overlay.push(fuse_logits(&[o], val).unwrap().top1);
        black.push(fuse_logits(&[b], val).unwrap().top1);
    }
    let gap = mean(&overlay) - mean(&black);
    Outcome {
        pass: gap >= 0.15,
        detail: format!(
            "dropout 0.5: overlay {:.3} ({}) vs black {:.3} ({}): gap {:.1} pts >= 15",
            mean(&overlay),
            fmt(&overlay),
            mean(&black),
            fmt(&black),
            100.0 * gap
        ),
        elapsed: Duration::from_secs_f64(zoo.secs(&["pose_d50", "black_d50"])),
        budget: minutes(15),
    }
}

fn c7_distillation(zoo: &mut Zoo) -> Outcome {
    let (mut base, mut sl, mut ul) = (Vec::new(), Vec::new(), Vec::new());
    for seed in SEEDS {
        base.push(zoo.fused_top1(seed, &["rgb"]));
        sl.push(zoo.fused_top1(seed, &["student_sl"]));
        ul.push(zoo.fused_top1(seed, &["student_ul"]));
    }
    Outcome {
        pass: mean(&sl) >= mean(&base) && mean(&sl) >= mean(&ul) - 0.01,
        detail: format!(
            "SL student {:.3} ({}) >= RGB {:.3} ({}); UL student {:.3} ({}), SL >= UL - 1 pt",
            mean(&sl),
            fmt(&sl),
            mean(&base),
            fmt(&base),
            mean(&ul),
            fmt(&ul)
        ),
        elapsed: Duration::from_secs_f64(zoo.secs(&["rgb", "pose", "flow", "student_sl", "student_ul"])),
        budget: minutes(30),
    }
}

fn c8_fusion(zoo: &mut Zoo) -> Outcome {
    let (mut self_ok, mut scale_ok) = (true, true);
    for seed in SEEDS {
        let a = zoo.get(seed, "rgb").val_logits.clone();
        let b = zoo.get(seed, "pose").val_logits.clone();
        let single = zoo.report(seed, &[&a]);
        self_ok &= zoo.report(seed, &[&a, &a]) == single;
        let fused = zoo.report(seed, &[&a, &b]);
        for s in [1e-3f32, 0.5, 7.0, 1e3] {
            let (sa, sb) = (a.map(|v| v * s), b.map(|v| v * s));
            let scaled = zoo.report(seed, &[&sa, &sb]);
            scale_ok &= scaled.confusion == fused.confusion && scaled.top1 == fused.top1;
        }
    }
    Outcome {
        pass: self_ok && scale_ok,
        detail: format!("self-fusion identical: {self_ok}; argmax under scaling x1e-3..x1e3 unchanged: {scale_ok}"),
        elapsed: Duration::ZERO,
        budget: None,
    }
}

fn c9_determinism(_: &mut Zoo) -> Outcome {
    let spec = SyntheticSpec { train_clips_per_class: 3, val_clips_per_class: 2, frame_size: 28, clip_length: 4, seed: 9, ..Default::default() };
    let (train_d, val) = generate_synthetic(&spec).unwrap();
    let builder = StreamBuilder::new(render_spec(Background::RgbFrame), FlowParams::default());
    let mut ts = train_spec(Modality::Pose, 77);
    ts.input.clip_length = 4;
    ts.optim = OptimConfig { warmup_steps: 2, total_steps: 12, ..ts.optim };
    let bytes = |p: &ModelParams| {
        let mut v = Vec::new();
        checkpoint::write_params(&mut v, p).unwrap();
        v
    };
    let (p1, _) = train(&ts, &train_d, &builder, None).unwrap();
    let (p2, _) = train(&ts, &train_d, &builder, None).unwrap();
    let identical = bytes(&p1) == bytes(&p2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.perf");
    checkpoint::save(&path, &p1).unwrap();
    let loaded = checkpoint::load_for(&path, &ts.backbone).unwrap();
    let round_trip = loaded == p1 && std::fs::read(&path).unwrap() == bytes(&loaded);
    let report = |p: &ModelParams| late_fuse_eval(&[EvalModel { cfg: &ts.backbone, params: p, input: ts.input }], &val, &builder).unwrap();
    let same_eval = report(&p1) == report(&loaded);
    Outcome {
        pass: identical && round_trip && same_eval,
        detail: format!("same-seed checkpoints byte-identical: {identical}; round trip bit-exact: {round_trip}; eval after reload identical: {same_eval}"),
        elapsed: Duration::ZERO,
        budget: None,
    }
}

/// Box around the acting keypoints visible in a frame, widened by one pixel
/// for the drawn line.
fn acting_box(persons: &[Person], keypoints: &[usize]) -> Option<[f32; 4]> {
    let p = persons.first()?;
    let pts: Vec<_> = keypoints.iter().map(|&k| p.keypoints[k]).filter(|k| k.confidence > 0.0).collect();
    if pts.is_empty() {
        return None;
    }
    let b = Person::keypoint_bbox(&pts);
    Some([b[0] - 1.0, b[1] - 1.0, b[2] + 1.0, b[3] + 1.0])
}

fn c10_grad_cam(zoo: &mut Zoo) -> Outcome {
    let t0 = Instant::now();
    let (mut hits, mut total) = (0usize, 0usize);
    for seed in SEEDS {
        let model = zoo.get(seed, "pose");
        let (cfg, params, logits, inp) = (model.spec.backbone.clone(), model.params.clone(), model.val_logits.clone(), model.spec.input);
        let split = zoo.split(seed, false);
        for (i, clip) in split.val.clips.iter().enumerate() {
            let Some(acting) = acting_keypoints(clip.label) else { continue };
            let row = &logits.data()[i * 6..(i + 1) * 6];
            let pred = (0..6).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            if pred != clip.label {
                continue;
            }
            let view = eval_view(clip, &inp);
            let x = split.builder.build(clip, Modality::Pose, &view).unwrap();
            let cam = grad_cam(&cfg, &params, &x, Some(clip.label), "stage5").unwrap();
            let boxes: Vec<_> = view.poses(&clip.poses).iter().map(|f| acting_box(&f.persons, acting)).collect();
            let (h, w) = (x.shape()[1], x.shape()[2]);
            let (mass, area) = mass_in_boxes(&cam.map, &boxes, h, w).unwrap();
            total += 1;
            hits += usize::from(mass > area);
        }
    }
    let rate = hits as f64 / total.max(1) as f64;
    Outcome {
        pass: total > 0 && rate >= 0.7,
        detail: format!("map mass inside acting-limb box beats its area on {hits}/{total} correct wave clips ({:.0}%) >= 70%", 100.0 * rate),
        elapsed: t0.elapsed() + Duration::from_secs_f64(zoo.secs(&["pose"])),
        budget: minutes(5),
    }
}

fn main() {
    type Criterion = (usize, &'static str, fn(&mut Zoo) -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "gradient suite", c1_gradients),
        (2, "rasterizer oracle", c2_raster),
        (3, "TV-L1 accuracy", c3_flow),
        (4, "loss identities", c4_losses),
        (5, "stream complementarity", c5_complementarity),
        (6, "black-background failure", c6_black_background),
        (7, "distillation gain", c7_distillation),
        (8, "fusion invariants", c8_fusion),
        (9, "determinism and persistence", c9_determinism),
        (10, "Grad-CAM acting-limb mass", c10_grad_cam),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut zoo = Zoo::default();
    let mut lines = Vec::new();
    for (n, name, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        println!("criterion {n}: {name} ...");
        let t0 = Instant::now();
        let mut out = run(&mut zoo);
        if out.elapsed.is_zero() {
            out.elapsed = t0.elapsed();
        }
        let in_budget = out.budget.is_none_or(|b| out.elapsed < b);
        let budget = out.budget.map(|b| format!(" / {} s", b.as_secs())).unwrap_or_default();
        let line = format!(
            "criterion {n:>2} {:<28} {}  {} [{:.0} s{budget}]",
            name,
            if out.pass && in_budget { "PASS" } else { "FAIL" },
            out.detail,
            out.elapsed.as_secs_f64()
        );
        println!("{line}");
        lines.push((out.pass && in_budget, line));
    }
    println!("\nacceptance summary");
    for (_, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|(ok, _)| !ok).count();
    println!("{} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
