mod common;

use perfnet_core::checkpoint;
use perfnet_core::data::*;
use perfnet_core::flow::FlowParams;
use perfnet_core::nn::{build_backbone, BackboneConfig};
use perfnet_core::pose::RenderSpec;
use perfnet_core::train::*;
use perfnet_core::{Error, Tape, Tensor};
use proptest::prelude::*;

fn logits_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-4.0f64..4.0, rows * cols).prop_map(move |v| Tensor::new([rows, cols], v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logged_terms_sum_to_total(
        student in logits_strategy(3, 4),
        t1 in logits_strategy(3, 4),
        t2 in logits_strategy(3, 4),
        weight in 0.1f64..3.0,
        unified in any::<bool>(),
    ) {
        let mode = if unified { DistillMode::Unified } else { DistillMode::Separate };
        let mut tape = Tape::new();
        let s = tape.leaf(student, true);
        let parts = distill_loss(&mut tape, s, &[t1, t2], &[0, 3, 1], mode, weight).unwrap();
        let total = tape.value(parts.total).item().unwrap();
        prop_assert_eq!(parts.mse.len(), if unified { 1 } else { 2 });
        prop_assert!((total - parts.cls - parts.mse.iter().sum::<f64>()).abs() < 1e-6);
    }

    #[test]
    fn one_teacher_modes_agree(student in logits_strategy(2, 5), teacher in logits_strategy(2, 5)) {
        let loss = |mode| {
            let mut tape = Tape::new();
            let s = tape.leaf(student.clone(), true);
            let p = distill_loss(&mut tape, s, &[teacher.clone()], &[1, 4], mode, 1.0).unwrap();
            tape.value(p.total).item().unwrap()
        };
        prop_assert_eq!(loss(DistillMode::Separate), loss(DistillMode::Unified));
    }

    #[test]
    fn lr_is_continuous_at_the_warmup_junction(warmup in 1usize..500, extra in 1usize..2000, lr in 0.001f64..1.0) {
        let cfg = OptimConfig { base_lr: lr, warmup_steps: warmup, total_steps: warmup + extra, ..Default::default() };
        let before = lr_at(warmup - 1, &cfg).unwrap();
        let at = lr_at(warmup, &cfg).unwrap();
        prop_assert!((at - lr).abs() < 1e-12);
        prop_assert!((at - before - lr / warmup as f64).abs() < 1e-9);
        prop_assert!((lr_at(warmup + 1, &cfg).unwrap() - at).abs() <= lr * 5.0 / (extra as f64).powi(2) + 1e-12);
    }

    #[test]
    fn fusion_argmax_is_scale_invariant(a in logits_strategy(6, 4), b in logits_strategy(6, 4), scale in 0.01f64..100.0) {
        let data = label_only_dataset(&[0, 1, 2, 3, 0, 1], 4);
        let (a, b) = (a.cast::<f32>(), b.cast::<f32>());
        let plain = fuse_logits(&[a.clone(), b.clone()], &data).unwrap();
        let s = scale as f32;
        let scaled = fuse_logits(&[a.map(|v| v * s), b.map(|v| v * s)], &data).unwrap();
        prop_assert_eq!(plain.confusion, scaled.confusion);
    }
}

#[test]
fn teacher_equal_to_student_leaves_only_cross_entropy() {
    let logits = Tensor::new([2, 3], vec![0.2, -1.0, 2.0, 0.5, 0.5, -0.3]).unwrap();
    let mut tape = Tape::<f64>::new();
    let s = tape.leaf(logits.clone(), true);
    let parts = distill_loss(&mut tape, s, &[logits.clone(), logits], &[2, 0], DistillMode::Separate, 1.0).unwrap();
    assert_eq!(tape.value(parts.total).item().unwrap(), parts.cls);
}

#[test]
fn student_gradient_treats_teachers_as_constants() {
    let (sv, tv) = ([0.5, -0.5, 1.0], [1.0, 2.0, 3.0]);
    let mut tape = Tape::<f64>::new();
    let s = tape.leaf(Tensor::new([1, 3], sv.to_vec()).unwrap(), true);
    let teacher = Tensor::new([1, 3], tv.to_vec()).unwrap();
    let parts = distill_loss(&mut tape, s, &[teacher], &[0], DistillMode::Separate, 0.5).unwrap();
    tape.backward(parts.total).unwrap();
    let z: f64 = sv.iter().map(|v: &f64| v.exp()).sum();
    let expected: Vec<f64> = (0..3)
        .map(|i| sv[i].exp() / z - if i == 0 { 1.0 } else { 0.0 } + 0.5 * 2.0 / 3.0 * (sv[i] - tv[i]))
        .collect();
    let got = tape.grad(s).unwrap();
    for (g, e) in got.data().iter().zip(&expected) {
        assert!((g - e).abs() < 1e-12);
    }
}

fn label_only_dataset(labels: &[usize], classes: usize) -> Dataset {
    Dataset {
        class_names: (0..classes).map(|c| format!("c{c}")).collect(),
        mirror_labels: (0..classes).collect(),
        clips: labels
            .iter()
            .enumerate()
            .map(|(i, &label)| ClipSample { id: format!("v{i}"), label, frames: Tensor::zeros([1, 1, 1, 3]), poses: Vec::new() })
            .collect(),
    }
}

#[test]
fn fusion_identities() {
    let data = label_only_dataset(&[0, 1, 2, 2, 1], 3);
    let a = Tensor::from_fn([5, 3], |i| ((i * 7) % 5) as f32 - 2.0);
    let b = Tensor::from_fn([5, 3], |i| ((i * 3) % 4) as f32);
    let single = fuse_logits(&[a.clone()], &data).unwrap();
    assert_eq!(fuse_logits(&[a.clone(), a.clone()], &data).unwrap(), single);
    assert_eq!(fuse_logits(&[a.clone(), Tensor::zeros([5, 3])], &data).unwrap(), single);
    let three = fuse_logits(&[a.clone(), b, a], &data).unwrap();
    assert!(three.top5 >= three.top1);
    for (row, &count) in three.confusion.iter().zip(&[1usize, 2, 2]) {
        assert_eq!(row.iter().sum::<usize>(), count);
    }
    assert!(matches!(fuse_logits(&[Tensor::zeros([5, 4])], &data), Err(Error::Config(_))));
}

fn tiny_run(dir: Option<std::path::PathBuf>, steps: usize, lr: f64) -> perfnet_core::Result<(perfnet_core::nn::ModelParams, TrainLog)> {
    let spec = SyntheticSpec { train_clips_per_class: 2, val_clips_per_class: 1, frame_size: 24, clip_length: 4, seed: 3, ..Default::default() };
    let (train_d, _) = generate_synthetic(&spec).unwrap();
    let builder = StreamBuilder::new(RenderSpec::default(), FlowParams::default());
    let input = InputSpec { modality: Modality::Pose, crop_frac: 0.875, clip_length: 4, pad: PadMode::Last };
    let ts = TrainSpec {
        backbone: BackboneConfig::desk(3, 6),
        optim: OptimConfig { base_lr: lr, warmup_steps: 1, total_steps: steps, batch_size: 4, seed: 9, ..Default::default() },
        input,
        augment: AugmentConfig::default(),
        bn_momentum: 0.1,
        checkpoint_dir: dir,
    };
    train(&ts, &train_d, &builder, None)
}

#[test]
fn training_writes_epoch_checkpoints_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let (params, log) = tiny_run(Some(dir.path().to_path_buf()), 7, 0.05).unwrap();
    // 12 clips in batches of 4: three steps per epoch.
    let names: Vec<String> = {
        let mut v: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        v.sort();
        v
    };
    assert_eq!(names, ["epoch_000.perf", "epoch_001.perf", "epoch_002.perf"]);
    assert_eq!(checkpoint::load::<f32>(dir.path().join("epoch_002.perf")).unwrap(), params);
    checkpoint::check_compatible(&params, &BackboneConfig::desk(3, 6)).unwrap();
    assert_eq!(log.rows.len(), 7);
    let csv = log.to_csv();
    assert!(csv.starts_with("step,lr,loss_total,loss_cls"));
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn exploding_learning_rate_is_a_divergence_error() {
    let r = tiny_run(None, 40, 1e12);
    assert!(matches!(r, Err(Error::Divergence(_))), "{:?}", r.map(|_| ()));
}

#[test]
fn wrong_checkpoint_config_is_rejected() {
    let params = build_backbone::<f32>(&BackboneConfig::desk(2, 6), 0).unwrap();
    assert!(checkpoint::check_compatible(&params, &BackboneConfig::desk(3, 6)).is_err());
}
