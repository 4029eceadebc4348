use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use perfnet_core::checkpoint;
use perfnet_core::data::{generate_synthetic, load_split, save_dataset, ClipSample, Dataset, Modality, StreamBuilder};
use perfnet_core::explain::{grad_cam, overlay};
use perfnet_core::flow::{clip_flows, flow_to_color, write_flo};
use perfnet_core::imageio::{montage, save_png};
use perfnet_core::nn::{BackboneConfig, ModelParams};
use perfnet_core::pose::render_clip;
use perfnet_core::train::{
    eval_view, fuse_logits, predict_logits, train as train_model, DistillConfig, EvalModel, EvalReport, InputSpec,
    Teacher, TrainSpec,
};
use perfnet_core::{Error, Result, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RESOLVED_NAME};
use crate::ClipSelection;

const MODEL_FILE: &str = "model.perf";
const MODEL_META: &str = "model.json";

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    backbone: BackboneConfig,
    input: InputSpec,
}

/// A finished `train` or `distill` output directory.
struct Run {
    backbone: BackboneConfig,
    input: InputSpec,
    params: ModelParams,
    builder: StreamBuilder,
}

impl Run {
    fn load(dir: &Path) -> Result<Self> {
        let cfg = ExperimentConfig::load(&dir.join(RESOLVED_NAME))?;
        let meta: ModelMeta = serde_json::from_reader(File::open(dir.join(MODEL_META))?)
            .map_err(|e| Error::Format(format!("{}: {e}", dir.join(MODEL_META).display())))?;
        let params = checkpoint::load_for(dir.join(MODEL_FILE), &meta.backbone)?;
        Ok(Self { backbone: meta.backbone, input: meta.input, params, builder: builder(&cfg)? })
    }

    fn eval_model(&self) -> EvalModel<'_> {
        EvalModel { cfg: &self.backbone, params: &self.params, input: self.input }
    }
}

fn builder(cfg: &ExperimentConfig) -> Result<StreamBuilder> {
    let (render, flow) = (cfg.render(), cfg.flow());
    render.validate()?;
    flow.validate()?;
    Ok(StreamBuilder::new(render, flow))
}

fn split(cfg: &ExperimentConfig, name: &str) -> Result<Dataset> {
    load_split(&cfg.data_dir, name).map(|(_, d)| d)
}

fn select<'a>(data: &'a Dataset, sel: &ClipSelection) -> Result<Vec<&'a ClipSample>> {
    if sel.clips.is_empty() {
        return Ok(data.clips.iter().take(sel.limit).collect());
    }
    sel.clips
        .iter()
        .map(|id| {
            data.clips.iter().find(|c| &c.id == id).ok_or_else(|| Error::Config(format!("no clip {id:?} in split")))
        })
        .collect()
}

fn save_frames(dir: &Path, clip: &Tensor) -> Result<()> {
    fs::create_dir_all(dir)?;
    for t in 0..clip.shape()[0] {
        save_png(dir.join(format!("frame_{t:04}.png")), &clip.slice_outer(t)?)?;
    }
    Ok(())
}

fn write_report(cfg: &ExperimentConfig, name: &str, report: &EvalReport) -> Result<()> {
    fs::write(cfg.out_dir.join(name), report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let spec = cfg.synthetic();
    spec.validate()?;
    let (train, val) = generate_synthetic(&spec)?;
    save_dataset(&cfg.out_dir, &spec, &train, &val)?;
    println!("wrote {} train and {} val clips to {}", train.len(), val.len(), cfg.out_dir.display());
    Ok(())
}

pub fn render_pose(cfg: &ExperimentConfig, sel: &ClipSelection) -> Result<()> {
    let data = split(cfg, &sel.split)?;
    let spec = cfg.render();
    spec.validate()?;
    for clip in select(&data, sel)? {
        let (rendered, stats) = render_clip(&clip.frames, &clip.poses, &spec)?;
        save_frames(&cfg.out_dir.join(&clip.id), &rendered)?;
        if stats.nan_limbs > 0 {
            eprintln!("{}: skipped {} limbs with NaN keypoints", clip.id, stats.nan_limbs);
        }
    }
    Ok(())
}

pub fn flow(cfg: &ExperimentConfig, sel: &ClipSelection) -> Result<()> {
    let data = split(cfg, &sel.split)?;
    let params = cfg.flow();
    params.validate()?;
    for clip in select(&data, sel)? {
        let dir = cfg.out_dir.join(&clip.id);
        fs::create_dir_all(&dir)?;
        for (t, field) in clip_flows(&clip.frames, &params)?.iter().enumerate() {
            write_flo(BufWriter::new(File::create(dir.join(format!("flow_{t:04}.flo")))?), field)?;
            save_png(dir.join(format!("flow_{t:04}.png")), &flow_to_color(field))?;
        }
    }
    Ok(())
}

fn train_spec(cfg: &ExperimentConfig, num_classes: usize, checkpoint_dir: Option<PathBuf>) -> TrainSpec {
    TrainSpec {
        backbone: cfg.backbone(num_classes),
        optim: cfg.optim(),
        input: cfg.input(),
        augment: cfg.augment(),
        bn_momentum: cfg.train_bn_momentum,
        checkpoint_dir,
    }
}

fn load_teachers(cfg: &ExperimentConfig, student: &StreamBuilder) -> Result<DistillConfig> {
    if cfg.distill_teachers.is_empty() {
        return Err(Error::Config("distill.teachers lists no teacher runs".into()));
    }
    let teachers = cfg
        .distill_teachers
        .iter()
        .map(|dir| {
            let run = Run::load(dir)?;
            let mismatch = match run.input.modality {
                Modality::Pose => run.builder.render != student.render,
                Modality::Flow => run.builder.flow != student.flow,
                Modality::Rgb => false,
            };
            if mismatch {
                return Err(Error::Config(format!(
                    "teacher {} was trained with different {} settings",
                    dir.display(),
                    run.input.modality.name()
                )));
            }
            Ok(Teacher { cfg: run.backbone, params: run.params, input: run.input })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistillConfig { teachers, mode: cfg.distill_mode, weight: cfg.distill_weight })
}

pub fn train(cfg: &ExperimentConfig, distill: bool) -> Result<()> {
    let data = split(cfg, "train")?;
    let builder = builder(cfg)?;
    let distill = if distill { Some(load_teachers(cfg, &builder)?) } else { None };
    let spec = train_spec(cfg, data.num_classes(), Some(cfg.out_dir.join("checkpoints")));
    let (params, log) = train_model(&spec, &data, &builder, distill.as_ref())?;
    checkpoint::save(cfg.out_dir.join(MODEL_FILE), &params)?;
    let meta = ModelMeta { backbone: spec.backbone, input: spec.input };
    fs::write(cfg.out_dir.join(MODEL_META), serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?)?;
    fs::write(cfg.out_dir.join("train_log.csv"), log.to_csv())?;
    println!(
        "trained {} stream for {} steps: loss {:.4} -> {:.4}",
        spec.input.modality.name(),
        log.rows.len(),
        log.mean_loss(true, 10),
        log.mean_loss(false, 10)
    );
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig, model: &Path) -> Result<()> {
    let run = Run::load(model)?;
    let val = split(cfg, "val")?;
    let logits = predict_logits(&run.eval_model(), &val, &run.builder)?;
    write_report(cfg, "eval_report.csv", &fuse_logits(&[logits], &val)?)
}

pub fn fuse(cfg: &ExperimentConfig, models: &[PathBuf]) -> Result<()> {
    let val = split(cfg, "val")?;
    let logits = models
        .iter()
        .map(|dir| {
            let run = Run::load(dir)?;
            predict_logits(&run.eval_model(), &val, &run.builder)
        })
        .collect::<Result<Vec<_>>>()?;
    write_report(cfg, "fusion_report.csv", &fuse_logits(&logits, &val)?)
}

pub fn gradcam(cfg: &ExperimentConfig, model: &Path, class: Option<usize>, sel: &ClipSelection) -> Result<()> {
    let run = Run::load(model)?;
    let data = split(cfg, &sel.split)?;
    let mut csv = String::from("clip,label,class\n");
    for clip in select(&data, sel)? {
        let view = eval_view(clip, &run.input);
        let x = run.builder.build(clip, run.input.modality, &view)?;
        let cam = grad_cam(&run.backbone, &run.params, &x, class, &cfg.gradcam_stage)?;
        let backdrop = match run.input.modality {
            Modality::Flow => run.builder.build(clip, Modality::Rgb, &view)?,
            _ => x,
        };
        let blended = overlay(&cam.map, &backdrop)?;
        let frames = (0..blended.shape()[0]).map(|t| blended.slice_outer(t)).collect::<Result<Vec<_>>>()?;
        save_png(cfg.out_dir.join(format!("{}_gradcam.png", clip.id)), &montage(&frames)?)?;
        let _ = writeln!(csv, "{},{},{}", clip.id, clip.label, cam.class);
    }
    fs::write(cfg.out_dir.join("gradcam.csv"), csv)?;
    Ok(())
}

pub fn ablate_render(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.ablate_variants.is_empty() {
        return Err(Error::Config("ablate.variants is empty".into()));
    }
    let train = split(cfg, "train")?;
    let val = split(cfg, "val")?;
    let mut pose_cfg = cfg.clone();
    pose_cfg.input_modality = Modality::Pose;
    let spec = train_spec(&pose_cfg, train.num_classes(), None);
    let mut csv = String::from("variant,background,marker,palette,ratio_aware,top1,top5\n");
    println!("{:<30} {:>7} {:>7}", "variant", "top-1", "top-5");
    for v in &cfg.ablate_variants {
        let render = v.apply(&cfg.render());
        render.validate()?;
        let builder = StreamBuilder::new(render, cfg.flow());
        let (params, _) = train_model(&spec, &train, &builder, None)?;
        let model = EvalModel { cfg: &spec.backbone, params: &params, input: spec.input };
        let report = fuse_logits(&[predict_logits(&model, &val, &builder)?], &val)?;
        let name = crate::config::Value::render(v);
        let _ = writeln!(
            csv,
            "{name},{:?},{:?},{:?},{},{},{}",
            v.background, v.marker, v.palette, v.ratio_aware, report.top1, report.top5
        );
        println!("{name:<30} {:>6.1}% {:>6.1}%", 100.0 * report.top1, 100.0 * report.top5);
    }
    fs::write(cfg.out_dir.join("ablate_render.csv"), csv)?;
    Ok(())
}
