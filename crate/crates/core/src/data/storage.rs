//! On-disk layout: `<root>/dataset.json`, and per split a `manifest.jsonl`
//! plus one directory per clip holding `frame_XXXX.png` and `poses.jsonl`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::SyntheticSpec;
use super::{ClipSample, Dataset};
use crate::error::{Error, Result};
use crate::imageio::{load_png, save_png};
use crate::pose::{read_jsonl, write_jsonl};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub label: usize,
    pub path: String,
    pub num_frames: usize,
}

#[derive(Serialize, Deserialize)]
struct DatasetInfo {
    spec: SyntheticSpec,
    class_names: Vec<String>,
    mirror_labels: Vec<usize>,
}

fn save_split(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    data.clips.par_iter().try_for_each(|clip| -> Result<()> {
        let clip_dir = dir.join(&clip.id);
        fs::create_dir_all(&clip_dir)?;
        for t in 0..clip.frames.shape()[0] {
            save_png(clip_dir.join(format!("frame_{t:04}.png")), &clip.frames.slice_outer(t)?)?;
        }
        write_jsonl(BufWriter::new(File::create(clip_dir.join("poses.jsonl"))?), &clip.poses)
    })?;
    let mut manifest = BufWriter::new(File::create(dir.join("manifest.jsonl"))?);
    for clip in &data.clips {
        let rec = ManifestRecord {
            id: clip.id.clone(),
            label: clip.label,
            path: clip.id.clone(),
            num_frames: clip.frames.shape()[0],
        };
        serde_json::to_writer(&mut manifest, &rec)?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    Ok(())
}

/// Writes both splits under `root`.
pub fn save_dataset(root: &Path, spec: &SyntheticSpec, train: &Dataset, val: &Dataset) -> Result<()> {
    fs::create_dir_all(root)?;
    let info = DatasetInfo {
        spec: spec.clone(),
        class_names: train.class_names.clone(),
        mirror_labels: train.mirror_labels.clone(),
    };
    fs::write(root.join("dataset.json"), serde_json::to_string_pretty(&info)?)?;
    save_split(&root.join("train"), train)?;
    save_split(&root.join("val"), val)
}

/// Reads the frames of one clip directory.
pub fn load_frames(dir: &Path, num_frames: usize) -> Result<Tensor> {
    let frames = (0..num_frames)
        .map(|t| load_png(dir.join(format!("frame_{t:04}.png"))))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&frames)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(format!("manifest line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Loads one split (`"train"` or `"val"`) and the spec it was generated from.
pub fn load_split(root: &Path, split: &str) -> Result<(SyntheticSpec, Dataset)> {
    let info: DatasetInfo = serde_json::from_str(&fs::read_to_string(root.join("dataset.json"))?)?;
    let dir = root.join(split);
    let records = read_manifest(&dir.join("manifest.jsonl"))?;
    let clips = records
        .par_iter()
        .map(|rec| {
            if rec.label >= info.class_names.len() {
                return Err(Error::format(format!("clip {} has label {} out of range", rec.id, rec.label)));
            }
            let clip_dir = dir.join(&rec.path);
            let frames = load_frames(&clip_dir, rec.num_frames)?;
            let poses = read_jsonl(BufReader::new(File::open(clip_dir.join("poses.jsonl"))?), rec.num_frames)?;
            Ok(ClipSample { id: rec.id.clone(), label: rec.label, frames, poses })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((info.spec, Dataset { class_names: info.class_names, mirror_labels: info.mirror_labels, clips }))
}
