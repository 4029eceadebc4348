use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::augment::View;
use super::ClipSample;
use crate::error::{Error, Result};
use crate::flow::{clip_flow_stack, FlowParams};
use crate::pose::{render_clip, RenderSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb,
    Flow,
    Pose,
}

impl Modality {
    pub fn channels(self) -> usize {
        match self {
            Modality::Rgb | Modality::Pose => 3,
            Modality::Flow => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Flow => "flow",
            Modality::Pose => "pose",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Modality::Rgb),
            "flow" => Ok(Modality::Flow),
            "pose" => Ok(Modality::Pose),
            _ => Err(Error::config(format!("unknown modality {s:?} (rgb|flow|pose)"))),
        }
    }
}

/// Builds network inputs for each modality. Flow is computed once per clip
/// id on the untransformed frames and reused across views.
pub struct StreamBuilder {
    pub render: RenderSpec,
    pub flow: FlowParams,
    cache: Mutex<HashMap<String, Arc<Tensor>>>,
}

impl StreamBuilder {
    pub fn new(render: RenderSpec, flow: FlowParams) -> Self {
        Self { render, flow, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached_flows(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    pub fn flow_for(&self, clip: &ClipSample) -> Result<Arc<Tensor>> {
        if let Some(f) = self.cache.lock().ok().and_then(|c| c.get(&clip.id).cloned()) {
            return Ok(f);
        }
        let f = Arc::new(clip_flow_stack(&clip.frames, &self.flow, true)?);
        if let Ok(mut c) = self.cache.lock() {
            c.entry(clip.id.clone()).or_insert_with(|| f.clone());
        }
        Ok(f)
    }

    /// `[T, H, W, C]` input for `modality` under `view`.
    pub fn build(&self, clip: &ClipSample, modality: Modality, view: &View) -> Result<Tensor> {
        match modality {
            Modality::Rgb => view.frames(&clip.frames),
            Modality::Pose => {
                let frames = view.frames(&clip.frames)?;
                let poses = view.poses(&clip.poses);
                render_clip(&frames, &poses, &self.render).map(|(t, _)| t)
            }
            Modality::Flow => view.spatial(self.flow_for(clip)?.as_ref(), Some(0)),
        }
    }
}

/// Untransformed input tensor for one modality.
pub fn make_stream(clip: &ClipSample, modality: Modality, builder: &StreamBuilder) -> Result<Tensor> {
    let s = clip.frames.shape();
    builder.build(clip, modality, &View::identity(s[1], s[2]))
}
