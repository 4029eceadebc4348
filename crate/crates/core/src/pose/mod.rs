//! Pose skeleton rendering onto video frames.

mod io;
mod raster;
mod render;
mod topology;
mod types;

pub use io::{read_jsonl, write_jsonl};
pub use raster::{fill_capsule, fill_disc, segment_dist2, Rgb};
pub use render::{
    draw_person, limb_color, palette, render_clip, render_pose_frame, Background, Marker, PaletteKind, RenderSpec,
    RenderStats,
};
pub use topology::{CoarseGroup, Endpoint, Limb, SKELETON};
pub use types::{kp, Keypoint, Person, PoseFrame, FLIP_INDEX, KEYPOINT_NAMES, NUM_KEYPOINTS};
