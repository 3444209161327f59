//! Per-sample rendering: sample frames, draw overlays, optionally tile.

use std::path::{Path, PathBuf};

use image::RgbImage;

use super::{
    assign_colors, compose_grid, render_overlay, sample_frame_slice, scale_annotation, OverlayOptions, RenderError,
    SamplingMode,
};
use crate::dataset::OnlineSample;
use crate::model::FrameAnnotation;

/// Supplies the raw pixels behind a frame annotation.
pub trait FrameSource: Send + Sync {
    fn load(&self, frame: &FrameAnnotation) -> Result<RgbImage, RenderError>;
}

/// Frames stored as image files under a root directory, addressed by
/// `frame_ref`.
pub struct DirFrames {
    root: PathBuf,
}

impl DirFrames {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirFrames { root: root.into() }
    }
}

impl FrameSource for DirFrames {
    fn load(&self, frame: &FrameAnnotation) -> Result<RgbImage, RenderError> {
        let path = self.root.join(&frame.frame_ref);
        image::open(&path)
            .map(|img| img.to_rgb8())
            .map_err(|e| RenderError::FrameLoad {
                frame_ref: frame.frame_ref.clone(),
                message: e.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RenderSpec {
    pub overlay: OverlayOptions,
    pub sampling: SamplingMode,
}

/// Images for one sample: one per sampled frame, or a single 3×2 grid.
pub fn render_sample_frames(
    sample: &OnlineSample,
    source: &dyn FrameSource,
    spec: &RenderSpec,
) -> Result<Vec<RgbImage>, RenderError> {
    let Some(first) = sample.frame_window.first() else {
        let start = sample.dialogue_window.first().map_or(sample.query_time_t, |t| t.start);
        return Err(RenderError::EmptySpan(start, sample.query_time_t));
    };
    let frames = sample_frame_slice(&sample.frame_window, (first.timestamp, sample.query_time_t), spec.sampling)?;
    let colors = if spec.overlay.any() {
        Some(assign_colors(sample.player_count as usize)?)
    } else {
        None
    };
    let (src_w, src_h) = sample.source_resolution;
    let mut images = Vec::with_capacity(frames.len());
    for frame in &frames {
        let img = source.load(frame)?;
        let img = match &colors {
            Some(colors) => {
                let sx = f64::from(img.width()) / f64::from(src_w.max(1));
                let sy = f64::from(img.height()) / f64::from(src_h.max(1));
                render_overlay(&img, &scale_annotation(frame, sx, sy), colors, &spec.overlay)?
            }
            None => img,
        };
        images.push(img);
    }
    if spec.sampling == SamplingMode::Grid6 {
        return Ok(vec![compose_grid(&images)?]);
    }
    Ok(images)
}

pub fn file_stem(sample_id: &str) -> String {
    sample_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `images` as `<dir>/<sample>_<i>.png` and returns the paths.
pub fn write_sample_images(sample_id: &str, images: &[RgbImage], dir: &Path) -> Result<Vec<PathBuf>, RenderError> {
    std::fs::create_dir_all(dir).map_err(|e| RenderError::Write(e.to_string()))?;
    let stem = file_stem(sample_id);
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let path = dir.join(format!("{stem}_{i:02}.png"));
            img.save(&path).map_err(|e| RenderError::Write(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}
