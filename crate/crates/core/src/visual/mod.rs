//! Social-aware visual prompting: per-player colored overlays of identity
//! labels, bounding boxes and body keypoints, plus frame sampling and 3×2
//! grid composition.
//!
//! Rendering is pure integer rasterization over `image::RgbImage`, so equal
//! inputs always produce byte-identical pixels.

mod font;
mod grid;
mod overlay;
mod pipeline;
mod raster;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PlayerId;

pub use grid::{compose_grid, GRID_CELLS, GRID_COLS, GRID_ROWS};
pub use overlay::{plan_overlay, render_overlay, scale_annotation, OverlayStyle, COCO_SKELETON};
pub use pipeline::{file_stem, render_sample_frames, write_sample_images, DirFrames, FrameSource, RenderSpec};
pub use raster::Primitive;
pub use sampling::{grid6_indices, sample_frame_slice, sample_frames};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("palette has {available} colors, {requested} players requested")]
    PaletteExhausted { requested: usize, available: usize },
    #[error("player count must be at least one")]
    NoPlayers,
    #[error("palette maps two players to the same color")]
    DuplicateColor,
    #[error("no color assigned to {0}")]
    MissingColor(PlayerId),
    #[error("image has zero area")]
    ZeroArea,
    #[error("no overlay element enabled")]
    NoOverlay,
    #[error("no annotated frames within [{0}, {1}]")]
    EmptySpan(f64, f64),
    #[error("invalid span [{0}, {1}]")]
    BadSpan(f64, f64),
    #[error("frame rate must be positive")]
    BadFps,
    #[error("grid needs {GRID_CELLS} frames, got {0}")]
    GridCount(usize),
    #[error("grid frames differ in size")]
    GridSize,
    #[error("confidence threshold must lie in [0, 1]")]
    BadThreshold,
    #[error("frame `{frame_ref}`: {message}")]
    FrameLoad { frame_ref: String, message: String },
    #[error("writing image: {0}")]
    Write(String),
}

/// Which overlay elements are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayOptions {
    /// `PlayerN` identity labels.
    pub text: bool,
    /// Bounding boxes.
    pub rect: bool,
    /// Keypoint discs and skeleton.
    pub point: bool,
    pub keypoint_confidence_threshold: f64,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        OverlayOptions::new(true, true, true)
    }
}

impl OverlayOptions {
    pub fn new(text: bool, rect: bool, point: bool) -> Self {
        OverlayOptions {
            text,
            rect,
            point,
            keypoint_confidence_threshold: 0.3,
        }
    }

    pub fn none() -> Self {
        OverlayOptions::new(false, false, false)
    }

    pub fn any(&self) -> bool {
        self.text || self.rect || self.point
    }

    /// Short tag such as `text+rect`, or `raw` when nothing is drawn.
    pub fn tag(&self) -> String {
        let parts: Vec<&str> = [(self.text, "text"), (self.rect, "rect"), (self.point, "point")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, name)| *name)
            .collect();
        if parts.is_empty() {
            "raw".into()
        } else {
            parts.join("+")
        }
    }
}

impl FromStr for OverlayOptions {
    type Err = String;

    /// Parses tags like `text+rect`; `raw` or `none` disables everything.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let mut opts = OverlayOptions::none();
        if s == "raw" || s == "none" {
            return Ok(opts);
        }
        for part in s.split('+') {
            match part.trim() {
                "text" => opts.text = true,
                "rect" => opts.rect = true,
                "point" => opts.point = true,
                other => return Err(format!("unknown overlay element `{other}`")),
            }
        }
        Ok(opts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteColor {
    pub name: String,
    pub rgb: [u8; 3],
}

/// The fixed six-color palette, in player order.
pub const DEFAULT_PALETTE: [(&str, [u8; 3]); 6] = [
    ("red", [220, 20, 60]),
    ("blue", [30, 90, 220]),
    ("green", [30, 160, 70]),
    ("yellow", [240, 200, 0]),
    ("purple", [150, 60, 200]),
    ("orange", [250, 140, 20]),
];

/// Injective mapping from players `0..n` to named colors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorMap {
    entries: Vec<PaletteColor>,
}

impl ColorMap {
    /// Player `i` gets `palette[i]`. Names and RGB values must be unique.
    pub fn from_palette(palette: Vec<PaletteColor>) -> Result<Self, RenderError> {
        if palette.is_empty() {
            return Err(RenderError::NoPlayers);
        }
        for (i, a) in palette.iter().enumerate() {
            if palette[..i].iter().any(|b| b.rgb == a.rgb || b.name == a.name) {
                return Err(RenderError::DuplicateColor);
            }
        }
        Ok(ColorMap { entries: palette })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, player: PlayerId) -> Option<&PaletteColor> {
        self.entries.get(player.index())
    }

    pub fn rgb(&self, player: PlayerId) -> Option<[u8; 3]> {
        self.get(player).map(|c| c.rgb)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlayerId, &PaletteColor)> {
        self.entries.iter().enumerate().map(|(i, c)| (PlayerId(i as u32), c))
    }
}

/// First `player_count` entries of [`DEFAULT_PALETTE`].
pub fn assign_colors(player_count: usize) -> Result<ColorMap, RenderError> {
    if player_count == 0 {
        return Err(RenderError::NoPlayers);
    }
    if player_count > DEFAULT_PALETTE.len() {
        return Err(RenderError::PaletteExhausted {
            requested: player_count,
            available: DEFAULT_PALETTE.len(),
        });
    }
    ColorMap::from_palette(
        DEFAULT_PALETTE[..player_count]
            .iter()
            .map(|(name, rgb)| PaletteColor {
                name: (*name).to_string(),
                rgb: *rgb,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingMode {
    PerSecond { fps: f64 },
    Grid6,
}

impl Default for SamplingMode {
    fn default() -> Self {
        SamplingMode::PerSecond { fps: 1.0 }
    }
}

impl SamplingMode {
    pub fn per_second(fps: f64) -> Result<Self, RenderError> {
        if fps > 0.0 && fps.is_finite() {
            Ok(SamplingMode::PerSecond { fps })
        } else {
            Err(RenderError::BadFps)
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingMode::PerSecond { fps } => write!(f, "fps:{fps:?}"),
            SamplingMode::Grid6 => f.write_str("grid6"),
        }
    }
}

impl FromStr for SamplingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("grid6") {
            return Ok(SamplingMode::Grid6);
        }
        let rate = s.strip_prefix("fps:").unwrap_or(s);
        let fps: f64 = rate.parse().map_err(|_| format!("bad sampling mode `{s}`"))?;
        SamplingMode::per_second(fps).map_err(|e| e.to_string())
    }
}

impl Serialize for SamplingMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SamplingMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
