//! Domain types shared by every stage of the pipeline.
//!
//! Times are seconds as `f64`; a turn covers the half-open interval
//! `[start, end)`. Pixel coordinates use a top-left origin with y pointing
//! down. Keypoints follow the COCO-17 ordering.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of body keypoints per person (COCO-17).
pub const NUM_KEYPOINTS: usize = 17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("turn {index}: start {start} is after end {end}")]
    TurnOrder { index: usize, start: f64, end: f64 },
    #[error("turn {index}: utterance is empty")]
    EmptyUtterance { index: usize },
    #[error("turn {index}: non-finite or negative time")]
    BadTime { index: usize },
    #[error("turn {index}: start {start} does not follow previous start {previous}")]
    UnsortedTurns {
        index: usize,
        start: f64,
        previous: f64,
    },
    #[error("turn {index}: speaker {speaker} outside player count {player_count}")]
    SpeakerOutOfRange {
        index: usize,
        speaker: PlayerId,
        player_count: u32,
    },
    #[error("player count must be positive")]
    NoPlayers,
    #[error("expected {NUM_KEYPOINTS} keypoints, got {0}")]
    KeypointCount(usize),
    #[error("{0}: bounding box must have positive width and height")]
    EmptyBox(PlayerId),
    #[error("{0}: non-finite coordinate or confidence outside [0, 1]")]
    BadCoordinate(PlayerId),
    #[error("frame at {timestamp}s annotates {player} more than once")]
    DuplicatePerson { timestamp: f64, player: PlayerId },
    #[error("frame {index}: timestamp {timestamp} does not follow {previous}")]
    UnsortedFrames {
        index: usize,
        timestamp: f64,
        previous: f64,
    },
    #[error("source resolution must be non-zero")]
    BadResolution,
}

/// Zero-based player index, displayed as `PlayerN`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PlayerId(pub u32);

impl PlayerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Player{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: PlayerId,
    pub utterance: String,
    pub start: f64,
    pub end: f64,
}

impl Turn {
    pub fn new(speaker: u32, utterance: impl Into<String>, start: f64, end: f64) -> Self {
        Turn {
            speaker: PlayerId(speaker),
            utterance: utterance.into(),
            start,
            end,
        }
    }

    fn validate(&self, index: usize) -> Result<(), ModelError> {
        if !self.start.is_finite() || !self.end.is_finite() || self.start < 0.0 {
            return Err(ModelError::BadTime { index });
        }
        if self.start > self.end {
            return Err(ModelError::TurnOrder {
                index,
                start: self.start,
                end: self.end,
            });
        }
        if self.utterance.trim().is_empty() {
            return Err(ModelError::EmptyUtterance { index });
        }
        Ok(())
    }
}

/// Ordered, validated speaker turns of one session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript {
    session_id: String,
    player_count: u32,
    turns: Vec<Turn>,
}

impl Transcript {
    pub fn new(
        session_id: impl Into<String>,
        player_count: u32,
        turns: Vec<Turn>,
    ) -> Result<Self, ModelError> {
        if player_count == 0 {
            return Err(ModelError::NoPlayers);
        }
        let mut previous: Option<f64> = None;
        for (index, turn) in turns.iter().enumerate() {
            turn.validate(index)?;
            if turn.speaker.0 >= player_count {
                return Err(ModelError::SpeakerOutOfRange {
                    index,
                    speaker: turn.speaker,
                    player_count,
                });
            }
            if let Some(prev) = previous {
                if turn.start <= prev {
                    return Err(ModelError::UnsortedTurns {
                        index,
                        start: turn.start,
                        previous: prev,
                    });
                }
            }
            previous = Some(turn.start);
        }
        Ok(Transcript {
            session_id: session_id.into(),
            player_count,
            turns,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn player_count(&self) -> u32 {
        self.player_count
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

impl<'de> Deserialize<'de> for Transcript {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            session_id: String,
            player_count: u32,
            turns: Vec<Turn>,
        }
        let raw = Raw::deserialize(d)?;
        Transcript::new(raw.session_id, raw.player_count, raw.turns).map_err(serde::de::Error::custom)
    }
}

/// `[x, y, width, height]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x: v[0],
            y: v[1],
            width: v[2],
            height: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

/// `[x, y, confidence]`; missing joints carry confidence 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl From<[f64; 3]> for Keypoint {
    fn from(v: [f64; 3]) -> Self {
        Keypoint {
            x: v[0],
            y: v[1],
            confidence: v[2],
        }
    }
}

impl From<Keypoint> for [f64; 3] {
    fn from(k: Keypoint) -> Self {
        [k.x, k.y, k.confidence]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonAnnotation {
    pub player: PlayerId,
    pub bbox: BBox,
    pub keypoints: Vec<Keypoint>,
}

impl PersonAnnotation {
    pub fn new(player: PlayerId, bbox: BBox, keypoints: Vec<Keypoint>) -> Result<Self, ModelError> {
        let person = PersonAnnotation {
            player,
            bbox,
            keypoints,
        };
        person.validate()?;
        Ok(person)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.keypoints.len() != NUM_KEYPOINTS {
            return Err(ModelError::KeypointCount(self.keypoints.len()));
        }
        let b = &self.bbox;
        if ![b.x, b.y, b.width, b.height].iter().all(|v| v.is_finite()) {
            return Err(ModelError::BadCoordinate(self.player));
        }
        if b.width <= 0.0 || b.height <= 0.0 {
            return Err(ModelError::EmptyBox(self.player));
        }
        let kp_ok = self.keypoints.iter().all(|k| {
            k.x.is_finite() && k.y.is_finite() && (0.0..=1.0).contains(&k.confidence)
        });
        if !kp_ok {
            return Err(ModelError::BadCoordinate(self.player));
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for PersonAnnotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            player: PlayerId,
            bbox: BBox,
            keypoints: Vec<Keypoint>,
        }
        let raw = Raw::deserialize(d)?;
        PersonAnnotation::new(raw.player, raw.bbox, raw.keypoints).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameAnnotation {
    pub timestamp: f64,
    pub frame_ref: String,
    pub persons: Vec<PersonAnnotation>,
}

impl FrameAnnotation {
    pub fn new(
        timestamp: f64,
        frame_ref: impl Into<String>,
        persons: Vec<PersonAnnotation>,
    ) -> Result<Self, ModelError> {
        let frame = FrameAnnotation {
            timestamp,
            frame_ref: frame_ref.into(),
            persons,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for person in &self.persons {
            person.validate()?;
            if !seen.insert(person.player) {
                return Err(ModelError::DuplicatePerson {
                    timestamp: self.timestamp,
                    player: person.player,
                });
            }
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for FrameAnnotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            timestamp: f64,
            frame_ref: String,
            persons: Vec<PersonAnnotation>,
        }
        let raw = Raw::deserialize(d)?;
        FrameAnnotation::new(raw.timestamp, raw.frame_ref, raw.persons)
            .map_err(serde::de::Error::custom)
    }
}

/// Per-frame annotations of one session, sorted by timestamp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationTrack {
    session_id: String,
    source_resolution: (u32, u32),
    frames: Vec<FrameAnnotation>,
}

impl AnnotationTrack {
    pub fn new(
        session_id: impl Into<String>,
        source_resolution: (u32, u32),
        frames: Vec<FrameAnnotation>,
    ) -> Result<Self, ModelError> {
        if source_resolution.0 == 0 || source_resolution.1 == 0 {
            return Err(ModelError::BadResolution);
        }
        for (index, pair) in frames.windows(2).enumerate() {
            if !(pair[1].timestamp > pair[0].timestamp) {
                return Err(ModelError::UnsortedFrames {
                    index: index + 1,
                    timestamp: pair[1].timestamp,
                    previous: pair[0].timestamp,
                });
            }
        }
        for frame in &frames {
            frame.validate()?;
        }
        Ok(AnnotationTrack {
            session_id: session_id.into(),
            source_resolution,
            frames,
        })
    }

    /// A track with no frames, for sessions without video.
    pub fn empty(session_id: impl Into<String>) -> Self {
        AnnotationTrack {
            session_id: session_id.into(),
            source_resolution: (1, 1),
            frames: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn source_resolution(&self) -> (u32, u32) {
        self.source_resolution
    }

    pub fn frames(&self) -> &[FrameAnnotation] {
        &self.frames
    }

    /// Frames with `t0 <= timestamp <= t1`.
    pub fn frames_between(&self, t0: f64, t1: f64) -> &[FrameAnnotation] {
        let lo = self.frames.partition_point(|f| f.timestamp < t0);
        let hi = self.frames.partition_point(|f| f.timestamp <= t1);
        &self.frames[lo..hi.max(lo)]
    }
}

impl<'de> Deserialize<'de> for AnnotationTrack {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            session_id: String,
            source_resolution: (u32, u32),
            frames: Vec<FrameAnnotation>,
        }
        let raw = Raw::deserialize(d)?;
        AnnotationTrack::new(raw.session_id, raw.source_resolution, raw.frames)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SpeakingTarget,
    PronounCoreference,
    MentionedPlayer,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::SpeakingTarget,
        TaskKind::PronounCoreference,
        TaskKind::MentionedPlayer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::SpeakingTarget => "speaking_target",
            TaskKind::PronounCoreference => "pronoun_coreference",
            TaskKind::MentionedPlayer => "mentioned_player",
        }
    }

    /// Whether anchors of this task point at a character span.
    pub fn needs_span(self) -> bool {
        !matches!(self, TaskKind::SpeakingTarget)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "speaking_target" | "sti" => Ok(TaskKind::SpeakingTarget),
            "pronoun_coreference" | "pcr" => Ok(TaskKind::PronounCoreference),
            "mentioned_player" | "mpp" => Ok(TaskKind::MentionedPlayer),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}
