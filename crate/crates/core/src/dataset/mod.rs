//! Strictly causal sample construction.
//!
//! Every [`OnlineSample`] only sees turns that ended, and frames captured, at
//! or before its query time. Turns after the anchor are kept apart as the
//! forecast target used for training export and forecast scoring.

mod sft;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnnotationTrack, FrameAnnotation, PlayerId, TaskKind, Transcript, Turn};

pub use sft::{export_sft_records, forecast_answer_target, SftHeader, SftInput, SftRecord, TrainingHyperparameters};

/// Replacement token for a masked player mention.
pub const MASK_TOKEN: &str = "<MASK>";

static PLAYER_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^player\s?(\d+)$").expect("valid regex"));

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("anchor turn {index} out of range for {len} turns")]
    AnchorOutOfRange { index: usize, len: usize },
    #[error("annotation track `{track}` does not belong to session `{transcript}`")]
    SessionMismatch { transcript: String, track: String },
    #[error("span ({start}, {end}) out of bounds for utterance of {len} characters")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("span ({0}, {1}) is empty")]
    DegenerateSpan(usize, usize),
    #[error("{task} anchor at turn {index} needs a span")]
    MissingSpan { task: TaskKind, index: usize },
    #[error("speaking-target anchor at turn {0} must not carry a span")]
    UnexpectedSpan(usize),
    #[error("span text `{0}` is not a player mention")]
    NotAPlayerMention(String),
    #[error("{samples} samples but {prompts} prompts")]
    Misaligned { samples: usize, prompts: usize },
    #[error("sample `{sample}` paired with prompt `{prompt}`")]
    SampleIdMismatch { sample: String, prompt: String },
    #[error("window must cover at least one turn")]
    EmptyWindow,
}

/// Which frames accompany a dialogue window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "seconds")]
pub enum FrameHorizon {
    /// From the start of the earliest windowed turn to the query time.
    #[default]
    WindowedTurns,
    /// A fixed wall-clock span ending at the query time.
    Seconds(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub d_turns: usize,
    pub k_forecast: usize,
    pub frame_horizon: FrameHorizon,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            d_turns: 10,
            k_forecast: 4,
            frame_horizon: FrameHorizon::WindowedTurns,
        }
    }
}

impl WindowConfig {
    pub fn new(d_turns: usize, k_forecast: usize) -> Result<Self, DatasetError> {
        if d_turns == 0 {
            return Err(DatasetError::EmptyWindow);
        }
        Ok(WindowConfig {
            d_turns,
            k_forecast,
            ..Default::default()
        })
    }
}

/// A labelled query position supplied by the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnchor {
    pub turn_index: usize,
    pub task: TaskKind,
    pub ground_truth: PlayerId,
    /// Character range `[start, end)` of the pronoun or mention.
    #[serde(rename = "span")]
    pub pronoun_or_mention_span: Option<(usize, usize)>,
}

pub const ANCHOR_FIELDS: &[&str] = &["turn_index", "task", "ground_truth", "span"];

/// Upcoming speakers and what they said, aligned position by position.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ForecastTarget {
    pub speakers: Vec<PlayerId>,
    pub utterances: Vec<(PlayerId, String)>,
}

impl ForecastTarget {
    pub fn from_utterances(utterances: Vec<(PlayerId, String)>) -> Self {
        ForecastTarget {
            speakers: utterances.iter().map(|(p, _)| *p).collect(),
            utterances,
        }
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    /// Speakers agree with the utterance column.
    pub fn is_aligned(&self) -> bool {
        self.speakers.len() == self.utterances.len()
            && self.speakers.iter().zip(&self.utterances).all(|(s, (p, _))| s == p)
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.speakers.truncate(k);
        self.utterances.truncate(k);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSample {
    pub sample_id: String,
    pub session_id: String,
    pub player_count: u32,
    /// Pixel size the frame annotations refer to.
    pub source_resolution: (u32, u32),
    pub task: TaskKind,
    pub anchor_index: usize,
    pub dialogue_window: Vec<Turn>,
    pub frame_window: Vec<FrameAnnotation>,
    pub query_time_t: f64,
    pub ground_truth: PlayerId,
    pub span: Option<(usize, usize)>,
    pub masked_query_utterance: Option<String>,
    pub forecast_target: ForecastTarget,
}

impl OnlineSample {
    /// The anchored (last) turn of the window.
    pub fn query_turn(&self) -> &Turn {
        self.dialogue_window.last().expect("window holds the anchor turn")
    }

    /// True when nothing in the sample postdates the query time.
    pub fn is_causal(&self) -> bool {
        self.dialogue_window.iter().all(|t| t.end <= self.query_time_t)
            && self.frame_window.iter().all(|f| f.timestamp <= self.query_time_t)
    }
}

fn check_span(utterance: &str, span: (usize, usize)) -> Result<(), DatasetError> {
    let len = utterance.chars().count();
    let (start, end) = span;
    if start >= end {
        return Err(DatasetError::DegenerateSpan(start, end));
    }
    if end > len {
        return Err(DatasetError::SpanOutOfBounds { start, end, len });
    }
    Ok(())
}

fn span_text(utterance: &str, (start, end): (usize, usize)) -> String {
    utterance.chars().skip(start).take(end - start).collect()
}

/// Player referenced by a mention like `Player4`, if any.
pub fn parse_player_mention(text: &str) -> Option<PlayerId> {
    PLAYER_MENTION
        .captures(text.trim())
        .and_then(|c| c[1].parse().ok())
        .map(PlayerId)
}

/// Replaces exactly the character span with [`MASK_TOKEN`].
pub fn mask_mentioned_name(utterance: &str, span: (usize, usize)) -> Result<String, DatasetError> {
    check_span(utterance, span)?;
    let mention = span_text(utterance, span);
    if parse_player_mention(&mention).is_none() {
        return Err(DatasetError::NotAPlayerMention(mention));
    }
    let (start, end) = span;
    let mut out = String::with_capacity(utterance.len());
    out.extend(utterance.chars().take(start));
    out.push_str(MASK_TOKEN);
    out.extend(utterance.chars().skip(end));
    Ok(out)
}

/// Speakers and utterances of the next `min(k, remaining)` turns after the anchor.
pub fn build_forecast_target(
    transcript: &Transcript,
    anchor_index: usize,
    k: usize,
) -> Result<ForecastTarget, DatasetError> {
    let turns = transcript.turns();
    if anchor_index >= turns.len() {
        return Err(DatasetError::AnchorOutOfRange {
            index: anchor_index,
            len: turns.len(),
        });
    }
    let utterances = turns[anchor_index + 1..]
        .iter()
        .take(k)
        .map(|t| (t.speaker, t.utterance.clone()))
        .collect();
    Ok(ForecastTarget::from_utterances(utterances))
}

fn sample_id(session: &str, anchor: &QueryAnchor) -> String {
    match anchor.pronoun_or_mention_span {
        Some((start, _)) => format!("{session}:{}:{}:{start}", anchor.turn_index, anchor.task),
        None => format!("{session}:{}:{}", anchor.turn_index, anchor.task),
    }
}

fn build_one(
    transcript: &Transcript,
    track: &AnnotationTrack,
    anchor: &QueryAnchor,
    cfg: &WindowConfig,
) -> Result<OnlineSample, DatasetError> {
    let turns = transcript.turns();
    let i = anchor.turn_index;
    if i >= turns.len() {
        return Err(DatasetError::AnchorOutOfRange {
            index: i,
            len: turns.len(),
        });
    }
    let anchor_turn = &turns[i];
    match (anchor.task.needs_span(), anchor.pronoun_or_mention_span) {
        (true, None) => return Err(DatasetError::MissingSpan { task: anchor.task, index: i }),
        (false, Some(_)) => return Err(DatasetError::UnexpectedSpan(i)),
        (true, Some(span)) => check_span(&anchor_turn.utterance, span)?,
        (false, None) => {}
    }
    let masked_query_utterance = match (anchor.task, anchor.pronoun_or_mention_span) {
        (TaskKind::MentionedPlayer, Some(span)) => Some(mask_mentioned_name(&anchor_turn.utterance, span)?),
        _ => None,
    };

    let first = (i + 1).saturating_sub(cfg.d_turns);
    let dialogue_window = turns[first..=i].to_vec();
    // Equals the anchor's end unless an earlier windowed turn overlaps past it.
    let query_time_t = dialogue_window.iter().map(|t| t.end).fold(anchor_turn.end, f64::max);
    let frame_start = match cfg.frame_horizon {
        FrameHorizon::WindowedTurns => dialogue_window[0].start,
        FrameHorizon::Seconds(s) => query_time_t - s.max(0.0),
    };
    let frame_window = track.frames_between(frame_start, query_time_t).to_vec();

    Ok(OnlineSample {
        sample_id: sample_id(transcript.session_id(), anchor),
        session_id: transcript.session_id().to_string(),
        player_count: transcript.player_count(),
        source_resolution: track.source_resolution(),
        task: anchor.task,
        anchor_index: i,
        dialogue_window,
        frame_window,
        query_time_t,
        ground_truth: anchor.ground_truth,
        span: anchor.pronoun_or_mention_span,
        masked_query_utterance,
        forecast_target: build_forecast_target(transcript, i, cfg.k_forecast)?,
    })
}

/// One causal sample per anchor, in anchor order.
pub fn build_online_samples(
    transcript: &Transcript,
    track: &AnnotationTrack,
    anchors: &[QueryAnchor],
    cfg: &WindowConfig,
) -> Result<Vec<OnlineSample>, DatasetError> {
    if cfg.d_turns == 0 {
        return Err(DatasetError::EmptyWindow);
    }
    if track.session_id() != transcript.session_id() {
        return Err(DatasetError::SessionMismatch {
            transcript: transcript.session_id().to_string(),
            track: track.session_id().to_string(),
        });
    }
    anchors.iter().map(|a| build_one(transcript, track, a, cfg)).collect()
}
