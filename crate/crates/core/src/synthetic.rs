//! Seeded synthetic sessions: Markov speaker sequences, templated
//! utterances with player mentions and pronouns, pose tracks and flat-shaded
//! frame rasters.

use image::{Rgb, RgbImage};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::QueryAnchor;
use crate::model::{
    AnnotationTrack, BBox, FrameAnnotation, Keypoint, PersonAnnotation, PlayerId, TaskKind, Transcript, Turn,
    NUM_KEYPOINTS,
};
use crate::visual::{FrameSource, RenderError};

/// First-order speaker transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerChain {
    rows: Vec<Vec<f64>>,
}

impl SpeakerChain {
    /// Each speaker hands over to one preferred other speaker with
    /// probability `dominant`; the rest is spread evenly.
    pub fn sticky(players: usize, dominant: f64, rng: &mut impl Rng) -> Self {
        assert!(players >= 1, "need at least one player");
        if players == 1 {
            return SpeakerChain { rows: vec![vec![1.0]] };
        }
        let rest = (1.0 - dominant) / (players - 1) as f64;
        let rows = (0..players)
            .map(|from| {
                let mut preferred = rng.random_range(0..players - 1);
                if preferred >= from {
                    preferred += 1;
                }
                (0..players).map(|to| if to == preferred { dominant } else { rest }).collect()
            })
            .collect();
        SpeakerChain { rows }
    }

    pub fn uniform(players: usize) -> Self {
        SpeakerChain {
            rows: vec![vec![1.0 / players as f64; players]; players],
        }
    }

    pub fn players(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, from: PlayerId) -> &[f64] {
        &self.rows[from.index()]
    }

    pub fn next(&self, from: PlayerId, rng: &mut impl Rng) -> PlayerId {
        let dist = WeightedIndex::new(&self.rows[from.index()]).expect("row has positive mass");
        PlayerId(dist.sample(rng) as u32)
    }

    pub fn walk(&self, len: usize, rng: &mut impl Rng) -> Vec<PlayerId> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut current = PlayerId(rng.random_range(0..self.players()) as u32);
        out.push(current);
        while out.len() < len {
            current = self.next(current, rng);
            out.push(current);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSpec {
    pub players: usize,
    pub turns: usize,
    /// Frames per second of the annotation track; zero disables frames.
    pub annotation_fps: f64,
    pub source_resolution: (u32, u32),
    /// Chance that a turn starts before the previous one ended.
    pub overlap_probability: f64,
    pub dominant_transition: f64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec {
            players: 5,
            turns: 40,
            annotation_fps: 2.0,
            source_resolution: (640, 360),
            overlap_probability: 0.0,
            dominant_transition: 0.7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub transcript: Transcript,
    pub track: AnnotationTrack,
    pub anchors: Vec<QueryAnchor>,
    pub chain: SpeakerChain,
}

const PLAIN: &[&str] = &[
    "I was the Seer last night.",
    "I think we should vote carefully.",
    "Nobody swapped my card.",
    "That sounds suspicious to me.",
    "Let's hear from everyone first.",
    "I did not wake up at all.",
    "Okay, I believe that.",
];
const ADDRESSED: &[(&str, &str)] = &[
    ("did you swap anything?", "you"),
    ("What did you see?", "you"),
    ("I trust you on this one.", "you"),
];

/// Char offset of `needle` in `haystack`.
fn char_find(haystack: &str, needle: &str) -> Option<usize> {
    haystack.find(needle).map(|b| haystack[..b].chars().count())
}

fn utterance(speaker: PlayerId, players: usize, rng: &mut impl Rng) -> (String, Option<(TaskKind, PlayerId, (usize, usize))>) {
    let roll = rng.random_range(0..10);
    if players > 1 && roll < 3 {
        let mut other = rng.random_range(0..players - 1) as u32;
        if other >= speaker.0 {
            other += 1;
        }
        let name = PlayerId(other).label();
        let text = match rng.random_range(0..3) {
            0 => format!("I think {name} is the werewolf."),
            1 => format!("{name}, what was your role?"),
            _ => format!("Wait, {name} said that already."),
        };
        let start = char_find(&text, &name).expect("name inserted");
        let span = (start, start + name.chars().count());
        return (text, Some((TaskKind::MentionedPlayer, PlayerId(other), span)));
    }
    if roll < 6 {
        let (text, pronoun) = ADDRESSED[rng.random_range(0..ADDRESSED.len())];
        let start = char_find(text, pronoun).expect("pronoun present");
        return (text.to_string(), Some((TaskKind::PronounCoreference, PlayerId(0), (start, start + pronoun.len()))));
    }
    (PLAIN[rng.random_range(0..PLAIN.len())].to_string(), None)
}

fn addressee(speakers: &[PlayerId], i: usize, players: usize) -> PlayerId {
    let current = speakers[i];
    speakers[i + 1..]
        .iter()
        .chain(speakers[..i].iter().rev())
        .copied()
        .find(|s| *s != current)
        .unwrap_or(PlayerId(((current.0 as usize + 1) % players.max(1)) as u32))
}

fn person(player: PlayerId, players: usize, t: f64, (w, h): (u32, u32)) -> PersonAnnotation {
    let slot = player.index() as f64;
    let cell = f64::from(w) / players.max(1) as f64;
    let sway = (t * 0.7 + slot).sin() * cell * 0.05;
    let bw = cell * 0.6;
    let bh = f64::from(h) * 0.55;
    let x = slot * cell + cell * 0.2 + sway;
    let y = f64::from(h) * 0.3;
    let keypoints = (0..NUM_KEYPOINTS)
        .map(|k| {
            let col = [0.5, 0.45, 0.55, 0.4, 0.6, 0.3, 0.7, 0.2, 0.8, 0.15, 0.85, 0.38, 0.62, 0.36, 0.64, 0.35, 0.65][k];
            let row = [0.08, 0.05, 0.05, 0.07, 0.07, 0.25, 0.25, 0.42, 0.42, 0.55, 0.55, 0.6, 0.6, 0.8, 0.8, 0.97, 0.97][k];
            let conf = if k == 9 && player.0 % 2 == 1 { 0.1 } else { 0.9 };
            Keypoint { x: x + bw * col, y: y + bh * row, confidence: conf }
        })
        .collect();
    PersonAnnotation::new(player, BBox { x, y, width: bw, height: bh }, keypoints).expect("synthetic person is valid")
}

/// One seeded session with anchors on every turn that supports a task.
pub fn generate_session(session_id: &str, spec: &SessionSpec, rng: &mut impl Rng) -> SyntheticSession {
    let players = spec.players.max(1);
    let chain = SpeakerChain::sticky(players, spec.dominant_transition, rng);
    let speakers = chain.walk(spec.turns, rng);

    let mut turns = Vec::with_capacity(speakers.len());
    let mut spans = Vec::with_capacity(speakers.len());
    let mut clock: f64 = 0.5;
    let mut last_start = f64::NEG_INFINITY;
    for speaker in &speakers {
        let duration: f64 = rng.random_range(0.8..4.0);
        let mut start = clock;
        if rng.random_bool(spec.overlap_probability.clamp(0.0, 1.0)) {
            start -= rng.random_range(0.0..duration);
        }
        start = start.max(last_start + 0.05).max(0.0);
        let end = start + duration;
        let (text, span) = utterance(*speaker, players, rng);
        turns.push(Turn { speaker: *speaker, utterance: text, start, end });
        spans.push(span);
        last_start = start;
        clock = clock.max(end) + rng.random_range(0.1..0.8);
    }

    let mut anchors = Vec::new();
    for (i, span) in spans.iter().enumerate() {
        let target = addressee(&speakers, i, players);
        if players > 1 {
            anchors.push(QueryAnchor {
                turn_index: i,
                task: TaskKind::SpeakingTarget,
                ground_truth: target,
                pronoun_or_mention_span: None,
            });
        }
        if let Some((task, mentioned, range)) = span {
            let ground_truth = if *task == TaskKind::MentionedPlayer { *mentioned } else { target };
            anchors.push(QueryAnchor {
                turn_index: i,
                task: *task,
                ground_truth,
                pronoun_or_mention_span: Some(*range),
            });
        }
    }

    let mut frames = Vec::new();
    if spec.annotation_fps > 0.0 {
        let horizon = turns.iter().map(|t| t.end).fold(0.0, f64::max);
        let n = (horizon * spec.annotation_fps).floor() as usize + 1;
        for f in 0..n {
            let t = f as f64 / spec.annotation_fps;
            let persons = (0..players as u32)
                .map(|p| person(PlayerId(p), players, t, spec.source_resolution))
                .collect();
            frames.push(
                FrameAnnotation::new(t, format!("{session_id}/{f:05}.png"), persons).expect("synthetic frame is valid"),
            );
        }
    }

    SyntheticSession {
        transcript: Transcript::new(session_id, players as u32, turns).expect("synthetic transcript is valid"),
        track: AnnotationTrack::new(session_id, spec.source_resolution, frames).expect("synthetic track is valid"),
        anchors,
        chain,
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Procedural frame pixels keyed by `frame_ref`, so no image files are needed.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticFrames {
    pub size: (u32, u32),
}

impl SyntheticFrames {
    pub fn raster(&self, frame_ref: &str) -> RgbImage {
        let digest = Sha256::digest(frame_ref.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let base = [rng.next_u32() as u8 / 4 + 40, rng.next_u32() as u8 / 4 + 50, rng.next_u32() as u8 / 4 + 60];
        let (w, h) = self.size;
        RgbImage::from_fn(w, h, |x, y| {
            let shade = ((x * 32 / w.max(1)) + (y * 24 / h.max(1))) as u8;
            Rgb([base[0] + shade, base[1] + shade / 2, base[2]])
        })
    }
}

impl FrameSource for SyntheticFrames {
    fn load(&self, frame: &FrameAnnotation) -> Result<RgbImage, RenderError> {
        Ok(self.raster(&frame.frame_ref))
    }
}
