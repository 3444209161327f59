//! Response grammar of the two forecasting stages.
//!
//! Coarse: `The upcoming speakers' turns: Player0, Player4, Player0, Player3`
//! Fine:   `The upcoming utterances: [Player0]: I didn't swap you. [Player4]: ...`

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::ForecastTarget;
use crate::model::PlayerId;

pub const COARSE_HEADER: &str = "The upcoming speakers' turns:";
pub const FINE_HEADER: &str = "The upcoming utterances:";

static COARSE_HEADER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)upcoming\s+speakers['’]?\s*turns\s*:").expect("valid regex"));
static FINE_HEADER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)the\s+upcoming\s+utterances\s*:").expect("valid regex"));
static PLAYER_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bplayer\s?(\d+)\b").expect("valid regex"));
static UTTERANCE_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\[\s*player\s?(\d+)\s*\]\s*:").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Failed,
    Partial,
    Ok,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerParse {
    pub speakers: Vec<PlayerId>,
    pub status: ParseStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceParse {
    pub utterances: Vec<(PlayerId, String)>,
    pub status: ParseStatus,
}

fn player_tokens(text: &str) -> Vec<PlayerId> {
    PLAYER_TOKEN
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok().map(PlayerId))
        .collect()
}

/// Ordered speaker list after the coarse header. Without the header, bare
/// `playerN` tokens are still recovered with status `Partial`.
pub fn parse_speaker_turns(text: &str) -> SpeakerParse {
    if let Some(m) = COARSE_HEADER_RE.find(text) {
        let mut rest = &text[m.end()..];
        if let Some(fine) = FINE_HEADER_RE.find(rest) {
            rest = &rest[..fine.start()];
        }
        return SpeakerParse {
            speakers: player_tokens(rest),
            status: ParseStatus::Ok,
        };
    }
    let speakers = player_tokens(text);
    let status = if speakers.is_empty() { ParseStatus::Failed } else { ParseStatus::Partial };
    SpeakerParse { speakers, status }
}

/// Splits on `[PlayerN]:` markers; text before the first marker is ignored.
pub fn parse_utterances(text: &str) -> UtteranceParse {
    let markers: Vec<(usize, usize, Option<PlayerId>)> = UTTERANCE_MARKER
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            (m.start(), m.end(), c[1].parse().ok().map(PlayerId))
        })
        .collect();
    if markers.is_empty() {
        return UtteranceParse {
            utterances: Vec::new(),
            status: ParseStatus::Failed,
        };
    }
    let mut utterances = Vec::with_capacity(markers.len());
    for (i, (_, body_start, player)) in markers.iter().enumerate() {
        let body_end = markers.get(i + 1).map(|m| m.0).unwrap_or(text.len());
        if let Some(player) = player {
            utterances.push((*player, text[*body_start..body_end].trim().to_string()));
        }
    }
    UtteranceParse {
        utterances,
        status: ParseStatus::Ok,
    }
}

fn single_line(text: &str) -> String {
    text.replace("\r\n", " ").replace(['\n', '\r'], " ").trim().to_string()
}

pub fn serialize_speakers(speakers: &[PlayerId]) -> String {
    if speakers.is_empty() {
        return COARSE_HEADER.to_string();
    }
    let names: Vec<String> = speakers.iter().map(|p| p.label()).collect();
    format!("{COARSE_HEADER} {}", names.join(", "))
}

pub fn serialize_utterances(utterances: &[(PlayerId, String)]) -> String {
    if utterances.is_empty() {
        return String::new();
    }
    let mut out = String::from(FINE_HEADER);
    for (player, text) in utterances {
        out.push_str(&format!(" [{player}]:"));
        let text = single_line(text);
        if !text.is_empty() {
            out.push(' ');
            out.push_str(&text);
        }
    }
    out
}

/// `(coarse_text, fine_text)`; the fine text is empty for an empty target.
pub fn serialize_forecast(target: &ForecastTarget) -> (String, String) {
    (serialize_speakers(&target.speakers), serialize_utterances(&target.utterances))
}

/// Combines both stage outputs into an aligned target, truncated to `k`.
///
/// `Ok` requires a headed coarse list that agrees with the fine speakers.
/// When only one stage parses the other is reconstructed and the status is
/// `Partial`.
pub fn parse_forecast(coarse: &str, fine: &str, k: usize) -> (ForecastTarget, ParseStatus) {
    let speakers = parse_speaker_turns(coarse);
    let utterances = parse_utterances(fine);
    let coarse_k: Vec<PlayerId> = speakers.speakers.iter().copied().take(k).collect();
    if utterances.status == ParseStatus::Ok {
        let target = ForecastTarget::from_utterances(utterances.utterances).truncated(k);
        let status = if speakers.status == ParseStatus::Ok && coarse_k == target.speakers {
            ParseStatus::Ok
        } else {
            ParseStatus::Partial
        };
        return (target, status);
    }
    if speakers.status == ParseStatus::Ok && coarse_k.is_empty() && fine.trim().is_empty() {
        return (ForecastTarget::default(), ParseStatus::Ok);
    }
    if speakers.status != ParseStatus::Failed && !coarse_k.is_empty() {
        let target = ForecastTarget::from_utterances(coarse_k.into_iter().map(|p| (p, String::new())).collect());
        return (target, ParseStatus::Partial);
    }
    (ForecastTarget::default(), ParseStatus::Failed)
}
