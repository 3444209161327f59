//! Model-free backend: answers forecasting instructions with the Markov
//! baseline and referent queries with a recency heuristic.

use std::sync::LazyLock;

use regex::Regex;

use super::{ChatBackend, ChatRequest, InferenceError};
use crate::forecast::{
    markov_from_speakers, parse_instruction, parse_speaker_turns, serialize_speakers, serialize_utterances,
    Decoding, Stage, COARSE_HEADER,
};
use crate::model::PlayerId;

static DIALOGUE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[Player(\d+)\]: ?(.*)$").expect("valid regex"));

pub struct HeuristicBackend {
    seed: u64,
    decoding: Decoding,
}

impl HeuristicBackend {
    pub fn new(seed: u64) -> Self {
        HeuristicBackend {
            seed,
            decoding: Decoding::Greedy,
        }
    }

    pub fn sampled(seed: u64) -> Self {
        HeuristicBackend {
            seed,
            decoding: Decoding::Sampled,
        }
    }

    fn speakers(&self, history: &[PlayerId], k: usize) -> Vec<PlayerId> {
        markov_from_speakers(history, k, self.decoding, self.seed).unwrap_or_default()
    }
}

struct Parsed<'a> {
    dialogue: Vec<(PlayerId, &'a str)>,
    forecast: Vec<PlayerId>,
}

fn parse(user: &str) -> Parsed<'_> {
    let mut dialogue = Vec::new();
    let mut forecast = Vec::new();
    for line in user.lines() {
        if let Some(c) = DIALOGUE_LINE.captures(line) {
            if let Ok(n) = c[1].parse() {
                dialogue.push((PlayerId(n), c.get(2).map_or("", |m| m.as_str())));
            }
        } else if line.starts_with(COARSE_HEADER) {
            forecast = parse_speaker_turns(line).speakers;
        }
    }
    Parsed { dialogue, forecast }
}

/// Addressee guess: the first forecast speaker other than the current one,
/// else the most recent other speaker.
fn referent(p: &Parsed<'_>) -> PlayerId {
    let Some(&(current, _)) = p.dialogue.last() else {
        return PlayerId(0);
    };
    if let Some(next) = p.forecast.iter().find(|s| **s != current) {
        return *next;
    }
    p.dialogue
        .iter()
        .rev()
        .map(|(s, _)| *s)
        .find(|s| *s != current)
        .unwrap_or(PlayerId(if current.0 == 0 { 1 } else { 0 }))
}

impl ChatBackend for HeuristicBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        let parsed = parse(&req.user);
        let history: Vec<PlayerId> = parsed.dialogue.iter().map(|(s, _)| *s).collect();
        let last_line = req.user.lines().last().unwrap_or("");
        match parse_instruction(last_line) {
            Some((Stage::Coarse, k)) => Ok(serialize_speakers(&self.speakers(&history, k))),
            Some((Stage::Fine, k)) => {
                let speakers = if parsed.forecast.is_empty() {
                    self.speakers(&history, k)
                } else {
                    parsed.forecast.iter().copied().take(k).collect()
                };
                let utterances: Vec<(PlayerId, String)> = speakers
                    .into_iter()
                    .map(|s| {
                        let said = parsed.dialogue.iter().rev().find(|(p, _)| *p == s).map(|(_, u)| *u);
                        (s, said.unwrap_or("...").to_string())
                    })
                    .collect();
                Ok(serialize_utterances(&utterances))
            }
            None => Ok(referent(&parsed).label()),
        }
    }
}
