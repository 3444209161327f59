//! Two sequential backend calls: speakers first, then utterances conditioned
//! on the predicted speakers.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::grammar::{
    parse_forecast, parse_speaker_turns, parse_utterances, serialize_speakers, serialize_utterances, ParseStatus,
};
use crate::dataset::ForecastTarget;
use crate::inference::{ChatBackend, ChatRequest, InferenceError};
use crate::prompt::RenderedPrompt;

static INSTRUCTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^Predict the next (\d+) (speakers' turns|utterances, one per upcoming speaker)\.$").expect("valid regex")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    Fine,
}

pub fn coarse_instruction(k: usize) -> String {
    format!("Predict the next {k} speakers' turns.")
}

pub fn fine_instruction(k: usize) -> String {
    format!("Predict the next {k} utterances, one per upcoming speaker.")
}

/// Recognizes a stage instruction line and its horizon.
pub fn parse_instruction(line: &str) -> Option<(Stage, usize)> {
    let c = INSTRUCTION.captures(line.trim())?;
    let k = c[1].parse().ok()?;
    let stage = if c[2].starts_with("speakers") { Stage::Coarse } else { Stage::Fine };
    Some((stage, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastOptions {
    pub speaker_turns: bool,
    pub detailed_utterances: bool,
    /// Withhold images from both forecasting calls.
    pub text_only: bool,
    pub max_output_tokens: u32,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        ForecastOptions {
            speaker_turns: true,
            detailed_utterances: true,
            text_only: false,
            max_output_tokens: 256,
        }
    }
}

/// One line of the forecast log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub sample_id: String,
    pub raw_coarse: String,
    pub raw_fine: String,
    pub parsed: ForecastTarget,
    pub parse_status: ParseStatus,
}

impl ForecastResponse {
    fn empty(sample_id: &str) -> Self {
        ForecastResponse {
            sample_id: sample_id.to_string(),
            raw_coarse: String::new(),
            raw_fine: String::new(),
            parsed: ForecastTarget::default(),
            parse_status: ParseStatus::Ok,
        }
    }

    /// Lines inserted ahead of the task query for the enabled components.
    pub fn context_lines(&self, opts: &ForecastOptions) -> Vec<String> {
        let mut lines = Vec::new();
        if self.parse_status == ParseStatus::Failed {
            return lines;
        }
        if opts.speaker_turns {
            lines.push(serialize_speakers(&self.parsed.speakers));
        }
        let said: Vec<_> = self.parsed.utterances.iter().filter(|(_, u)| !u.is_empty()).cloned().collect();
        if opts.detailed_utterances && !said.is_empty() {
            lines.push(serialize_utterances(&said));
        }
        lines
    }
}

fn request(prompt: &RenderedPrompt, extra: &[&str], opts: &ForecastOptions) -> ChatRequest {
    let mut user = prompt.context().to_string();
    for line in extra {
        if !user.is_empty() {
            user.push('\n');
        }
        user.push_str(line);
    }
    let images = if opts.text_only { Vec::new() } else { prompt.image_refs.clone() };
    ChatRequest {
        system: prompt.system_text.clone(),
        user,
        images: images.into_iter().map(Into::into).collect(),
        max_output_tokens: opts.max_output_tokens,
        temperature: 0.0,
        sample_id: prompt.sample_id.clone(),
    }
}

/// Runs the enabled stages for one prompt. A coarse stage that yields no
/// speakers degrades to a single fine call, reported as `Partial`.
pub fn coarse_to_fine_forecast(
    backend: &(impl ChatBackend + ?Sized),
    prompt: &RenderedPrompt,
    k: usize,
    opts: &ForecastOptions,
) -> Result<ForecastResponse, InferenceError> {
    let mut out = ForecastResponse::empty(&prompt.sample_id);
    if k == 0 || !(opts.speaker_turns || opts.detailed_utterances) {
        return Ok(out);
    }
    let fine_line = fine_instruction(k);

    if !opts.speaker_turns {
        out.raw_fine = backend.complete(&request(prompt, &[&fine_line], opts))?;
        let fine = parse_utterances(&out.raw_fine);
        out.parsed = ForecastTarget::from_utterances(fine.utterances).truncated(k);
        out.parse_status = fine.status;
        return Ok(out);
    }

    out.raw_coarse = backend.complete(&request(prompt, &[&coarse_instruction(k)], opts))?;
    let coarse = parse_speaker_turns(&out.raw_coarse);
    let speakers: Vec<_> = coarse.speakers.iter().copied().take(k).collect();

    if !opts.detailed_utterances {
        out.parsed = ForecastTarget::from_utterances(speakers.into_iter().map(|p| (p, String::new())).collect());
        out.parse_status = coarse.status;
        return Ok(out);
    }

    if coarse.status == ParseStatus::Failed || speakers.is_empty() {
        out.raw_fine = backend.complete(&request(prompt, &[&fine_line], opts))?;
        let (parsed, status) = parse_forecast(&out.raw_coarse, &out.raw_fine, k);
        out.parsed = parsed;
        out.parse_status = status.min(ParseStatus::Partial);
        if coarse.status != ParseStatus::Failed && speakers.is_empty() && out.raw_fine.trim().is_empty() {
            // A headed but empty speaker list is a valid "nobody speaks" forecast.
            out.parse_status = ParseStatus::Ok;
        }
        return Ok(out);
    }

    let coarse_line = serialize_speakers(&speakers);
    out.raw_fine = backend.complete(&request(prompt, &[&coarse_line, &fine_line], opts))?;
    let (parsed, status) = parse_forecast(&coarse_line, &out.raw_fine, k);
    out.parsed = parsed;
    out.parse_status = status.min(coarse.status);
    Ok(out)
}
