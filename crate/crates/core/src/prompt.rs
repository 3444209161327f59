//! Text prompt assembly: color-mapping system prompt, serialized dialogue
//! history, the fixed task queries and the forecasting query.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::OnlineSample;
use crate::model::{TaskKind, Turn};
use crate::visual::ColorMap;

pub const SPEAKING_TARGET_QUERY: &str = "Identify which player the speaker is talking to?";
pub const PRONOUN_COREFERENCE_QUERY: &str = "Determine which player a pronoun refers to?";
pub const MENTIONED_PLAYER_QUERY: &str = "Predict which player is mentioned by name?";
pub const FORECAST_QUERY: &str =
    "Predict the upcoming speakers' turns and then predict the upcoming utterance of each speaker.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("dialogue window is empty")]
    EmptyWindow,
    #[error("sample `{sample_id}` has {frames} frames but {images} images were supplied")]
    ImageMismatch {
        sample_id: String,
        frames: usize,
        images: usize,
    },
}

/// Everything sent to a backend for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    #[serde(rename = "system")]
    pub system_text: String,
    #[serde(rename = "user")]
    pub user_text: String,
    #[serde(rename = "images")]
    pub image_refs: Vec<String>,
    pub sample_id: String,
}

fn is_query_line(line: &str) -> bool {
    line == FORECAST_QUERY || TaskKind::ALL.iter().any(|t| line == build_task_prompt(*t))
}

impl RenderedPrompt {
    /// The user text without its trailing query lines.
    pub fn context(&self) -> &str {
        let mut end = self.user_text.len();
        loop {
            let head = &self.user_text[..end];
            let (rest, last) = match head.rfind('\n') {
                Some(i) => (i, &head[i + 1..]),
                None => (0, head),
            };
            if end == 0 || !is_query_line(last) {
                return head;
            }
            end = rest;
        }
    }

    /// The same prompt with forecast lines placed between the context and the
    /// query lines.
    pub fn with_forecast(&self, forecast_lines: &[&str]) -> RenderedPrompt {
        let lines: Vec<&str> = forecast_lines.iter().copied().filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return self.clone();
        }
        let context = self.context();
        let queries = self.user_text[context.len()..].trim_start_matches('\n');
        let mut user = String::from(context);
        for line in lines {
            if !user.is_empty() {
                user.push('\n');
            }
            user.push_str(line);
        }
        if !queries.is_empty() {
            user.push('\n');
            user.push_str(queries);
        }
        RenderedPrompt {
            user_text: user,
            ..self.clone()
        }
    }
}

/// "The red, blue, and green colors correspond to Player0, Player1, and Player2, respectively."
pub fn build_system_prompt(colors: &ColorMap) -> String {
    let names: Vec<String> = colors.iter().map(|(_, c)| c.name.clone()).collect();
    let players: Vec<String> = colors.iter().map(|(p, _)| p.label()).collect();
    if names.len() == 1 {
        return format!("The {} color corresponds to {}.", names[0], players[0]);
    }
    format!(
        "The {} colors correspond to {}, respectively.",
        join_list(&names),
        join_list(&players)
    )
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn single_line(text: &str) -> String {
    text.replace("\r\n", " ").replace(['\n', '\r'], " ")
}

fn dialogue_line(turn: &Turn) -> String {
    format!("[{}]: {}", turn.speaker, single_line(&turn.utterance))
}

/// One `[PlayerN]: utterance` line per turn, newlines flattened to spaces.
pub fn serialize_dialogue(window: &[Turn]) -> Result<String, PromptError> {
    if window.is_empty() {
        return Err(PromptError::EmptyWindow);
    }
    Ok(window.iter().map(dialogue_line).collect::<Vec<_>>().join("\n"))
}

pub fn build_task_prompt(task: TaskKind) -> &'static str {
    match task {
        TaskKind::SpeakingTarget => SPEAKING_TARGET_QUERY,
        TaskKind::PronounCoreference => PRONOUN_COREFERENCE_QUERY,
        TaskKind::MentionedPlayer => MENTIONED_PLAYER_QUERY,
    }
}

pub fn build_forecast_prompt() -> &'static str {
    FORECAST_QUERY
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    /// Wrap the queried pronoun in asterisks on the final dialogue line.
    pub highlight_pronoun: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions { highlight_pronoun: true }
    }
}

fn highlight(utterance: &str, (start, end): (usize, usize)) -> String {
    let chars: Vec<char> = utterance.chars().collect();
    let (start, end) = (start.min(chars.len()), end.min(chars.len()));
    let mut out: String = chars[..start].iter().collect();
    out.push('*');
    out.extend(&chars[start..end]);
    out.push('*');
    out.extend(&chars[end..]);
    out
}

/// Final dialogue line as shown to the model: masked for mentioned-player
/// samples, pronoun-highlighted for coreference samples.
fn query_line(sample: &OnlineSample, opts: &PromptOptions) -> String {
    let turn = sample.query_turn();
    let text = match (sample.task, sample.span) {
        (TaskKind::MentionedPlayer, _) => match &sample.masked_query_utterance {
            Some(masked) => masked.clone(),
            None => turn.utterance.clone(),
        },
        (TaskKind::PronounCoreference, Some(span)) if opts.highlight_pronoun => highlight(&turn.utterance, span),
        _ => turn.utterance.clone(),
    };
    format!("[{}]: {}", turn.speaker, single_line(&text))
}

/// Builds the full prompt for one sample.
///
/// `overlay_colors` is `Some` when the images carry colored overlays; the
/// color-mapping sentence is then the system prompt. The user text is the
/// dialogue history (its last line being the query utterance), the optional
/// forecasting query, and the task query last.
pub fn assemble(
    sample: &OnlineSample,
    images: &[String],
    overlay_colors: Option<&ColorMap>,
    include_forecast_query: bool,
    opts: &PromptOptions,
) -> Result<RenderedPrompt, PromptError> {
    if sample.dialogue_window.is_empty() {
        return Err(PromptError::EmptyWindow);
    }
    let frames = sample.frame_window.len();
    if !images.is_empty() && (frames == 0 || images.len() > frames) {
        return Err(PromptError::ImageMismatch {
            sample_id: sample.sample_id.clone(),
            frames,
            images: images.len(),
        });
    }
    let window = &sample.dialogue_window;
    let mut lines: Vec<String> = window[..window.len() - 1].iter().map(dialogue_line).collect();
    lines.push(query_line(sample, opts));
    if include_forecast_query {
        lines.push(FORECAST_QUERY.to_string());
    }
    lines.push(build_task_prompt(sample.task).to_string());

    let system_text = match overlay_colors {
        Some(colors) if !images.is_empty() => build_system_prompt(colors),
        _ => String::new(),
    };
    Ok(RenderedPrompt {
        system_text,
        user_text: lines.join("\n"),
        image_refs: images.to_vec(),
        sample_id: sample.sample_id.clone(),
    })
}
