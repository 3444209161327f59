//! Coarse-to-fine forecasting of the conversation that follows a query.

mod baseline;
mod grammar;
mod orchestrate;

use thiserror::Error;

pub use baseline::{
    markov_from_speakers, markov_speaker_baseline, markov_speaker_forecast, Decoding, TransitionCounts,
};
pub use grammar::{
    parse_forecast, parse_speaker_turns, parse_utterances, serialize_forecast, serialize_speakers,
    serialize_utterances, ParseStatus, SpeakerParse, UtteranceParse, COARSE_HEADER, FINE_HEADER,
};
pub use orchestrate::{
    coarse_instruction, coarse_to_fine_forecast, fine_instruction, parse_instruction, ForecastOptions,
    ForecastResponse, Stage,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForecastError {
    #[error("cannot forecast from an empty window")]
    EmptyWindow,
}
