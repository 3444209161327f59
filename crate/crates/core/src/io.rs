//! Readers and writers for the on-disk corpus formats.
//!
//! Transcripts and anchors are line-oriented JSON; annotation tracks are one
//! JSON document per session. All fields are mandatory. Unknown fields are
//! rejected in [`Strictness::Strict`] and logged otherwise.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::model::{AnnotationTrack, ModelError, Transcript, Turn};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{location}: unknown field `{field}`")]
    UnknownField { location: String, field: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    Strict,
    #[default]
    Lenient,
}

const TURN_FIELDS: &[&str] = &["speaker", "utterance", "start", "end"];
const TRACK_FIELDS: &[&str] = &["session_id", "source_resolution", "frames"];
const FRAME_FIELDS: &[&str] = &["timestamp", "frame_ref", "persons"];
const PERSON_FIELDS: &[&str] = &["player", "bbox", "keypoints"];

fn check_fields(
    value: &Value,
    allowed: &[&str],
    location: &str,
    mode: Strictness,
) -> Result<(), FormatError> {
    let Some(map) = value.as_object() else {
        return Ok(());
    };
    for key in map.keys() {
        if allowed.contains(&key.as_str()) {
            continue;
        }
        match mode {
            Strictness::Strict => {
                return Err(FormatError::UnknownField {
                    location: location.to_string(),
                    field: key.clone(),
                })
            }
            Strictness::Lenient => log::warn!("{location}: ignoring unknown field `{key}`"),
        }
    }
    Ok(())
}

/// Parses one JSON value per non-blank line, checking top-level field names.
pub fn read_jsonl<T: DeserializeOwned>(
    reader: impl BufRead,
    allowed: &[&str],
    mode: Strictness,
) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let value: Value =
            serde_json::from_str(&line).map_err(|source| FormatError::Json { line: lineno, source })?;
        check_fields(&value, allowed, &format!("line {lineno}"), mode)?;
        let item = serde_json::from_value(value)
            .map_err(|source| FormatError::Json { line: lineno, source })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> Result<(), FormatError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|source| FormatError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a turn-per-line transcript. When `player_count` is `None` it is
/// inferred as one more than the largest speaker index.
pub fn read_transcript(
    reader: impl BufRead,
    session_id: &str,
    player_count: Option<u32>,
    mode: Strictness,
) -> Result<Transcript, FormatError> {
    let turns: Vec<Turn> = read_jsonl(reader, TURN_FIELDS, mode)?;
    let inferred = turns.iter().map(|t| t.speaker.0 + 1).max().unwrap_or(1);
    Ok(Transcript::new(session_id, player_count.unwrap_or(inferred), turns)?)
}

pub fn write_transcript(w: impl Write, transcript: &Transcript) -> Result<(), FormatError> {
    write_jsonl(w, transcript.turns())
}

pub fn read_annotations(mut reader: impl BufRead, mode: Strictness) -> Result<AnnotationTrack, FormatError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let value: Value = serde_json::from_str(&text).map_err(|source| FormatError::Json { line: 1, source })?;
    check_fields(&value, TRACK_FIELDS, "annotations", mode)?;
    if let Some(frames) = value.get("frames").and_then(Value::as_array) {
        for (fi, frame) in frames.iter().enumerate() {
            check_fields(frame, FRAME_FIELDS, &format!("frames[{fi}]"), mode)?;
            if let Some(persons) = frame.get("persons").and_then(Value::as_array) {
                for (pi, person) in persons.iter().enumerate() {
                    check_fields(person, PERSON_FIELDS, &format!("frames[{fi}].persons[{pi}]"), mode)?;
                }
            }
        }
    }
    serde_json::from_value(value).map_err(|source| FormatError::Json { line: 1, source })
}

pub fn write_annotations(mut w: impl Write, track: &AnnotationTrack) -> Result<(), FormatError> {
    serde_json::to_writer(&mut w, track).map_err(|source| FormatError::Json { line: 0, source })?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_lines_parse_and_infer_players() {
        let text = "{\"speaker\": 0, \"utterance\": \"hi\", \"start\": 0.0, \"end\": 1.5}\n\n\
                    {\"speaker\": 3, \"utterance\": \"hey\", \"start\": 2.0, \"end\": 3.0}\n";
        let t = read_transcript(text.as_bytes(), "g1", None, Strictness::Strict).unwrap();
        assert_eq!(t.player_count(), 4);
        assert_eq!(t.turns()[1].utterance, "hey");
    }

    #[test]
    fn unknown_fields_strict_vs_lenient() {
        let text = "{\"speaker\": 0, \"utterance\": \"hi\", \"start\": 0.0, \"end\": 1.0, \"mood\": 1}\n";
        assert!(matches!(
            read_transcript(text.as_bytes(), "g", None, Strictness::Strict),
            Err(FormatError::UnknownField { .. })
        ));
        assert!(read_transcript(text.as_bytes(), "g", None, Strictness::Lenient).is_ok());
    }

    #[test]
    fn missing_field_is_an_error() {
        let text = "{\"speaker\": 0, \"utterance\": \"hi\", \"start\": 0.0}\n";
        assert!(matches!(
            read_transcript(text.as_bytes(), "g", None, Strictness::Lenient),
            Err(FormatError::Json { line: 1, .. })
        ));
    }

    #[test]
    fn nested_unknown_annotation_field() {
        let kp = vec!["[1,1,1]"; 17].join(",");
        let doc = format!(
            "{{\"session_id\":\"g\",\"source_resolution\":[64,36],\"frames\":[{{\"timestamp\":0.0,\
             \"frame_ref\":\"a.png\",\"persons\":[{{\"player\":0,\"bbox\":[1,1,4,4],\"keypoints\":[{kp}],\"track\":9}}]}}]}}"
        );
        let err = read_annotations(doc.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(err.to_string().contains("frames[0].persons[0]"), "{err}");
        let track = read_annotations(doc.as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!(track.frames()[0].persons.len(), 1);
    }
}
