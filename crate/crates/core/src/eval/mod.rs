//! Referent scoring, accuracy aggregation, ablation runs and reports.

mod ablation;
mod gap;
mod report;
mod run;

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::ParseStatus;
use crate::model::{PlayerId, TaskKind};

pub use ablation::{AblationAxes, AblationConfig, AblationGrid, ForecastComponents, Modality, FORECAST_LENGTHS};
pub use gap::{offline_online_gap_check, GapConfig, GapReport};
pub use report::{emit_report, render_table, render_tsv, table_cells, Report, ReportRow, TaskAccuracy, TABLE_HEADERS};
pub use run::{run_evaluation, run_grid, EvalOptions};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records for task {0}")]
    EmptyTask(TaskKind),
    #[error("invalid ablation: {0}")]
    Ablation(String),
    #[error("gap check: {0}")]
    Gap(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

static PLAYER_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bplayer\s?(\d+)\b").expect("valid regex"));

/// The single player named in a response; `None` when no player or more
/// than one distinct player is named.
pub fn parse_referent(text: &str) -> Option<PlayerId> {
    let distinct: BTreeSet<u32> = PLAYER_TOKEN
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect();
    match distinct.len() {
        1 => distinct.first().copied().map(PlayerId),
        _ => None,
    }
}

/// Speaker-sequence agreement between a forecast and the gold future.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastScore {
    pub exact_sequence: bool,
    pub matches: usize,
    pub positions: usize,
}

impl ForecastScore {
    /// Aligned matches over the longer length; 1.0 when both are empty.
    pub fn per_position(&self) -> f64 {
        if self.positions == 0 {
            1.0
        } else {
            self.matches as f64 / self.positions as f64
        }
    }
}

pub fn score_forecast_speakers(predicted: &[PlayerId], gold: &[PlayerId]) -> ForecastScore {
    ForecastScore {
        exact_sequence: predicted == gold,
        matches: predicted.iter().zip(gold).filter(|(p, g)| p == g).count(),
        positions: predicted.len().max(gold.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastOutcome {
    pub speakers: Vec<PlayerId>,
    pub parse_status: ParseStatus,
    pub score: ForecastScore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub task: TaskKind,
    pub raw_response: String,
    pub predicted: Option<PlayerId>,
    pub ground_truth: PlayerId,
    pub correct: bool,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn scored(
        sample_id: impl Into<String>,
        task: TaskKind,
        raw_response: impl Into<String>,
        ground_truth: PlayerId,
        latency_ms: u64,
    ) -> Self {
        let raw_response = raw_response.into();
        let predicted = parse_referent(&raw_response);
        EvalRecord {
            sample_id: sample_id.into(),
            task,
            correct: predicted == Some(ground_truth),
            raw_response,
            predicted,
            ground_truth,
            latency_ms,
            forecast: None,
            error: None,
        }
    }

    /// A sample that could not be answered; always scored incorrect.
    pub fn failed(sample_id: impl Into<String>, task: TaskKind, ground_truth: PlayerId, error: String) -> Self {
        EvalRecord {
            sample_id: sample_id.into(),
            task,
            raw_response: String::new(),
            predicted: None,
            ground_truth,
            correct: false,
            latency_ms: 0,
            forecast: None,
            error: Some(error),
        }
    }
}

/// Exact `correct / total`; rounding happens only when formatting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    /// Ten-thousandths, rounded half up.
    pub fn basis_points(&self) -> u64 {
        assert!(self.total > 0, "accuracy of an empty set");
        (2 * self.correct * 10_000 + self.total) / (2 * self.total)
    }

    /// Fraction with four decimals, e.g. `0.6470`.
    pub fn fraction_string(&self) -> String {
        let bp = self.basis_points();
        format!("{}.{:04}", bp / 10_000, bp % 10_000)
    }

    /// Percentage with two decimals, e.g. `64.70`.
    pub fn percent_string(&self) -> String {
        let bp = self.basis_points();
        format!("{}.{:02}", bp / 100, bp % 100)
    }

    pub fn value(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Accuracy for each requested task, in the order given.
pub fn aggregate_accuracy(records: &[EvalRecord], tasks: &[TaskKind]) -> Result<Vec<(TaskKind, Accuracy)>, EvalError> {
    tasks
        .iter()
        .map(|task| {
            let (correct, total) = records
                .iter()
                .filter(|r| r.task == *task)
                .fold((0u64, 0u64), |(c, t), r| (c + u64::from(r.correct), t + 1));
            if total == 0 {
                return Err(EvalError::EmptyTask(*task));
            }
            Ok((*task, Accuracy { correct, total }))
        })
        .collect()
}

/// Tasks present in `records`, in canonical order.
pub fn tasks_present(records: &[EvalRecord]) -> Vec<TaskKind> {
    TaskKind::ALL
        .into_iter()
        .filter(|t| records.iter().any(|r| r.task == *t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn referent_parsing() {
        assert_eq!(parse_referent("Player3"), Some(PlayerId(3)));
        assert_eq!(parse_referent("The answer is player3."), Some(PlayerId(3)));
        assert_eq!(parse_referent("PLAYER 3, yes Player3"), Some(PlayerId(3)));
        assert_eq!(parse_referent("Player3 or Player4"), None);
        assert_eq!(parse_referent("nobody"), None);
        assert_eq!(parse_referent("Player30"), Some(PlayerId(30)));
        assert_eq!(parse_referent("Players3"), None);
    }

    #[test]
    fn rounding() {
        assert_eq!(Accuracy { correct: 647, total: 1000 }.fraction_string(), "0.6470");
        assert_eq!(Accuracy { correct: 647, total: 1000 }.percent_string(), "64.70");
        assert_eq!(Accuracy { correct: 5, total: 5 }.fraction_string(), "1.0000");
        assert_eq!(Accuracy { correct: 0, total: 3 }.fraction_string(), "0.0000");
        assert_eq!(Accuracy { correct: 2, total: 3 }.fraction_string(), "0.6667");
        assert_eq!(Accuracy { correct: 1, total: 8 }.percent_string(), "12.50");
        // 0.00005 boundary rounds up
        assert_eq!(Accuracy { correct: 1, total: 20000 }.fraction_string(), "0.0001");
    }

    #[test]
    fn forecast_scores() {
        let ids = |v: &[u32]| v.iter().map(|i| PlayerId(*i)).collect::<Vec<_>>();
        let s = score_forecast_speakers(&ids(&[0, 4, 0, 3]), &ids(&[0, 4, 0, 3]));
        assert!(s.exact_sequence);
        assert_eq!(s.per_position(), 1.0);
        let s = score_forecast_speakers(&ids(&[0, 4]), &ids(&[0, 3, 2, 1]));
        assert!(!s.exact_sequence);
        assert_eq!(s.per_position(), 0.25);
        let s = score_forecast_speakers(&[], &[]);
        assert!(s.exact_sequence);
        assert_eq!(s.per_position(), 1.0);
    }

    #[test]
    fn empty_task_is_an_error() {
        let r = EvalRecord::scored("a", TaskKind::SpeakingTarget, "Player1", PlayerId(1), 0);
        assert!(r.correct);
        assert!(matches!(
            aggregate_accuracy(&[r], &[TaskKind::MentionedPlayer]),
            Err(EvalError::EmptyTask(TaskKind::MentionedPlayer))
        ));
    }

    #[test]
    fn unparseable_is_incorrect() {
        let r = EvalRecord::scored("a", TaskKind::SpeakingTarget, "Player1 or Player2", PlayerId(1), 0);
        assert_eq!(r.predicted, None);
        assert!(!r.correct);
    }
}
