use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AblationConfig, EvalError, EvalRecord};
use crate::model::TaskKind;
use crate::visual::SamplingMode;

pub const TABLE_HEADERS: [&str; 14] = [
    "Model",
    "Mod",
    "Forecast",
    "Prompt",
    "Speaker Turns",
    "Detailed Utterances",
    "Length",
    "Text",
    "Rect",
    "Point",
    "FPS",
    "Speaking Target",
    "Pronoun Coreference",
    "Mentioned Player",
];

const CHECK: &str = "✓";
const DASH: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub task: TaskKind,
    pub correct: u64,
    pub total: u64,
    /// Four-decimal fraction, e.g. `0.6458`.
    pub accuracy: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ForecastSummary {
    pub samples: u64,
    pub exact_sequences: u64,
    pub matches: u64,
    pub positions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub ablation: AblationConfig,
    pub accuracy: Vec<TaskAccuracy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastSummary>,
    pub errors: usize,
    pub records: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        Report { schema: 1, rows }
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().map(|r| r.errors).sum()
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let report: Report = serde_json::from_str(text)?;
        if report.schema != 1 {
            return Err(EvalError::Ablation(format!("unsupported report schema {}", report.schema)));
        }
        Ok(report)
    }
}

fn flag(on: bool) -> String {
    if on { CHECK } else { DASH }.to_string()
}

/// Two-decimal percentage from the stored exact counts.
fn percent(correct: u64, total: u64) -> String {
    let bp = (2 * correct * 10_000 + total) / (2 * total);
    format!("{}.{:02}", bp / 100, bp % 100)
}

fn row_cells(row: &ReportRow) -> Vec<String> {
    let a = &row.ablation;
    let vision = a.uses_images();
    let forecast = a.forecast_enabled;
    let prompt = vision && a.overlay.any();
    let fps = match (vision, a.sampling) {
        (false, _) => DASH.to_string(),
        (true, SamplingMode::PerSecond { fps }) => format!("{fps:.1}"),
        (true, SamplingMode::Grid6) => "grid6".to_string(),
    };
    let mut cells = vec![
        row.model.clone(),
        a.modality.to_string(),
        flag(forecast),
        flag(prompt),
        flag(forecast && a.forecast_components.speaker_turns),
        flag(forecast && a.forecast_components.detailed_utterances),
        if forecast { a.forecast_k.to_string() } else { DASH.to_string() },
        flag(prompt && a.overlay.text),
        flag(prompt && a.overlay.rect),
        flag(prompt && a.overlay.point),
        fps,
    ];
    for task in TaskKind::ALL {
        cells.push(match row.accuracy.iter().find(|t| t.task == task) {
            Some(t) if t.total > 0 => percent(t.correct, t.total),
            _ => DASH.to_string(),
        });
    }
    cells
}

/// Table body, one vector of cells per row, matching [`TABLE_HEADERS`].
pub fn table_cells(report: &Report) -> Vec<Vec<String>> {
    report.rows.iter().map(row_cells).collect()
}

pub fn render_table(report: &Report) -> String {
    let body = table_cells(report);
    let mut widths: Vec<usize> = TABLE_HEADERS.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let headers: Vec<String> = TABLE_HEADERS.iter().map(|h| h.to_string()).collect();
    let mut out = line(&headers);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

pub fn render_tsv(report: &Report) -> String {
    let mut out = TABLE_HEADERS.join("\t");
    out.push('\n');
    for row in table_cells(report) {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Writes `<stem>.json`, `<stem>.txt` and `<stem>.tsv` under `dir`.
pub fn emit_report(report: &Report, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir)?;
    let json = dir.join(format!("{stem}.json"));
    let txt = dir.join(format!("{stem}.txt"));
    let tsv = dir.join(format!("{stem}.tsv"));
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    fs::write(&json, body)?;
    fs::write(&txt, render_table(report))?;
    fs::write(&tsv, render_tsv(report))?;
    Ok(vec![json, txt, tsv])
}
