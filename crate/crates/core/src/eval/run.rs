use std::path::PathBuf;
use std::time::Instant;

use super::report::ForecastSummary;
use super::{
    aggregate_accuracy, score_forecast_speakers, tasks_present, AblationConfig, EvalError, EvalRecord,
    ForecastOutcome, Report, ReportRow, TaskAccuracy,
};
use crate::dataset::OnlineSample;
use crate::forecast::coarse_to_fine_forecast;
use crate::inference::{bounded_map, ChatBackend, ChatRequest};
use crate::prompt::{assemble, PromptOptions};
use crate::visual::{assign_colors, render_sample_frames, write_sample_images, FrameSource, RenderSpec};

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub jobs: usize,
    /// Report zero latency so repeated runs are byte-identical.
    pub deterministic: bool,
    /// Rendered images go to `<image_dir>/<render key>/`.
    pub image_dir: PathBuf,
    pub prompt: PromptOptions,
    pub max_output_tokens: u32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            jobs: 1,
            deterministic: false,
            image_dir: std::env::temp_dir().join("online-mmsi-images"),
            prompt: PromptOptions::default(),
            max_output_tokens: 64,
        }
    }
}

fn evaluate_one(
    sample: &OnlineSample,
    frames: &dyn FrameSource,
    backend: &dyn ChatBackend,
    ablation: &AblationConfig,
    opts: &EvalOptions,
) -> EvalRecord {
    let fail = |e: String| EvalRecord::failed(&sample.sample_id, sample.task, sample.ground_truth, e);

    let mut images: Vec<PathBuf> = Vec::new();
    let mut colors = None;
    if ablation.uses_images() {
        let spec = RenderSpec {
            overlay: ablation.overlay,
            sampling: ablation.sampling,
        };
        let rendered = match render_sample_frames(sample, frames, &spec) {
            Ok(r) => r,
            Err(e) => return fail(format!("render: {e}")),
        };
        let dir = opts.image_dir.join(ablation.render_key());
        images = match write_sample_images(&sample.sample_id, &rendered, &dir) {
            Ok(p) => p,
            Err(e) => return fail(format!("render: {e}")),
        };
        if ablation.overlay.any() {
            colors = match assign_colors(sample.player_count as usize) {
                Ok(c) => Some(c),
                Err(e) => return fail(format!("render: {e}")),
            };
        }
    }
    let refs: Vec<String> = images.iter().map(|p| p.display().to_string()).collect();
    let mut prompt = match assemble(sample, &refs, colors.as_ref(), false, &opts.prompt) {
        Ok(p) => p,
        Err(e) => return fail(format!("prompt: {e}")),
    };

    let started = Instant::now();
    let mut forecast = None;
    if ablation.forecast_enabled {
        let fopts = ablation.forecast_options();
        let response = match coarse_to_fine_forecast(backend, &prompt, ablation.forecast_k, &fopts) {
            Ok(r) => r,
            Err(e) => return fail(e.to_string()),
        };
        let lines = response.context_lines(&fopts);
        let lines: Vec<&str> = lines.iter().map(String::as_str).collect();
        prompt = prompt.with_forecast(&lines);
        let gold: Vec<_> = sample.forecast_target.speakers.iter().copied().take(ablation.forecast_k).collect();
        forecast = Some(ForecastOutcome {
            score: score_forecast_speakers(&response.parsed.speakers, &gold),
            speakers: response.parsed.speakers,
            parse_status: response.parse_status,
        });
    }

    let request = ChatRequest {
        system: prompt.system_text.clone(),
        user: prompt.user_text.clone(),
        images,
        max_output_tokens: opts.max_output_tokens,
        temperature: 0.0,
        sample_id: sample.sample_id.clone(),
    };
    match backend.complete(&request) {
        Ok(text) => {
            let latency = if opts.deterministic { 0 } else { started.elapsed().as_millis() as u64 };
            let mut record = EvalRecord::scored(&sample.sample_id, sample.task, text, sample.ground_truth, latency);
            record.forecast = forecast;
            record
        }
        Err(e) => {
            let mut record = fail(e.to_string());
            record.forecast = forecast;
            record
        }
    }
}

/// One report row: every sample is rendered, optionally forecast, and
/// answered under `ablation`. Per-sample failures become incorrect records.
pub fn run_evaluation(
    samples: &[OnlineSample],
    frames: &dyn FrameSource,
    backend: &dyn ChatBackend,
    model: &str,
    ablation: &AblationConfig,
    opts: &EvalOptions,
) -> Result<ReportRow, EvalError> {
    ablation.validate()?;
    let records = bounded_map(samples, opts.jobs, |_, s| evaluate_one(s, frames, backend, ablation, opts));
    let tasks = tasks_present(&records);
    let accuracy = aggregate_accuracy(&records, &tasks)?
        .into_iter()
        .map(|(task, a)| TaskAccuracy {
            task,
            correct: a.correct,
            total: a.total,
            accuracy: a.fraction_string(),
        })
        .collect();
    let forecast = ablation.forecast_enabled.then(|| {
        records
            .iter()
            .filter_map(|r| r.forecast.as_ref())
            .fold(ForecastSummary::default(), |mut acc, f| {
                acc.samples += 1;
                acc.exact_sequences += u64::from(f.score.exact_sequence);
                acc.matches += f.score.matches as u64;
                acc.positions += f.score.positions as u64;
                acc
            })
    });
    Ok(ReportRow {
        model: model.to_string(),
        ablation: *ablation,
        accuracy,
        forecast,
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        records,
    })
}

pub fn run_grid(
    samples: &[OnlineSample],
    frames: &dyn FrameSource,
    backend: &dyn ChatBackend,
    model: &str,
    configs: &[AblationConfig],
    opts: &EvalOptions,
) -> Result<Report, EvalError> {
    let rows = configs
        .iter()
        .map(|cfg| run_evaluation(samples, frames, backend, model, cfg, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Report::new(rows))
}
