//! Supervised fine-tuning export: one JSON line per sample whose target is the
//! referent answer followed by the serialized future conversation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DatasetError, OnlineSample};
use crate::forecast::serialize_forecast;
use crate::io::FormatError;
use crate::model::TaskKind;
use crate::prompt::RenderedPrompt;

/// Trainer settings carried in the export header. Nothing in this crate
/// trains; downstream tooling reads these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyperparameters {
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub lora_target_modules: Vec<String>,
    pub learning_rate: LearningRates,
    pub per_device_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub epochs: u32,
    pub optimizer: String,
    pub lr_scheduler: String,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub precision: String,
    pub frame_size: (u32, u32),
    pub video_fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub speaking_target: f64,
    pub pronoun_coreference: f64,
    pub mentioned_player: f64,
}

impl LearningRates {
    pub fn for_task(&self, task: TaskKind) -> f64 {
        match task {
            TaskKind::SpeakingTarget => self.speaking_target,
            TaskKind::PronounCoreference => self.pronoun_coreference,
            TaskKind::MentionedPlayer => self.mentioned_player,
        }
    }
}

impl Default for TrainingHyperparameters {
    fn default() -> Self {
        TrainingHyperparameters {
            lora_rank: 512,
            lora_alpha: 16,
            lora_dropout: 0.05,
            lora_target_modules: vec!["q_proj".into(), "v_proj".into()],
            learning_rate: LearningRates {
                speaking_target: 1e-4,
                pronoun_coreference: 1e-3,
                mentioned_player: 1e-4,
            },
            per_device_batch_size: 1,
            gradient_accumulation_steps: 4,
            epochs: 5,
            optimizer: "adamw_torch_fused".into(),
            lr_scheduler: "linear".into(),
            weight_decay: 0.01,
            max_grad_norm: 0.3,
            precision: "bf16".into(),
            frame_size: (640, 360),
            video_fps: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftHeader {
    pub record_type: String,
    pub schema: u32,
    pub records: usize,
    pub hyperparameters: TrainingHyperparameters,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftInput {
    pub system: String,
    pub user: String,
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub sample_id: String,
    pub task: TaskKind,
    pub input: SftInput,
    pub target: String,
}

/// `PlayerN`, then the coarse and fine forecast lines when there is a future.
pub fn forecast_answer_target(sample: &OnlineSample) -> String {
    let answer = sample.ground_truth.label();
    if sample.forecast_target.is_empty() {
        return answer;
    }
    let (coarse, fine) = serialize_forecast(&sample.forecast_target);
    format!("{answer}\n{coarse}\n{fine}")
}

fn pair(sample: &OnlineSample, prompt: &RenderedPrompt) -> Result<SftRecord, DatasetError> {
    if sample.sample_id != prompt.sample_id {
        return Err(DatasetError::SampleIdMismatch {
            sample: sample.sample_id.clone(),
            prompt: prompt.sample_id.clone(),
        });
    }
    Ok(SftRecord {
        sample_id: sample.sample_id.clone(),
        task: sample.task,
        input: SftInput {
            system: prompt.system_text.clone(),
            user: prompt.user_text.clone(),
            images: prompt.image_refs.clone(),
        },
        target: forecast_answer_target(sample),
    })
}

/// Writes a header line followed by one record per sample. Validation of
/// every pair happens before anything is written.
pub fn export_sft_records(
    samples: &[OnlineSample],
    prompts: &[RenderedPrompt],
    mut writer: impl Write,
) -> Result<usize, FormatError> {
    if samples.len() != prompts.len() {
        return Err(FormatError::Dataset(DatasetError::Misaligned {
            samples: samples.len(),
            prompts: prompts.len(),
        }));
    }
    let records = samples
        .iter()
        .zip(prompts)
        .map(|(s, p)| pair(s, p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(FormatError::Dataset)?;
    let header = SftHeader {
        record_type: "header".into(),
        schema: 1,
        records: records.len(),
        hyperparameters: TrainingHyperparameters::default(),
    };
    serde_json::to_writer(&mut writer, &header).map_err(|e| FormatError::Json { line: 1, source: e })?;
    writer.write_all(b"\n")?;
    for (i, record) in records.iter().enumerate() {
        serde_json::to_writer(&mut writer, record).map_err(|e| FormatError::Json { line: i + 2, source: e })?;
        writer.write_all(b"\n")?;
    }
    Ok(records.len())
}
