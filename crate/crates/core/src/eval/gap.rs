//! Offline-versus-online accuracy gap measured through the harness with a
//! synthetic oracle whose accuracy depends on whether future turns are
//! visible in its context.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{aggregate_accuracy, Accuracy, EvalError, EvalRecord};
use crate::dataset::{build_online_samples, QueryAnchor, WindowConfig};
use crate::inference::{run_batch, ChatBackend, ChatRequest, ErrorKind, InferenceError};
use crate::model::{AnnotationTrack, PlayerId, TaskKind, Transcript};
use crate::prompt::{assemble, PromptOptions};

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.5758293035489;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub p_offline: f64,
    pub p_online: f64,
    pub n_per_arm: usize,
    pub seed: u64,
    /// Allowed distance between measured and configured gap, in points.
    pub tolerance_points: f64,
    pub jobs: usize,
}

impl Default for GapConfig {
    fn default() -> Self {
        GapConfig {
            p_offline: 0.727,
            p_online: 0.591,
            n_per_arm: 5000,
            seed: 0,
            tolerance_points: 2.0,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n_per_arm: usize,
    pub seed: u64,
    pub configured_offline: f64,
    pub configured_online: f64,
    pub offline: Accuracy,
    pub online: Accuracy,
    pub configured_gap_points: f64,
    pub measured_gap_points: f64,
    pub tolerance_points: f64,
    /// 99% half-width of the difference of two independent proportions.
    pub binomial_bound_points: f64,
    pub within_tolerance: bool,
    /// Measured accuracies as `offline → online` percentages.
    pub arrow: String,
}

impl GapReport {
    pub fn render(&self) -> String {
        format!(
            "offline → online: {} (configured {:.1} → {:.1})\n\
             gap: {:.2} points measured, {:.2} configured, tolerance ±{:.2}, 99% binomial bound ±{:.2}\n\
             n per arm: {}, seed: {}, within tolerance: {}\n",
            self.arrow,
            self.configured_offline * 100.0,
            self.configured_online * 100.0,
            self.measured_gap_points,
            self.configured_gap_points,
            self.tolerance_points,
            self.binomial_bound_points,
            self.n_per_arm,
            self.seed,
            if self.within_tolerance { "yes" } else { "no" },
        )
    }
}

/// Percentage with one decimal, rounded half up from the exact counts.
fn percent1(a: &Accuracy) -> String {
    let tenths = (2 * a.correct * 1000 + a.total) / (2 * a.total);
    format!("{}.{}", tenths / 10, tenths % 10)
}

struct OracleEntry {
    truth: PlayerId,
    players: u32,
    online_lines: usize,
}

/// Answers correctly with `p_offline` when the context holds more dialogue
/// lines than the causal window (i.e. future turns), else with `p_online`.
/// Each draw is seeded from `(seed, sample_id, arm)`.
struct GapOracle {
    entries: HashMap<String, OracleEntry>,
    p_offline: f64,
    p_online: f64,
    seed: u64,
}

fn dialogue_lines(user: &str) -> usize {
    user.lines()
        .filter(|l| l.starts_with("[Player") && l.contains("]: "))
        .count()
}

impl ChatBackend for GapOracle {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        let entry = self.entries.get(&req.sample_id).ok_or_else(|| {
            InferenceError::new(&req.sample_id, ErrorKind::InvalidRequest("unknown sample".into()))
        })?;
        let offline = dialogue_lines(&req.user) > entry.online_lines;
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(req.sample_id.as_bytes());
        h.update([u8::from(offline)]);
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let p = if offline { self.p_offline } else { self.p_online };
        if rng.random::<f64>() < p || entry.players < 2 {
            return Ok(entry.truth.label());
        }
        let shift = rng.random_range(1..entry.players);
        Ok(PlayerId((entry.truth.0 + shift) % entry.players).label())
    }
}

fn check_rates(cfg: &GapConfig) -> Result<(), EvalError> {
    let (off, on) = (cfg.p_offline, cfg.p_online);
    if !(0.0..=1.0).contains(&off) || !(0.0..=1.0).contains(&on) || on > off {
        return Err(EvalError::Gap(format!("need 0 ≤ p_online ≤ p_offline ≤ 1, got ({off}, {on})")));
    }
    if cfg.n_per_arm == 0 {
        return Err(EvalError::InsufficientSamples("n per arm must be positive".into()));
    }
    let n = cfg.n_per_arm as f64;
    for p in [off, on] {
        if p > 0.0 && p < 1.0 && n * p.min(1.0 - p) < 5.0 {
            return Err(EvalError::InsufficientSamples(format!(
                "n = {} gives n·min(p, 1−p) < 5 at p = {p}; the normal bound does not apply",
                cfg.n_per_arm
            )));
        }
    }
    Ok(())
}

/// Runs both arms over the first `n_per_arm` turns (across `transcripts`)
/// that have at least one later turn, each queried as a speaking-target
/// sample whose truth is the next different speaker.
pub fn offline_online_gap_check(transcripts: &[Transcript], cfg: &GapConfig) -> Result<GapReport, EvalError> {
    check_rates(cfg)?;
    let window = WindowConfig::default();
    let mut prompts = Vec::with_capacity(cfg.n_per_arm);
    let mut entries = HashMap::with_capacity(cfg.n_per_arm);
    let mut truths = Vec::with_capacity(cfg.n_per_arm);
    'outer: for t in transcripts {
        let turns = t.turns();
        let track = AnnotationTrack::empty(t.session_id());
        for i in 0..turns.len().saturating_sub(1) {
            if prompts.len() == cfg.n_per_arm {
                break 'outer;
            }
            let truth = turns[i + 1..]
                .iter()
                .map(|x| x.speaker)
                .find(|s| *s != turns[i].speaker)
                .unwrap_or(turns[i + 1].speaker);
            let anchor = QueryAnchor {
                turn_index: i,
                task: TaskKind::SpeakingTarget,
                ground_truth: truth,
                pronoun_or_mention_span: None,
            };
            let sample = build_online_samples(t, &track, &[anchor], &window)
                .map_err(|e| EvalError::Gap(e.to_string()))?
                .remove(0);
            let online = assemble(&sample, &[], None, false, &PromptOptions::default())
                .map_err(|e| EvalError::Gap(e.to_string()))?;
            let future: Vec<String> = sample
                .forecast_target
                .utterances
                .iter()
                .map(|(p, u)| format!("[{p}]: {}", u.replace(['\n', '\r'], " ")))
                .collect();
            let future: Vec<&str> = future.iter().map(String::as_str).collect();
            let offline = online.with_forecast(&future);
            entries.insert(
                sample.sample_id.clone(),
                OracleEntry {
                    truth,
                    players: t.player_count(),
                    online_lines: sample.dialogue_window.len(),
                },
            );
            truths.push((sample.sample_id.clone(), truth));
            prompts.push((online, offline));
        }
    }
    if prompts.len() < cfg.n_per_arm {
        return Err(EvalError::InsufficientSamples(format!(
            "transcripts provide {} queryable turns, {} requested",
            prompts.len(),
            cfg.n_per_arm
        )));
    }

    let oracle = GapOracle {
        entries,
        p_offline: cfg.p_offline,
        p_online: cfg.p_online,
        seed: cfg.seed,
    };
    let to_request = |p: &crate::prompt::RenderedPrompt| ChatRequest::new(&p.sample_id, &p.system_text, &p.user_text);
    let mut measured = Vec::with_capacity(2);
    for arm in [0, 1] {
        let requests: Vec<ChatRequest> = prompts
            .iter()
            .map(|(on, off)| to_request(if arm == 0 { off } else { on }))
            .collect();
        let results = run_batch(&oracle, &requests, cfg.jobs.max(1)).map_err(|e| EvalError::Gap(e.to_string()))?;
        let records: Vec<EvalRecord> = results
            .into_iter()
            .map(|(i, r)| {
                let (id, truth) = &truths[i];
                match r {
                    Ok(text) => EvalRecord::scored(id, TaskKind::SpeakingTarget, text, *truth, 0),
                    Err(e) => EvalRecord::failed(id, TaskKind::SpeakingTarget, *truth, e.to_string()),
                }
            })
            .collect();
        measured.push(aggregate_accuracy(&records, &[TaskKind::SpeakingTarget])?[0].1);
    }
    let (offline, online) = (measured[0], measured[1]);
    let n = cfg.n_per_arm as f64;
    let measured_gap_points = (offline.correct as f64 - online.correct as f64) / n * 100.0;
    let configured_gap_points = (cfg.p_offline - cfg.p_online) * 100.0;
    let var = cfg.p_offline * (1.0 - cfg.p_offline) / n + cfg.p_online * (1.0 - cfg.p_online) / n;
    Ok(GapReport {
        n_per_arm: cfg.n_per_arm,
        seed: cfg.seed,
        configured_offline: cfg.p_offline,
        configured_online: cfg.p_online,
        offline,
        online,
        configured_gap_points,
        measured_gap_points,
        tolerance_points: cfg.tolerance_points,
        binomial_bound_points: Z_99 * var.sqrt() * 100.0,
        within_tolerance: (measured_gap_points - configured_gap_points).abs() <= cfg.tolerance_points + 1e-9,
        arrow: format!("{} → {}", percent1(&offline), percent1(&online)),
    })
}
