//! Command-line front end.
//!
//! Exit codes: 0 success, 1 completed with per-sample errors (or a failed
//! gap check), 2 usage or configuration error, 3 I/O or input-data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{build_online_samples, export_sft_records, FrameHorizon, OnlineSample, QueryAnchor, WindowConfig, ANCHOR_FIELDS};
use crate::eval::{
    emit_report, offline_online_gap_check, render_table, render_tsv, run_grid, AblationConfig, AblationGrid,
    EvalOptions, GapConfig, Modality, Report,
};
use crate::inference::{
    ChatBackend, EndpointClient, EndpointConfig, HeuristicBackend, InferenceBackend, RecordingBackend, ReplayBackend,
};
use crate::io::{read_annotations, read_jsonl, read_transcript, write_jsonl, FormatError, Strictness};
use crate::model::{AnnotationTrack, TaskKind, Transcript};
use crate::prompt::{assemble, PromptOptions, RenderedPrompt};
use crate::synthetic::{generate_session, seeded, SessionSpec, SyntheticFrames};
use crate::visual::{
    assign_colors, render_sample_frames, write_sample_images, DirFrames, FrameSource, OverlayOptions, RenderSpec,
    SamplingMode,
};

pub const SAMPLE_FIELDS: &[&str] = &[
    "sample_id",
    "session_id",
    "player_count",
    "source_resolution",
    "task",
    "anchor_index",
    "dialogue_window",
    "frame_window",
    "query_time_t",
    "ground_truth",
    "span",
    "masked_query_utterance",
    "forecast_target",
];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

fn io_err(context: impl std::fmt::Display) -> impl FnOnce(io::Error) -> CliError {
    move |e| CliError::Io(format!("{context}: {e}"))
}

fn format_err(context: impl std::fmt::Display) -> impl FnOnce(FormatError) -> CliError {
    move |e| CliError::Io(format!("{context}: {e}"))
}

#[derive(Parser, Debug)]
#[command(name = "online-mmsi", version, about = "Online multi-party social interaction harness")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Zero manifest timestamps and latencies for byte-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reject unknown fields in input files.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build causal samples (and optionally a fine-tuning export).
    BuildDataset(BuildArgs),
    /// Render visual prompts and text prompts for samples.
    Render(RenderArgs),
    /// Evaluate samples against a backend over an ablation grid.
    Eval(EvalArgs),
    /// Measure the offline-to-online gap with a synthetic oracle.
    GapCheck(GapArgs),
    /// Re-render a saved report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// Transcript file, or a directory of `<session>.jsonl` files.
    #[arg(long)]
    transcripts: PathBuf,
    /// Annotation file, or a directory of `<session>.json` files.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Anchor file, or a directory of `<session>.jsonl` files.
    #[arg(long)]
    anchors: PathBuf,
    /// Keep only anchors of these tasks (repeatable).
    #[arg(long)]
    task: Vec<TaskKind>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Fixed frame horizon in seconds instead of the windowed turns' span.
    #[arg(long)]
    frame_seconds: Option<f64>,
    /// Also write text-only fine-tuning records to `sft.jsonl`.
    #[arg(long)]
    sft: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct FrameArgs {
    /// Directory holding the frame images named by `frame_ref`.
    #[arg(long, conflicts_with = "synthetic_frames")]
    frames_dir: Option<PathBuf>,
    /// Generate placeholder frames of this size, e.g. `160x90`.
    #[arg(long)]
    synthetic_frames: Option<String>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    samples: PathBuf,
    #[command(flatten)]
    frames: FrameArgs,
    #[arg(long)]
    prompt_text: bool,
    #[arg(long)]
    prompt_rect: bool,
    #[arg(long)]
    prompt_point: bool,
    /// `fps:<rate>` or `grid6`.
    #[arg(long)]
    mode: Option<SamplingMode>,
    /// Append the forecasting query before the task query.
    #[arg(long)]
    forecast_query: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BackendKind {
    Endpoint,
    Replay,
    Baseline,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Samples written by `build-dataset`.
    #[arg(long, alias = "prompts")]
    samples: PathBuf,
    #[command(flatten)]
    frames: FrameArgs,
    #[arg(long, value_enum)]
    backend: BackendKind,
    /// Replay fixture (digest → response JSON map).
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Ablation grid TOML; defaults to the full configuration.
    #[arg(long)]
    ablation: Option<PathBuf>,
    /// Single-row overrides of the base configuration.
    #[arg(long)]
    modality: Option<Modality>,
    #[arg(long)]
    no_forecast: bool,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Label for the report's Model column.
    #[arg(long)]
    model_label: Option<String>,
    /// Save every backend answer as a replay fixture.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(long, default_value_t = 0.727)]
    p_offline: f64,
    #[arg(long, default_value_t = 0.591)]
    p_online: f64,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ReportFormat {
    Table,
    Json,
    Tsv,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
}

/// Values accepted in the `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    deterministic: Option<bool>,
    strict: Option<bool>,
    max_output_tokens: Option<u32>,
    window: Option<WindowConfig>,
    prompt: Option<PromptOptions>,
    endpoint: Option<EndpointConfig>,
}

/// Effective settings after merging file and flags.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    seed: u64,
    /// Does not change outputs, so it stays out of the config digest.
    #[serde(skip)]
    jobs: usize,
    deterministic: bool,
    strict: bool,
    max_output_tokens: u32,
    window: WindowConfig,
    prompt: PromptOptions,
    endpoint: EndpointConfig,
}

impl Settings {
    fn resolve(global: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &global.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let default_jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let jobs = global.jobs.or(file.jobs).unwrap_or(default_jobs);
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(Settings {
            seed: global.seed.or(file.seed).unwrap_or(0),
            jobs,
            deterministic: global.deterministic || file.deterministic.unwrap_or(false),
            strict: global.strict || file.strict.unwrap_or(false),
            max_output_tokens: file.max_output_tokens.unwrap_or(64),
            window: file.window.unwrap_or_default(),
            prompt: file.prompt.unwrap_or_default(),
            endpoint: file.endpoint.unwrap_or_default(),
        })
    }

    fn strictness(&self) -> Strictness {
        if self.strict {
            Strictness::Strict
        } else {
            Strictness::Lenient
        }
    }
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    /// Input name → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub parameters: Value,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now(deterministic: bool) -> u64 {
    if deterministic {
        return 0;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct ManifestBuilder {
    command: &'static str,
    settings: Settings,
    inputs: BTreeMap<String, String>,
    parameters: Value,
    started: u64,
}

impl ManifestBuilder {
    fn new(command: &'static str, settings: &Settings) -> Self {
        ManifestBuilder {
            command,
            settings: settings.clone(),
            inputs: BTreeMap::new(),
            parameters: Value::Null,
            started: now(settings.deterministic),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let mut files = Vec::new();
        if path.is_dir() {
            for entry in sorted_dir(path)? {
                if entry.is_file() {
                    files.push(entry);
                }
            }
        } else {
            files.push(path.to_path_buf());
        }
        for file in files {
            let bytes = fs::read(&file).map_err(io_err(file.display()))?;
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            self.inputs.insert(format!("{role}/{name}"), sha256_hex(&bytes));
        }
        Ok(())
    }

    fn write(self, out: &Path) -> Result<(), CliError> {
        let config = serde_json::to_vec(&self.settings).expect("settings serialize");
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            seed: self.settings.seed,
            config_digest: sha256_hex(&config),
            inputs: self.inputs,
            parameters: self.parameters,
            started_unix: self.started,
            finished_unix: now(self.settings.deterministic),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = out.join("manifest.json");
        fs::write(&path, text).map_err(io_err(path.display()))
    }
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir.display()))?;
    entries.sort();
    Ok(entries)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_err(path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent.display()))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

struct SessionInput {
    transcript: Transcript,
    track: AnnotationTrack,
    anchors: Vec<QueryAnchor>,
}

fn load_sessions(args: &BuildArgs, mode: Strictness) -> Result<Vec<SessionInput>, CliError> {
    let pairs: Vec<(PathBuf, Option<PathBuf>, PathBuf)> = if args.transcripts.is_dir() {
        let mut out = Vec::new();
        for t in sorted_dir(&args.transcripts)? {
            if t.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let s = stem(&t);
            let ann = args.annotations.as_ref().map(|d| d.join(format!("{s}.json")));
            out.push((t, ann, args.anchors.join(format!("{s}.jsonl"))));
        }
        out
    } else {
        vec![(args.transcripts.clone(), args.annotations.clone(), args.anchors.clone())]
    };
    let mut sessions = Vec::with_capacity(pairs.len());
    for (t, ann, anchors) in pairs {
        let session = stem(&t);
        let transcript = read_transcript(open(&t)?, &session, None, mode).map_err(format_err(t.display()))?;
        let track = match ann {
            Some(path) if path.exists() => {
                let mut track = read_annotations(open(&path)?, mode).map_err(format_err(path.display()))?;
                if track.session_id() != session {
                    log::warn!("{}: track session `{}` renamed to `{session}`", path.display(), track.session_id());
                    track = AnnotationTrack::new(session.clone(), track.source_resolution(), track.frames().to_vec())
                        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                }
                track
            }
            Some(path) => {
                log::warn!("{}: missing, session `{session}` has no frames", path.display());
                AnnotationTrack::empty(session.clone())
            }
            None => AnnotationTrack::empty(session.clone()),
        };
        let anchors: Vec<QueryAnchor> =
            read_jsonl(open(&anchors)?, ANCHOR_FIELDS, mode).map_err(format_err(anchors.display()))?;
        sessions.push(SessionInput { transcript, track, anchors });
    }
    Ok(sessions)
}

fn build_dataset(args: &BuildArgs, settings: &Settings) -> Result<i32, CliError> {
    let mut window = settings.window;
    if let Some(d) = args.d {
        window.d_turns = d;
    }
    if let Some(k) = args.k {
        window.k_forecast = k;
    }
    if let Some(s) = args.frame_seconds {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::Usage("--frame-seconds must be non-negative".into()));
        }
        window.frame_horizon = FrameHorizon::Seconds(s);
    }
    if window.d_turns == 0 {
        return Err(CliError::Usage("--d must be at least 1".into()));
    }
    let mut manifest = ManifestBuilder::new("build-dataset", settings);
    manifest.input("transcripts", &args.transcripts)?;
    manifest.input("anchors", &args.anchors)?;
    if let Some(a) = &args.annotations {
        if a.exists() {
            manifest.input("annotations", a)?;
        }
    }
    let mut samples = Vec::new();
    for session in load_sessions(args, settings.strictness())? {
        let anchors: Vec<QueryAnchor> = session
            .anchors
            .into_iter()
            .filter(|a| args.task.is_empty() || args.task.contains(&a.task))
            .collect();
        let built = build_online_samples(&session.transcript, &session.track, &anchors, &window)
            .map_err(|e| CliError::Io(format!("session `{}`: {e}", session.transcript.session_id())))?;
        samples.extend(built);
    }
    fs::create_dir_all(&args.out).map_err(io_err(args.out.display()))?;
    let path = args.out.join("samples.jsonl");
    let mut w = create(&path)?;
    write_jsonl(&mut w, &samples).map_err(format_err(path.display()))?;
    w.flush().map_err(io_err(path.display()))?;
    if args.sft {
        let prompts = samples
            .iter()
            .map(|s| assemble(s, &[], None, true, &settings.prompt))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Io(e.to_string()))?;
        let path = args.out.join("sft.jsonl");
        let mut w = create(&path)?;
        export_sft_records(&samples, &prompts, &mut w).map_err(format_err(path.display()))?;
        w.flush().map_err(io_err(path.display()))?;
    }
    manifest.parameters = json!({
        "d": window.d_turns,
        "k": window.k_forecast,
        "frame_horizon": window.frame_horizon,
        "tasks": args.task.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        "samples": samples.len(),
        "sft": args.sft,
    });
    manifest.write(&args.out)?;
    eprintln!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(0)
}

fn parse_size(text: &str) -> Result<(u32, u32), CliError> {
    let bad = || CliError::Usage(format!("bad frame size `{text}`, expected WxH"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h): (u32, u32) = (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn frame_source(args: &FrameArgs) -> Result<Option<Box<dyn FrameSource>>, CliError> {
    if let Some(dir) = &args.frames_dir {
        return Ok(Some(Box::new(DirFrames::new(dir.clone()))));
    }
    if let Some(size) = &args.synthetic_frames {
        return Ok(Some(Box::new(SyntheticFrames { size: parse_size(size)? })));
    }
    Ok(None)
}

fn load_samples(path: &Path, settings: &Settings) -> Result<Vec<OnlineSample>, CliError> {
    read_jsonl(open(path)?, SAMPLE_FIELDS, settings.strictness()).map_err(format_err(path.display()))
}

fn render(args: &RenderArgs, settings: &Settings) -> Result<i32, CliError> {
    let samples = load_samples(&args.samples, settings)?;
    let overlay = OverlayOptions::new(args.prompt_text, args.prompt_rect, args.prompt_point);
    let spec = RenderSpec {
        overlay,
        sampling: args.mode.unwrap_or_default(),
    };
    let source = frame_source(&args.frames)?
        .ok_or_else(|| CliError::Usage("render needs --frames-dir or --synthetic-frames".into()))?;
    let mut manifest = ManifestBuilder::new("render", settings);
    manifest.input("samples", &args.samples)?;
    let key = AblationConfig { overlay, sampling: spec.sampling, ..Default::default() }.render_key();
    let image_dir = args.out.join("images").join(&key);
    let results = crate::inference::bounded_map(&samples, settings.jobs, |_, sample| {
        let images = render_sample_frames(sample, source.as_ref(), &spec)
            .and_then(|imgs| write_sample_images(&sample.sample_id, &imgs, &image_dir))
            .map_err(|e| format!("sample `{}`: {e}", sample.sample_id))?;
        let refs: Vec<String> = images
            .iter()
            .map(|p| p.strip_prefix(&args.out).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect();
        let colors = if overlay.any() {
            Some(assign_colors(sample.player_count as usize).map_err(|e| e.to_string())?)
        } else {
            None
        };
        assemble(sample, &refs, colors.as_ref(), args.forecast_query, &settings.prompt).map_err(|e| e.to_string())
    });
    let mut prompts: Vec<RenderedPrompt> = Vec::with_capacity(results.len());
    let mut errors = 0;
    for r in results {
        match r {
            Ok(p) => prompts.push(p),
            Err(e) => {
                errors += 1;
                log::error!("{e}");
            }
        }
    }
    let path = args.out.join("prompts.jsonl");
    let mut w = create(&path)?;
    write_jsonl(&mut w, &prompts).map_err(format_err(path.display()))?;
    w.flush().map_err(io_err(path.display()))?;
    manifest.parameters = json!({
        "overlay": overlay.tag(),
        "mode": spec.sampling,
        "forecast_query": args.forecast_query,
        "prompts": prompts.len(),
        "errors": errors,
    });
    manifest.write(&args.out)?;
    eprintln!("rendered {} prompts ({errors} errors) to {}", prompts.len(), args.out.display());
    Ok(if errors > 0 { 1 } else { 0 })
}

fn backend(args: &EvalArgs, settings: &Settings) -> Result<InferenceBackend, CliError> {
    Ok(match args.backend {
        BackendKind::Baseline => InferenceBackend::Baseline(HeuristicBackend::new(settings.seed)),
        BackendKind::Replay => {
            let path = args
                .fixture
                .as_ref()
                .ok_or_else(|| CliError::Usage("--backend replay needs --fixture".into()))?;
            InferenceBackend::Replay(ReplayBackend::load(path).map_err(|e| CliError::Io(e.to_string()))?)
        }
        BackendKind::Endpoint => {
            let mut cfg = settings.endpoint.clone();
            if let Some(url) = &args.base_url {
                cfg.base_url = url.clone();
            }
            if let Some(model) = &args.model {
                cfg.model_name = model.clone();
            }
            InferenceBackend::Endpoint(EndpointClient::new(cfg).map_err(|e| CliError::Usage(e.to_string()))?)
        }
    })
}

fn eval(args: &EvalArgs, settings: &Settings) -> Result<i32, CliError> {
    let mut grid = match &args.ablation {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path.display()))?;
            AblationGrid::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => AblationGrid::default(),
    };
    if let Some(m) = args.modality {
        grid.base.modality = m;
    }
    if args.no_forecast {
        grid.base.forecast_enabled = false;
    }
    let configs = grid.expand().map_err(|e| CliError::Usage(e.to_string()))?;
    let samples = load_samples(&args.samples, settings)?;
    let frames = frame_source(&args.frames)?;
    if frames.is_none() && configs.iter().any(AblationConfig::uses_images) {
        return Err(CliError::Usage(
            "visual configurations need --frames-dir or --synthetic-frames (or --modality L)".into(),
        ));
    }
    let frames: Box<dyn FrameSource> = frames.unwrap_or_else(|| Box::new(SyntheticFrames { size: (1, 1) }));
    let backend = backend(args, settings)?;
    let label = args.model_label.clone().unwrap_or_else(|| backend.model_label());

    let mut manifest = ManifestBuilder::new("eval", settings);
    manifest.input("samples", &args.samples)?;
    if let Some(f) = &args.fixture {
        manifest.input("fixture", f)?;
    }
    if let Some(a) = &args.ablation {
        manifest.input("ablation", a)?;
    }
    let opts = EvalOptions {
        jobs: settings.jobs,
        deterministic: settings.deterministic,
        image_dir: args.out.join("images"),
        prompt: settings.prompt,
        max_output_tokens: settings.max_output_tokens,
    };
    let report = match &args.record {
        Some(path) => {
            let recorder = RecordingBackend::new(backend);
            let report = run_grid(&samples, frames.as_ref(), &recorder as &dyn ChatBackend, &label, &configs, &opts)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut text = serde_json::to_string_pretty(&recorder.into_entries()).expect("map serializes");
            text.push('\n');
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent.display()))?;
            }
            fs::write(path, text).map_err(io_err(path.display()))?;
            report
        }
        None => run_grid(&samples, frames.as_ref(), &backend, &label, &configs, &opts)
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    emit_report(&report, &args.out, "report").map_err(|e| CliError::Io(e.to_string()))?;
    manifest.parameters = json!({
        "backend": format!("{:?}", args.backend).to_lowercase(),
        "rows": report.rows.len(),
        "samples": samples.len(),
        "errors": report.error_count(),
        "ablations": configs,
    });
    manifest.write(&args.out)?;
    print!("{}", render_table(&report));
    let errors = report.error_count();
    if errors > 0 {
        eprintln!("{errors} sample(s) failed; see report.json");
        return Ok(1);
    }
    Ok(0)
}

fn gap_check(args: &GapArgs, settings: &Settings) -> Result<i32, CliError> {
    let cfg = GapConfig {
        p_offline: args.p_offline,
        p_online: args.p_online,
        n_per_arm: args.n,
        seed: settings.seed,
        tolerance_points: args.tolerance,
        jobs: settings.jobs,
    };
    // 200-turn sessions yield 199 queryable turns each.
    let spec = SessionSpec { turns: 200, annotation_fps: 0.0, ..Default::default() };
    let sessions = args.n.div_ceil(199).max(1);
    let mut rng = seeded(settings.seed);
    let transcripts: Vec<Transcript> = (0..sessions)
        .map(|i| generate_session(&format!("gap{i:04}"), &spec, &mut rng).transcript)
        .collect();
    let report = offline_online_gap_check(&transcripts, &cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::create_dir_all(&args.out).map_err(io_err(args.out.display()))?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    let path = args.out.join("gap.json");
    fs::write(&path, json).map_err(io_err(path.display()))?;
    let path = args.out.join("gap.txt");
    fs::write(&path, report.render()).map_err(io_err(path.display()))?;
    let mut manifest = ManifestBuilder::new("gap-check", settings);
    manifest.parameters = serde_json::to_value(cfg).expect("config serializes");
    manifest.write(&args.out)?;
    print!("{}", report.render());
    Ok(if report.within_tolerance { 0 } else { 1 })
}

fn report(args: &ReportArgs) -> Result<i32, CliError> {
    let text = fs::read_to_string(&args.input).map_err(io_err(args.input.display()))?;
    let report = Report::from_json(&text).map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let out = match args.format {
        ReportFormat::Table => render_table(&report),
        ReportFormat::Tsv => render_tsv(&report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            s
        }
    };
    io::stdout().write_all(out.as_bytes()).map_err(io_err("stdout"))?;
    Ok(0)
}

/// Parses `argv` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = Settings::resolve(&cli.global).and_then(|settings| match &cli.command {
        Command::BuildDataset(a) => build_dataset(a, &settings),
        Command::Render(a) => render(a, &settings),
        Command::Eval(a) => eval(a, &settings),
        Command::GapCheck(a) => gap_check(a, &settings),
        Command::Report(a) => report(a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
