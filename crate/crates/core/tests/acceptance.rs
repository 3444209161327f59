//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod support;

use std::collections::HashMap;
use std::fs;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use online_mmsi::dataset::{build_forecast_target, build_online_samples, ForecastTarget, OnlineSample, WindowConfig};
use online_mmsi::eval::{aggregate_accuracy, run_grid, table_cells, AblationGrid, Accuracy, EvalOptions, EvalRecord, TABLE_HEADERS};
use online_mmsi::forecast::{markov_speaker_baseline, parse_speaker_turns, parse_utterances, serialize_forecast, ParseStatus};
use online_mmsi::inference::{run_batch, ChatRequest, EndpointClient, EndpointConfig, HeuristicBackend};
use online_mmsi::io::{read_jsonl, Strictness};
use online_mmsi::model::{PlayerId, TaskKind};
use online_mmsi::synthetic::{generate_session, seeded, SessionSpec, SyntheticFrames};
use online_mmsi::visual::{grid6_indices, render_overlay, assign_colors};
use support::{cli, fixtures, golden_dir, path_str, scenes, Reply, StubServer};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Same corpus for the causality and oracle criteria.
fn causal_corpus() -> Vec<(online_mmsi::synthetic::SyntheticSession, WindowConfig)> {
    let mut rng = seeded(7);
    (0..1000)
        .map(|i| {
            let spec = SessionSpec {
                players: rng.random_range(2..=6),
                turns: rng.random_range(1..=200),
                annotation_fps: 1.0,
                overlap_probability: 0.2,
                ..Default::default()
            };
            let cfg = WindowConfig {
                d_turns: [1, 5, 10][i % 3],
                k_forecast: [0, 2, 4, 8][(i / 3) % 4],
                ..Default::default()
            };
            (generate_session(&format!("c{i}"), &spec, &mut rng), cfg)
        })
        .collect()
}

fn ac1_causality() -> Outcome {
    let generated = Instant::now();
    let corpus = causal_corpus();
    let generation = generated.elapsed();
    let started = Instant::now();
    let mut samples = 0usize;
    let mut violations = 0usize;
    for (s, cfg) in &corpus {
        for sample in build_online_samples(&s.transcript, &s.track, &s.anchors, cfg).map_err(|e| e.to_string())? {
            samples += 1;
            let turn_ok = sample.dialogue_window.iter().all(|t| t.end <= sample.query_time_t);
            let frame_ok = sample.frame_window.iter().all(|f| f.timestamp <= sample.query_time_t);
            if !(turn_ok && frame_ok) {
                violations += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(violations == 0, || format!("{violations} of {samples} samples see the future"))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.2?}"))?;
    Ok(format!(
        "{} transcripts, {samples} samples, 0 violations, built and checked in {elapsed:.2?} (corpus generated in {generation:.2?})",
        corpus.len()
    ))
}

/// Index arithmetic written independently of the builder.
fn oracle(s: &online_mmsi::synthetic::SyntheticSession, i: usize, cfg: &WindowConfig) -> (Vec<usize>, Vec<usize>, f64, Vec<f64>) {
    let turns = s.transcript.turns();
    let lo = if i + 1 >= cfg.d_turns { i + 1 - cfg.d_turns } else { 0 };
    let window: Vec<usize> = (lo..=i).collect();
    let hi = (i + 1 + cfg.k_forecast).min(turns.len());
    let future: Vec<usize> = (i + 1..hi).collect();
    let mut q = turns[i].end;
    for &j in &window {
        if turns[j].end > q {
            q = turns[j].end;
        }
    }
    let t0 = turns[lo].start;
    let frames = s.track.frames().iter().map(|f| f.timestamp).filter(|&t| t >= t0 && t <= q).collect();
    (window, future, q, frames)
}

fn ac2_window_oracle() -> Outcome {
    let corpus = causal_corpus();
    let (mut checked, mut mismatches) = (0usize, 0usize);
    for (s, cfg) in &corpus {
        let turns = s.transcript.turns();
        let samples = build_online_samples(&s.transcript, &s.track, &s.anchors, cfg).map_err(|e| e.to_string())?;
        for (sample, anchor) in samples.iter().zip(&s.anchors) {
            let (window, future, q, frames) = oracle(s, anchor.turn_index, cfg);
            let want_window: Vec<_> = window.iter().map(|&j| turns[j].clone()).collect();
            let want_future: Vec<PlayerId> = future.iter().map(|&j| turns[j].speaker).collect();
            let want_utts: Vec<(PlayerId, String)> =
                future.iter().map(|&j| (turns[j].speaker, turns[j].utterance.clone())).collect();
            let direct = build_forecast_target(&s.transcript, anchor.turn_index, cfg.k_forecast).map_err(|e| e.to_string())?;
            let got_frames: Vec<f64> = sample.frame_window.iter().map(|f| f.timestamp).collect();
            let same = sample.dialogue_window == want_window
                && sample.forecast_target.speakers == want_future
                && sample.forecast_target.utterances == want_utts
                && direct == sample.forecast_target
                && sample.query_time_t == q
                && got_frames == frames;
            checked += 1;
            if !same {
                mismatches += 1;
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} of {checked} samples disagree with the oracle"))?;
    Ok(format!("{checked} samples, 100% agreement"))
}

fn ac3_grammar() -> Outcome {
    let words = ["yes", "no", "I", "was", "the", "Seer", "swap", "who", "did", "you", "wolf", "maybe", "okay?", "..."];
    let mut rng = seeded(3);
    for n in 0..500 {
        let k = rng.random_range(1..=8);
        let players = rng.random_range(2..=12u32);
        let utterances: Vec<(PlayerId, String)> = (0..k)
            .map(|_| {
                let len = rng.random_range(0..=8);
                let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())]).collect();
                (PlayerId(rng.random_range(0..players)), text.join(" "))
            })
            .collect();
        let target = ForecastTarget::from_utterances(utterances);
        let (coarse, fine) = serialize_forecast(&target);
        let s = parse_speaker_turns(&coarse);
        let u = parse_utterances(&fine);
        ensure(s.status == ParseStatus::Ok && u.status == ParseStatus::Ok, || format!("target {n}: status not ok"))?;
        ensure(s.speakers == target.speakers && u.utterances == target.utterances, || {
            format!("target {n}: round trip lost data: {coarse:?} / {fine:?}")
        })?;
    }
    let coarse = parse_speaker_turns("The upcoming speakers' turns: Player0, Player4, Player0, Player3");
    let want = [0, 4, 0, 3].map(PlayerId).to_vec();
    ensure(coarse.speakers == want && coarse.status == ParseStatus::Ok, || format!("{coarse:?}"))?;
    let fine = parse_utterances(
        "The upcoming utterances: [Player0]: I didn't swap you. [Player4]: I was the Insomniac. I did not wake up \
         as myself. So I... [Player0]: Yes. [Player3]: Who did you swap?",
    );
    let speakers: Vec<PlayerId> = fine.utterances.iter().map(|(p, _)| *p).collect();
    ensure(fine.utterances.len() == 4 && speakers == want, || format!("{fine:?}"))?;
    ensure(fine.utterances[3].1 == "Who did you swap?", || format!("{:?}", fine.utterances[3]))?;
    Ok("500 random targets round-trip with ok status; example strings parse to [0,4,0,3] with 4 utterances".into())
}

fn ac4_render() -> Outcome {
    let first = scenes::all();
    let second = scenes::all();
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        ensure(scenes::png_bytes(a) == scenes::png_bytes(b), || format!("{name}: runs differ"))?;
        let path = golden_dir().join(name);
        let golden = image::open(&path).map_err(|e| format!("{}: {e}", path.display()))?.to_rgb8();
        ensure(golden.as_raw() == a.as_raw() && golden.dimensions() == a.dimensions(), || {
            format!("{name}: differs from golden")
        })?;
    }
    let (image, mut ann) = scenes::annotated_frame();
    ann.persons.clear();
    let out = render_overlay(&image, &ann, &assign_colors(3).map_err(|e| e.to_string())?, &Default::default())
        .map_err(|e| e.to_string())?;
    ensure(scenes::png_bytes(&out) == scenes::png_bytes(&image), || "empty annotation changed pixels".into())?;
    let idx = grid6_indices(30);
    ensure(idx == [0, 6, 12, 17, 23, 29], || format!("grid6(30) = {idx:?}"))?;
    Ok(format!("{} goldens pixel-exact, empty frame unchanged, grid6(30) = {idx:?}", first.len()))
}

fn ac5_metrics() -> Outcome {
    let mut rng = seeded(5);
    let tasks = TaskKind::ALL;
    let records: Vec<EvalRecord> = (0..10_000)
        .map(|i| {
            let task = tasks[rng.random_range(0..3)];
            let truth = PlayerId(rng.random_range(0..6));
            match rng.random_range(0..10) {
                0 => EvalRecord::failed(format!("r{i}"), task, truth, "boom".into()),
                1 => EvalRecord::scored(format!("r{i}"), task, "no idea", truth, 0),
                _ => EvalRecord::scored(format!("r{i}"), task, format!("Player{}", rng.random_range(0..6)), truth, 0),
            }
        })
        .collect();
    let mut brute: HashMap<TaskKind, (u64, u64)> = HashMap::new();
    for r in &records {
        let e = brute.entry(r.task).or_default();
        e.1 += 1;
        let right = r.error.is_none() && online_mmsi::eval::parse_referent(&r.raw_response) == Some(r.ground_truth);
        e.0 += u64::from(right);
    }
    let agg = aggregate_accuracy(&records, &tasks).map_err(|e| e.to_string())?;
    for (task, acc) in &agg {
        let (c, t) = brute[task];
        ensure(acc.correct == c && acc.total == t, || format!("{task}: {acc:?} vs brute ({c}, {t})"))?;
    }
    let a = Accuracy { correct: 647, total: 1000 };
    ensure(a.fraction_string() == "0.6470", || a.fraction_string())?;
    let mut shuffled = records.clone();
    let mut srng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        shuffled.shuffle(&mut srng);
        let again = aggregate_accuracy(&shuffled, &tasks).map_err(|e| e.to_string())?;
        ensure(again == agg, || "shuffle changed the aggregate".into())?;
    }
    Ok("10000 records match a brute recount, 647/1000 = 0.6470, 100 shuffles invariant".into())
}

fn replay_run(out: &std::path::Path) -> Result<i32, String> {
    let f = fixtures();
    Ok(cli(&[
        "--deterministic",
        "--jobs",
        "4",
        "eval",
        "--samples",
        &path_str(&f.join("dataset/samples.jsonl")),
        "--synthetic-frames",
        "160x90",
        "--backend",
        "replay",
        "--fixture",
        &path_str(&f.join("replay.json")),
        "--model-label",
        "replay",
        "--out",
        &path_str(out),
    ]))
}

fn ac6_replay() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let code = replay_run(dir)?;
        ensure(code == 0, || format!("exit code {code}"))?;
    }
    let report = fs::read(a.join("report.json")).map_err(|e| e.to_string())?;
    ensure(report == fs::read(b.join("report.json")).map_err(|e| e.to_string())?, || "reruns differ".into())?;
    let v: Value = serde_json::from_slice(&report).map_err(|e| e.to_string())?;
    let records = v["rows"][0]["records"].as_array().map(Vec::len).unwrap_or(0);
    ensure(records == 50, || format!("{records} records"))?;
    let tsv = fs::read_to_string(a.join("report.tsv")).map_err(|e| e.to_string())?;
    let frozen = fs::read_to_string(fixtures().join("expected_report.tsv")).map_err(|e| e.to_string())?;
    ensure(tsv == frozen, || format!("accuracy drifted:\n{tsv}"))?;
    let row = tsv.lines().nth(1).unwrap_or_default().split('\t').rev().take(3).collect::<Vec<_>>();
    Ok(format!("exit 0, 50 records, identical reruns, frozen accuracies {row:?}"))
}

fn gap_json(args: &[&str]) -> Result<Value, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = path_str(tmp.path());
    let mut argv = vec!["--deterministic", "--seed", "0", "gap-check"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--n", "5000", "--out", &out]);
    let code = cli(&argv);
    let v: Value = serde_json::from_slice(&fs::read(tmp.path().join("gap.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(code == 0, || format!("exit {code}: {v}"))?;
    Ok(v)
}

fn ac7_gap() -> Outcome {
    let v = gap_json(&["--p-offline", "0.727", "--p-online", "0.591"])?;
    let gap = v["measured_gap_points"].as_f64().unwrap_or(f64::NAN);
    ensure((gap - 13.6).abs() <= 2.0, || format!("gap {gap:.2}"))?;
    let extreme = gap_json(&["--p-offline", "1.0", "--p-online", "0.0"])?;
    let full = extreme["measured_gap_points"].as_f64().unwrap_or(f64::NAN);
    ensure(full == 100.0, || format!("extreme gap {full}"))?;
    Ok(format!("{} gap {gap:.2} points (13.6 ± 2.0); (1.0, 0.0) gives {full:.1}", v["arrow"].as_str().unwrap_or("")))
}

fn ac8_baseline() -> Outcome {
    let (d, k) = (10, 4);
    let spec = SessionSpec { players: 5, turns: 200, annotation_fps: 0.0, dominant_transition: 0.7, ..Default::default() };
    let mut rng = seeded(8);
    let (mut hits, mut positions) = (0u64, 0u64);
    for i in 0..20 {
        let s = generate_session(&format!("m{i}"), &spec, &mut rng);
        let turns = s.transcript.turns();
        for a in d - 1..turns.len() - k {
            let predicted = markov_speaker_baseline(&turns[a + 1 - d..=a], k, 0).map_err(|e| e.to_string())?;
            for (j, p) in predicted.iter().enumerate() {
                hits += u64::from(*p == turns[a + 1 + j].speaker);
                positions += 1;
            }
        }
    }
    let acc = hits as f64 / positions as f64;
    let chance = 1.0 / spec.players as f64;
    ensure(acc >= 1.5 * chance, || format!("accuracy {acc:.3} vs chance {chance:.3}"))?;
    Ok(format!("per-position accuracy {acc:.3} = {:.2}× chance {chance:.2}", acc / chance))
}

fn ac9_grid() -> Outcome {
    let grid = AblationGrid::from_toml(
        "[axes]\nforecast_k = [2, 4, 8]\noverlay = [\"text\", \"text+rect\", \"text+rect+point\"]\n",
    )
    .map_err(|e| e.to_string())?;
    let configs = grid.expand().map_err(|e| e.to_string())?;
    let samples: Vec<OnlineSample> = read_jsonl(
        std::io::BufReader::new(fs::File::open(fixtures().join("dataset/samples.jsonl")).map_err(|e| e.to_string())?),
        online_mmsi::cli::SAMPLE_FIELDS,
        Strictness::Strict,
    )
    .map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = EvalOptions { jobs: 4, deterministic: true, image_dir: tmp.path().to_path_buf(), ..Default::default() };
    let report = run_grid(&samples[..6], &SyntheticFrames { size: (64, 36) }, &HeuristicBackend::new(0), "baseline", &configs, &opts)
        .map_err(|e| e.to_string())?;
    ensure(report.rows.len() == 9, || format!("{} rows", report.rows.len()))?;
    let col = |name: &str| TABLE_HEADERS.iter().position(|h| *h == name).expect("known header");
    let cells = table_cells(&report);
    let lengths: Vec<&str> = cells.iter().map(|r| r[col("Length")].as_str()).collect();
    ensure(lengths == ["2", "2", "2", "4", "4", "4", "8", "8", "8"], || format!("lengths {lengths:?}"))?;
    let flags: Vec<String> = cells
        .iter()
        .take(3)
        .map(|r| format!("{}{}{}", r[col("Text")], r[col("Rect")], r[col("Point")]))
        .collect();
    ensure(flags == ["✓--", "✓✓-", "✓✓✓"], || format!("flags {flags:?}"))?;
    ensure(cells.iter().all(|r| r.len() == TABLE_HEADERS.len()), || "ragged rows".into())?;
    Ok("9 rows; Length 2/4/8 by Text/Rect/Point columns".into())
}

fn ac10_concurrency() -> Outcome {
    let mut notes = Vec::new();
    for limit in [1usize, 3, 8] {
        let server = StubServer::start(|body, _| {
            let text = support::user_text(body);
            let idx: usize = text.trim_start_matches("q").parse().unwrap_or(0);
            let reply = if idx % 10 == 0 { Reply::status(500) } else { Reply::content("Player1") };
            reply.after(Duration::from_millis(15))
        });
        let client = EndpointClient::new(EndpointConfig {
            base_url: server.base_url.clone(),
            timeout_s: 5.0,
            max_retries: 0,
            backoff_base_s: 0.0,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let requests: Vec<ChatRequest> = (0..100).map(|i| ChatRequest::new(format!("s{i}"), "", format!("q{i}"))).collect();
        let results = run_batch(&client, &requests, limit).map_err(|e| e.to_string())?;
        let failed = results.iter().filter(|(_, r)| r.is_err()).count();
        let ordered = results.iter().enumerate().all(|(i, (j, _))| i == *j);
        let peak = server.peak_in_flight();
        ensure(results.len() == 100 && ordered, || format!("limit {limit}: {} results", results.len()))?;
        ensure(failed == 10, || format!("limit {limit}: {failed} failures"))?;
        ensure(peak <= limit, || format!("limit {limit}: peak {peak}"))?;
        notes.push(format!("limit {limit} peak {peak}"));
    }
    Ok(format!("100 results per batch with 10 injected failures; {}", notes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("AC1 causality suite", ac1_causality),
        ("AC2 window/forecast oracle", ac2_window_oracle),
        ("AC3 grammar round-trip", ac3_grammar),
        ("AC4 render determinism", ac4_render),
        ("AC5 metric oracle", ac5_metrics),
        ("AC6 end-to-end replay", ac6_replay),
        ("AC7 offline to online gap", ac7_gap),
        ("AC8 baseline signal", ac8_baseline),
        ("AC9 ablation grid shape", ac9_grid),
        ("AC10 concurrency contract", ac10_concurrency),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
