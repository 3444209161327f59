mod support;

use std::fs;

use serde_json::Value;
use support::{cli, fixtures, path_str};

fn build(out: &std::path::Path, extra: &[&str]) -> i32 {
    let s = fixtures().join("sessions");
    let mut args = vec![
        "--deterministic".to_string(),
        "build-dataset".into(),
        "--transcripts".into(),
        path_str(&s.join("transcripts")),
        "--annotations".into(),
        path_str(&s.join("annotations")),
        "--anchors".into(),
        path_str(&s.join("anchors")),
        "--out".into(),
        path_str(out),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    cli(&refs)
}

fn replay(out: &std::path::Path, frames: &str, extra: &[&str]) -> i32 {
    let f = fixtures();
    let mut args = vec![
        "--deterministic".to_string(),
        "--jobs".into(),
        "2".into(),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    args.extend([
        "eval".into(),
        "--samples".into(),
        path_str(&f.join("dataset/samples.jsonl")),
        "--synthetic-frames".into(),
        frames.into(),
        "--backend".into(),
        "replay".into(),
        "--fixture".into(),
        path_str(&f.join("replay.json")),
        "--out".into(),
        path_str(out),
    ]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    cli(&refs)
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&[]), 2);
    assert_eq!(cli(&["eval", "--backend", "nope", "--samples", "x", "--out", "y"]), 2);
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["--jobs", "0", "report", "--in", "x"]), 2);
}

#[test]
fn build_dataset_defaults_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(build(&a, &["--sft"]), 0);
    assert_eq!(build(&b, &["--sft"]), 0);
    for f in ["samples.jsonl", "sft.jsonl", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["parameters"]["d"], 10);
    assert_eq!(manifest["parameters"]["k"], 4);
    assert_eq!(manifest["started_unix"], 0);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 9);
    // The bundled samples were produced by the same command.
    assert_eq!(
        fs::read(a.join("samples.jsonl")).unwrap(),
        fs::read(fixtures().join("dataset/samples.jsonl")).unwrap()
    );

    let sft = fs::read_to_string(a.join("sft.jsonl")).unwrap();
    let lines: Vec<Value> = sft.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 51);
    assert_eq!(lines[0]["record_type"], "header");
    assert_eq!(lines[0]["records"], 50);
    assert!(lines[1]["input"]["user"].as_str().unwrap().contains(online_mmsi::prompt::FORECAST_QUERY));
}

#[test]
fn task_filter_and_window_flags() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(build(tmp.path(), &["--task", "mentioned_player", "--d", "3", "--k", "2"]), 0);
    let text = fs::read_to_string(tmp.path().join("samples.jsonl")).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["task"], "mentioned_player");
        assert!(v["dialogue_window"].as_array().unwrap().len() <= 3);
        assert!(v["forecast_target"]["speakers"].as_array().unwrap().len() <= 2);
    }
    assert_eq!(build(tmp.path(), &["--d", "0"]), 2);
}

#[test]
fn replay_report_formats_agree() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(replay(tmp.path(), "160x90", &[]), 0);
    let json_path = tmp.path().join("report.json");
    let report = online_mmsi::eval::Report::from_json(&fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(online_mmsi::eval::render_table(&report), fs::read_to_string(tmp.path().join("report.txt")).unwrap());
    assert_eq!(online_mmsi::eval::render_tsv(&report), fs::read_to_string(tmp.path().join("report.tsv")).unwrap());
    // Table cells agree with the exact counts in the JSON.
    let cells = online_mmsi::eval::table_cells(&report);
    for (row, cells) in report.rows.iter().zip(&cells) {
        for acc in &row.accuracy {
            let col = online_mmsi::eval::TABLE_HEADERS
                .iter()
                .position(|h| h.to_lowercase().replace(' ', "_") == acc.task.as_str())
                .unwrap();
            let pct: f64 = cells[col].parse().unwrap();
            assert!((pct - 100.0 * acc.correct as f64 / acc.total as f64).abs() <= 0.005 + 1e-9);
        }
    }
    let manifest: Value = serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eval");
    assert!(manifest["inputs"]["fixture/replay.json"].is_string());
}

#[test]
fn replay_misses_exit_one_and_still_report() {
    let tmp = tempfile::tempdir().unwrap();
    // Different pixels, so no request matches the fixture.
    assert_eq!(replay(tmp.path(), "80x45", &[]), 1);
    let report: Value = serde_json::from_slice(&fs::read(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"][0]["errors"], 50);
    assert_eq!(report["rows"][0]["records"].as_array().unwrap().len(), 50);
}

#[test]
fn config_file_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nmystery = true\n").unwrap();
    assert_eq!(replay(&tmp.path().join("o"), "160x90", &["--config", &path_str(&bad)]), 2);
    let good = tmp.path().join("good.toml");
    fs::write(&good, "seed = 4\njobs = 3\n[window]\nd_turns = 10\n").unwrap();
    assert_eq!(replay(&tmp.path().join("g"), "160x90", &["--config", &path_str(&good)]), 0);
    let manifest: Value = serde_json::from_slice(&fs::read(tmp.path().join("g/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
}

#[test]
fn missing_inputs_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_str(tmp.path());
    assert_eq!(cli(&["report", "--in", &format!("{out}/none.json")]), 3);
    assert_eq!(
        cli(&["eval", "--samples", &format!("{out}/none.jsonl"), "--backend", "baseline", "--modality", "L", "--out", &out]),
        3
    );
}

#[test]
fn render_writes_relative_image_refs() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = path_str(&fixtures().join("dataset/samples.jsonl"));
    let out = path_str(tmp.path());
    let args = ["--deterministic", "render", "--samples", &samples, "--synthetic-frames", "64x36", "--prompt-rect", "--mode", "grid6", "--out", &out];
    assert_eq!(cli(&args), 0);
    let prompts = fs::read_to_string(tmp.path().join("prompts.jsonl")).unwrap();
    assert_eq!(prompts.lines().count(), 50);
    for line in prompts.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let images = v["images"].as_array().unwrap();
        assert_eq!(images.len(), 1);
        let rel = images[0].as_str().unwrap();
        assert!(rel.starts_with("images/rect_grid6/"), "{rel}");
        let img = image::open(tmp.path().join(rel)).unwrap();
        assert_eq!((img.width(), img.height()), (3 * 64, 2 * 36));
        assert!(v["system"].as_str().unwrap().starts_with("The red"));
    }
    assert_eq!(cli(&["render", "--samples", &samples, "--out", &out]), 2);
}

#[test]
fn gap_check_exit_reflects_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_str(tmp.path());
    assert_eq!(cli(&["--deterministic", "gap-check", "--n", "2000", "--tolerance", "0", "--p-offline", "0.7", "--p-online", "0.5", "--out", &out]), 1);
    let v: Value = serde_json::from_slice(&fs::read(tmp.path().join("gap.json")).unwrap()).unwrap();
    assert_eq!(v["within_tolerance"], false);
    assert_eq!(cli(&["gap-check", "--p-offline", "0.4", "--p-online", "0.6", "--out", &out]), 2);
}
