use std::fs;
use std::process::{Command, Output};

use chemloop_core::image::RasterImage;

fn chemloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemloop")).args(args).output().expect("binary runs")
}

#[test]
fn help_for_every_subcommand() {
    assert!(chemloop(&["--help"]).status.success());
    for sub in ["run", "campaign", "evaluate", "parse-plan", "annotate", "serve-mock", "gen-dataset", "replay"] {
        let o = chemloop(&[sub, "--help"]);
        assert!(o.status.success(), "{sub} --help");
    }
}

#[test]
fn annotate_without_marks_keeps_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut img = RasterImage::new(32, 24, [10, 200, 30]);
    img.fill_rect(4, 4, 12, 10, [250, 0, 0]);
    let src = tmp.path().join("f.ppm");
    fs::write(&src, img.to_ppm()).unwrap();
    fs::write(tmp.path().join("m.json"), "[]").unwrap();
    let dst = tmp.path().join("out.ppm");
    let o = chemloop(&[
        "annotate",
        "--image",
        src.to_str().unwrap(),
        "--marks",
        tmp.path().join("m.json").to_str().unwrap(),
        "--out",
        dst.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(&src).unwrap(), fs::read(&dst).unwrap());

    fs::write(tmp.path().join("bad.json"), r#"[{"type": "point", "coordinates": [400, 5], "role": "grasp_point"}]"#).unwrap();
    let o = chemloop(&[
        "annotate",
        "--image",
        src.to_str().unwrap(),
        "--marks",
        tmp.path().join("bad.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("do not fit"));
}

#[test]
fn parse_plan_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.txt");
    fs::write(&good, "Grasp the glass rod\nStir the solution in the beaker with the glass rod\n").unwrap();
    let o = chemloop(&["parse-plan", good.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["steps"].as_array().unwrap().len(), 2);
    let bad = tmp.path().join("bad.txt");
    fs::write(&bad, "Grasp the glass rod\nJuggle the beaker\n").unwrap();
    assert_eq!(chemloop(&["parse-plan", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn campaign_report_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("camp");
    let o = chemloop(&[
        "campaign", "--task", "acid_base", "--trials", "20", "--seed", "7", "--jobs", "4", "--frame-scale", "8", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = fs::read_to_string(out.join("report.tsv")).unwrap();
    let head = tsv.lines().next().unwrap();
    assert_eq!(head.matches("SR(%)").count(), 5);
    assert_eq!(head.matches(" CR").count(), 5);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), tsv);
    let logs: Vec<_> = fs::read_dir(out.join("logs")).unwrap().collect();
    assert_eq!(logs.len(), 20);

    let log = out.join("logs/trial_0004.json");
    assert_eq!(chemloop(&["replay", log.to_str().unwrap()]).status.code(), Some(0));

    let ev = chemloop(&["evaluate", out.join("logs").to_str().unwrap()]);
    assert!(ev.status.success());
    assert_eq!(String::from_utf8(ev.stdout).unwrap(), tsv);

    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&log).unwrap()).unwrap();
    v["traces"][0]["attempts"][0]["verdict"] = false.into();
    fs::write(&log, v.to_string()).unwrap();
    assert_eq!(chemloop(&["replay", log.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn seed_required_and_flags_beat_config() {
    assert_eq!(chemloop(&["run", "--task", "press_button"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"task_id": "press_button", "seed": 4, "max_outer_retries": 1}"#).unwrap();
    let o = chemloop(&["run", "--config", cfg.to_str().unwrap(), "--max-retries", "2", "--frame-scale", "8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(log["config"]["seed"], 4);
    assert_eq!(log["config"]["max_outer_retries"], 2);
    assert_eq!(log["config"]["task_id"], "press_button");
    assert_eq!(chemloop(&["run", "--seed", "1", "--frame-scale", "7"]).status.code(), Some(2));
}

#[test]
fn dataset_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ds");
    let o = chemloop(&["gen-dataset", "--success", "2", "--retry", "1", "--seed", "3", "--frame-scale", "8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("dataset.json")).unwrap()).unwrap();
    assert_eq!(ds["episodes"].as_array().unwrap().len(), 3);
    assert_eq!(chemloop(&["gen-dataset", "--preset", "config9", "--seed", "1", "--out", tmp.path().join("x").to_str().unwrap()]).status.code(), Some(2));
}
