use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SCENARIO: &str = r#"
frames = 120
seed = 5
cell_size = 4.0

[camera]
dag_m = 100.0
sensor_h_m = 0.006
sensor_w_m = 0.006
focal_m = 0.006
image_w_px = 600
image_h_px = 600
fps = 25.0

[noise]
appearance_dim = 8

[[layout.zones]]
id = 1
polygon = [[0.5, 0.5], [300.2, 0.5], [300.2, 599.5], [0.5, 599.5]]

[[layout.zones]]
id = 2
polygon = [[300.2, 0.5], [599.5, 0.5], [599.5, 599.5], [300.2, 599.5]]

[[layout.lines]]
id = 1
p0 = [300.2, 10.3]
p1 = [300.2, 590.7]
allowed_sign = 1

[[vehicles]]
identity = 1
width_px = 30.0
height_px = 14.0
path = [[40.3, 150.7], [560.1, 150.7]]
speeds_mps = [9.0]

[[vehicles]]
identity = 2
width_px = 30.0
height_px = 14.0
spawn_frame = 4
path = [[560.6, 420.2], [40.9, 420.2]]
speeds_mps = [11.0]
"#;

fn tau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tau"))
        .args(args)
        .env("TAU_LOG", "warn")
        .output()
        .expect("run tau")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate(dir: &Path) -> PathBuf {
    let scenario = dir.join("scenario.toml");
    fs::write(&scenario, SCENARIO).unwrap();
    let sim = dir.join("sim");
    let o = tau(&["simulate", "--config", s(&scenario), "--out", s(&sim)]);
    assert!(o.status.success(), "{}", stderr(&o));
    sim
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_track_analyze_matches_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate(tmp.path());
    let run = sim.join("run.toml");
    let out = tmp.path().join("out");

    let o = tau(&[
        "track",
        s(&sim.join("detections.jsonl")),
        "--config",
        s(&run),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tracks confirmed 2"), "{}", stdout(&o));

    let o = tau(&[
        "analyze",
        s(&out.join("records.csv")),
        "--config",
        s(&run),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "crossings.csv",
        "transitions.csv",
        "heatmap_congestion.pgm",
        "corr_traffic.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let o = tau(&["compare", s(&out), s(&sim.join("truth"))]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
}

#[test]
fn simulate_is_deterministic_and_seed_matters() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(dir_bytes(&simulate(a.path())), dir_bytes(&simulate(b.path())));

    let scenario = a.path().join("scenario.toml");
    let reseeded = a.path().join("reseeded");
    fs::write(
        &scenario,
        SCENARIO.replace("appearance_dim = 8", "appearance_dim = 8\nappearance_noise = 0.1"),
    )
    .unwrap();
    let o = tau(&[
        "simulate",
        "--config",
        s(&scenario),
        "--out",
        s(&reseeded),
        "--seed",
        "6",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tau(&[
        "simulate",
        "--config",
        s(&scenario),
        "--out",
        s(&a.path().join("again")),
    ]);
    assert!(o.status.success());
    let d1 = fs::read(reseeded.join("detections.jsonl")).unwrap();
    let d2 = fs::read(a.path().join("again").join("detections.jsonl")).unwrap();
    assert_ne!(d1, d2);
}

#[test]
fn missing_scenario_names_path_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = tau(&["simulate", "--config", "/nonexistent/scenario.toml", "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/scenario.toml"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn invalid_scenario_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("scenario.toml");
    fs::write(&scenario, SCENARIO.replace("spawn_frame = 4", "spawn_frame = 400")).unwrap();
    let out = tmp.path().join("out");
    let o = tau(&["simulate", "--config", s(&scenario), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("vehicle 2"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn invalid_run_config_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate(tmp.path());
    let run = sim.join("run.toml");
    let text = fs::read_to_string(&run).unwrap();
    fs::write(&run, text.replace("cell_size = 4.0", "cell_size = -1.0")).unwrap();
    let out = tmp.path().join("out");
    let o = tau(&[
        "track",
        s(&sim.join("detections.jsonl")),
        "--config",
        s(&run),
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cell_size"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn out_of_order_stream_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate(tmp.path());
    let stream = tmp.path().join("bad.jsonl");
    fs::write(
        &stream,
        "{\"frame\":3,\"bbox\":[10,10,20,20],\"cat\":\"car\"}\n{\"frame\":1,\"bbox\":[10,10,20,20],\"cat\":\"car\"}\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = tau(&[
        "track",
        s(&stream),
        "--config",
        s(&sim.join("run.toml")),
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("order"), "{}", stderr(&o));
    assert!(!out.join("records.csv").exists());
}

#[test]
fn empty_stream_gives_header_only_table_and_valid_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate(tmp.path());
    let run = sim.join("run.toml");
    let stream = tmp.path().join("empty.jsonl");
    fs::write(&stream, "").unwrap();
    let out = tmp.path().join("out");
    let o = tau(&["track", s(&stream), "--config", s(&run), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "{csv}");

    let o = tau(&[
        "analyze",
        s(&out.join("records.csv")),
        "--config",
        s(&run),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = dir_bytes(&out);
    let o = tau(&[
        "analyze",
        s(&out.join("records.csv")),
        "--config",
        s(&run),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(first, dir_bytes(&out));
}

#[test]
fn analyze_cell_size_override() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate(tmp.path());
    let run = sim.join("run.toml");
    let out = tmp.path().join("out");
    let o = tau(&[
        "track",
        s(&sim.join("detections.jsonl")),
        "--config",
        s(&run),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let o = tau(&[
        "analyze",
        s(&out.join("records.csv")),
        "--config",
        s(&run),
        "--out",
        s(&out),
        "--cell-size",
        "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pgm = fs::read_to_string(out.join("heatmap_congestion.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n60 60\n"), "{}", &pgm[..20]);
    let o = tau(&[
        "analyze",
        s(&out.join("records.csv")),
        "--config",
        s(&run),
        "--out",
        s(&out),
        "--cell-size",
        "0",
    ]);
    assert!(!o.status.success());
}

#[test]
fn eval_perfect_and_empty_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate(tmp.path());
    let gt = sim.join("ground_truth.jsonl");
    let out = tmp.path().join("eval");
    let o = tau(&["eval", s(&gt), s(&gt), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    for key in ["precision,1", "recall,1", "f1,1", "map_50,1", "map_50_95,1"] {
        assert!(csv.lines().any(|l| l == key), "{key} not in\n{csv}");
    }

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = tau(&["eval", s(&gt), s(&empty), "--out", s(&out), "--iou", "0.7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "recall,0"), "{csv}");

    let o = tau(&["eval", s(&gt), s(&gt), "--out", s(&out), "--iou", "1.5"]);
    assert!(!o.status.success());
}

#[test]
fn detect_rejects_missing_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate(tmp.path());
    let out = tmp.path().join("det");
    let o = tau(&[
        "detect",
        "--config",
        s(&sim.join("run.toml")),
        "--detector",
        "/bin/true",
        "--out",
        s(&out),
        "/nonexistent/frame0.png",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("frame0.png"), "{}", stderr(&o));
    assert!(!out.exists());
}
