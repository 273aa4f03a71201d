use std::path::Path;
use std::process::{Command, Output};

use actionscope::capture::ObservedFrame;
use actionscope::data_io::{load_clips, read_json, write_json, StateRecord};
use actionscope::embedding::EmbeddingSpace;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actionscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn small_synth(dir: &Path) -> String {
    let config = path(dir, "synth.json");
    std::fs::write(
        &config,
        r#"{"clips": 3, "frames": [8, 10], "mocap_frames": 150}"#,
    )
    .unwrap();
    let data = path(dir, "data");
    ok(&["synth", "--seed", "4", "--config", &config, "--out", &data]);
    data
}

#[test]
fn synth_writes_a_complete_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    for f in [
        "schema.json",
        "skeleton.json",
        "mocap.json",
        "clips.json",
        "states.json",
    ] {
        assert!(Path::new(&data).join(f).is_file(), "{f}");
    }
    let clips = load_clips(format!("{data}/clips.json")).unwrap();
    assert_eq!(clips.len(), 3);
    assert!(clips.iter().all(|c| (8..=10).contains(&c.len())));
    let spaces = std::fs::read_dir(format!("{data}/spaces")).unwrap().count();
    assert_eq!(spaces, 2);
}

#[test]
fn fit_embedding_then_capture_then_pck() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let space = path(dir.path(), "somersault.json");
    ok(&[
        "fit-embedding",
        "--mocap",
        &format!("{data}/mocap.json"),
        "--submotion",
        "somersault",
        "--k",
        "12",
        "--out",
        &space,
    ]);
    let fitted = EmbeddingSpace::load(&space).unwrap();
    assert_eq!((fitted.k, fitted.submotion.as_str()), (12, "somersault"));

    let states = path(dir.path(), "states.json");
    let summary = ok(&[
        "capture",
        "--clip",
        &format!("{data}/clips.json"),
        "--index",
        "1",
        "--spaces",
        &format!("{data}/spaces"),
        "--use-labels",
        "--out",
        &states,
    ]);
    assert!(summary.contains("\"failed\":0"), "{summary}");
    let records: Vec<StateRecord> = read_json(&states).unwrap();
    let clip = &load_clips(format!("{data}/clips.json")).unwrap()[1];
    assert_eq!(records.len(), clip.len());

    // reprojections against the observed keypoints
    let pred: Vec<Vec<[f64; 2]>> = records
        .iter()
        .map(|r| r.reproj2d.clone().unwrap())
        .collect();
    let gt: Vec<ObservedFrame> = clip.observed();
    write_json(path(dir.path(), "pred.json"), &pred).unwrap();
    write_json(path(dir.path(), "gt.json"), &gt).unwrap();
    let value: f64 = ok(&[
        "eval",
        "--metric",
        "pck0.3",
        "--pred",
        &path(dir.path(), "pred.json"),
        "--gt",
        &path(dir.path(), "gt.json"),
    ])
    .trim()
    .parse()
    .unwrap();
    assert_eq!(value, 100.0);
}

#[test]
fn eval_spearman_and_top1() {
    let dir = tempfile::tempdir().unwrap();
    let p = path(dir.path(), "p.json");
    let g = path(dir.path(), "g.json");
    std::fs::write(&p, "[1, 2, 3, 4]").unwrap();
    std::fs::write(&g, "[10, 20, 30, 40]").unwrap();
    let r: f64 = ok(&["eval", "--metric", "spearman", "--pred", &p, "--gt", &g])
        .trim()
        .parse()
        .unwrap();
    assert!((r - 1.0).abs() < 1e-12);

    std::fs::write(&p, "[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]").unwrap();
    std::fs::write(&g, "[0, 1, 1]").unwrap();
    let t: f64 = ok(&["eval", "--metric", "top1", "--pred", &p, "--gt", &g])
        .trim()
        .parse()
        .unwrap();
    assert!((t - 200.0 / 3.0).abs() < 1e-9);
}

#[test]
fn parse_train_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let config = path(dir.path(), "train.json");
    std::fs::write(
        &config,
        r#"{"parser": {"stgcn": {"channels": [4], "strides": [1], "pose_channels": 4,
            "pose_blocks": 1, "pose_features": 4, "frames": 12}},
            "train": {"epochs": 1, "batch_size": 2}}"#,
    )
    .unwrap();
    let model = path(dir.path(), "model.json");
    ok(&[
        "parse-train",
        "--config",
        &config,
        "--schema",
        &format!("{data}/schema.json"),
        "--data",
        &format!("{data}/clips.json"),
        "--checkpoint",
        &model,
    ]);
    let preds = path(dir.path(), "preds.json");
    let report = ok(&[
        "parse-eval",
        "--schema",
        &format!("{data}/schema.json"),
        "--data",
        &format!("{data}/clips.json"),
        "--checkpoint",
        &model,
        "--out",
        &preds,
    ]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["attribute_top1"].as_array().unwrap().len(), 5);
    let preds: Vec<serde_json::Value> = read_json(&preds).unwrap();
    assert_eq!(preds.len(), 3);
}

#[test]
fn failures_exit_nonzero_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "nope.json");
    let out = run(&[
        "eval", "--metric", "top1", "--pred", &missing, "--gt", &missing,
    ]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "Io");
    assert!(err["message"].as_str().unwrap().contains("nope.json"));

    let p = path(dir.path(), "p.json");
    std::fs::write(&p, "[1, 1, 1]").unwrap();
    let out = run(&["eval", "--metric", "spearman", "--pred", &p, "--gt", &p]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string());

    let out = run(&["synth"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("--out"));
}
