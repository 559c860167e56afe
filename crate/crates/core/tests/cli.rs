use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn pofcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pofcap"))
        .args(args)
        .env_remove("POFCAP_JOBS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, value: Value) -> String {
    let path = dir.join("scene.json");
    fs::write(&path, value.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_scene() -> Value {
    json!({
        "seed": 4,
        "n_frames": 3,
        "model": {"hands": false, "toes": false, "face": false, "expression_dim": 0},
        "prior_samples": 2000
    })
}

fn synth(dir: &Path, config: Value) -> String {
    let cfg = write_config(dir, config);
    let seq = dir.join("seq");
    let out = pofcap(&["synth", "--config", &cfg, "--out", seq.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    seq.to_str().unwrap().to_string()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), small_scene());
    let fit = dir.path().join("fit");
    let track = dir.path().join("track");
    let scored = dir.path().join("eval");
    let (fit_s, track_s, eval_s) = (
        fit.to_str().unwrap(),
        track.to_str().unwrap(),
        scored.to_str().unwrap(),
    );

    assert_eq!(
        code(&pofcap(&[
            "fit", "--seq", &seq, "--out", fit_s, "--jobs", "2"
        ])),
        0
    );
    assert!(fit.join("000002.json").is_file());
    assert_eq!(read(&fit.join("summary.json"))["frames"], 3);

    let out = pofcap(&[
        "track",
        "--seq",
        &seq,
        "--fit",
        fit_s,
        "--provider",
        "oracle",
        "--out",
        track_s,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let jitter = fs::read_to_string(track.join("jitter.csv")).unwrap();
    assert!(jitter.starts_with("series,jitter_cm\nbefore,"));

    let out = pofcap(&["eval", "--pred", track_s, "--gt", &seq, "--out", eval_s]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&scored.join("summary.json"));
    assert_eq!(summary["evaluated"], 3);
    assert!(summary["mpjpe_cm"].as_f64().unwrap().is_finite());
    assert!(fs::read_to_string(scored.join("per_frame.csv"))
        .unwrap()
        .starts_with("frame,mpjpe_cm\n"));
    assert!(fs::read_to_string(scored.join("pck.csv"))
        .unwrap()
        .starts_with("threshold_mm,pck\n"));

    let manifest = read(&scored.join("run_manifest.json"));
    assert_eq!(manifest["command"], "eval");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn identity_and_file_providers_work() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), small_scene());
    let fit = dir.path().join("fit");
    assert_eq!(
        code(&pofcap(&[
            "fit",
            "--seq",
            &seq,
            "--out",
            fit.to_str().unwrap()
        ])),
        0
    );
    for provider in ["identity", "file"] {
        let out_dir = dir.path().join(provider);
        let out = pofcap(&[
            "track",
            "--seq",
            &seq,
            "--fit",
            fit.to_str().unwrap(),
            "--provider",
            provider,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(
            code(&out),
            0,
            "{provider}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(read(&out_dir.join("summary.json"))["frames"], 3);
    }
}

#[test]
fn missing_flow_files_are_rejected_before_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), small_scene());
    let fit = dir.path().join("fit");
    assert_eq!(
        code(&pofcap(&[
            "fit",
            "--seq",
            &seq,
            "--out",
            fit.to_str().unwrap()
        ])),
        0
    );
    let out_dir = dir.path().join("track");
    let out = pofcap(&[
        "track",
        "--seq",
        &seq,
        "--fit",
        fit.to_str().unwrap(),
        "--provider",
        "file",
        "--flow",
        dir.path().join("nowhere").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists());
}

#[test]
fn empty_frames_are_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_scene();
    config["noise"] = json!({"dropout": 1.0});
    let seq = synth(dir.path(), config);
    let fit = dir.path().join("fit");
    let out = pofcap(&["fit", "--seq", &seq, "--out", fit.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("flagged"));
    assert_eq!(read(&fit.join("summary.json"))["flagged"], json!([0, 1, 2]));
    assert_eq!(read(&fit.join("run_manifest.json"))["warnings"], 3);
    assert!(read(&fit.join("000001.json"))["result"].is_null());
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out_s = out_dir.to_str().unwrap();
    assert_eq!(
        code(&pofcap(&[
            "synth",
            "--config",
            "/nonexistent/scene.json",
            "--out",
            out_s
        ])),
        2
    );
    assert_eq!(code(&pofcap(&["synth", "--out", out_s])), 2);
    assert_eq!(code(&pofcap(&["frobnicate"])), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"n_frames\": \"many\"}").unwrap();
    assert_eq!(
        code(&pofcap(&[
            "synth",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            out_s
        ])),
        2
    );
    let cfg = write_config(dir.path(), small_scene());
    assert_eq!(
        code(&pofcap(&[
            "synth", "--config", &cfg, "--out", out_s, "--jobs", "0"
        ])),
        2
    );
    assert_eq!(
        code(&pofcap(&[
            "fit",
            "--seq",
            dir.path().to_str().unwrap(),
            "--out",
            out_s
        ])),
        2
    );
    assert_eq!(code(&pofcap(&["--help"])), 0);
}

#[test]
fn jobs_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small_scene());
    let out = Command::new(env!("CARGO_BIN_EXE_pofcap"))
        .args([
            "synth",
            "--config",
            &cfg,
            "--out",
            dir.path().join("seq").to_str().unwrap(),
        ])
        .env("POFCAP_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn corrupt_observation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), small_scene());
    fs::write(
        Path::new(&seq).join("obs").join("000001.poft"),
        b"not a container",
    )
    .unwrap();
    let out = pofcap(&[
        "fit",
        "--seq",
        &seq,
        "--out",
        dir.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn mismatched_joint_sets_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), small_scene());
    let pred = dir.path().join("pred");
    fs::create_dir_all(&pred).unwrap();
    for i in 0..3 {
        let joints = vec![[0.0, 0.0, 300.0]; 5];
        fs::write(
            pred.join(format!("{i:06}.json")),
            json!({ "joints": joints }).to_string(),
        )
        .unwrap();
    }
    let out = pofcap(&[
        "eval",
        "--pred",
        pred.to_str().unwrap(),
        "--gt",
        &seq,
        "--out",
        dir.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small_scene());
    let mut seen = Vec::new();
    for run in 0..2 {
        let seq = dir.path().join(format!("seq{run}"));
        assert_eq!(
            code(&pofcap(&[
                "synth",
                "--config",
                &cfg,
                "--seed",
                "11",
                "--out",
                seq.to_str().unwrap()
            ])),
            0
        );
        let gt = fs::read(seq.join("gt.json")).unwrap();
        let obs = fs::read(seq.join("obs").join("000002.poft")).unwrap();
        seen.push((gt, obs));
    }
    assert_eq!(seen[0], seen[1]);
}
