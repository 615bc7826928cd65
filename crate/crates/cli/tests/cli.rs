use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hamogen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamogen"))
        .args(args)
        .env("HAMOGEN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

fn small_dataset_config(dir: &Path, system: &str) -> std::path::PathBuf {
    let cfg = dir.join(format!("{system}_dataset.json"));
    fs::write(
        &cfg,
        serde_json::json!({
            "version": 1,
            "dataset": {
                "system": {"kind": system},
                "sampler": {"seed": 3},
                "render": {"width": 8, "height": 8, "sigma": 1.0, "scale": 2.0},
                "count": 4,
                "frames": 6
            }
        })
        .to_string(),
    )
    .unwrap();
    cfg
}

#[test]
fn simulate_zero_steps_gives_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.json");
    let o = hamogen(&["simulate", "--system", "pendulum", "--steps", "0", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["trajectory"]["states"].as_array().unwrap().len(), 1);
    assert_eq!(v["energy"]["max_rel_drift"], 0.0);
}

#[test]
fn simulate_reports_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.json");
    let o = hamogen(&[
        "simulate", "--system", "mass-spring", "--steps", "512", "--seed", "4", "--param", "k=2", "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["trajectory"]["t"].as_array().unwrap().len(), 513);
    assert!(v["energy"]["max_rel_drift"].as_f64().unwrap() <= 1e-3);
    assert_eq!(v["system"]["params"]["k"], 2.0);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let o = hamogen(&["simulate", "--system", "pendulum", "--dt", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");

    let o = hamogen(&["simulate", "--system", "pendulum", "--param", "mass=2", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = hamogen(&["simulate", "--system", "quadruple-pendulum", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"version": 1, "dataset": {"system": {"kind": "pendulum"}, "sampler": {"seed": 0}}, "typo": 1}"#).unwrap();
    let o = hamogen(&["dataset", "--config", p(&cfg), "--out", p(&dir.path().join("ds"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("typo"));

    fs::write(&cfg, r#"{"dataset": {"system": {"kind": "pendulum"}, "sampler": {"seed": 0}}}"#).unwrap();
    let o = hamogen(&["dataset", "--config", p(&cfg), "--out", p(&dir.path().join("ds"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = hamogen(&["rollout", "--ckpt", p(&dir.path().join("missing")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "io");
}

#[test]
fn dataset_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_dataset_config(dir.path(), "pendulum");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = hamogen(&["dataset", "--config", p(&cfg), "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let hash = |d: &Path| hamogen::dataset::dataset_hash(d).unwrap();
    assert_eq!(hash(&a), hash(&b));
    assert!(a.join("config.resolved.json").exists());
    assert_eq!(hamogen::dataset::load_dataset(&a).unwrap().len(), 4);
}

#[test]
fn hnn_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_dataset_config(dir.path(), "pendulum");
    let data = dir.path().join("data");
    assert!(hamogen(&["dataset", "--config", p(&cfg), "--out", p(&data)]).status.success());
    let train_cfg = dir.path().join("hnn.json");
    fs::write(
        &train_cfg,
        r#"{"version": 1, "train": {"steps": 20, "batch_size": 8, "hidden": [8]}}"#,
    )
    .unwrap();
    let ckpt = dir.path().join("hnn");
    let o = hamogen(&["train-hnn", "--data", p(&data), "--config", p(&train_cfg), "--out", p(&ckpt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(ckpt.join("loss.csv")).unwrap().lines().count(), 21);
    assert!(ckpt.join("config.resolved.json").exists());

    let report = dir.path().join("report.json");
    let o = hamogen(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--report", p(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&report);
    assert_eq!(v["kind"], "hnn");
    assert!(v["cyclic"]["cyclic_count"].is_u64());
    assert_eq!(v["rollout_error"]["mean_per_step"][0], 0.0);

    let o = hamogen(&["eval", "--ckpt", p(&ckpt), "--report", p(&report)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hgan_train_rollout_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_dataset_config(dir.path(), "pendulum");
    let data = dir.path().join("data");
    assert!(hamogen(&["dataset", "--config", p(&cfg), "--out", p(&data)]).status.success());
    let gan_cfg = dir.path().join("gan.json");
    fs::write(
        &gan_cfg,
        serde_json::json!({
            "version": 1,
            "arch": {
                "motion_dim": 4, "content_dim": 3, "map_hidden": 8, "hnn_hidden": [8],
                "generator_hidden": [8], "image_disc_hidden": [4], "video_disc_hidden": [4],
                "width": 8, "height": 8, "window": 4
            },
            "train": {"batch_size": 2, "steps": 4, "n_frames": 6},
            "sample_every": 2,
            "log_every": 0
        })
        .to_string(),
    )
    .unwrap();
    let ckpt = dir.path().join("gan");
    let o = hamogen(&["train-hgan", "--data", p(&data), "--config", p(&gan_cfg), "--out", p(&ckpt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.json", "metrics.csv", "config.resolved.json", "samples/step_00002.png", "samples/final.hgf"] {
        assert!(ckpt.join(f).exists(), "{f} missing");
    }
    assert_eq!(fs::read_to_string(ckpt.join("metrics.csv")).unwrap().lines().count(), 5);

    let video = dir.path().join("video");
    let o = hamogen(&["rollout", "--ckpt", p(&ckpt), "--seed", "2", "--frames", "5", "--out", p(&video)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let frames = hamogen::render::FrameTensor::read(&video.join("video.hgf")).unwrap();
    assert_eq!((frames.frames, frames.height, frames.width), (5, 8, 8));
    let again = dir.path().join("video2");
    assert!(hamogen(&["rollout", "--ckpt", p(&ckpt), "--seed", "2", "--frames", "5", "--out", p(&again)]).status.success());
    assert_eq!(fs::read(video.join("video.hgf")).unwrap(), fs::read(again.join("video.hgf")).unwrap());

    let report = dir.path().join("eval.json");
    let o = hamogen(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--report", p(&report), "--samples", "64"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&report);
    assert_eq!(v["kind"], "hgan");
    assert!(v["cyclic"]["cyclic_count"].is_u64());
    assert!(v["manifold"]["y0_dimension"].is_u64());
    assert!(v["manifold"]["y1_dimension"].is_u64());
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_hamogen"))
        .args(["simulate", "--system", "pendulum", "--out", "/dev/null"])
        .env("HAMOGEN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
