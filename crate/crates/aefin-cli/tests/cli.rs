//! End-to-end tests of the binary through its public interface: real
//! processes, real files, asserted exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn aefin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aefin"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SYNTH_SPEC: &str = "\
n = 300
channels = 2
trend_slope = 0.002
seasonal = [[24.0, 1.0]]
noise_std = 0.05
seed = 3
";

fn tiny_train_toml(out_dir: &Path) -> String {
    format!(
        "\
[data.synth]
n = 300
channels = 2
trend_slope = 0.002
seasonal = [[24.0, 1.0]]
noise_std = 0.05
seed = 3

[model]
l_in = 16
l_pred = 8
k = 2

[train]
max_epochs = 2
seeds = [1]
batch_size = 32

[output]
dir = {:?}
",
        out_dir
    )
}

#[test]
fn missing_input_file_exits_2_and_names_the_path() {
    let out = aefin(&["decompose", "--input", "/nonexistent/series.csv", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(
        stderr(&out).contains("/nonexistent/series.csv"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_config_key_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "[data]\ncsv = \"x.csv\"\n[model]\nl_inn = 96\n");
    let out = aefin(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("l_inn"), "{}", stderr(&out));
}

#[test]
fn synth_is_byte_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    write(&spec, SYNTH_SPEC);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out_path in [&a, &b] {
        let out = aefin(&[
            "synth",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn params_prints_the_default_total_first() {
    let out = aefin(&["params"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("182856"), "{text}");
    assert!(text.contains("trend=166560"), "{text}");
}

#[test]
fn gradcheck_tiny_passes_every_operation() {
    let out = aefin(&["gradcheck", "--size", "tiny"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9, "{text}");
    for line in &lines {
        assert!(line.starts_with("op="), "{line}");
        assert!(line.ends_with("status=ok"), "{line}");
    }
}

#[test]
fn decompose_with_one_bin_reduces_a_sinusoid_to_noise_floor() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wave.csv");
    let mut csv = String::from("wave\n");
    for t in 0..64 {
        let x = (2.0 * std::f64::consts::PI * 4.0 * t as f64 / 64.0).sin();
        csv.push_str(&format!("{x}\n"));
    }
    write(&input, &csv);
    let out_dir = dir.path().join("parts");
    let out = aefin(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--window",
        "64",
        "--k",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--verify",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    // A pure harmonic is entirely non-stable: the stable remainder is zero.
    let stable = std::fs::read_to_string(out_dir.join("stable.csv")).unwrap();
    for line in stable.lines().skip(1) {
        let v: f64 = line.parse().unwrap();
        assert!(v.abs() < 1e-9, "stable residual {v}");
    }
    let bins = std::fs::read_to_string(out_dir.join("bins.txt")).unwrap();
    assert_eq!(bins.trim(), "wave 4");
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let cfg = dir.path().join("run.toml");
    write(&cfg, &tiny_train_toml(&run_dir));

    let out = aefin(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let checkpoint = run_dir.join("checkpoint_seed1.ckpt");
    assert!(checkpoint.is_file());
    assert!(run_dir.join("train_seed1.log").is_file());

    // The standalone evaluation must agree with the metrics recorded at
    // train time.
    let out = aefin(&[
        "evaluate",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("eval_metrics.json")).unwrap())
            .unwrap();
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(
        eval["mse"], metrics["full"]["per_seed"][0]["mse"],
        "evaluate disagrees with the training run"
    );

    // Forecast shape: exactly L_pred rows and one column per channel.
    let series = dir.path().join("series.csv");
    let spec = dir.path().join("spec.toml");
    write(&spec, SYNTH_SPEC);
    let out = aefin(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        series.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let forecast = dir.path().join("forecast.csv");
    let out = aefin(&[
        "predict",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--input",
        series.to_str().unwrap(),
        "--out",
        forecast.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&forecast).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 8, "{text}");
    assert_eq!(lines[0].split(',').count(), 2);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 2);
        for cell in line.split(',') {
            let v: f64 = cell.parse().unwrap();
            assert!(v.is_finite());
        }
    }
}

#[test]
fn evaluate_rejects_a_mismatched_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let cfg = dir.path().join("run.toml");
    write(&cfg, &tiny_train_toml(&run_dir));
    let out = aefin(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let wrong = dir.path().join("wrong.toml");
    write(&wrong, &tiny_train_toml(&run_dir).replace("l_pred = 8", "l_pred = 16"));
    let out = aefin(&[
        "evaluate",
        "--checkpoint",
        run_dir.join("checkpoint_seed1.ckpt").to_str().unwrap(),
        "--config",
        wrong.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("horizon"), "{}", stderr(&out));
}

#[test]
fn training_twice_writes_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut artifacts = Vec::new();
    for name in ["first", "second"] {
        let run_dir = dir.path().join(name);
        let cfg = dir.path().join(format!("{name}.toml"));
        write(&cfg, &tiny_train_toml(&run_dir));
        let out = aefin(&["train", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        artifacts.push((
            std::fs::read(run_dir.join("metrics.json")).unwrap(),
            std::fs::read(run_dir.join("checkpoint_seed1.ckpt")).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "metrics differ across runs");
    assert_eq!(
        artifacts[0].1, artifacts[1].1,
        "checkpoints differ across runs"
    );
}
