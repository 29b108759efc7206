//! End-to-end tests of the `ckn` binary: exit codes, determinism, and the
//! train -> encode -> evaluate pipeline on a synthetic dataset.

use std::path::Path;
use std::process::{Command, Output};

fn ckn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ckn"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    ckn()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn ckn")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cfg.txt");
    std::fs::write(
        &path,
        "input = gradient\n\
         layers = 2\n\
         layer1.patch_side = 1\n\
         layer1.filters = 8\n\
         layer1.gamma = 2\n\
         layer2.patch_side = 3\n\
         layer2.filters = 16\n\
         final_size = 3\n\
         train.pairs = 1500\n\
         train.iterations = 40\n\
         train.seed = 5\n\
         dataset.kind = synthetic\n\
         dataset.classes = 5\n\
         dataset.count = 150\n\
         dataset.size = 20\n\
         dataset.noise = 0.03\n",
    )
    .unwrap();
    path
}

#[test]
fn invalid_config_exits_1_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(
        &path,
        "input = gradient\nlayers = 1\nlayer1.patch_side = 0\nlayer1.filters = 8\n\
         final_size = 3\ntrain.pairs = 10\ntrain.iterations = 1\ndataset.kind = synthetic\n",
    )
    .unwrap();
    let out = run(&["train", "--config", "bad.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("layer1.patch_side"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_model_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = run(
        &[
            "encode", "--config", "cfg.txt", "--model", "nope.ckn", "--split", "train", "--out",
            "x.feat",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_train_encode_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());

    let out = run(&["train", "--config", "cfg.txt", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("run/model.ckn").exists());
    let manifest = std::fs::read_to_string(dir.path().join("run/train-manifest.txt")).unwrap();
    assert!(manifest.contains("config_hash"), "{manifest}");
    assert!(manifest.contains("model_hash"));
    assert!(manifest.contains("objective_final"));

    for (split, out_file) in [("train", "train.feat"), ("test", "test.feat")] {
        let out = run(
            &[
                "encode", "--config", "cfg.txt", "--model", "run/model.ckn", "--split", split,
                "--out", out_file,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(out_file).exists());
    }
    // labels sidecars written next to the features
    assert!(dir.path().join("train.labels").exists());

    let out = run(
        &[
            "evaluate",
            "--train-features",
            "train.feat",
            "--test-features",
            "test.feat",
            "--out",
            "eval",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("chosen_c"), "{stdout}");
    assert!(stdout.contains("test_error_percent"), "{stdout}");
    let report = std::fs::read_to_string(dir.path().join("eval/report.txt")).unwrap();
    assert!(report.contains("log2(C)"));
    let csv = std::fs::read_to_string(dir.path().join("eval/results.csv")).unwrap();
    // 31 C values plus header
    assert_eq!(csv.lines().count(), 32);

    // the synthetic gratings are easy: expect high accuracy
    let acc_line = stdout
        .lines()
        .find(|l| l.starts_with("test_accuracy"))
        .unwrap();
    let acc: f64 = acc_line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!(acc > 0.8, "accuracy {acc}");
}

#[test]
fn training_is_byte_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    for (out_dir, threads) in [("r1", None), ("r2", None), ("r3", Some("2"))] {
        let mut args = vec!["train", "--config", "cfg.txt", "--out", out_dir];
        if let Some(t) = threads {
            args.extend(["--threads", t]);
        }
        let out = run(&args, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let m1 = std::fs::read(dir.path().join("r1/model.ckn")).unwrap();
    let m2 = std::fs::read(dir.path().join("r2/model.ckn")).unwrap();
    let m3 = std::fs::read(dir.path().join("r3/model.ckn")).unwrap();
    assert_eq!(m1, m2, "reruns differ");
    assert_eq!(m1, m3, "thread count changed the model bytes");
}

#[test]
fn encode_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = run(&["train", "--config", "cfg.txt", "--out", "run"], dir.path());
    assert!(out.status.success());
    for f in ["a.feat", "b.feat"] {
        let out = run(
            &[
                "encode", "--config", "cfg.txt", "--model", "run/model.ckn", "--split", "train",
                "--range", "0..40", "--out", f,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("a.feat")).unwrap();
    let b = std::fs::read(dir.path().join("b.feat")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gabor_runs_deterministically_at_small_scale() {
    let dir = tempfile::tempdir().unwrap();
    for out_dir in ["g1", "g2"] {
        let out = run(
            &[
                "gabor", "--synthetic", "3", "--bank", "4000", "--pairs", "3000", "--filters",
                "16", "--iterations", "25", "--top", "9", "--seed", "11", "--out", out_dir,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let s1 = std::fs::read(dir.path().join("g1/filters.pgm")).unwrap();
    let s2 = std::fs::read(dir.path().join("g2/filters.pgm")).unwrap();
    assert_eq!(s1, s2);
    let manifest = std::fs::read_to_string(dir.path().join("g1/gabor-manifest.txt")).unwrap();
    assert!(manifest.contains("objective_reduction_percent"));
}

#[test]
fn oracle_check_passes_with_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["oracle-check"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"), "{stdout}");
    // the table lists measured value and threshold per property
    assert!(stdout.contains("measured"));
    assert!(stdout.contains("threshold"));
}
