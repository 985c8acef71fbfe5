//! Black-box tests of the command-line surface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fusemot")
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn fusemot")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let dir = work_dir("help");
    let out = run_in(&dir, &["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

#[test]
fn no_command_is_an_error() {
    let dir = work_dir("nocmd");
    let out = run_in(&dir, &[]);
    assert!(!out.status.success());
}

#[test]
fn unknown_command_and_flag_fail_with_one_line() {
    let dir = work_dir("unknown");
    for args in [vec!["frobnicate"], vec!["track", "--bogus"]] {
        let out = run_in(&dir, &args);
        assert!(!out.status.success());
        let err = stderr_of(&out);
        assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
        assert!(err.starts_with("error: "));
    }
}

#[test]
fn missing_input_file_reports_path() {
    let dir = work_dir("missing");
    let out = run_in(&dir, &["track", "nope.txt"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("nope.txt"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = work_dir("badkey");
    fs::write(
        dir.join("sim.cfg"),
        "objects = 3\nframes = 10\nwhatever = 1\n",
    )
    .unwrap();
    let out = run_in(&dir, &["simulate", "--config", "sim.cfg"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("whatever"), "stderr: {err}");
    assert!(err.contains("line 3"), "stderr: {err}");
}

#[test]
fn malformed_detection_line_reports_line_and_field() {
    let dir = work_dir("baddet");
    fs::write(
        dir.join("det.txt"),
        "1,-1,5,5,10,10,0.9,1,1\n2,-1,5,5,0,10,0.9,1,1\n",
    )
    .unwrap();
    let out = run_in(&dir, &["track", "det.txt"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(err.contains("'w'"), "stderr: {err}");
}

#[test]
fn simulate_track_evaluate_round_trip() {
    let dir = work_dir("pipeline");
    fs::write(
        dir.join("sim.cfg"),
        "objects = 4\nframes = 40\nseed = 5\nmiss_rate = 0.0\nfp_rate = 0.0\ncenter_noise = 0.2\n",
    )
    .unwrap();
    assert!(
        run_in(&dir, &["simulate", "--config", "sim.cfg", "--out", "run"])
            .status
            .success()
    );
    assert!(run_in(&dir, &["track", "run/det.txt", "--out", "run"])
        .status
        .success());
    let out = run_in(
        &dir,
        &["evaluate", "run/gt.txt", "run/results.txt", "--out", "run"],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("MOTA"), "stdout: {stdout}");
    assert!(stdout.contains("IDF1"));
    for f in [
        "gt.txt",
        "det.txt",
        "results.txt",
        "metrics.txt",
        "metrics.csv",
        "manifest.txt",
    ] {
        assert!(dir.join("run").join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(dir.join("run/metrics.csv")).unwrap();
    assert!(csv.starts_with("metric,value\n"));
    let manifest = fs::read_to_string(dir.join("run/manifest.txt")).unwrap();
    assert!(manifest.contains("command = evaluate"));
    assert!(manifest.contains("input = run/gt.txt"));
    assert!(manifest.contains("version = "));
}

#[test]
fn emit_coasted_adds_boxes() {
    let dir = work_dir("coasted");
    // One confident detection, then a gap, then another: the middle frames
    // coast and only appear with --emit-coasted.
    let mut det = String::new();
    det.push_str("1,-1,100,100,20,20,0.95,1,1\n");
    det.push_str("5,-1,104,100,20,20,0.95,1,1\n");
    fs::write(dir.join("det.txt"), det).unwrap();
    assert!(run_in(&dir, &["track", "det.txt", "--out", "plain"])
        .status
        .success());
    assert!(run_in(
        &dir,
        &["track", "det.txt", "--emit-coasted", "--out", "coasted"]
    )
    .status
    .success());
    let plain = fs::read_to_string(dir.join("plain/results.txt")).unwrap();
    let coasted = fs::read_to_string(dir.join("coasted/results.txt")).unwrap();
    assert_eq!(plain.lines().count(), 2);
    assert_eq!(coasted.lines().count(), 5);
}

#[test]
fn fuse_stats_reads_and_writes_param_files() {
    let dir = work_dir("fusestats");
    // First generate synthetic maps and stats.
    let out = run_in(&dir, &["fuse-stats", "--seed", "7", "--out", "a"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("entropy_bits"));
    for f in [
        "stats.txt",
        "stats.csv",
        "fused.params",
        "enhanced.params",
        "manifest.txt",
    ] {
        assert!(dir.join("a").join(f).exists(), "missing {f}");
    }
    // Feed the produced maps back in as inputs.
    let out = run_in(
        &dir,
        &[
            "fuse-stats",
            "a/fused.params",
            "a/enhanced.params",
            "--out",
            "b",
        ],
    );
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert!(dir.join("b/stats.csv").exists());
    // Same seed again is byte-identical.
    assert!(run_in(&dir, &["fuse-stats", "--seed", "7", "--out", "a2"])
        .status
        .success());
    for f in ["stats.csv", "fused.params", "enhanced.params"] {
        assert_eq!(
            fs::read(dir.join("a").join(f)).unwrap(),
            fs::read(dir.join("a2").join(f)).unwrap(),
            "{f} differs between identical fuse-stats runs"
        );
    }
    // Mismatched shapes are rejected.
    fs::write(
        dir.join("tiny.cfg"),
        "channels = 2\nheight = 4\nwidth = 4\n",
    )
    .unwrap();
    assert!(
        run_in(&dir, &["fuse-stats", "--config", "tiny.cfg", "--out", "c"])
            .status
            .success()
    );
    let out = run_in(
        &dir,
        &[
            "fuse-stats",
            "a/fused.params",
            "c/fused.params",
            "--out",
            "d",
        ],
    );
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("shape"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = work_dir("seedflag");
    fs::write(dir.join("sim.cfg"), "objects = 2\nframes = 10\nseed = 1\n").unwrap();
    assert!(
        run_in(&dir, &["simulate", "--config", "sim.cfg", "--out", "s1"])
            .status
            .success()
    );
    assert!(run_in(
        &dir,
        &["simulate", "--config", "sim.cfg", "--seed", "2", "--out", "s2"]
    )
    .status
    .success());
    let a = fs::read_to_string(dir.join("s1/gt.txt")).unwrap();
    let b = fs::read_to_string(dir.join("s2/gt.txt")).unwrap();
    assert_ne!(a, b);
    let manifest = fs::read_to_string(dir.join("s2/manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 2"));
}
