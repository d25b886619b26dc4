use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use srosync::TimeSignal;
use srosync_tools::report::SyncReport;
use srosync_tools::wav::{read_wav, write_wav};

fn srosync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srosync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = srosync(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

/// Simulates `true_sros` into `dir/name/` and returns the channel files.
fn simulate(dir: &Path, name: &str, sros: &str, duration: f64, seed: u64) -> Vec<PathBuf> {
    let channels = sros.split(',').count();
    let sc = scenario(
        dir,
        &format!("{name}.json"),
        &format!(
            r#"{{"num_channels": {channels}, "num_sources": 1, "duration": {duration}, "true_sros": [{sros}], "seed": {seed}}}"#
        ),
    );
    let out = dir.join(name);
    ok(&["simulate", p(&sc), "--out", p(&out)]);
    (0..channels)
        .map(|m| out.join(format!("ch{m}.wav")))
        .collect()
}

fn estimate(files: &[PathBuf], extra: &[&str]) -> SyncReport {
    let mut args = vec!["estimate"];
    args.extend(files.iter().map(|f| p(f)));
    args.extend_from_slice(extra);
    serde_json::from_slice(&ok(&args).stdout).unwrap()
}

#[test]
fn simulate_writes_one_file_per_channel() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "four", "0, 10, -20, 30", 30.0, 1);
    for f in &files {
        let ch = read_wav(f).unwrap();
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].len(), 480000);
        assert_eq!(ch[0].rate(), 16000.0);
    }
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("four/truth.json")).unwrap())
            .unwrap();
    assert_eq!(
        truth["true_sros_ppm"],
        serde_json::json!([0.0, 10.0, -20.0, 30.0])
    );
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", "0, 40", 2.0, 9);
    let b = simulate(dir.path(), "b", "0, 40", 2.0, 9);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn missing_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(
        dir.path(),
        "bad.json",
        r#"{"num_channels": 2, "num_sources": 1, "duration": 1.0, "seed": 1}"#,
    );
    let out = srosync(&["simulate", p(&sc), "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("true_sros"));
}

#[test]
fn identical_inputs_are_synchronous() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "one", "0", 10.0, 2);
    let report = estimate(&[files[0].clone(), files[0].clone()], &[]);
    assert!(report.sro_ppm[1].abs() < 0.5, "{:?}", report.sro_ppm);
}

#[test]
fn drifted_pair_is_recovered_with_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "pair", "0, 62.5", 10.0, 3);
    let truth = dir.path().join("pair/truth.json");
    for method in ["joint", "pair-gss", "pair-mm"] {
        let report = estimate(&files, &["--method", method, "--truth", p(&truth)]);
        assert_eq!(report.method, method);
        assert!(
            (report.sro_ppm[1] - 62.5).abs() < 1.0,
            "{method}: {:?}",
            report.sro_ppm
        );
        assert!(report.rmse_ppm.unwrap() < 1.0);
        assert_eq!(report.log_likelihood_trace.len(), report.iterations + 1);
        assert_eq!(report.schema_version, 1);
    }
}

#[test]
fn joint_trace_is_non_decreasing_and_report_file_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "quad", "0, 25, -50, 12", 5.0, 4);
    let out = dir.path().join("report.json");
    let mut args = vec!["estimate"];
    args.extend(files.iter().map(|f| p(f)));
    args.extend(["--output", p(&out), "--grid-points", "101"]);
    ok(&args);
    let report: SyncReport = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.config.grid_points, 101);
    assert_eq!(report.sro_ppm.len(), 4);
    for w in report.log_likelihood_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
    }
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "cfg", "0, -30", 3.0, 5);
    let cfg = scenario(
        dir.path(),
        "cfg.json",
        r#"{"outer_iterations": 2, "grid_points": 51}"#,
    );
    let report = estimate(&files, &["--config", p(&cfg), "--outer-iterations", "3"]);
    assert_eq!(report.config.outer_iterations, 3);
    assert_eq!(report.config.grid_points, 51);
    assert!(report.iterations <= 3);
    let bad = scenario(dir.path(), "bad.json", r#"{"outer_iters": 2}"#);
    let out = srosync(&["estimate", p(&files[0]), p(&files[1]), "--config", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compensation_removes_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "drift", "0, 62.5, -30", 10.0, 6);
    let report_path = dir.path().join("r.json");
    let mut args = vec!["estimate"];
    args.extend(files.iter().map(|f| p(f)));
    args.extend(["--output", p(&report_path)]);
    ok(&args);
    for path in ["stft", "resample"] {
        let out = dir.path().join(format!("fixed-{path}"));
        let mut args = vec!["compensate"];
        args.extend(files.iter().map(|f| p(f)));
        args.extend([
            "--report",
            p(&report_path),
            "--out",
            p(&out),
            "--path",
            path,
        ]);
        ok(&args);
        let fixed: Vec<PathBuf> = (0..3).map(|m| out.join(format!("ch{m}.wav"))).collect();
        let again = estimate(&fixed, &[]);
        for v in &again.sro_ppm {
            assert!(v.abs() < 1.0, "{path}: {:?}", again.sro_ppm);
        }
    }
}

#[test]
fn zero_report_resample_path_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "z", "0, 0", 1.0, 7);
    let report = estimate(&files, &["--outer-iterations", "1"]);
    let zero = SyncReport {
        sro_ppm: vec![0.0, 0.0],
        ..report
    };
    let rp = dir.path().join("zero.json");
    fs::write(&rp, serde_json::to_string(&zero).unwrap()).unwrap();
    let out = dir.path().join("same");
    ok(&[
        "compensate",
        p(&files[0]),
        p(&files[1]),
        "--report",
        p(&rp),
        "--out",
        p(&out),
        "--path",
        "resample",
    ]);
    for m in 0..2 {
        assert_eq!(
            read_wav(out.join(format!("ch{m}.wav"))).unwrap(),
            read_wav(&files[m]).unwrap()
        );
    }
    let short = srosync(&[
        "compensate",
        p(&files[0]),
        "--report",
        p(&rp),
        "--out",
        p(&out),
    ]);
    assert_eq!(short.status.code(), Some(1));
}

#[test]
fn trace_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let files = simulate(dir.path(), "tr", "0, 62.5", 10.0, 8);
    let parse = |out: &Output| -> Vec<(f64, f64)> {
        let text = String::from_utf8(out.stdout.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epsilon_ppm,objective"));
        lines
            .map(|l| {
                let (a, b) = l.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect()
    };
    let argmax = |rows: &[(f64, f64)]| {
        rows.iter()
            .copied()
            .fold(
                (0.0, f64::NEG_INFINITY),
                |a, r| if r.1 > a.1 { r } else { a },
            )
            .0
    };

    let rows = parse(&ok(&[
        "trace",
        p(&files[0]),
        p(&files[1]),
        "--range-ppm",
        "100",
        "--points",
        "101",
    ]));
    assert_eq!(rows.len(), 101);
    assert!((argmax(&rows) - 62.5).abs() <= 2.0);

    let rows = parse(&ok(&[
        "trace",
        p(&files[0]),
        p(&files[0]),
        "--range-ppm",
        "10",
        "--points",
        "21",
    ]));
    assert!(argmax(&rows).abs() < 1e-9);

    let rows = parse(&ok(&["trace", p(&files[0]), p(&files[1]), "--points", "1"]));
    assert_eq!(rows.len(), 1);

    let three = srosync(&["trace", p(&files[0]), p(&files[1]), p(&files[1])]);
    assert_eq!(three.status.code(), Some(1));
}

#[test]
fn bench_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "bench",
            "--speakers",
            "1",
            "--durations",
            "5",
            "--trials",
            "1",
            "--seed",
            "7",
            "--out",
            p(&out),
        ]);
        let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
        assert!(out.join("summary.json").exists());
        csv
    };
    let a = run("a");
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(
        lines[0],
        "speakers,duration_s,trial,method,rmse_ppm,seconds"
    );
    assert_eq!(lines.len(), 4);
    let methods: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(methods, ["joint", "pair-gss", "pair-mm"]);
    // Everything except the wall-clock column is reproducible.
    let strip = |csv: &str| {
        csv.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&run("b")));
}

#[test]
fn usage_and_input_errors_exit_with_one() {
    assert_eq!(srosync(&["estimate"]).status.code(), Some(1));
    assert_eq!(srosync(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(srosync(&["--help"]).status.code(), Some(0));
    assert_eq!(
        srosync(&["estimate", "/nonexistent/a.wav", "/nonexistent/b.wav"])
            .status
            .code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    write_wav(&a, &TimeSignal::new(vec![0.1; 8000], 16000.0).unwrap()).unwrap();
    write_wav(&b, &TimeSignal::new(vec![0.1; 8000], 8000.0).unwrap()).unwrap();
    let out = srosync(&["estimate", p(&a), p(&b)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rates differ"));
    assert_eq!(srosync(&["estimate", p(&a)]).status.code(), Some(1));
}

#[test]
fn silent_inputs_are_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    write_wav(&a, &TimeSignal::new(vec![0.0; 16000], 16000.0).unwrap()).unwrap();
    let out = srosync(&["estimate", p(&a), p(&a)]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
