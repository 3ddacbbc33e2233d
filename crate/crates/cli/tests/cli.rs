use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mlofi_cli::main_with;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mlofi-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["mlofi"];
    full.extend_from_slice(args);
    main_with(full)
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// $1.40 x10 and $1.39 x10 on the bid with an idle ask at $1.43, then a buy
/// limit at $1.41 x7 inside the only interval.
const WORKED_EXAMPLE: &str = "\
36000.000000000,1,1,10,14000,1
36000.000000000,1,2,10,13900,1
36000.000000000,1,3,5,14300,-1
36005.000000000,1,4,7,14100,1
";

fn worked_example_args<'a>(messages: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "compute",
        "--messages",
        messages,
        "--levels",
        "3",
        "--session-start",
        "10:00:00",
        "--session-end",
        "10:00:10",
        "--window-secs",
        "10",
        "--subwindow-secs",
        "10",
        "--output-dir",
        out,
    ]
}

#[test]
fn worked_example_row_reads_7_10_10() {
    let dir = scratch("worked");
    let msg = dir.join("EX_2016-01-04_36000000_36010000_message_3.csv");
    fs::write(&msg, WORKED_EXAMPLE).unwrap();
    let out = dir.join("out");
    assert_eq!(run(&worked_example_args(msg.to_str().unwrap(), out.to_str().unwrap())), 0);
    let rows = read_csv(&out.join("samples.csv"));
    let header = &rows[0];
    assert_eq!(rows.len(), 2);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let row = &rows[1];
    assert_eq!(row[col("date")], "2016-01-04");
    assert_eq!(
        [&row[col("mlofi_1")], &row[col("mlofi_2")], &row[col("mlofi_3")]],
        ["7", "10", "10"]
    );
    assert_eq!(row[col("ofi")], "7");
    // Mid moved from 1.415 to 1.42: one half tick.
    assert_eq!(row[col("delta_p_half_ticks")], "1");
}

#[test]
fn empty_fixture_gives_header_only_csv() {
    let dir = scratch("empty");
    let msg = dir.join("EX_2016-01-04_message_3.csv");
    fs::write(&msg, "").unwrap();
    let out = dir.join("out");
    assert_eq!(run(&worked_example_args(msg.to_str().unwrap(), out.to_str().unwrap())), 0);
    let text = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("date,window,subwindow,start,end,mlofi_1,mlofi_2,mlofi_3,ofi,"));
}

#[test]
fn malformed_fixture_exits_2_naming_the_line() {
    let dir = scratch("malformed");
    let msg = dir.join("EX_2016-01-04_message_3.csv");
    fs::write(&msg, "36000.0,1,1,10,14000,1\n36001.0,1,2,10,13900\n").unwrap();
    let out = dir.join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_mlofi"))
        .args(worked_example_args(msg.to_str().unwrap(), out.to_str().unwrap()))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn configuration_errors_exit_1() {
    let dir = scratch("config");
    let out = dir.join("out");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["compute", "--synth-days", "1", "--levels", "0", "--output-dir", out]), 1);
    assert_eq!(run(&["compute", "--output-dir", out]), 1);
    assert_eq!(run(&["compute", "--messages", "/nonexistent/*.csv", "--output-dir", out]), 1);
    assert_eq!(run(&["compute", "--synth-days", "1", "--method", "lasso"]), 1);
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "levels = [1]\n").unwrap();
    assert_eq!(run(&["compute", "--config", cfg.to_str().unwrap()]), 1);
}

#[test]
fn rank_deficient_windows_exit_3() {
    // Only level-1 bid depth ever changes, so the level-2 column is all zero.
    let dir = scratch("rank");
    let mut text = String::from("36000.0,1,1,10,14000,1\n36000.0,1,2,10,13900,1\n36000.0,1,3,10,14100,-1\n");
    for k in 0..6 {
        text.push_str(&format!("{}.5,1,{},{},14000,1\n", 36000 + 10 * k, 10 + k, 1 + k));
    }
    let msg = dir.join("EX_2016-01-04_message_2.csv");
    fs::write(&msg, text).unwrap();
    let out = dir.join("out");
    let code = run(&[
        "fit",
        "--messages",
        msg.to_str().unwrap(),
        "--levels",
        "2",
        "--method",
        "ols",
        "--session-start",
        "10:00:00",
        "--session-end",
        "10:01:00",
        "--window-secs",
        "60",
        "--subwindow-secs",
        "10",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
}

fn synth_args<'a>(command: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        command,
        "--synth-days",
        "2",
        "--seed",
        "11",
        "--session-start",
        "10:00:00",
        "--session-end",
        "11:00:00",
        "--window-secs",
        "1800",
        "--subwindow-secs",
        "30",
        "--output-dir",
        out,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn single_level_fits_agree_when_ridge_penalty_is_zero() {
    let dir = scratch("m1");
    let out = dir.join("out");
    let out_s = out.to_str().unwrap();
    assert_eq!(run(&synth_args("fit", out_s, &["--levels", "1", "--lambda", "0"])), 0);
    let ols = read_csv(&out.join("fit_ols.csv"));
    let ridge = read_csv(&out.join("fit_ridge.csv"));
    assert_eq!(ols.len(), 3);
    for (a, b) in ols.iter().zip(&ridge).skip(1) {
        for (x, y) in a.iter().zip(b).skip(1) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn derived_columns_recompute_from_primitives() {
    let dir = scratch("derived");
    let out = dir.join("out");
    assert_eq!(run(&synth_args("fit", out.to_str().unwrap(), &["--levels", "3"])), 0);
    for method in ["ols", "ridge"] {
        let rows = read_csv(&out.join(format!("fits_{method}.csv")));
        let h = &rows[0];
        let col = |name: &str| h.iter().position(|x| x == name).unwrap();
        assert!(rows.len() > 1);
        for r in &rows[1..] {
            let v: f64 = r[col("value")].parse().unwrap();
            let se: f64 = r[col("std_error")].parse().unwrap();
            let t: f64 = r[col("t")].parse().unwrap();
            assert!((t - v / se).abs() <= 1e-9 * t.abs().max(1.0));
        }
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["command"], "fit");
    assert_eq!(json["windows"], 4);

    let eval = dir.join("eval");
    assert_eq!(run(&synth_args("evaluate", eval.to_str().unwrap(), &["--levels", "3"])), 0);
    let rows = read_csv(&eval.join("improvement.csv"));
    let ofi: f64 = rows[1][2].parse().unwrap();
    for r in &rows[1..] {
        let rmse: f64 = r[2].parse().unwrap();
        let pct: f64 = r[3].parse().unwrap();
        assert!((pct - 100.0 * (1.0 - rmse / ofi)).abs() < 1e-9);
    }
}

#[test]
fn evaluate_is_byte_deterministic_across_output_dirs() {
    let dir = scratch("det");
    let (a, b) = (dir.join("a"), dir.join("b"));
    assert_eq!(run(&synth_args("evaluate", a.to_str().unwrap(), &["--levels", "4"])), 0);
    assert_eq!(run(&synth_args("evaluate", b.to_str().unwrap(), &["--levels", "4"])), 0);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn synth_files_feed_compute() {
    let dir = scratch("synth");
    let data = dir.join("data");
    assert_eq!(run(&synth_args("synth", data.to_str().unwrap(), &["--levels", "5"])), 0);
    let pattern = format!("{}/*_message_5.csv", data.display());
    let from_files = dir.join("files");
    let code = run(&[
        "compute",
        "--messages",
        &pattern,
        "--levels",
        "5",
        "--session-start",
        "10:00:00",
        "--session-end",
        "11:00:00",
        "--window-secs",
        "1800",
        "--subwindow-secs",
        "30",
        "--output-dir",
        from_files.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let direct = dir.join("direct");
    assert_eq!(run(&synth_args("compute", direct.to_str().unwrap(), &["--levels", "5"])), 0);
    let a = fs::read(from_files.join("samples.csv")).unwrap();
    assert_eq!(a, fs::read(direct.join("samples.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 2 * 120);
}

#[test]
fn output_dir_comes_from_the_environment() {
    let dir = scratch("env");
    let target = dir.join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_mlofi"))
        .args(["compute", "--synth-days", "1", "--session-end", "10:10:00", "--window-secs", "600"])
        .current_dir(&dir)
        .env("MLOFI_OUTPUT_DIR", &target)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(target.join("samples.csv").exists());
}
