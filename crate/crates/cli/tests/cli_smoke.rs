//! End-to-end checks of the binary: exit codes, file formats, caching.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_counterpools"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cp_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn gen_trace_is_reproducible_and_readable() {
    let dir = temp_dir("gen");
    let a = dir.join("a.cptr");
    let b = dir.join("b.cptr");
    for path in [&a, &b] {
        let status = bin()
            .args(["gen-trace", "--alpha", "1.0", "--count", "5000"])
            .args(["--universe", "4096", "--seed", "7"])
            .arg("--out")
            .arg(path)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let bytes_a = fs::read(&a).unwrap();
    let bytes_b = fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must give identical files");
    assert_eq!(bytes_a.len(), 13 + 8 * 5000);

    let keys: Vec<u64> = counterpools::workload::read_trace(&a)
        .unwrap()
        .map(|r| r.unwrap())
        .collect();
    assert_eq!(keys.len(), 5000);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn gen_trace_converts_csv() {
    let dir = temp_dir("csv");
    let csv = dir.join("keys.csv");
    fs::write(&csv, "5\n6\n7\n").unwrap();
    let out = dir.join("keys.cptr");
    let status = bin()
        .arg("gen-trace")
        .arg("--from")
        .arg(&csv)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let keys: Vec<u64> = counterpools::workload::read_trace(&out)
        .unwrap()
        .map(|r| r.unwrap())
        .collect();
    assert_eq!(keys, vec![5, 6, 7]);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usage_errors_exit_with_code_2() {
    // Unknown flag: clap's usage error.
    let out = bin().args(["bench-sketch", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Structurally valid flags, semantically bad values: our usage error.
    let out = bin()
        .args([
            "bench-sketch",
            "--algo",
            "cm",
            "--memory-bytes",
            "64KB",
            "--dataset",
            "uniform:nope",
            "--metric",
            "nrmse",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args([
            "bench-sketch",
            "--algo",
            "cm",
            "--memory-bytes",
            "64KB",
            "--dataset",
            "zipf:1.0:1000",
            "--metric",
            "median",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // gen-trace needs a source.
    let out = bin()
        .args(["gen-trace", "--out", "/tmp/never_written.cptr"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing trace file is an internal error, not usage.
    let out = bin()
        .args([
            "bench-sketch",
            "--algo",
            "cm",
            "--memory-bytes",
            "64KB",
            "--dataset",
            "trace:/nonexistent/x.cptr",
            "--metric",
            "nrmse",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_sketch_runs_on_a_trace_file() {
    let dir = temp_dir("bench");
    let trace = dir.join("t.cptr");
    assert!(bin()
        .args(["gen-trace", "--alpha", "1.2", "--count", "20000"])
        .args(["--universe", "8192", "--seed", "3"])
        .arg("--out")
        .arg(&trace)
        .status()
        .unwrap()
        .success());

    let csv = dir.join("rows.csv");
    let status = bin()
        .args(["bench-sketch", "--algo", "cu", "--memory-bytes", "8KB,16KB"])
        .args(["--failure", "offload:0.2", "--metric", "are:2^-10"])
        .args(["--seeds", "1,2"])
        .arg("--dataset")
        .arg(format!("trace:{}", trace.display()))
        .arg("--out")
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2, "header plus one row per point");
    assert!(lines[1].starts_with("cu,"));
    assert!(lines[1].contains("are:"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bench_histogram_reports_exactness() {
    let dir = temp_dir("hist");
    let dump = dir.join("dump.csv");
    let out = bin()
        .args(["bench-histogram", "--buckets-exp", "12", "--key-bits", "32"])
        .args(["--dataset", "zipf:1.0:50000", "--zipf-universe", "8192"])
        .args(["--seeds", "4"])
        .arg("--dump")
        .arg(&dump)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let exact_row = text
        .lines()
        .find(|l| l.contains(",exact,"))
        .expect("exactness row present");
    assert!(exact_row.contains(",exact,1,"), "row: {exact_row}");
    assert!(text.lines().any(|l| l.contains(",load_factor,")));
    assert!(text.lines().any(|l| l.contains(",table_full_count,0,")));

    let dumped = fs::read_to_string(&dump).unwrap();
    assert!(dumped.starts_with("bucket,slot,key,count\n"));
    assert!(dumped.lines().count() > 1000, "dump lists the entries");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn tables_cache_round_trips_through_the_env_dir() {
    let dir = temp_dir("cache");
    let run = || {
        bin()
            .args(["tables", "--all-presets", "--cache"])
            .env("COUNTERPOOLS_TABLE_DIR", &dir)
            .output()
            .unwrap()
    };
    let first = run();
    assert!(first.status.success());
    let text = String::from_utf8(first.stdout.clone()).unwrap();
    assert!(text.contains("configurations 47905"));
    assert!(text.contains("configurations 210"));
    assert!(text.contains("configurations 252"));
    assert!(text.contains("configurations 165"));
    assert!(text.contains("(8-bit config words)"));

    let offsets = dir.join("offsets_64_4_0_1.cplt");
    assert!(offsets.exists());
    assert!(dir.join("snb_64_4.snbt").exists());
    let bytes_first = fs::read(&offsets).unwrap();

    // Second run loads from the cache and must agree byte for byte.
    let second = run();
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(bytes_first, fs::read(&offsets).unwrap());
    fs::remove_dir_all(&dir).unwrap();
}
