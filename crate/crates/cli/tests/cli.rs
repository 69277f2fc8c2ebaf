use std::fs;
use std::process::{Command, Output};

fn fissile(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fissile"))
        .args(args)
        .output()
        .expect("binary runs")
}

const QUICK: [&str; 6] = ["--duration", "0.05", "--runs", "3", "--threads", "2"];

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

#[test]
fn bench_writes_csv_with_one_median_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = fissile(
        &[
            &["bench", "--lock", "mcs", "--out", out.to_str().unwrap()][..],
            &QUICK,
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("row,lock,threads,fifo_threads,throughput,"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r[0] == "median").count(), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("throughput"));
}

#[test]
fn csv_to_stdout_without_out() {
    let o = fissile(&[&["atomic", "--lock", "tts"][..], &QUICK].concat());
    assert!(o.status.success());
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.last().unwrap()[0], "median");
}

#[test]
fn unknown_lock_is_usage_error() {
    let o = fissile(&["bench", "--lock", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn even_runs_is_usage_error() {
    let o = fissile(&["bench", "--runs", "4", "--duration", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_out_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("r.csv");
    let o = fissile(&[&["bench", "--out", out.to_str().unwrap()][..], &QUICK].concat());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_passes() {
    let o = fissile(&[
        "verify",
        "--lock",
        "fissile-fifo",
        "--threads",
        "3",
        "--fifo-threads",
        "1",
        "--iterations",
        "5000",
        "--trace-iterations",
        "2000",
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.contains("[PASS] exclusion"));
    assert!(stdout.contains("[PASS] fifo-order"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# quick run\nlock = cna\nthreads = 3\nduration = 0.05\nruns = 1\nsynthetic-topology = true\n").unwrap();
    let out = dir.path().join("r.csv");
    let o = fissile(&[
        "bench",
        "--config",
        conf.to_str().unwrap(),
        "--threads",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(rows[0][1], "cna");
    assert_eq!(rows[0][2], "2");
    assert!(String::from_utf8_lossy(&o.stdout).contains("synthetic:2"));
}

#[test]
fn config_file_unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "colour = blue\n").unwrap();
    let o = fissile(&["bench", "--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_io_error() {
    let o = fissile(&["bench", "--config", "/nonexistent/fissile.conf"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn wait_log_has_every_sample() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("w.csv");
    let out = dir.path().join("r.csv");
    let o = fissile(
        &[
            &[
                "bench",
                "--runs",
                "1",
                "--wait-log",
                log.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ][..],
            &["--duration", "0.05", "--threads", "2"],
        ]
        .concat(),
    );
    assert!(o.status.success());
    let rows = csv_rows(&fs::read_to_string(&log).unwrap());
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.len() == 4 && r[0] == "0"));
}
