use std::path::{Path, PathBuf};
use std::process::Command;

use riskmin::harness::{read_records, write_record, RECORDS_FILE};
use riskmin_cli::{run_cli, EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK, EXIT_RUNTIME};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("riskmin").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn theorem1_run_writes_a_replayable_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let code = cli(&["verify-theorem1", "--config", s(&config("theorem1.toml")), "--out", s(out)]);
    assert_eq!(code, EXIT_OK);
    let records = read_records(&out.join(RECORDS_FILE)).unwrap();
    assert_eq!(records.len(), 1);
    assert!(records[0].metrics.contains_key("l2.linf"));
    assert_eq!(cli(&["replay", "--record", s(out)]), EXIT_OK);
    assert_eq!(cli(&["report", "--record", s(&out.join(RECORDS_FILE))]), EXIT_OK);
}

#[test]
fn tampered_metric_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(cli(&["tweedie", "--config", s(&config("tweedie.toml")), "--out", s(out)]), EXIT_OK);
    let mut rec = read_records(&out.join(RECORDS_FILE)).unwrap().remove(0);
    let v = rec.metrics.get_mut("max_abs_diff").expect("tweedie metric");
    *v = f64::from_bits(v.to_bits() + 1);
    let tampered = out.join("tampered.jsonl");
    write_record(&tampered, &rec).unwrap();
    assert_eq!(cli(&["replay", "--record", s(&tampered)]), EXIT_MISMATCH);

    let mut rec = read_records(&out.join(RECORDS_FILE)).unwrap().remove(0);
    rec.config.seed += 1;
    let reseeded = out.join("reseeded.jsonl");
    write_record(&reseeded, &rec).unwrap();
    assert_eq!(cli(&["replay", "--record", s(&reseeded)]), EXIT_MISMATCH);
}

#[test]
fn seed_override_changes_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = config("gap.toml");
    assert_eq!(cli(&["gap-check", "--config", s(&cfg), "--out", s(out)]), EXIT_OK);
    assert_eq!(cli(&["gap-check", "--config", s(&cfg), "--out", s(out), "--seed", "99"]), EXIT_OK);
    let records = read_records(&out.join(RECORDS_FILE)).unwrap();
    assert_eq!(records[1].config.seed, 99);
    assert_ne!(records[0].config_hash, records[1].config_hash);
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(cli(&["no-such-command"]), EXIT_CONFIG);
    assert_eq!(cli(&["tweedie"]), EXIT_CONFIG);
    assert_eq!(cli(&["tweedie", "--config", s(&out.join("missing.toml"))]), EXIT_CONFIG);
    // a valid config under the wrong subcommand
    assert_eq!(cli(&["score", "--config", s(&config("tweedie.toml")), "--out", s(out)]), EXIT_CONFIG);

    let bad = out.join("bad.toml");
    std::fs::write(&bad, "kind = \"tweedie\"\nseed = 1\n[tweedie]\nn_priors = 2\nn_components = 2\nnoise_var = 0.5\ngrid_point = 10\n").unwrap();
    assert_eq!(cli(&["tweedie", "--config", s(&bad), "--out", s(out)]), EXIT_CONFIG);

    assert_eq!(cli(&["replay", "--record", s(&out.join("none.jsonl"))]), EXIT_CONFIG);
    std::fs::write(out.join("garbage.jsonl"), "{not json}\n").unwrap();
    assert_eq!(cli(&["report", "--record", s(&out.join("garbage.jsonl"))]), EXIT_CONFIG);
}

#[test]
fn runtime_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    // negative noise variance passes parsing but fails at run time
    let cfg = out.join("neg.toml");
    std::fs::write(&cfg, "kind = \"tweedie\"\nseed = 1\n[tweedie]\nn_priors = 2\nn_components = 2\nnoise_var = -0.5\ngrid_points = 10\n").unwrap();
    assert_eq!(cli(&["tweedie", "--config", s(&cfg), "--out", s(out)]), EXIT_RUNTIME);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_riskmin");
    let status = Command::new(bin).arg("bogus").status().unwrap();
    assert_eq!(status.code(), Some(EXIT_CONFIG));
    let status = Command::new(bin).arg("--help").status().unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));

    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["verify-theorem1", "--config", s(&config("theorem1.toml"))])
        .env("RISKMIN_OUT", dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    assert!(dir.path().join(RECORDS_FILE).is_file());
}
