//! End-to-end acceptance run: every experiment at its shipped config,
//! then a replay of all records through the binary, then the gradient
//! check. Prints one PASS/FAIL line per criterion.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use riskmin::harness::{run_and_record, ExperimentConfig, ExperimentOutput};
use riskmin::noisy_labels::NoiseKind;
use riskmin::numerics::gradcheck::check_random_graphs;
use riskmin::rng::Seeder;

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(outcomes: &mut Vec<Outcome>, id: usize, elapsed: Duration, budget: Option<Duration>, checks: Vec<(bool, String)>) {
    let mut pass = budget.is_none_or(|b| elapsed < b);
    let limit = budget.map_or("no limit".to_string(), |b| format!("limit {}s", b.as_secs()));
    let mut parts = vec![format!("{:.2}s ({limit})", elapsed.as_secs_f64())];
    for (ok, text) in checks {
        pass &= ok;
        parts.push(if ok { text } else { format!("{text} [failed]") });
    }
    let o = Outcome {
        id,
        pass,
        detail: parts.join("; "),
    };
    let line = format!("criterion {:>2}: {} {}\n", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    // Written straight to stderr so the lines survive output capture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    outcomes.push(o);
}

fn run(cfg: &ExperimentConfig, out: &Path) -> (ExperimentOutput, Duration) {
    let t = Instant::now();
    let (_, exec) = run_and_record(cfg, out).unwrap_or_else(|e| panic!("{}: {e}", cfg.kind.name()));
    (exec.output, t.elapsed())
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let out: PathBuf = dir.path().to_path_buf();
    let mut outcomes = Vec::new();

    let (o, t) = run(&config("theorem1.toml"), &out);
    let ExperimentOutput::Theorem1(r) = o else { unreachable!() };
    report(&mut outcomes, 1, t, secs(5), vec![
        (r.l2_linf < 1e-6, format!("L2 max |f - z*| = {:.3e} < 1e-6", r.l2_linf)),
        (r.ce_tv < 1e-4, format!("CE max TV = {:.3e} < 1e-4", r.ce_tv)),
    ]);

    let (o, t) = run(&config("gap.toml"), &out);
    let ExperimentOutput::Gap(r) = o else { unreachable!() };
    report(&mut outcomes, 2, t, secs(5), vec![
        (r.max_deviation < 1e-10, format!("gap spread {:.3e} < 1e-10", r.max_deviation)),
        (r.max_theory_error < 1e-10, format!("|mean - C| = {:.3e} < 1e-10", r.max_theory_error)),
    ]);

    // Sampled table-model check on its own, without the classifier sweep.
    let mut table_only = config("noisy_labels.toml");
    {
        let s = table_only.noisy_labels.as_mut().unwrap();
        s.experiment.matched_betas.clear();
        s.experiment.extra.clear();
        assert!(s.experiment.table_check.is_some());
    }
    let (o, t) = run(&table_only, &out);
    let ExperimentOutput::NoisyLabels(r) = o else { unreachable!() };
    let mut checks = Vec::new();
    assert_eq!(r.table_check.len(), 3);
    for row in &r.table_check {
        let gap = row.ce_bar_f - row.ce_bar_q;
        checks.push((row.max_tv <= 0.03, format!("{} max TV {:.4} <= 0.03", row.noise_type.name(), row.max_tv)));
        checks.push((gap < 0.02, format!("{} CE gap {:.2e} < 0.02", row.noise_type.name(), gap)));
    }
    report(&mut outcomes, 3, t, secs(120), checks);

    let mut sweep = config("noisy_labels.toml");
    sweep.noisy_labels.as_mut().unwrap().experiment.table_check = None;
    let (o, t) = run(&sweep, &out);
    let ExperimentOutput::NoisyLabels(r) = o else { unreachable!() };
    let mut checks = Vec::new();
    let betas = sweep.noisy_labels.as_ref().unwrap().experiment.matched_betas.clone();
    // Rows follow the plan: generated, uniform, biased per matched beta, then the extras.
    let (matched, extra) = r.rows.split_at(3 * betas.len());
    let find = |kind: NoiseKind, level: f64| {
        extra
            .iter()
            .find(|x| x.noise_type == kind && x.alpha_or_beta == level)
            .unwrap_or_else(|| panic!("no extra {} row at {level}", kind.name()))
    };
    let b6 = find(NoiseKind::Biased, 0.6);
    let b4 = find(NoiseKind::Biased, 0.4);
    checks.push((b6.test_acc >= 0.95, format!("biased a=0.6 acc {:.4} >= 0.95", b6.test_acc)));
    checks.push((b4.test_acc <= 0.15, format!("biased a=0.4 acc {:.4} <= 0.15", b4.test_acc)));
    for u in r.rows.iter().filter(|x| x.noise_type == NoiseKind::Uniform && x.alpha_or_beta >= 0.33) {
        checks.push((u.test_acc >= 0.95, format!("uniform a={:.3} acc {:.4} >= 0.95", u.alpha_or_beta, u.test_acc)));
    }
    let mut between = 0;
    for level in matched.chunks(3) {
        let [g, u, b] = [&level[0], &level[1], &level[2]];
        assert_eq!([g.noise_type, u.noise_type, b.noise_type], [NoiseKind::Generated, NoiseKind::Uniform, NoiseKind::Biased]);
        let (lo, hi) = (u.test_acc.min(b.test_acc), u.test_acc.max(b.test_acc));
        if g.test_acc >= lo - 0.02 && g.test_acc <= hi + 0.02 {
            between += 1;
        }
    }
    checks.push((between >= 4, format!("generated between uniform and biased at {between}/{} levels", betas.len())));
    report(&mut outcomes, 4, t, secs(15 * 60), checks);

    let (o, t) = run(&config("tweedie.toml"), &out);
    let ExperimentOutput::Tweedie(r) = o else { unreachable!() };
    report(&mut outcomes, 5, t, secs(1), vec![
        (r.points == 5 * 512, format!("{} points", r.points)),
        (r.max_abs_diff < 1e-10, format!("max diff {:.3e} < 1e-10", r.max_abs_diff)),
    ]);

    let (o, t) = run(&config("score.toml"), &out);
    let ExperimentOutput::Score { identity_deviation, evaluation } = o else { unreachable!() };
    report(&mut outcomes, 6, t, secs(300), vec![
        (identity_deviation < 1e-8, format!("identity deviation {identity_deviation:.3e} < 1e-8")),
        (evaluation.nmse < 0.05, format!("score NMSE {:.4} < 0.05", evaluation.nmse)),
    ]);

    let (o, t) = run(&config("noise2noise.toml"), &out);
    let ExperimentOutput::Noise2Noise { report: r, discrete } = o else { unreachable!() };
    let d = discrete.expect("shipped config includes the discrete oracle").max_abs_diff;
    report(&mut outcomes, 7, t, secs(300), vec![
        (r.nmse_pair < 0.02, format!("pair NMSE {:.3e} < 0.02", r.nmse_pair)),
        (r.nmse_noisy_vs_exact < 0.05, format!("noisy-target NMSE {:.3e} < 0.05", r.nmse_noisy_vs_exact)),
        (r.nmse_clean_vs_exact < 0.05, format!("clean-target NMSE {:.3e} < 0.05", r.nmse_clean_vs_exact)),
        (d < 1e-12, format!("discrete max diff {d:.3e} < 1e-12")),
    ]);

    let (o, t) = run(&config("uncertainty.toml"), &out);
    let ExperimentOutput::Uncertainty(r) = o else { unreachable!() };
    let nmse = |name: &str| r.row(name).unwrap_or_else(|| panic!("missing {name}")).nmse;
    let (mo, mx, vo) = (nmse("f_mean_vs_oracle_mean"), nmse("f_mean_vs_x"), nmse("f_var_vs_oracle_var"));
    report(&mut outcomes, 8, t, secs(600), vec![
        (mo < 0.02, format!("f_mean vs oracle {mo:.3e} < 0.02")),
        (vo < 0.15, format!("f_var vs oracle {vo:.3e} < 0.15")),
        (mo < mx, format!("ordering {mo:.3e} < {mx:.3e}")),
    ]);

    let t = Instant::now();
    let replay = Command::new(env!("CARGO_BIN_EXE_riskmin"))
        .arg("replay")
        .arg("--record")
        .arg(&out)
        .output()
        .expect("binary runs");
    let code = replay.status.code();
    let stdout = String::from_utf8_lossy(&replay.stdout);
    let n_records = std::fs::read_to_string(out.join(riskmin::harness::RECORDS_FILE)).unwrap().lines().count();
    report(&mut outcomes, 9, t.elapsed(), None, vec![
        (n_records == 8, format!("{n_records} records")),
        (code == Some(0), format!("replay exit code {code:?}")),
    ]);
    if code != Some(0) {
        let _ = std::io::stderr().write_all(stdout.as_bytes());
        let _ = std::io::stderr().write_all(&replay.stderr);
    }

    let t = Instant::now();
    let g = check_random_graphs(100, 1e-5, &Seeder::new(10)).unwrap();
    report(&mut outcomes, 10, t.elapsed(), None, vec![
        (g.graphs == 100, format!("{} graphs", g.graphs)),
        (g.max_relative_error < 1e-5, format!("max relative error {:.3e} < 1e-5", g.max_relative_error)),
        (g.op_counts.len() == 19, format!("{} op kinds covered", g.op_counts.len())),
    ]);

    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
