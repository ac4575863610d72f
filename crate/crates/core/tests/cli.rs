//! Runs the `wgm-nl` binary: exit codes, artifacts, manifests and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wgm_nonlinear::config::RunConfig;
use wgm_nonlinear::io::{read_table, read_toml, SWEEP_HEADER};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgm-nl")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
seed = 21

[sweep]
points = 12

[coincidences]
max_delay_ns = 8.0
settings = ["RL", "PR", "MM", "HM"]
sample_pairs = 5e4

[tomography]
mean_delays_ns = [0.0, 4.0]
window_widths_ns = [3.0]
reference_delay_ns = 20.0

[bootstrap]
replicates = 10
"#;

fn small_config(dir: &Path) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, SMALL).unwrap();
    out_arg(&p)
}

#[test]
fn sweep_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = run(&["--config", &cfg, "--out", &out_arg(&out), "sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header, SWEEP_HEADER);
    assert_eq!(csv.lines().count(), 13);
    let manifest: toml::Table = read_toml(&out.join("manifest.toml")).unwrap();
    assert_eq!(manifest["seed"].as_integer(), Some(21));
    assert_eq!(manifest["gamma_assumed"].as_bool(), Some(true));
    assert!(manifest.contains_key("version") && manifest.contains_key("config"));
    let round: RunConfig = manifest["config"].clone().try_into().unwrap();
    assert_eq!(round, RunConfig::from_toml(SMALL).unwrap());
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(run(&["--config", &cfg, "--out", &out_arg(d), "sweep"]).status.success());
        assert!(run(&["--config", &cfg, "--out", &out_arg(d), "tomography"]).status.success());
    }
    for f in ["sweep.csv", "counts.csv", "metrics.toml", "state.toml", "fig4_surfaces.csv", "manifest.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_flag_changes_sampled_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["--config", &cfg, "--out", &out_arg(&a), "coincidences"]).status.success());
    assert!(run(&["--config", &cfg, "--seed", "22", "--out", &out_arg(&b), "coincidences"]).status.success());
    assert_eq!(fs::read(a.join("rates.csv")).unwrap(), fs::read(b.join("rates.csv")).unwrap());
    assert_ne!(fs::read(a.join("counts.csv")).unwrap(), fs::read(b.join("counts.csv")).unwrap());
    let t = read_table(&a.join("counts.csv")).unwrap();
    assert_eq!(t.meta.seed, Some(21));
    assert_eq!(t.settings().len(), 4);
}

#[test]
fn tomography_reads_counts_from_coincidences() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let counts = dir.path().join("c");
    fs::write(&cfg, "[coincidences]\nmax_delay_ns = 10.0\nsample_pairs = 2e5\n").unwrap();
    assert!(run(&["--config", &out_arg(&cfg), "--out", &out_arg(&counts), "coincidences"]).status.success());
    let text = format!(
        "[tomography]\ndata = {:?}\nmean_delays_ns = [0.0]\nwindow_widths_ns = [3.0]\n\n[bootstrap]\nreplicates = 5\n",
        counts.join("counts.csv")
    );
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("t");
    let o = run(&["--config", &out_arg(&cfg), "--out", &out_arg(&out), "tomography"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: toml::Table = read_toml(&out.join("metrics.toml")).unwrap();
    let overlap = m["metrics"]["overlap_ideal"].as_float().unwrap();
    assert!(overlap > 0.5, "{overlap}");
}

#[test]
fn gate_check_and_verify_pass() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    assert!(run(&["--out", &out_arg(&g), "gate-check"]).status.success());
    let gate: toml::Table = read_toml(&g.join("gate.toml")).unwrap();
    assert_eq!(gate["passed"].as_bool(), Some(true));
    let v = dir.path().join("v");
    let o = run(&["--out", &out_arg(&v), "verify"]);
    assert!(o.status.success());
    let report = fs::read_to_string(v.join("verify.txt")).unwrap();
    assert!(report.lines().all(|l| l.starts_with("PASS")), "{report}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n\n[system]\nkappa_q_mhz = 2.0\n").unwrap();
    let o = run(&["--config", &out_arg(&cfg), "--out", &out_arg(&dir.path().join("o")), "sweep"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kappa_q_mhz") && err.contains("line 4"), "{err}");

    fs::write(&cfg, "[system]\ngamma_mhz = -1.0\n").unwrap();
    let o = run(&["--config", &out_arg(&cfg), "--out", &out_arg(&dir.path().join("o")), "sweep"]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["--config", &out_arg(&dir.path().join("missing.toml")), "sweep"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_counts_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("counts.csv");
    fs::write(&data, "setting,delay_ns,value\nHH,0,10\nHV,0,12\nHP,0,abc\n").unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("[tomography]\ndata = {data:?}\n")).unwrap();
    let o = run(&["--config", &out_arg(&cfg), "--out", &out_arg(&dir.path().join("o")), "tomography"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
}
