//! Drives the built `itisim` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn itisim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itisim"))
        .args(args)
        .env_remove("ITISIM_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn preset_path(name: &str) -> String {
    format!("{}/../core/presets/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

const SHORT_BLER: [&str; 3] = ["sweep.eb_n0_db=[14.0, 30.0]", "trials.max_trials=30", "trials.target_error_blocks=5"];

fn run_fig4(out: &Path, workers: &str) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec!["--workers", workers, "run", "--config"];
    let path = preset_path("fig4");
    args.push(&path);
    args.extend(["--out", out]);
    args.extend(SHORT_BLER);
    itisim(&args)
}

#[test]
fn crlb_prints_the_closed_form_and_the_general_trace() {
    let o = itisim(&["crlb", "--m", "4", "--l", "8", "--n", "256", "--sigma2", "1.0"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "closed_form 0.125\ngeneral_trace 0.125\n");
}

#[test]
fn validate_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_itisim"))
        .current_dir(dir.path())
        .args(["validate", "--preset", "fig7"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    let o = itisim(&["validate", "--config", &preset_path("fig3")]);
    assert!(o.status.success());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "schema_version = 1\nscenario_id = \"x\"\n").unwrap();
    assert_eq!(itisim(&["validate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(itisim(&["validate", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    let o = itisim(&["validate", "--preset", "fig4", "towers.1.delay_ns=9000.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cyclic prefix"));
    assert_eq!(itisim(&["validate", "--preset", "fig9"]).status.code(), Some(2));
}

#[test]
fn runs_are_reproducible_and_ignore_workers() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = run_fig4(&a, "1");
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(run_fig4(&b, "2").status.success());
    let csv_a = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("results.csv")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("scenario_id,metric_kind,eb_n0_db,value,crlb_value,trials,error_blocks,seed\n"));
    assert_eq!(text.lines().count(), 3);
    // The resolved scenario and run metadata sit next to the results.
    assert!(a.join("scenarios/fig4.toml").exists());
    let meta = fs::read_to_string(a.join("run.toml")).unwrap();
    assert!(meta.contains("sigma2_formula") && meta.contains("trials.max_trials=30"));
    // The written scenario reproduces the run on its own.
    let c = dir.path().join("c");
    let o = itisim(&["run", "--config", a.join("scenarios/fig4.toml").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(c.join("results.csv")).unwrap(), text);
}

#[test]
fn seed_flag_changes_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let path = preset_path("fig3");
    let o = itisim(&[
        "run", "--config", &path, "--seed", "7", "--out", out.to_str().unwrap(),
        "sweep.eb_n0_db=[10.0]", "trials.max_trials=5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",7")));
}

#[test]
fn preset_subcommand_writes_every_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f4");
    let mut args = vec!["fig4", "--out", out.to_str().unwrap()];
    args.extend(SHORT_BLER);
    let o = itisim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    for id in ["fig4_mean", "fig4_none", "fig4_max"] {
        assert_eq!(text.lines().filter(|l| l.starts_with(&format!("{id},"))).count(), 2, "{id}");
        assert!(out.join(format!("scenarios/{id}.toml")).exists());
    }
}
