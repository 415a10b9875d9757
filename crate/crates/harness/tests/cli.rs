use std::path::PathBuf;
use std::process::{Command, Output};

use wcopt_harness::report::{emit_report, parse_csv, Format, Report, CSV_HEADER};

const SMALL: &str = r#"
name = "small"
master_seed = 3

[problem]
kind = "absolute_regression"
d = 2
radius = 1.0
pool = { size = 400, seed = 2 }

[optimizer]
kind = "sgd"
output = "average"
T = 20
eta = 0.1

[grid]
n = [20, 40, 80, 160]

[stability]
measures = ["function_values", "gradients", "arguments"]
trials = 200
probes = 50

[gap]
kinds = ["function_values"]
draws = 20
"#;

fn write_config(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn wcopt(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wcopt"));
    cmd.args(args).env_remove("WCOPT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

#[test]
fn csv_output_has_the_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let out = wcopt(&["run", cfg.to_str().unwrap(), "--format", "csv"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(text.lines().any(|l| l.starts_with("fit,")));
}

#[test]
fn json_and_csv_carry_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let json_path = dir.path().join("r.json");
    let csv_path = dir.path().join("r.csv");
    for (path, fmt) in [(&json_path, "json"), (&csv_path, "csv")] {
        let out = wcopt(&["run", cfg.to_str().unwrap(), "--format", fmt, "--out", path.to_str().unwrap()], &[]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let report: Report = serde_json::from_slice(&std::fs::read(&json_path).unwrap()).unwrap();
    assert_eq!(report.schema, "wcopt.report/v1");
    let from_csv = parse_csv(&std::fs::read(&csv_path).unwrap()).unwrap();
    assert_eq!(report.rows, from_csv);
    // json -> csv -> parse is lossless
    let again = parse_csv(&emit_report(&report, Format::Csv).unwrap()).unwrap();
    assert_eq!(again, report.rows);
}

#[test]
fn thread_budget_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let path = cfg.to_str().unwrap();
    let one = wcopt(&["run", path, "--threads", "1"], &[]);
    let four = wcopt(&["run", path, "--threads", "4"], &[]);
    let env = wcopt(&["run", path], &[("WCOPT_THREADS", "3")]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, env.stdout);
}

#[test]
fn config_echo_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let first = wcopt(&["run", cfg.to_str().unwrap()], &[]);
    let report: Report = serde_json::from_slice(&first.stdout).unwrap();
    let echo: wcopt_harness::ExperimentConfig = serde_json::from_value(report.config.unwrap()).unwrap();
    let echoed = write_config(&dir, "echo.toml", &toml::to_string(&echo).unwrap());
    let second = wcopt(&["run", echoed.to_str().unwrap()], &[]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let path = cfg.to_str().unwrap();
    let base = wcopt(&["run", path], &[]);
    let same = wcopt(&["run", path, "--seed", "3"], &[]);
    let other = wcopt(&["run", path, "--seed", "4"], &[]);
    assert_eq!(base.stdout, same.stdout);
    assert_ne!(base.stdout, other.stdout);
}

#[test]
fn flag_wins_over_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let path = cfg.to_str().unwrap();
    let bad_env = wcopt(&["run", path], &[("WCOPT_THREADS", "lots")]);
    assert_eq!(bad_env.status.code(), Some(1));
    let flagged = wcopt(&["run", path, "--threads", "2"], &[("WCOPT_THREADS", "lots")]);
    assert_eq!(flagged.status.code(), Some(0));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let too_big = write_config(&dir, "big.toml", &SMALL.replace("n = [20, 40, 80, 160]", "n = [20, 4000]"));
    let unknown = write_config(&dir, "unknown.toml", &SMALL.replace("master_seed = 3", "master_seed = 3\nbogus = 1"));
    for args in [
        vec!["run", too_big.to_str().unwrap()],
        vec!["run", unknown.to_str().unwrap()],
        vec!["run", "/nonexistent/config.toml"],
        vec!["sweep", too_big.to_str().unwrap(), "--axis", "n"],
        vec!["run", too_big.to_str().unwrap(), "--format", "xml"],
    ] {
        let out = wcopt(&args, &[]);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn prox_nonconvergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
master_seed = 1

[problem]
kind = "phase_retrieval"
d = 3
radius = 1.0
pool = { size = 300, seed = 1 }

[optimizer]
kind = "sgd"
output = "last"
T = 10
eta = 0.01

[grid]
n = [50]

[gap]
kinds = ["moreau_gradients"]
draws = 2
inner_tolerance = 1e-300
"#;
    let cfg = write_config(&dir, "tight.toml", text);
    let out = wcopt(&["run", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_over_t_and_enumerate() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("n = [20, 40, 80, 160]", "n = [3]\nT = [1, 2, 3, 4]").replace("size = 400", "size = 30");
    let text = text.replace("probes = 50", "probes = 5");
    let cfg = write_config(&dir, "t.toml", &text);
    let out = wcopt(&["sweep", cfg.to_str().unwrap(), "--axis", "T", "--format", "csv"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_csv(&out.stdout).unwrap();
    let ts: std::collections::BTreeSet<_> = rows.iter().filter_map(|r| r.iterations).collect();
    assert_eq!(ts.into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 4]);

    let small = text.replace("T = [1, 2, 3, 4]", "").replace("T = 20", "T = 2");
    let cfg = write_config(&dir, "e.toml", &small);
    let out = wcopt(&["enumerate", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|r| r.kind == "enumeration" && r.std_error == Some(0.0)));
}

#[test]
fn shipped_configs_validate() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        wcopt_harness::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
