use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sparsenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsenet"))
        .args(args)
        .env_remove("SPARSENET_SEED")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_default_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsenet(&["validate", "-o", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let checks = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert!(checks.lines().any(|l| l == "check,passed,detail"));
    assert!(!checks.contains(",false,"));
}

#[test]
fn defaults_round_trip_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsenet(&["defaults"]);
    let cfg = dir.path().join("defaults.txt");
    fs::write(&cfg, &out.stdout).unwrap();
    let run = sparsenet(&[
        "simulate",
        "-c",
        path(&cfg),
        "--set",
        "model.T=0.05",
        "-o",
        path(dir.path()),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["positions.csv", "edges.csv", "functionals.csv", "config.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let expected = String::from_utf8(out.stdout).unwrap().replace("model.T = 1\n", "model.T = 0.05\n");
    assert_eq!(fs::read_to_string(dir.path().join("config.txt")).unwrap(), expected);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let out = sparsenet(&["simulate", "-c", path(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.N"));
    assert_eq!(sparsenet(&["validate", "--set", "no.such=1"]).status.code(), Some(2));
}

#[test]
fn refusals_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = path(dir.path());
    let eps = sparsenet(&["sweep-eps", "--set", "model.N=1000", "-o", o]);
    assert_eq!(eps.status.code(), Some(2));
    let ut = sparsenet(&["uniform-time", "--set", "potential.kappa=0.1", "-o", o]);
    assert_eq!(ut.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&ut.stderr).contains("--force"));
}

#[test]
fn blow_up_exits_three() {
    let out = sparsenet(&[
        "simulate",
        "--tier",
        "averaged",
        "--set",
        "model.dt=1000",
        "--set",
        "model.T=1e6",
        "--set",
        "potential.kappa=50",
        "-o",
        path(tempfile::tempdir().unwrap().path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_tables_are_reproducible_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |jobs: &str, sub: &str| {
        let o = dir.path().join(format!("{jobs}-{sub}"));
        let out = sparsenet(&[
            "sweep-eps",
            "--set",
            "model.N=10",
            "--set",
            "model.T=0.2",
            "--set",
            "model.replicas=6",
            "--set",
            "experiment.eps_values=0.04,0.02",
            "--jobs",
            jobs,
            "-o",
            path(&o),
        ]);
        assert_eq!(out.status.code(), Some(0));
        fs::read(o.join("eps_sweep.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("3", "b"));
}

#[test]
fn seed_env_and_flag_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let table = |seed_env: Option<&str>, seed_flag: Option<&str>, name: &str| {
        let o = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparsenet"));
        cmd.args(["sweep-eps", "--set", "model.N=10", "--set", "model.T=0.1", "--set", "model.replicas=4"]);
        cmd.args(["--set", "experiment.eps_values=0.04,0.02", "-o", path(&o)]);
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        cmd.env_remove("SPARSENET_SEED");
        if let Some(s) = seed_env {
            cmd.env("SPARSENET_SEED", s);
        }
        assert!(cmd.status().unwrap().success());
        fs::read_to_string(o.join("eps_sweep.csv")).unwrap()
    };
    let base = table(None, None, "base");
    let env = table(Some("7"), None, "env");
    let flag = table(None, Some("7"), "flag");
    assert_ne!(base, env);
    assert!(env.contains("# seed = 7"));
    assert_eq!(env, flag);
}

#[test]
fn fp_solve_writes_density() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsenet(&["fp-solve", "--set", "model.T=0.2", "--every", "0.1", "-o", path(dir.path())]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    // header plus three snapshots of the default 384-cell grid
    assert_eq!(rows, 1 + 3 * 384);
}
