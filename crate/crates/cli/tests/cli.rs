use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hydrovar(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hydrovar"))
        .args(args)
        .current_dir(dir)
        .env_remove("HYDROVAR_MODE")
        .env_remove("HYDROVAR_OUT")
        .env_remove("HYDROVAR_PRESET")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

const INPUTS: [&str; 6] = [
    "--tree",
    "in/tree.json",
    "--units",
    "in/units.json",
    "--scenarios",
    "in/scenarios.json",
];

fn with_inputs<'a>(cmd: &'a str, rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(INPUTS);
    v.extend(rest);
    v
}

#[test]
fn generate_validate_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hydrovar(
        &["generate", "--preset", "tiny", "--seed", "4", "--out", "in"],
        dir.path(),
    ));
    for f in ["tree.json", "units.json", "scenarios.json"] {
        assert!(dir.path().join("in").join(f).exists());
    }
    let v = hydrovar(&with_inputs("validate", &[]), dir.path());
    ok(&v);
    assert_eq!(String::from_utf8_lossy(&v.stdout).trim(), "ok");

    ok(&hydrovar(
        &with_inputs("run", &["--mode", "nominal", "--out", "out"]),
        dir.path(),
    ));
    let summary = read(dir.path().join("out/summary.csv"));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "method,Mean,St. Dev.,VaR 1%,VaR 5%");
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "Nominal");
    assert!(fields[1..]
        .iter()
        .all(|f| f.parse::<f64>().unwrap().is_finite()));
    let costs = read(dir.path().join("out/costs_Nominal.csv"));
    assert_eq!(
        costs.lines().next().unwrap(),
        "scenario,cost,unserved_mwh,ejp_days_ejp,final_stock_lake"
    );
    assert_eq!(costs.lines().count(), 9);
    assert!(read(dir.path().join("out/lambda_Nominal.txt")).starts_with("hydrovar-lambda/1 "));
    assert!(read(dir.path().join("out/trace_Nominal.csv")).starts_with("iteration,value,best,gap,"));
}

#[test]
fn optimize_then_simulate_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hydrovar(
        &["generate", "--preset", "tiny", "--seed", "2", "--out", "in"],
        dir.path(),
    ));
    let modes = ["--mode", "nominal", "--mode", "var-benef"];
    let mut opt = vec![
        "optimize",
        "--tree",
        "in/tree.json",
        "--units",
        "in/units.json",
        "--out",
        "opt",
    ];
    opt.extend(modes);
    ok(&hydrovar(&opt, dir.path()));
    ok(&hydrovar(
        &with_inputs(
            "simulate",
            &[
                "--lambda",
                "opt/lambda_Nominal.txt",
                "--lambda",
                "opt/lambda_VaR_benef.txt",
                "--out",
                "sim",
            ],
        ),
        dir.path(),
    ));
    let mut run = with_inputs("run", &["--out", "run"]);
    run.extend(modes);
    ok(&hydrovar(&run, dir.path()));
    for f in [
        "summary.csv",
        "costs_Nominal.csv",
        "costs_VaR_benef.csv",
        "trajectory.csv",
        "weeks.csv",
    ] {
        assert_eq!(
            read(dir.path().join("sim").join(f)),
            read(dir.path().join("run").join(f)),
            "{f}"
        );
    }
    assert_eq!(
        read(dir.path().join("opt/lambda_VaR_benef.txt")),
        read(dir.path().join("run/lambda_VaR_benef.txt"))
    );
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&hydrovar(
            &[
                "run",
                "--preset",
                "tiny",
                "--seed",
                "9",
                "--mode",
                "mixt",
                "--workers",
                "2",
                "--out",
                out,
            ],
            dir.path(),
        ));
    }
    let names: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(
            fs::read(dir.path().join("a").join(&n)).unwrap(),
            fs::read(dir.path().join("b").join(&n)).unwrap()
        );
    }
}

#[test]
fn zero_kappa_reproduces_nominal() {
    let dir = tempfile::tempdir().unwrap();
    // κ = 0 at ε = 0.5 in gaussian mode.
    ok(&hydrovar(
        &[
            "run",
            "--preset",
            "tiny",
            "--mode",
            "nominal,var-benef,var-fa",
            "--eps1",
            "0.5",
            "--eps2",
            "0.5",
            "--out",
            "o",
        ],
        dir.path(),
    ));
    let nominal = read(dir.path().join("o/costs_Nominal.csv"));
    assert_eq!(nominal, read(dir.path().join("o/costs_VaR_benef.csv")));
    assert_eq!(nominal, read(dir.path().join("o/costs_VaR_FA.csv")));
}

#[test]
fn env_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hydrovar"))
        .args(["run", "--out", "o"])
        .current_dir(dir.path())
        .env("HYDROVAR_PRESET", "tiny")
        .env("HYDROVAR_MODE", "var-benef")
        .env("HYDROVAR_GRID", "11")
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("o/costs_VaR_benef.csv").exists());
    assert!(!dir.path().join("o/costs_Nominal.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["run", "--preset", "tiny", "--mode", "bogus", "--out", "o"],
        &["run", "--preset", "tiny", "--eps2", "1.5", "--out", "o"],
        &["run", "--preset", "tiny", "--grid", "1", "--out", "o"],
        &[
            "run",
            "--tree",
            "missing.json",
            "--units",
            "u.json",
            "--scenarios",
            "s.json",
            "--out",
            "o",
        ],
        &["run", "--out", "o"],
    ];
    for args in cases {
        let out = hydrovar(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hydrovar(
        &["generate", "--preset", "tiny", "--out", "in"],
        dir.path(),
    ));
    let tree_path = dir.path().join("in/tree.json");
    let text = read(&tree_path).replacen("\"trans_prob\": 0.5", "\"trans_prob\": 0.7", 1);
    fs::write(&tree_path, text).unwrap();
    let out = hydrovar(&with_inputs("validate", &[]), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("node"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input"));

    fs::write(dir.path().join("in/units.json"), "{ not json").unwrap();
    let out = hydrovar(&with_inputs("run", &["--out", "o"]), dir.path());
    assert_eq!(out.status.code(), Some(2));

    ok(&hydrovar(
        &["generate", "--preset", "tiny", "--out", "in"],
        dir.path(),
    ));
    fs::write(dir.path().join("bad.txt"), "hydrovar-lambda/1 3 1\n0 0 1\n").unwrap();
    let out = hydrovar(
        &with_inputs("simulate", &["--lambda", "bad.txt", "--out", "o"]),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
