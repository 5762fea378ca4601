use std::fs;
use std::process::{Command, Output};

use parastab_cli::dispatch;

fn parastab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parastab"))
        .args(args)
        .env("PARASTAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(dispatch(["parastab", "frobnicate"]), 2);
    assert_eq!(parastab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dispatch(["parastab", "simulate", "--no-such-flag"]), 2);
}

#[test]
fn help_exits_0() {
    assert_eq!(parastab(&["--help"]).status.code(), Some(0));
}

#[test]
fn check_ops_passes_on_defaults() {
    let o = parastab(&["check-ops"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(
        out.lines().filter(|l| l.starts_with("PASS")).count(),
        8,
        "{out}"
    );
}

#[test]
fn dde_beyond_inverse_rho_grows() {
    let o = parastab(&["dde", "--rho", "1", "--kappa", "-2", "--tau", "1.0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("classification: growing"), "{out}");
    assert!(out.contains("tau_hat = 0.6045998"), "{out}");
}

#[test]
fn dde_rejects_bad_parameters() {
    assert_eq!(
        parastab(&["dde", "--rho", "1", "--kappa", "-0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        parastab(&["dde", "--tau", "0.0005", "--h", "0.001"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn dde_csv_has_zero_error_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dde.csv");
    let o = parastab(&[
        "dde",
        "--tau",
        "0.3",
        "--T",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    let rows = parastab_core::io::read_trace_csv(&text).unwrap();
    assert_eq!(rows.len(), 2001);
    assert!(rows.iter().all(|r| r.norm_err == 0.0));
}

#[test]
fn spectral_runs() {
    let o = parastab(&["spectral", "--T", "20"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("controlled modes m = 3"));
}

#[test]
fn simulate_free_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("free.csv");
    let o = parastab(&[
        "simulate",
        "--mode",
        "free",
        "--T",
        "0.05",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with('#'));
    assert!(text.lines().any(|l| l == "t,norm_y,norm_err,norm_u"));
    let rows = parastab_core::io::read_trace_csv(&text).unwrap();
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r.norm_u == 0.0));

    // the manifest reproduces the run
    let cfg = parastab_core::io::parse_manifest(&text).unwrap();
    let parastab_core::ParsedConfig::Scenario(cfg) = cfg else {
        panic!()
    };
    assert_eq!(cfg.mode, parastab_core::Mode::Free);
    assert_eq!(parastab_core::run(&cfg).unwrap().rows, rows);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let args = [
            "simulate",
            "--T",
            "0.2",
            "--zeta-mag",
            "1e-3",
            "--seed",
            seed,
            "--out",
            path.to_str().unwrap(),
        ];
        assert_eq!(parastab(&args).status.code(), Some(0));
        body(&fs::read_to_string(path).unwrap())
    };
    let (a, b, c) = (go("a.csv", "5"), go("b.csv", "5"), go("c.csv", "6"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn config_errors_exit_1_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "# scenario\nmode = free\nrf = 5\n").unwrap();
    let o = parastab(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    fs::write(&path, "tau = 0.1005\n").unwrap();
    assert_eq!(
        parastab(&["simulate", "--config", path.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        parastab(&["simulate", "--config", "/nonexistent/x.cfg"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "mode = nominal\nT = 5\n").unwrap();
    let out = dir.path().join("o.csv");
    let o = parastab(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "free",
        "--T",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("#   mode = free"));
    assert_eq!(parastab_core::io::read_trace_csv(&text).unwrap().len(), 11);
}

#[test]
fn sweep_tau_reports_onset() {
    let o = parastab(&["sweep-tau", "--T", "4", "--taus", "0.4"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    assert!(out.contains("instability onset: tau = 0.4"), "{out}");
}
