//! End-to-end tests of the binary: flag surface, exit-code contract, and
//! byte-stable outputs.

use std::io::Write;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ode2scm"))
        .args(args)
        .env_remove("ODE2SCM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for sub in ["simulate", "stability", "derive", "solve", "verify"] {
        assert!(text.contains(sub), "help must mention `{sub}`");
    }
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["simulate", "--builtin", "lv", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_model_exits_2() {
    let out = run(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--model or --builtin"));
}

#[test]
fn parse_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "var X in (-inf,inf)").unwrap();
    writeln!(f, "dyn X = X + Y").unwrap();
    writeln!(f, "init X = 0").unwrap();
    let out = run(&["simulate", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown identifier"));
}

#[test]
fn simulate_intervened_lv_converges() {
    let out = run(&[
        "simulate", "--builtin", "lv", "--do", "X2=2", "--t-end", "50", "--samples", "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = stdout(&out);
    assert!(csv.starts_with("t,X1,X2\n"));
    assert!(csv.contains("# terminated: converged"));
    let summary = stderr(&out);
    assert!(summary.contains("status: converged"));
    assert!(summary.contains(", 2]"), "clamped coordinate stays at 2");
}

#[test]
fn simulate_unintervened_lv_oscillates() {
    let out = run(&[
        "simulate", "--builtin", "lv", "--lv-init", "0.5,0.5", "--t-end", "50", "--samples", "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("status: oscillating"));
}

#[test]
fn simulate_writes_file_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "simulate", "--builtin", "mass-spring", "--d", "2", "--t-end", "10",
            "--samples", "20", "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn stability_exit_codes() {
    // Damped chain: stable.
    let out = run(&[
        "stability", "--builtin", "mass-spring", "--d", "2", "--trials", "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("verdict: stable-w.r.t.-probes"));

    // Predator-prey: refuted.
    let out = run(&[
        "stability", "--builtin", "lv", "--trials", "4", "--t-max", "60",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("verdict: refuted"));
}

#[test]
fn stability_degenerate_clamp_shows_a_family() {
    let out = run(&[
        "stability", "--builtin", "lv", "--theta", "1,1,1,1", "--do", "X2=1", "--trials", "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("verdict: refuted"));
    assert!(text.contains("distinct limits"), "{text}");
}

#[test]
fn derive_lee_prints_equations() {
    let out = run(&["derive", "--builtin", "lv", "--to", "lee"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("E[X1]: 0 = X1 * (th11 - th12 * X2)"));
    assert!(text.contains("E[X2]: 0 = -X2 * (th22 - th21 * X1)"));
    assert!(text.contains("digraph"));
}

#[test]
fn derive_scm_refusal_and_force() {
    let out = run(&["derive", "--builtin", "lv", "--to", "scm"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("derivation refused"));

    let out = run(&["derive", "--builtin", "lv", "--to", "scm", "--force"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("X[X1] = 0 / (th11 - th12 * X2)"));
}

#[test]
fn derive_mass_spring_scm_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "derive", "--builtin", "mass-spring", "--d", "4", "--to", "scm",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let scm = std::fs::read_to_string(dir.path().join("scm.txt")).unwrap();
    assert!(scm.contains("(k1 * (Q2 - l1) + k0 * l0) / (k1 + k0)"));
    let dot = std::fs::read_to_string(dir.path().join("scm.dot")).unwrap();
    assert!(dot.contains("\"X1\" -> \"X2\""));
    assert!(!dot.contains("\"X1\" -> \"X1\""), "no self-loops in the model graph");
    assert!(dir.path().join("system.dot").exists());
}

#[test]
fn solve_lv_finds_both_equilibria() {
    let out = run(&["solve", "--builtin", "lv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("status: multiple"));
    assert!(text.contains("solution 0"));
    assert!(text.contains("solution 1"));
}

#[test]
fn solve_intervened_mass_spring_scm() {
    let out = run(&[
        "solve", "--builtin", "mass-spring", "--d", "2", "--wall", "3", "--what", "scm",
        "--do", "Q2=3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("status: unique-w.r.t.-probes"));
    assert!(text.contains("1.500000000000"), "{text}");
}

#[test]
fn repeated_do_flags_compose_into_a_joint_intervention() {
    let out = run(&[
        "solve", "--builtin", "mass-spring", "--d", "3", "--wall", "4",
        "--do", "Q1=0.5", "--do", "Q3=3.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("status: unique-w.r.t.-probes"));
    // Clamped positions appear verbatim in the solution.
    assert!(text.contains("0.500000000000"));
    assert!(text.contains("3.500000000000"));
}

#[test]
fn verify_single_model_passes() {
    let out = run(&[
        "verify", "--builtin", "mass-spring", "--d", "3", "--do", "Q2=2.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("verdict=pass"));
}

#[test]
fn verify_lv_reports_precondition_unmet_with_exit_0() {
    let out = run(&["verify", "--builtin", "lv"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("verdict=precondition-unmet"));
}

#[test]
fn verify_suite_is_deterministic() {
    let args = ["verify", "--suite", "--seed", "7", "--random-interventions", "1"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout, "reports must be byte-identical");
    let text = stdout(&a);
    assert!(text.contains("# summary:"));
    assert!(text.contains("fail=0"));
}
