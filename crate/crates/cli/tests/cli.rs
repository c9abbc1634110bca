use std::path::Path;
use std::process::{Command, Output};

use qnstr_cli::output::{read_summary, read_trace, TRACE_HEADER};

const BIN: &str = env!("CARGO_BIN_EXE_qnstr");

const BILINEAR: &str = r#"
name = "bilinear"
[problem]
kind = "bilinear"
coupling = [[1.0, 0.0], [0.0, 1.0]]
"#;

const TINY_GAN: &str = r#"
name = "tiny"
seed = 8
checkpoint_every = 10
[warm_start]
steps = 100
[problem]
kind = "tiny_gan"
samples = 8
[solver]
subspace = "vz"
subspace_dim = 3
max_iters = 30
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn qnstr(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("QNSTR_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn minimal_bilinear_run_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", BILINEAR);
    let out = tmp.path().join("out");
    let res = qnstr(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{res:?}");

    let trace_path = out.join("qnstr/trace.csv");
    assert_eq!(header(&trace_path), TRACE_HEADER.join(","));
    let trace = read_trace(&trace_path).unwrap();
    assert!(!trace.is_empty());
    let mut last = f64::INFINITY;
    for row in trace.iter().filter(|r| r.accepted) {
        assert!(row.f_norm <= last);
        last = row.f_norm;
    }
    assert!(trace.iter().all(|r| r.wall_ms.is_none()));

    let summary = read_summary(&out.join("qnstr/summary.json")).unwrap();
    assert!(summary.converged);
    assert!(summary.monotone_r);
    assert!(summary.final_fn_norm <= 1e-5);
    assert!(summary.certificate.within_two_eps);
    assert_eq!(summary.diagnostics.unwrap().lemma_violations, 0);
}

#[test]
fn violated_parameter_constraint_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{BILINEAR}\n[solver]\nzeta1 = 0.1\nzeta2 = 0.05\n");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let res = qnstr(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("zeta1 < zeta2"), "{stderr}");
}

#[test]
fn missing_config_exits_two() {
    let res = qnstr(&["run", "/nonexistent/qnstr.toml"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unconverged_baseline_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{BILINEAR}\n[baseline]\nmax_iters = 50\n");
    let cfg = write_config(tmp.path(), "b.toml", &text);
    let out = tmp.path().join("out");
    let res = qnstr(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--compare",
        "qnstr,alt_adam",
    ]);
    assert_eq!(res.status.code(), Some(4));

    // Both traces share one schema; baselines leave delta and rho empty.
    let q = out.join("qnstr/trace.csv");
    let a = out.join("alt_adam/trace.csv");
    assert_eq!(header(&q), header(&a));
    let adam = read_trace(&a).unwrap();
    assert_eq!(adam.len(), 50);
    assert!(adam.iter().all(|r| r.delta.is_none() && r.rho.is_none()));
    assert!(read_trace(&q).unwrap().iter().all(|r| r.delta.is_some()));
    let summary = read_summary(&out.join("alt_adam/summary.json")).unwrap();
    assert_eq!(summary.stop_reason, "max_iterations");
    assert!(summary.diagnostics.is_none());
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", BILINEAR);
    let out = tmp.path().join("env_out");
    let res = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap()])
        .env("QNSTR_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    assert!(out.join("qnstr/trace.csv").exists());
}

#[test]
fn cauchy_step_mode_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", BILINEAR);
    let out = tmp.path().join("out");
    let res = qnstr(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--step",
        "cauchy",
    ]);
    assert!(matches!(res.status.code(), Some(0 | 4)), "{res:?}");
    let summary = read_summary(&out.join("qnstr/summary.json")).unwrap();
    assert_eq!(summary.config.solver.step, qnstr_core::StepMode::Cauchy);
}

#[test]
fn sweep_over_subspace_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", BILINEAR);
    let out = tmp.path().join("sweep");
    let res = qnstr(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--axis",
        "L",
        "--values",
        "1,2,3,4",
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    for l in 1..=4 {
        let summary = read_summary(&out.join(format!("L_{l}/qnstr/summary.json"))).unwrap();
        assert_eq!(summary.config.solver.subspace_dim, l);
    }
    let long = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(long.starts_with("axis,value,method,k,"));
    for l in 1..=4 {
        assert!(long.contains(&format!("\nL,{l},qnstr,0,")));
    }
}

#[test]
fn sweep_over_subspace_kind_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", BILINEAR);
    let out = tmp.path().join("sweep");
    let res = qnstr(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--axis",
        "subspace",
        "--values",
        "vz,vf,vg",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    for v in ["vz", "vf", "vg"] {
        assert!(out.join(format!("subspace_{v}/qnstr/trace.csv")).exists());
    }

    let res = qnstr(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--axis",
        "seed",
        "--values",
        "3,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    let s = read_summary(&out.join("seed_4/qnstr/summary.json")).unwrap();
    assert_eq!(s.seed, 4);
    assert_eq!(s.config.solver.seed, 4);
}

#[test]
fn bad_sweep_value_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", BILINEAR);
    let res = qnstr(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--axis",
        "L",
        "--values",
        "0",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn repeated_runs_give_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", TINY_GAN);
    let mut traces = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("out{i}"));
        let res = qnstr(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(matches!(res.status.code(), Some(0 | 4)), "{res:?}");
        traces.push(std::fs::read(out.join("qnstr/trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn resume_reproduces_the_uninterrupted_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", TINY_GAN);
    let full = tmp.path().join("full");
    let res = qnstr(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        full.to_str().unwrap(),
    ]);
    assert!(matches!(res.status.code(), Some(0 | 4)), "{res:?}");
    let full_trace = std::fs::read_to_string(full.join("qnstr/trace.csv")).unwrap();
    assert!(full_trace.lines().count() > 12, "run stopped too early");

    // Simulate a crash after 13 rows: the checkpoint at k = 10 survives,
    // the trace has rows past it.
    let part = tmp.path().join("part");
    std::fs::create_dir_all(part.join("qnstr")).unwrap();
    let prefix: String = full_trace
        .lines()
        .take(14)
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(part.join("qnstr/trace.csv"), prefix).unwrap();
    let ck = full.join("qnstr/checkpoints/ck_000010.json");
    assert!(ck.exists());

    let res = qnstr(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        part.to_str().unwrap(),
        "--resume",
        ck.to_str().unwrap(),
    ]);
    assert!(matches!(res.status.code(), Some(0 | 4)), "{res:?}");
    let resumed = std::fs::read_to_string(part.join("qnstr/trace.csv")).unwrap();
    assert_eq!(resumed, full_trace);
}

#[test]
fn resume_with_other_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", TINY_GAN);
    let full = tmp.path().join("full");
    qnstr(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        full.to_str().unwrap(),
    ]);
    let other = write_config(
        tmp.path(),
        "o.toml",
        &TINY_GAN.replace("subspace_dim = 3", "subspace_dim = 2"),
    );
    let ck = full.join("qnstr/checkpoints/ck_000010.json");
    let res = qnstr(&[
        "run",
        other.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
        "--resume",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{res:?}");
}
