use std::path::Path;
use std::process::{Command, Output};

fn rstokes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rstokes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(code(&rstokes(&[])), 1);
    assert_eq!(code(&rstokes(&["converge", "--no-such-flag"])), 1);
    assert_eq!(code(&rstokes(&["--help"])), 0);
}

#[test]
fn glen_exponent_below_one_is_rejected() {
    let o = rstokes(&["cavity", "--glen_n", "0.5"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("glen_n"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "dt = 0.1\ntime_step = 3\n").unwrap();
    let o = rstokes(&["cavity", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("time_step"));
}

#[test]
fn converge_writes_a_deterministic_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    let args = [
        "converge",
        "--r",
        "2,1.5",
        "--levels",
        "2",
        "--base_n",
        "2",
        "--out",
        table.to_str().unwrap(),
    ];
    assert_eq!(code(&rstokes(&args)), 0);
    let first = read(&table);
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(
        lines[0],
        "r,h,err_D,order_D,err_V,order_V,err_p,order_p,err_lambda,order_lambda,newton_iters"
    );
    assert_eq!(lines.len(), 5);
    assert_eq!(code(&rstokes(&args)), 0);
    assert_eq!(read(&table), first);
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("table_manifest.json"))).unwrap();
    assert_eq!(manifest["subcommand"], "converge");
    assert_eq!(manifest["config"]["eps_reg"], 1e-4);
    assert!(dir.path().join("table_config.toml").exists());
}

#[test]
fn solve_mms_round_trips_its_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let mesh = dir.path().join("square.mesh");
    let o = rstokes(&[
        "solve-mms",
        "--n",
        "4",
        "--r",
        "1.5",
        "--out",
        a.to_str().unwrap(),
        "--save_mesh",
        mesh.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = rstokes(&[
        "solve-mms",
        "--r",
        "1.5",
        "--mesh",
        mesh.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&a.join("summary.csv")), read(&b.join("summary.csv")));
    assert!(read(&a.join("newton.csv")).starts_with("iteration,residual,active_set_size\n"));
    assert!(read(&a.join("solution.vtk")).starts_with("# vtk DataFile Version 3.0"));
}

#[test]
fn newton_failure_exits_with_two() {
    let o = rstokes(&["solve-mms", "--n", "4", "--r", "1.25", "--newton_max_iters", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn cavity_outputs_and_rerun_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = rstokes(&[
        "cavity",
        "--nx",
        "8",
        "--ny",
        "8",
        "--dt",
        "0.2",
        "--t_end",
        "0.4",
        "--snapshots",
        "0,0.2",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Courant"));
    let summary = read(&a.join("summary.csv"));
    assert!(summary.starts_with("t,cavity_volume,max_abs_gnu,newton_iters,active_edges"));
    assert_eq!(summary.lines().count(), 4);
    let roof = read(&a.join("roof_t0.2000.csv"));
    assert!(roof.starts_with("x,b,h_c,gamma_n_u,lambda\n"));
    assert_eq!(roof.lines().count(), 1 + 9);
    assert!(a.join("fields_t0.0000.vtk").exists());

    let b = dir.path().join("b");
    let cfg = a.join("config.toml");
    let o = rstokes(&[
        "cavity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&b.join("summary.csv")), summary);
    assert_eq!(read(&b.join("roof_t0.2000.csv")), roof);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "nx = 8\nny = 8\ndt = 0.1\nt_end = 0.1\nsnapshots = []\np_e = 5.0\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = rstokes(&[
        "cavity",
        "--config",
        cfg.to_str().unwrap(),
        "--p_e",
        "2.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["p_e"], 2.5);
    assert_eq!(manifest["config"]["nx"], 8);
}

#[test]
fn check_passes() {
    let o = rstokes(&["check", "--seed", "3"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.contains(": PASS")).count(), 4);
}
