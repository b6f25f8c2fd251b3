use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_it2mpc"));
    c.env_remove("IT2MPC_OUT_DIR");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs")
}

/// Copies the bundled configs into `dir`, applying `edit` to the top-level file.
fn write_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    for f in ["cstr_plant.toml", "cstr_controller.toml"] {
        fs::copy(configs().join(f), dir.join(f)).unwrap();
    }
    let text = fs::read_to_string(configs().join("cstr.toml")).unwrap();
    let path = dir.join("cstr.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn first_line(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_headers_are_stable() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", "--case", "nodelay", "--steps", "20", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.path().join("nodelay");
    assert_eq!(first_line(&dir.join("trajectory.csv")), "k,t,x_1,x_2,u_1,d_x,d_u,zeta,feasible");
    assert_eq!(first_line(&dir.join("synthesis_log.csv")), "step,zeta,feasible,iterations,margin");
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("certifications: PASS"));
    assert!(dir.join("plot.py").exists());
    assert_eq!(fs::read_to_string(dir.join("trajectory.csv")).unwrap().lines().count(), 21);
}

#[test]
fn uncontrolled_has_no_synthesis_log() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", "--case", "uncontrolled", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let dir = out.path().join("uncontrolled");
    assert!(dir.join("trajectory.csv").exists());
    assert!(!dir.join("synthesis_log.csv").exists());
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("convergence_step: none"), "{report}");
}

#[test]
fn out_dir_from_environment() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .env("IT2MPC_OUT_DIR", out.path())
        .args(["run", "--case", "uncontrolled", "--steps", "5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.path().join("uncontrolled/trajectory.csv").exists());
}

#[test]
fn rho_sum_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| t.replace("rho_d = 0.2", "rho_d = 0.3"));
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--case", "nodelay"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rho + rho_d"), "{err}");
}

#[test]
fn missing_plant_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| t.replace("\"cstr_plant.toml\"", "\"nope.toml\""));
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn bad_arguments_exit_3() {
    assert_eq!(run(&["run", "--case", "sometimes"]).status.code(), Some(3));
    assert_eq!(run(&["sweep", "--seeds", ""]).status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn initial_infeasibility_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| t.replace("u_max = [6.0]", "u_max = [0.01]"));
    let out = dir.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--case", "nodelay", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 0"));
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o =
            run(&["run", "--case", "bothdelay", "--seed", "3", "--steps", "25", "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["trajectory.csv", "synthesis_log.csv"] {
        let x = fs::read(a.path().join("bothdelay").join(f)).unwrap();
        let y = fs::read(b.path().join("bothdelay").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn sweep_single_seed_table() {
    let out = tempfile::tempdir().unwrap();
    let o =
        run(&["sweep", "--case", "statedelay", "--seeds", "5", "--steps", "20", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.path().join("statedelay/sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "seed,convergence_step,peak_abs_u,infeasible_steps,certs");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("5,"));
    assert!(lines[2].starts_with("min,"));
    assert!(out.path().join("statedelay/seed_5/trajectory.csv").exists());
}

#[test]
fn lmi_dump_written_on_request() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", "--case", "nodelay", "--steps", "3", "--dump-lmi", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let dump = fs::read_to_string(out.path().join("nodelay/lmi_step0.txt")).unwrap();
    assert!(!dump.is_empty());
}
