use std::fs;
use std::path::Path;

use it2mpc::bench::{self, Case};

#[test]
fn on_disk_config_matches_bundled() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/cstr.toml");
    let disk = bench::load_config(&path).unwrap();
    let built = bench::bundled();
    assert_eq!(disk.plant.rules(), built.plant.rules());
    assert_eq!(disk.synth.q, built.synth.q);
    assert_eq!(disk.case, Case::BothDelay);
    assert_eq!(disk.output_dir, path.parent().unwrap().join("out"));
}

#[test]
fn nodelay_run_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench::bundled().with_case(Case::NoDelay).with_steps(100).with_output_dir(dir.path());
    let o = bench::run_case(&cfg).unwrap();
    assert_eq!(o.exit_code(), 0);
    assert_eq!(o.infeasible_steps, 0);
    // one report each for decrease, sandwich, invariance, plus a replay per successor rule
    assert_eq!(o.reports.len(), 6);
    assert!(o.convergence_step.is_some());
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("check: terminal-set-invariance"));
    let log = fs::read_to_string(dir.path().join("synthesis_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 101);
}

#[test]
fn uncontrolled_run_does_not_settle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench::bundled().with_case(Case::Uncontrolled).with_steps(200).with_output_dir(dir.path());
    let o = bench::run_case(&cfg).unwrap();
    assert!(o.convergence_step.is_none());
    assert!(o.reports.is_empty());
    assert_eq!(o.peak_input, 0.0);
}

#[test]
fn bothdelay_seed_7_converges() {
    let cfg = bench::bundled().with_case(Case::BothDelay).with_seed(7).with_steps(150);
    let t = cfg.simulate().unwrap();
    let k = t.convergence_step(bench::CONVERGENCE_RADIUS, bench::CONVERGENCE_WINDOW).unwrap();
    assert!(k <= 140, "{k}");
    assert!(t.peak_input() <= 6.0);
    assert!(t.d_x.iter().any(|&d| d > 1));
}

#[test]
fn sweep_table_has_summary_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench::bundled().with_case(Case::StateDelay).with_steps(15).with_output_dir(dir.path());
    let s = bench::sweep(&cfg, &[1, 2]).unwrap();
    assert_eq!(s.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2]);
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(bench::sweep(&cfg, &[]).is_err());
}
