//! Config loading and the CSTR benchmark driver.
//!
//! A benchmark config is a TOML file naming a plant file and a controller
//! file (paths relative to the config) plus `[synth]` and `[sim]` tables; see
//! `configs/cstr.toml`. Running a case writes into the output directory:
//!
//! * `trajectory.csv` (`k,t,x_1..,u_1..,d_x,d_u,zeta,feasible`)
//! * `synthesis_log.csv` (`step,zeta,feasible,iterations,margin`), controlled cases only
//! * `report.txt`, the run summary followed by every certification report
//! * `plot.py`, a matplotlib script reading the CSV
//! * `lmi_step0.txt` when the LMI dump is requested

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::it2::{FuzzyRule, It2Controller, It2MembershipFn, It2Plant, MembershipShape, Premise, Weighting};
use crate::matkernel::{Matrix, SymMatrix};
use crate::sim::{self, DelayProcess, SimConfig, SimError, Trajectory};
use crate::synth::{self, HistoryWindow, Relaxation, SynthConfig};
use crate::verify::{self, CertReport, Vertex};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "IT2MPC_OUT_DIR";

/// `|x| < CONVERGENCE_RADIUS` for `CONVERGENCE_WINDOW` consecutive steps.
pub const CONVERGENCE_RADIUS: f64 = 0.01;
pub const CONVERGENCE_WINDOW: usize = 10;

pub const RPI_SAMPLES: usize = 2000;
pub const SANDWICH_SAMPLES: usize = 1000;
pub const REPLAY_PAIRS: usize = 500;

const BUNDLED_CONFIG: &str = include_str!("../configs/cstr.toml");
const BUNDLED_PLANT: &str = include_str!("../configs/cstr_plant.toml");
const BUNDLED_CONTROLLER: &str = include_str!("../configs/cstr_controller.toml");

/// Offset between the state-delay and input-delay seeds of one run.
const INPUT_SEED_SALT: u64 = 0x5eed_0000_0000_1000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("synthesis infeasible at step 0: {0}")]
    InitialInfeasible(String),
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Verify(#[from] verify::VerifyError),
    #[error("writing artifacts: {0}")]
    Io(#[from] io::Error),
}

impl From<SimError> for BenchError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InitialInfeasible(s) => Self::InitialInfeasible(s.to_string()),
            other => Self::Sim(other),
        }
    }
}

impl BenchError {
    /// Process exit code: 2 for step-0 infeasibility, 3 for config errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::InitialInfeasible(_) => 2,
            Self::Config(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Uncontrolled,
    NoDelay,
    StateDelay,
    BothDelay,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::Uncontrolled, Case::NoDelay, Case::StateDelay, Case::BothDelay];

    pub fn as_str(self) -> &'static str {
        match self {
            Case::Uncontrolled => "uncontrolled",
            Case::NoDelay => "nodelay",
            Case::StateDelay => "statedelay",
            Case::BothDelay => "bothdelay",
        }
    }

    pub fn is_controlled(self) -> bool {
        self != Case::Uncontrolled
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Case {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Case::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| {
            invalid("sim.case", format!("unknown case {s:?}, expected uncontrolled, nodelay, statedelay or bothdelay"))
        })
    }
}

/// A fully validated benchmark configuration.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub plant_path: PathBuf,
    pub controller_path: PathBuf,
    pub plant: It2Plant<f64>,
    pub controller: It2Controller<f64>,
    pub synth: SynthConfig<f64>,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub ts: f64,
    pub case: Case,
    pub seed: u64,
    pub resynthesize_every: usize,
    pub output_dir: PathBuf,
    /// Write the step-0 LMI problem next to the other artifacts.
    pub dump_lmi: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchFile {
    plant: String,
    controller: String,
    output_dir: Option<String>,
    synth: SynthSection,
    sim: SimSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSection {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    rho: f64,
    rho_d: f64,
    h: usize,
    j: usize,
    u_max: Vec<f64>,
    #[serde(default)]
    relaxation: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    steps: usize,
    x0: Vec<f64>,
    ts: f64,
    case: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    resynthesize_every: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantFile {
    n: usize,
    w: usize,
    r: usize,
    premise: PremiseSection,
    rule: Vec<RuleSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerFile {
    premise: PremiseSection,
    membership: Vec<MembershipSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PremiseSection {
    state: usize,
    #[serde(default)]
    offset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSection {
    a: Vec<Vec<f64>>,
    a_d: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    b_d: Vec<Vec<f64>>,
    membership: MembershipSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MembershipSection {
    lower: ShapeSection,
    upper: ShapeSection,
    weighting: WeightingSection,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
enum ShapeSection {
    Gaussian { center: f64, sigma: f64, height: f64 },
    Triangular { left: f64, peak: f64, right: f64, height: f64 },
}

#[derive(Deserialize, Clone, Copy)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum WeightingSection {
    SinSquared { state: usize },
    Constant { value: f64 },
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

fn matrix(field: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Matrix<f64>, ConfigError> {
    let got_cols = rows.first().map_or(0, Vec::len);
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(invalid(
            field,
            format!("expected a {}x{} matrix, got {}x{}", shape.0, shape.1, rows.len(), got_cols),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(field, "non-finite entry"));
    }
    Matrix::from_rows(rows).map_err(|e| invalid(field, e.to_string()))
}

fn sym_matrix(field: &str, rows: &[Vec<f64>], n: usize) -> Result<SymMatrix<f64>, ConfigError> {
    let m = matrix(field, rows, (n, n))?;
    SymMatrix::from_upper(&m)
        .ok()
        .filter(|s| s.as_matrix() == &m)
        .ok_or_else(|| invalid(field, "matrix must be symmetric"))
}

fn shape(field: &str, s: ShapeSection) -> Result<MembershipShape<f64>, ConfigError> {
    match s {
        ShapeSection::Gaussian { center, sigma, height } => {
            if !(sigma > 0.0) || !(height > 0.0 && height <= 1.0) {
                return Err(invalid(field, "gaussian needs sigma > 0 and height in (0, 1]"));
            }
            Ok(MembershipShape::Gaussian { center, sigma, height })
        }
        ShapeSection::Triangular { left, peak, right, height } => {
            if !(left < peak && peak < right) || !(height > 0.0 && height <= 1.0) {
                return Err(invalid(field, "triangular needs left < peak < right and height in (0, 1]"));
            }
            Ok(MembershipShape::Triangular { left, peak, right, height })
        }
    }
}

fn membership(field: &str, m: &MembershipSection, n: usize) -> Result<It2MembershipFn<f64>, ConfigError> {
    let weighting = match m.weighting {
        WeightingSection::SinSquared { state } => {
            if state >= n {
                return Err(invalid(&format!("{field}.weighting.state"), format!("index {state} outside {n} states")));
            }
            Weighting::SinSquared { state }
        }
        WeightingSection::Constant { value } => {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(&format!("{field}.weighting.value"), "must lie in [0, 1]"));
            }
            Weighting::Constant(value)
        }
    };
    let mf = It2MembershipFn {
        lower: shape(&format!("{field}.lower"), m.lower)?,
        upper: shape(&format!("{field}.upper"), m.upper)?,
        weighting,
    };
    Ok(mf)
}

fn premise(field: &str, p: &PremiseSection, n: usize) -> Result<Premise<f64>, ConfigError> {
    if p.state >= n {
        return Err(invalid(&format!("{field}.state"), format!("index {} outside {n} states", p.state)));
    }
    if !p.offset.is_finite() {
        return Err(invalid(&format!("{field}.offset"), "must be finite"));
    }
    Ok(Premise { state: p.state, offset: p.offset })
}

fn build_plant(text: &str, path: &Path) -> Result<It2Plant<f64>, ConfigError> {
    let f: PlantFile = parse(text, path)?;
    let (n, w) = (f.n, f.w);
    if n == 0 || w == 0 {
        return Err(invalid("n/w", "state and input dimensions must be positive"));
    }
    if f.rule.len() != f.r {
        return Err(invalid("r", format!("declares {} rules, file has {}", f.r, f.rule.len())));
    }
    let mut rules = Vec::with_capacity(f.r);
    let mut mfs = Vec::with_capacity(f.r);
    for (l, r) in f.rule.iter().enumerate() {
        let at = |name: &str| format!("rule[{}].{name}", l + 1);
        rules.push(FuzzyRule {
            a: matrix(&at("a"), &r.a, (n, n))?,
            a_d: matrix(&at("a_d"), &r.a_d, (n, n))?,
            b: matrix(&at("b"), &r.b, (n, w))?,
            b_d: matrix(&at("b_d"), &r.b_d, (n, w))?,
        });
        mfs.push(membership(&at("membership"), &r.membership, n)?);
    }
    let prem = premise("premise", &f.premise, n)?;
    It2Plant::new(rules, mfs, prem).map_err(|e| invalid("plant", e.to_string()))
}

fn build_controller(text: &str, path: &Path, plant: &It2Plant<f64>) -> Result<It2Controller<f64>, ConfigError> {
    let f: ControllerFile = parse(text, path)?;
    let n = plant.state_dim();
    let mfs = f
        .membership
        .iter()
        .enumerate()
        .map(|(i, m)| membership(&format!("membership[{}]", i + 1), m, n))
        .collect::<Result<Vec<_>, _>>()?;
    if mfs.len() != plant.n_rules() {
        return Err(invalid(
            "membership",
            format!("{} controller rules for {} plant rules", mfs.len(), plant.n_rules()),
        ));
    }
    let prem = premise("premise", &f.premise, n)?;
    It2Controller::new(mfs, prem, n).map_err(|e| invalid("controller", e.to_string()))
}

fn assemble(
    text: &str,
    path: &Path,
    load: impl Fn(&str) -> Result<(PathBuf, String), ConfigError>,
) -> Result<BenchConfig, ConfigError> {
    let f: BenchFile = parse(text, path)?;
    let (plant_path, plant_text) = load(&f.plant)?;
    let plant = build_plant(&plant_text, &plant_path)?;
    let (controller_path, ctrl_text) = load(&f.controller)?;
    let controller = build_controller(&ctrl_text, &controller_path, &plant)?;
    let (n, w) = (plant.state_dim(), plant.input_dim());

    let s = &f.synth;
    if (s.rho + s.rho_d - 1.0).abs() > 1e-12 {
        return Err(invalid(
            "synth.rho/synth.rho_d",
            format!("rho + rho_d must equal 1 (got {} + {} = {})", s.rho, s.rho_d, s.rho + s.rho_d),
        ));
    }
    if s.u_max.len() != w {
        return Err(invalid("synth.u_max", format!("{} bounds for {w} inputs", s.u_max.len())));
    }
    let relaxation = match s.relaxation.as_deref() {
        None | Some("scheduled") => Relaxation::Scheduled,
        Some("vertex") => Relaxation::Vertex,
        Some(other) => return Err(invalid("synth.relaxation", format!("unknown relaxation {other:?}"))),
    };
    let synth = SynthConfig::new(
        sym_matrix("synth.q", &s.q, n)?,
        sym_matrix("synth.r", &s.r, w)?,
        s.rho,
        s.rho_d,
        s.h,
        s.j,
        s.u_max.clone(),
    )
    .map_err(|e| invalid("synth", e.to_string()))?
    .with_relaxation(relaxation);

    let m = &f.sim;
    if m.x0.len() != n {
        return Err(invalid("sim.x0", format!("{} entries for {n} states", m.x0.len())));
    }
    if m.x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sim.x0", "non-finite entry"));
    }
    if m.steps == 0 {
        return Err(invalid("sim.steps", "must be at least 1"));
    }
    if !(m.ts > 0.0) {
        return Err(invalid("sim.ts", "must be positive"));
    }
    let resynthesize_every = m.resynthesize_every.unwrap_or(1);
    if resynthesize_every == 0 {
        return Err(invalid("sim.resynthesize_every", "must be at least 1"));
    }
    let case: Case = m.case.parse()?;
    let base = path.parent().unwrap_or(Path::new(""));
    let output_dir = base.join(f.output_dir.as_deref().unwrap_or("out"));
    Ok(BenchConfig {
        plant_path,
        controller_path,
        plant,
        controller,
        synth,
        steps: m.steps,
        x0: m.x0.clone(),
        ts: m.ts,
        case,
        seed: m.seed,
        resynthesize_every,
        output_dir,
        dump_lmi: false,
    })
}

/// Reads and validates a benchmark config; plant and controller paths are
/// resolved against the config's directory.
pub fn load_config(path: &Path) -> Result<BenchConfig, ConfigError> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    assemble(&text, path, |rel| {
        let p = base.join(rel);
        let t = read(&p)?;
        Ok((p, t))
    })
}

/// Parses a config from text, resolving referenced files through `files`
/// (name to contents) instead of the filesystem.
pub fn load_config_str(text: &str, files: &[(&str, &str)]) -> Result<BenchConfig, ConfigError> {
    assemble(text, Path::new("cstr.toml"), |rel| {
        files
            .iter()
            .find(|(name, _)| *name == rel)
            .map(|(name, body)| (PathBuf::from(name), body.to_string()))
            .ok_or_else(|| ConfigError::Io {
                path: PathBuf::from(rel),
                source: io::Error::new(io::ErrorKind::NotFound, "not among the supplied files"),
            })
    })
}

/// The bundled CSTR configuration, compiled into the library.
pub fn bundled() -> BenchConfig {
    load_config_str(BUNDLED_CONFIG, &bundled_files()).expect("bundled config is valid")
}

/// The bundled config and the files it references, by name.
pub fn bundled_files() -> [(&'static str, &'static str); 3] {
    [("cstr.toml", BUNDLED_CONFIG), ("cstr_plant.toml", BUNDLED_PLANT), ("cstr_controller.toml", BUNDLED_CONTROLLER)]
}

impl BenchConfig {
    pub fn with_case(mut self, case: Case) -> Self {
        self.case = case;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }

    /// Simulation settings for the configured case.
    pub fn sim_config(&self) -> SimConfig<f64> {
        let (h, j) = (self.synth.h, self.synth.j);
        let (sd, id) = match self.case {
            Case::Uncontrolled | Case::NoDelay => (DelayProcess::none(h), DelayProcess::none(j)),
            Case::StateDelay => (DelayProcess::uniform(self.seed, h), DelayProcess::none(j)),
            Case::BothDelay => {
                (DelayProcess::uniform(self.seed, h), DelayProcess::uniform(self.seed ^ INPUT_SEED_SALT, j))
            }
        };
        let mut sim = SimConfig::new(self.steps, self.x0.clone(), self.ts, sd, id);
        sim.resynthesize_every = self.resynthesize_every;
        sim
    }

    /// Runs the simulation only (no artifacts, no certification).
    pub fn simulate(&self) -> Result<Trajectory<f64>, BenchError> {
        let sim = self.sim_config();
        Ok(match self.case {
            Case::Uncontrolled => sim::uncontrolled_run(&self.plant, &sim)?,
            _ => sim::run(&self.plant, &self.controller, &self.synth, &sim)?,
        })
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub case: Case,
    pub seed: u64,
    pub trajectory: Trajectory<f64>,
    pub reports: Vec<CertReport>,
    pub convergence_step: Option<usize>,
    pub peak_input: f64,
    pub infeasible_steps: usize,
}

impl RunOutcome {
    pub fn certs_pass(&self) -> bool {
        self.reports.iter().all(CertReport::pass)
    }

    /// 0 iff every certification passed and (for controlled cases) no step was infeasible.
    pub fn exit_code(&self) -> i32 {
        if self.certs_pass() && self.infeasible_steps == 0 {
            0
        } else {
            1
        }
    }

    fn cert_summary(&self) -> String {
        if self.reports.is_empty() {
            return "none".into();
        }
        let failed: Vec<&str> = self.reports.iter().filter(|r| !r.pass()).map(|r| r.name.as_str()).collect();
        if failed.is_empty() {
            "PASS".into()
        } else {
            format!("FAIL:{}", failed.join("+"))
        }
    }
}

/// Certification suite for a controlled run.
pub fn certify(cfg: &BenchConfig, traj: &Trajectory<f64>) -> Result<Vec<CertReport>, BenchError> {
    let mut reports = vec![verify::check_lrf_trajectory(traj, &cfg.plant, &cfg.synth.q)?];
    let (sandwich, _, _) = verify::check_eigen_sandwich(&traj.solutions, SANDWICH_SAMPLES, cfg.seed)?;
    reports.push(sandwich);
    let first = &traj.solutions[0];
    reports.push(verify::check_rpi_sampling(
        &cfg.plant,
        &cfg.controller,
        first,
        cfg.synth.h,
        RPI_SAMPLES,
        true,
        cfg.seed,
    )?);
    for v in step0_vertices(cfg) {
        reports.push(verify::replay_derivation(
            first,
            &cfg.plant,
            &cfg.synth,
            v,
            REPLAY_PAIRS,
            verify::CHECK_TOL,
            cfg.seed,
        )?);
    }
    Ok(reports)
}

/// Vertices the step-0 decrease blocks were imposed at.
pub fn step0_vertices(cfg: &BenchConfig) -> Vec<Vertex> {
    let r = cfg.plant.n_rules();
    match cfg.synth.relaxation {
        Relaxation::Scheduled => (0..r).map(|t| Vertex { l: 0, i: 0, t }).collect(),
        Relaxation::Vertex => {
            (0..r).flat_map(|l| (0..r).flat_map(move |i| (0..r).map(move |t| Vertex { l, i, t }))).collect()
        }
    }
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Runs the configured case and writes its artifacts into `cfg.output_dir`.
pub fn run_case(cfg: &BenchConfig) -> Result<RunOutcome, BenchError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    if cfg.dump_lmi && cfg.case.is_controlled() {
        let hist = HistoryWindow::constant(&cfg.x0, cfg.synth.h, cfg.synth.j, cfg.plant.input_dim());
        let problem = synth::build_step_lmis(&cfg.plant, &cfg.synth, &hist)
            .map_err(|e| BenchError::InitialInfeasible(e.to_string()))?;
        fs::write(dir.join("lmi_step0.txt"), problem.to_string())?;
    }
    let traj = cfg.simulate()?;
    let reports = if cfg.case.is_controlled() { certify(cfg, &traj)? } else { Vec::new() };
    let outcome = RunOutcome {
        case: cfg.case,
        seed: cfg.seed,
        convergence_step: traj.convergence_step(CONVERGENCE_RADIUS, CONVERGENCE_WINDOW),
        peak_input: traj.peak_input(),
        infeasible_steps: traj.infeasible_steps(),
        trajectory: traj,
        reports,
    };
    let mut out = create(&dir.join("trajectory.csv"))?;
    outcome.trajectory.write_csv(&mut out)?;
    out.flush()?;
    if cfg.case.is_controlled() {
        let mut out = create(&dir.join("synthesis_log.csv"))?;
        outcome.trajectory.write_synthesis_log(&mut out)?;
        out.flush()?;
    }
    fs::write(dir.join("report.txt"), report_text(cfg, &outcome))?;
    fs::write(dir.join("plot.py"), plot_script(&outcome))?;
    Ok(outcome)
}

fn report_text(cfg: &BenchConfig, o: &RunOutcome) -> String {
    let mut s = String::new();
    s.push_str(&format!("case: {}\nseed: {}\nsteps: {}\n", o.case, o.seed, cfg.steps));
    s.push_str(&format!("convergence_step: {}\n", o.convergence_step.map_or("none".to_string(), |k| k.to_string())));
    s.push_str(&format!("peak_abs_u: {}\n", o.peak_input));
    if o.case.is_controlled() {
        s.push_str(&format!("infeasible_steps: {}\n", o.infeasible_steps));
        s.push_str(&format!("certifications: {}\n", o.cert_summary()));
    }
    if o.trajectory.diverged {
        s.push_str("diverged: true\n");
    }
    for r in &o.reports {
        s.push('\n');
        s.push_str(&r.to_string());
    }
    s
}

/// Matplotlib script: states and inputs over time, and the phase plane with
/// the step-0 terminal ellipse when a solution exists.
pub fn plot_script(o: &RunOutcome) -> String {
    let ellipse = o
        .trajectory
        .solutions
        .first()
        .and_then(|sol| {
            let w = sol.scheduling.clone()?;
            let p = sol.blended_p(&w).ok()?;
            Some(format!(
                "P = [[{}, {}], [{}, {}]]\nZETA = {}\n",
                p.get(0, 0),
                p.get(0, 1),
                p.get(1, 0),
                p.get(1, 1),
                sol.zeta
            ))
        })
        .filter(|_| o.trajectory.x_end.len() == 2)
        .unwrap_or_else(|| "P = None\nZETA = None\n".into());
    format!(
        r#"import csv
import math
import sys

import matplotlib.pyplot as plt

CASE = "{case}"
{ellipse}
path = sys.argv[1] if len(sys.argv) > 1 else "trajectory.csv"
with open(path) as f:
    rows = list(csv.DictReader(f))
t = [float(r["t"]) for r in rows]
xs = sorted(k for k in rows[0] if k.startswith("x_"))
us = sorted(k for k in rows[0] if k.startswith("u_"))

fig, (ax_x, ax_u) = plt.subplots(2, 1, sharex=True)
for k in xs:
    ax_x.plot(t, [float(r[k]) for r in rows], label=k)
for k in us:
    ax_u.step(t, [float(r[k]) for r in rows], where="post", label=k)
ax_x.set_ylabel("state")
ax_u.set_ylabel("input")
ax_u.set_xlabel("time [s]")
ax_x.legend()
ax_u.legend()
ax_x.set_title(CASE)
fig.savefig("states_inputs.png", dpi=150)

if len(xs) == 2:
    x1 = [float(r["x_1"]) for r in rows]
    x2 = [float(r["x_2"]) for r in rows]
    fig, (ax, zoom) = plt.subplots(1, 2, figsize=(11, 4.5))
    for a in (ax, zoom):
        a.plot(x1, x2, marker=".", label="trajectory")
        a.set_xlabel("x_1")
        a.set_ylabel("x_2")
    if P is not None:
        # x' P x = ZETA along the principal axes of P
        a, b, c = P[0][0], P[0][1], P[1][1]
        mean, dev = (a + c) / 2, math.hypot((a - c) / 2, b)
        lams = (mean - dev, mean + dev)
        th0 = 0.5 * math.atan2(2 * b, a - c)
        v1 = (math.cos(th0), math.sin(th0))
        v2 = (-v1[1], v1[0])
        r1, r2 = math.sqrt(ZETA / lams[1]), math.sqrt(ZETA / lams[0])
        ts = [2 * math.pi * i / 400 for i in range(401)]
        ex = [r1 * math.cos(t) * v1[0] + r2 * math.sin(t) * v2[0] for t in ts]
        ey = [r1 * math.cos(t) * v1[1] + r2 * math.sin(t) * v2[1] for t in ts]
        ax.plot(ex, ey, "--", label="terminal set (k=0)")
    ax.legend()
    ax.set_title(CASE + " phase plane")
    zoom.set_title("trajectory")
    fig.tight_layout()
    fig.savefig("phase_plane.png", dpi=150)
"#,
        case = o.case,
    )
}

/// One row of a seed sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub convergence_step: Option<usize>,
    pub peak_input: f64,
    pub infeasible_steps: usize,
    pub certs: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub case: Case,
    pub rows: Vec<SweepRow>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

impl SweepSummary {
    pub fn median_peak(&self) -> Option<f64> {
        median(self.rows.iter().map(|r| r.peak_input).collect())
    }

    /// (min, median, max) of a column; `None` entries are skipped.
    fn stats(&self, f: impl Fn(&SweepRow) -> Option<f64>) -> [Option<f64>; 3] {
        let v: Vec<f64> = self.rows.iter().filter_map(f).collect();
        let min = v.iter().copied().reduce(f64::min);
        let max = v.iter().copied().reduce(f64::max);
        [min, median(v), max]
    }

    /// Columns `seed,convergence_step,peak_abs_u,infeasible_steps,certs`, then
    /// `min`, `median` and `max` rows over the seeds.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "seed,convergence_step,peak_abs_u,infeasible_steps,certs")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.seed,
                r.convergence_step.map_or(String::new(), |k| k.to_string()),
                r.peak_input,
                r.infeasible_steps,
                r.certs
            )?;
        }
        let conv = self.stats(|r| r.convergence_step.map(|k| k as f64));
        let peak = self.stats(|r| Some(r.peak_input));
        let inf = self.stats(|r| Some(r.infeasible_steps as f64));
        let passed = self.rows.iter().filter(|r| r.certs == "PASS" || r.certs == "none").count();
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for (i, label) in ["min", "median", "max"].iter().enumerate() {
            writeln!(out, "{label},{},{},{},{passed}/{}", cell(conv[i]), cell(peak[i]), cell(inf[i]), self.rows.len())?;
        }
        Ok(())
    }
}

/// Runs the configured case for every seed (concurrently, one thread per core)
/// with artifacts under `output_dir/seed_<s>/`, and writes `sweep.csv`.
pub fn sweep(cfg: &BenchConfig, seeds: &[u64]) -> Result<SweepSummary, BenchError> {
    if seeds.is_empty() {
        return Err(ConfigError::Invalid { field: "seeds".into(), message: "at least one seed".into() }.into());
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    let chunk = seeds.len().div_ceil(workers);
    let results: Vec<Result<RunOutcome, BenchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&seed| {
                            let c = cfg
                                .clone()
                                .with_seed(seed)
                                .with_output_dir(cfg.output_dir.join(format!("seed_{seed}")));
                            run_case(&c)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(seeds.len());
    for r in results {
        let o = r?;
        rows.push(SweepRow {
            seed: o.seed,
            convergence_step: o.convergence_step,
            peak_input: o.peak_input,
            infeasible_steps: o.infeasible_steps,
            certs: o.cert_summary(),
        });
    }
    let summary = SweepSummary { case: cfg.case, rows };
    let mut out = create(&cfg.output_dir.join("sweep.csv"))?;
    summary.write_csv(&mut out)?;
    out.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_matches_parameter_list() {
        let c = bundled();
        assert_eq!((c.plant.n_rules(), c.plant.state_dim(), c.plant.input_dim()), (3, 2, 1));
        assert_eq!((c.synth.h, c.synth.j), (10, 10));
        assert_eq!(c.synth.q, SymMatrix::diag(&[1e-6, 1e-9]));
        assert_eq!(c.synth.r, SymMatrix::diag(&[0.001]));
        assert_eq!(c.x0, vec![0.5, -0.5]);
        assert_eq!((c.ts, c.synth.u_max[0], c.synth.rho, c.synth.rho_d), (0.2, 6.0, 0.8, 0.2));
        let r1 = &c.plant.rules()[0];
        assert_eq!(r1.a[(1, 0)], -0.2238);
        // B_d = 0.001 B
        for r in c.plant.rules() {
            assert!(r.b_d.try_sub(&r.b.scale(0.001)).unwrap().max_abs() < 1e-15);
        }
    }

    fn with_synth_line(old: &str, new: &str) -> String {
        let text = bundled_files()[0].1;
        assert!(text.contains(old));
        text.replace(old, new)
    }

    #[test]
    fn rho_sum_is_named() {
        let text = with_synth_line("rho_d = 0.2", "rho_d = 0.3");
        let err = load_config_str(&text, &bundled_files()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rho + rho_d must equal 1"), "{msg}");
    }

    #[test]
    fn bad_matrix_shape_is_reported() {
        let plant = bundled_files()[1].1.replacen(
            "a = [[0.75, 0.0119], [-0.2238, 0.8262]]",
            "a = [[0.75, 0.0119, 0.0], [-0.2238, 0.8262, 0.0]]",
            1,
        );
        let files = [bundled_files()[0], ("cstr_plant.toml", plant.as_str()), bundled_files()[2]];
        let err = load_config_str(bundled_files()[0].1, &files).unwrap_err().to_string();
        assert!(err.contains("rule[1].a") && err.contains("2x2") && err.contains("2x3"), "{err}");
    }

    #[test]
    fn parse_error_has_location() {
        let text = with_synth_line("rho = 0.8", "rho = ");
        let err = load_config_str(&text, &bundled_files()).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_case_rejected() {
        let text = bundled_files()[0].1.replace("case = \"bothdelay\"", "case = \"sometimes\"");
        let err = load_config_str(&text, &bundled_files()).unwrap_err().to_string();
        assert!(err.contains("sim.case"), "{err}");
    }

    #[test]
    fn case_names_round_trip() {
        for c in Case::ALL {
            assert_eq!(c.as_str().parse::<Case>().unwrap(), c);
        }
    }

    #[test]
    fn sweep_summary_rows() {
        let s = SweepSummary {
            case: Case::BothDelay,
            rows: vec![SweepRow {
                seed: 4,
                convergence_step: Some(70),
                peak_input: 2.5,
                infeasible_steps: 0,
                certs: "PASS".into(),
            }],
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "4,70,2.5,0,PASS");
        assert_eq!(lines[3], "median,70,2.5,0,1/1");
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }
}
