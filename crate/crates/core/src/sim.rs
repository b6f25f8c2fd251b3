//! Closed-loop simulation of the delayed fuzzy plant.
//!
//! The simulator keeps a [`HistoryWindow`] of past states and inputs, realizes
//! the delays with a [`DelayProcess`] per channel and advances
//!
//! ```text
//! x(k+1) = A_w x(k) + B_w u(k) + A_d,w x(k - d_x) + B_d,w u(k - d_u)
//! ```
//!
//! with every blended matrix taken at the weights of the current state. A delay
//! of `0` (the [`DelayKind::None`] process) makes the delayed terms read the
//! current values.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::it2::{self, It2Controller, It2Error, It2Plant};
use crate::synth::{self, HistoryWindow, SynthConfig, SynthError, SynthesisSolution};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("history too short: {0}")]
    History(String),
    #[error("synthesis infeasible at the initial step: {0}")]
    InitialInfeasible(SynthError),
    #[error("synthesis failed at step {step}: {source}")]
    Synthesis { step: usize, source: SynthError },
    #[error(transparent)]
    Fuzzy(#[from] It2Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayKind {
    /// Undelayed system: delayed terms read the current values.
    None,
    Constant(usize),
    /// Independent uniform draws from `1..=bound`, seeded.
    UniformRandom(u64),
    /// Constant delays `1..=bound`, one run each; see [`DelayProcess::expand`].
    WorstCaseSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayProcess {
    pub kind: DelayKind,
    pub bound: usize,
}

impl DelayProcess {
    pub fn none(bound: usize) -> Self {
        Self { kind: DelayKind::None, bound }
    }

    pub fn constant(d: usize, bound: usize) -> Self {
        Self { kind: DelayKind::Constant(d), bound }
    }

    pub fn uniform(seed: u64, bound: usize) -> Self {
        Self { kind: DelayKind::UniformRandom(seed), bound }
    }

    pub fn worst_case_sweep(bound: usize) -> Self {
        Self { kind: DelayKind::WorstCaseSweep, bound }
    }

    /// The individual processes a run has to be repeated over.
    pub fn expand(&self) -> Vec<DelayProcess> {
        match self.kind {
            DelayKind::WorstCaseSweep => (1..=self.bound).map(|d| Self::constant(d, self.bound)).collect(),
            _ => vec![*self],
        }
    }

    fn validate(&self, what: &str) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(format!("{what}: {m}")));
        match self.kind {
            DelayKind::None => Ok(()),
            _ if self.bound == 0 => bad("delay bound must be at least 1".into()),
            DelayKind::Constant(d) if d == 0 || d > self.bound => {
                bad(format!("constant delay {d} outside [1, {}]", self.bound))
            }
            DelayKind::WorstCaseSweep => bad("worst-case sweep must be expanded into constant runs".into()),
            _ => Ok(()),
        }
    }
}

/// Stateful realization of one delay channel.
#[derive(Debug, Clone)]
struct DelaySampler {
    process: DelayProcess,
    rng: Option<ChaCha8Rng>,
}

impl DelaySampler {
    fn new(process: DelayProcess) -> Self {
        let rng = match process.kind {
            DelayKind::UniformRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Self { process, rng }
    }

    fn next(&mut self) -> usize {
        match self.process.kind {
            DelayKind::None | DelayKind::WorstCaseSweep => 0,
            DelayKind::Constant(d) => d,
            DelayKind::UniformRandom(_) => {
                self.rng.as_mut().expect("seeded sampler").random_range(1..=self.process.bound)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub steps: usize,
    pub x0: Vec<T>,
    /// Sample time, used for the time column only.
    pub ts: T,
    pub state_delay: DelayProcess,
    pub input_delay: DelayProcess,
    /// Draw one delay per step and use it on both channels (clamped to the input bound).
    pub shared_delays: bool,
    /// Solve a new synthesis problem every this many steps.
    pub resynthesize_every: usize,
}

impl<T: Scalar> SimConfig<T> {
    pub fn new(steps: usize, x0: Vec<T>, ts: T, state_delay: DelayProcess, input_delay: DelayProcess) -> Self {
        Self { steps, x0, ts, state_delay, input_delay, shared_delays: false, resynthesize_every: 1 }
    }

    pub fn validate(&self, n: usize) -> Result<(), SimError> {
        if self.steps == 0 {
            return Err(SimError::Config("steps must be at least 1".into()));
        }
        if !(self.ts > T::zero()) {
            return Err(SimError::Config("sample time must be positive".into()));
        }
        if self.x0.len() != n {
            return Err(SimError::Config(format!("x0 has {} entries, plant has {n} states", self.x0.len())));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Config("x0 is not finite".into()));
        }
        if self.resynthesize_every == 0 {
            return Err(SimError::Config("resynthesize_every must be at least 1".into()));
        }
        self.state_delay.validate("state delay")?;
        self.input_delay.validate("input delay")
    }

    fn samplers(&self) -> (DelaySampler, DelaySampler) {
        (DelaySampler::new(self.state_delay), DelaySampler::new(self.input_delay))
    }

    fn draw(&self, sx: &mut DelaySampler, su: &mut DelaySampler) -> (usize, usize) {
        let dx = sx.next();
        if self.shared_delays && self.input_delay.kind != DelayKind::None {
            let du = if dx == 0 { su.next() } else { dx.min(self.input_delay.bound) };
            (dx, du)
        } else {
            (dx, su.next())
        }
    }
}

/// Per-step synthesis record.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord<T> {
    pub step: usize,
    pub zeta: Option<T>,
    pub feasible: bool,
    pub iterations: usize,
    pub margin: Option<f64>,
    pub error: Option<String>,
}

/// A recorded run. Per-step vectors all have the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub ts: T,
    pub x: Vec<Vec<T>>,
    /// State after the last recorded step.
    pub x_end: Vec<T>,
    pub u: Vec<Vec<T>>,
    /// Delayed state `x(k - d_x)` that entered the step.
    pub x_d: Vec<Vec<T>>,
    pub d_x: Vec<usize>,
    pub d_u: Vec<usize>,
    /// `zeta` of the solution in force; `None` without a controller.
    pub zeta: Vec<Option<T>>,
    /// `x' P_w x` with the solution in force; `None` without a controller.
    pub v: Vec<Option<T>>,
    /// Whether the step's synthesis succeeded (or was skipped); `None` without a controller.
    pub feasible: Vec<Option<bool>>,
    /// Index into `solutions` of the solution in force at each step.
    pub solution_index: Vec<Option<usize>>,
    pub solutions: Vec<SynthesisSolution<T>>,
    pub synthesis_log: Vec<SynthRecord<T>>,
    /// Set when an uncontrolled run was stopped by the divergence guard.
    pub diverged: bool,
}

impl<T: Scalar> Trajectory<T> {
    fn empty(ts: T, x0: &[T]) -> Self {
        Self {
            ts,
            x: Vec::new(),
            x_end: x0.to_vec(),
            u: Vec::new(),
            x_d: Vec::new(),
            d_x: Vec::new(),
            d_u: Vec::new(),
            zeta: Vec::new(),
            v: Vec::new(),
            feasible: Vec::new(),
            solution_index: Vec::new(),
            solutions: Vec::new(),
            synthesis_log: Vec::new(),
            diverged: false,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `x(k+1)` for `k` in `0..len`.
    pub fn next_state(&self, k: usize) -> &[T] {
        if k + 1 < self.x.len() {
            &self.x[k + 1]
        } else {
            &self.x_end
        }
    }

    /// Solution in force at step `k`.
    pub fn solution(&self, k: usize) -> Option<&SynthesisSolution<T>> {
        self.solution_index.get(k).copied().flatten().map(|i| &self.solutions[i])
    }

    pub fn state_norms(&self) -> Vec<T> {
        self.x.iter().map(|x| crate::matkernel::norm2(x)).collect()
    }

    pub fn peak_input(&self) -> T {
        self.u.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn infeasible_steps(&self) -> usize {
        self.synthesis_log.iter().filter(|r| !r.feasible).count()
    }

    /// First `k` from which `|x| < threshold` holds for `window` consecutive steps.
    pub fn convergence_step(&self, threshold: T, window: usize) -> Option<usize> {
        let norms = self.state_norms();
        let mut run = 0;
        for (k, &nk) in norms.iter().enumerate() {
            if nk < threshold {
                run += 1;
                if run >= window {
                    return Some(k + 1 - window);
                }
            } else {
                run = 0;
            }
        }
        None
    }

    pub fn csv_header(&self) -> String {
        let n = self.x_end.len();
        let w = self.u.first().map_or(0, Vec::len);
        let mut cols = vec!["k".to_string(), "t".to_string()];
        cols.extend((1..=n).map(|i| format!("x_{i}")));
        cols.extend((1..=w).map(|i| format!("u_{i}")));
        cols.extend(["d_x", "d_u", "zeta", "feasible"].map(String::from));
        cols.join(",")
    }

    /// Columns `k, t, x_1..x_n, u_1..u_w, d_x, d_u, zeta, feasible`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for k in 0..self.len() {
            let mut row = vec![k.to_string(), (T::lit(k as f64) * self.ts).to_string()];
            row.extend(self.x[k].iter().map(|v| v.to_string()));
            row.extend(self.u[k].iter().map(|v| v.to_string()));
            row.push(self.d_x[k].to_string());
            row.push(self.d_u[k].to_string());
            row.push(self.zeta[k].map_or(String::new(), |z| z.to_string()));
            row.push(self.feasible[k].map_or(String::new(), |f| u8::from(f).to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Columns `step, zeta, feasible, iterations, margin`.
    pub fn write_synthesis_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,zeta,feasible,iterations,margin")?;
        for r in &self.synthesis_log {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.step,
                r.zeta.map_or(String::new(), |z| z.to_string()),
                u8::from(r.feasible),
                r.iterations,
                r.margin.map_or(String::new(), |m| m.to_string())
            )?;
        }
        Ok(())
    }
}

/// Result of one closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub x_next: Vec<T>,
    pub u: Vec<T>,
    pub x_d: Vec<T>,
    pub u_d: Vec<T>,
}

/// Advances the plant by one step with input `u`; `dx = 0` / `du = 0` read the
/// current state / input.
pub fn advance<T: Scalar>(
    plant: &It2Plant<T>,
    hist: &HistoryWindow<T>,
    u: &[T],
    dx: usize,
    du: usize,
) -> Result<StepOutcome<T>, SimError> {
    let x = hist.current();
    if x.len() != plant.state_dim() || u.len() != plant.input_dim() {
        return Err(SimError::Config("state or input of wrong length".into()));
    }
    let x_d = hist
        .state_lag(dx)
        .ok_or_else(|| SimError::History(format!("state delay {dx} exceeds window {}", hist.h())))?
        .to_vec();
    let u_d = if du == 0 {
        u.to_vec()
    } else {
        hist.input_lag(du)
            .ok_or_else(|| SimError::History(format!("input delay {du} exceeds window {}", hist.j())))?
            .to_vec()
    };
    let w = it2::firing_strengths(plant, x)?;
    let m = it2::blend(plant, &w)?;
    let mut x_next = m.a.mul_vec(x);
    for part in [m.b.mul_vec(u), m.a_d.mul_vec(&x_d), m.b_d.mul_vec(&u_d)] {
        for (a, b) in x_next.iter_mut().zip(part) {
            *a = *a + b;
        }
    }
    Ok(StepOutcome { x_next, u: u.to_vec(), x_d, u_d })
}

/// One closed-loop step with the input computed from `sol`.
pub fn step<T: Scalar>(
    plant: &It2Plant<T>,
    sol: &SynthesisSolution<T>,
    ctrl: &It2Controller<T>,
    hist: &HistoryWindow<T>,
    dx: usize,
    du: usize,
) -> Result<StepOutcome<T>, SimError> {
    let u =
        synth::control_input(sol, ctrl, hist.current()).map_err(|source| SimError::Synthesis { step: 0, source })?;
    advance(plant, hist, &u, dx, du)
}

fn check_windows<T: Scalar>(cfg: &SynthConfig<T>, sim: &SimConfig<T>) -> Result<(), SimError> {
    if sim.state_delay.kind != DelayKind::None && sim.state_delay.bound > cfg.h {
        return Err(SimError::Config(format!("state delay bound {} exceeds h = {}", sim.state_delay.bound, cfg.h)));
    }
    if sim.input_delay.kind != DelayKind::None && sim.input_delay.bound > cfg.j {
        return Err(SimError::Config(format!("input delay bound {} exceeds j = {}", sim.input_delay.bound, cfg.j)));
    }
    Ok(())
}

/// The online loop: synthesize, apply the blended feedback, draw delays, advance.
/// Infeasibility at step 0 is an error; later failures keep the previous gains
/// and are recorded in the synthesis log.
pub fn run<T: Scalar>(
    plant: &It2Plant<T>,
    ctrl: &It2Controller<T>,
    cfg: &SynthConfig<T>,
    sim: &SimConfig<T>,
) -> Result<Trajectory<T>, SimError> {
    sim.validate(plant.state_dim())?;
    cfg.validate().map_err(SimError::InitialInfeasible)?;
    check_windows(cfg, sim)?;
    let mut hist = HistoryWindow::constant(&sim.x0, cfg.h, cfg.j, plant.input_dim());
    let (mut sx, mut su) = sim.samplers();
    let mut traj = Trajectory::empty(sim.ts, &sim.x0);
    for k in 0..sim.steps {
        let mut feasible = true;
        if k % sim.resynthesize_every == 0 {
            match synth::solve_step(plant, cfg, &hist) {
                Ok(sol) => {
                    traj.synthesis_log.push(SynthRecord {
                        step: k,
                        zeta: Some(sol.zeta),
                        feasible: true,
                        iterations: sol.iterations,
                        margin: Some(sol.margin),
                        error: None,
                    });
                    traj.solutions.push(sol);
                }
                Err(e) if k == 0 => return Err(SimError::InitialInfeasible(e)),
                Err(e @ (SynthError::Infeasible(_) | SynthError::NoCertificate(_) | SynthError::Certification(_))) => {
                    feasible = false;
                    traj.synthesis_log.push(SynthRecord {
                        step: k,
                        zeta: None,
                        feasible: false,
                        iterations: 0,
                        margin: None,
                        error: Some(e.to_string()),
                    });
                }
                Err(source) => return Err(SimError::Synthesis { step: k, source }),
            }
        }
        let idx = traj.solutions.len() - 1;
        let sol = &traj.solutions[idx];
        let x = hist.current().to_vec();
        let u = synth::control_input(sol, ctrl, &x).map_err(|source| SimError::Synthesis { step: k, source })?;
        let v = synth::terminal_set_value(sol, plant, &x).map_err(|source| SimError::Synthesis { step: k, source })?;
        let zeta = sol.zeta;
        let (dx, du) = sim.draw(&mut sx, &mut su);
        let out = advance(plant, &hist, &u, dx, du)?;
        traj.x.push(x);
        traj.u.push(u);
        traj.x_d.push(out.x_d);
        traj.d_x.push(dx);
        traj.d_u.push(du);
        traj.zeta.push(Some(zeta));
        traj.v.push(Some(v));
        traj.feasible.push(Some(feasible));
        traj.solution_index.push(Some(idx));
        traj.x_end = out.x_next.clone();
        hist.push(out.x_next, out.u);
    }
    Ok(traj)
}

/// Norm above which an open-loop run is stopped.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// Same loop with `u = 0`; the history windows follow the delay bounds.
pub fn uncontrolled_run<T: Scalar>(plant: &It2Plant<T>, sim: &SimConfig<T>) -> Result<Trajectory<T>, SimError> {
    sim.validate(plant.state_dim())?;
    let w = plant.input_dim();
    let h = if sim.state_delay.kind == DelayKind::None { 0 } else { sim.state_delay.bound };
    let j = if sim.input_delay.kind == DelayKind::None { 0 } else { sim.input_delay.bound };
    let mut hist = HistoryWindow::constant(&sim.x0, h, j, w);
    let (mut sx, mut su) = sim.samplers();
    let mut traj = Trajectory::empty(sim.ts, &sim.x0);
    let zero = vec![T::zero(); w];
    for _ in 0..sim.steps {
        let x = hist.current().to_vec();
        if crate::matkernel::norm2(&x) > T::lit(DIVERGENCE_GUARD) {
            traj.diverged = true;
            break;
        }
        let (dx, du) = sim.draw(&mut sx, &mut su);
        let out = advance(plant, &hist, &zero, dx, du)?;
        traj.x.push(x);
        traj.u.push(zero.clone());
        traj.x_d.push(out.x_d);
        traj.d_x.push(dx);
        traj.d_u.push(du);
        traj.zeta.push(None);
        traj.v.push(None);
        traj.feasible.push(None);
        traj.solution_index.push(None);
        traj.x_end = out.x_next.clone();
        hist.push(out.x_next, out.u);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::it2::{FuzzyRule, It2MembershipFn, MembershipShape, Premise, Weighting};
    use crate::matkernel::{Matrix, SymMatrix};

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_f64_rows(rows).unwrap()
    }

    fn one_rule(a: Matrix<f64>, a_d: Matrix<f64>, b: Matrix<f64>, b_d: Matrix<f64>) -> It2Plant<f64> {
        // wide enough not to underflow before the divergence guard
        let g = MembershipShape::Gaussian { center: 0.0, sigma: 1e8, height: 1.0 };
        It2Plant::new(
            vec![FuzzyRule { a, a_d, b, b_d }],
            vec![It2MembershipFn { lower: g, upper: g, weighting: Weighting::Constant(0.5) }],
            Premise::of_state(0),
        )
        .unwrap()
    }

    fn sim_cfg(steps: usize, x0: Vec<f64>, sd: DelayProcess, id: DelayProcess) -> SimConfig<f64> {
        SimConfig::new(steps, x0, 0.2, sd, id)
    }

    #[test]
    fn rule_one_vertex_step() {
        let plant = one_rule(
            m(&[&[0.75, 0.0119], &[-0.2238, 0.8262]]),
            m(&[&[0.0435, 0.0003], &[-0.0061, 0.0455]]),
            m(&[&[0.0004], &[0.0546]]),
            m(&[&[0.0], &[0.0]]),
        );
        let hist = HistoryWindow::constant(&[1.0, 0.0], 2, 2, 1);
        let out = advance(&plant, &hist, &[0.0], 1, 1).unwrap();
        assert!((out.x_next[0] - 0.7935).abs() < 1e-12);
        assert!((out.x_next[1] + 0.2299).abs() < 1e-12);
    }

    #[test]
    fn delay_free_rules_ignore_delays() {
        let plant = one_rule(m(&[&[0.5]]), m(&[&[0.0]]), m(&[&[1.0]]), m(&[&[0.0]]));
        let mut hist = HistoryWindow::constant(&[3.0], 3, 3, 1);
        hist.push(vec![2.0], vec![7.0]);
        for d in 0..=3 {
            let out = advance(&plant, &hist, &[1.0], d, d.max(1)).unwrap();
            assert_eq!(out.x_next, vec![0.5 * 2.0 + 1.0]);
        }
    }

    #[test]
    fn history_underflow_is_reported() {
        let plant = one_rule(m(&[&[0.5]]), m(&[&[0.1]]), m(&[&[1.0]]), m(&[&[0.1]]));
        let hist = HistoryWindow::constant(&[1.0], 2, 2, 1);
        assert!(matches!(advance(&plant, &hist, &[0.0], 3, 1), Err(SimError::History(_))));
        assert!(matches!(advance(&plant, &hist, &[0.0], 1, 3), Err(SimError::History(_))));
    }

    #[test]
    fn delays_stay_in_bounds_and_are_reproducible() {
        let mut a = DelaySampler::new(DelayProcess::uniform(11, 10));
        let mut b = DelaySampler::new(DelayProcess::uniform(11, 10));
        let da: Vec<usize> = (0..500).map(|_| a.next()).collect();
        let db: Vec<usize> = (0..500).map(|_| b.next()).collect();
        assert_eq!(da, db);
        assert!(da.iter().all(|&d| (1..=10).contains(&d)));
        assert!(da.contains(&1) && da.contains(&10));
    }

    #[test]
    fn shared_draws_use_one_sequence() {
        let mut cfg = sim_cfg(1, vec![0.0], DelayProcess::uniform(3, 10), DelayProcess::uniform(99, 4));
        cfg.shared_delays = true;
        let (mut sx, mut su) = cfg.samplers();
        for _ in 0..200 {
            let (dx, du) = cfg.draw(&mut sx, &mut su);
            assert_eq!(du, dx.min(4));
        }
    }

    #[test]
    fn sweep_expands_to_constant_runs() {
        let runs = DelayProcess::worst_case_sweep(3).expand();
        assert_eq!(
            runs,
            vec![DelayProcess::constant(1, 3), DelayProcess::constant(2, 3), DelayProcess::constant(3, 3)]
        );
        let cfg = sim_cfg(1, vec![0.0], DelayProcess::worst_case_sweep(3), DelayProcess::none(3));
        assert!(cfg.validate(1).is_err());
        let cfg = sim_cfg(1, vec![0.0], DelayProcess::constant(4, 3), DelayProcess::none(3));
        assert!(cfg.validate(1).is_err());
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let plant = one_rule(m(&[&[1.2]]), m(&[&[0.3]]), m(&[&[1.0]]), m(&[&[0.1]]));
        let traj =
            uncontrolled_run(&plant, &sim_cfg(20, vec![0.0], DelayProcess::uniform(1, 4), DelayProcess::uniform(2, 4)))
                .unwrap();
        assert_eq!(traj.len(), 20);
        assert!(traj.x.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn stable_open_loop_converges() {
        let plant = one_rule(
            m(&[&[0.6, 0.1], &[0.0, 0.5]]),
            m(&[&[0.0, 0.0], &[0.0, 0.0]]),
            m(&[&[0.0], &[1.0]]),
            m(&[&[0.0], &[0.0]]),
        );
        let traj =
            uncontrolled_run(&plant, &sim_cfg(80, vec![1.0, -1.0], DelayProcess::none(1), DelayProcess::none(1)))
                .unwrap();
        assert!(traj.convergence_step(0.01, 10).is_some());
    }

    #[test]
    fn divergence_guard_stops_early() {
        let plant = one_rule(m(&[&[3.0]]), m(&[&[0.0]]), m(&[&[1.0]]), m(&[&[0.0]]));
        let traj =
            uncontrolled_run(&plant, &sim_cfg(200, vec![1.0], DelayProcess::none(1), DelayProcess::none(1))).unwrap();
        assert!(traj.diverged);
        assert!(traj.len() < 200);
        assert!(traj.x.iter().all(|x| x[0] <= DIVERGENCE_GUARD));
    }

    #[test]
    fn single_step_run() {
        let plant = one_rule(m(&[&[0.5]]), m(&[&[0.0]]), m(&[&[1.0]]), m(&[&[0.0]]));
        let cfg =
            SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[0.1]), 0.8, 0.2, 1, 1, vec![5.0]).unwrap();
        let sim = sim_cfg(1, vec![1.0], DelayProcess::constant(1, 1), DelayProcess::constant(1, 1));
        let traj = run(&plant, &plant.matched_controller(), &cfg, &sim).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.x[0], vec![1.0]);
        let k = traj.solutions[0].gains[0][(0, 0)];
        assert!((traj.u[0][0] - k).abs() < 1e-12);
        assert_eq!(traj.synthesis_log.len(), 1);
    }

    #[test]
    fn initial_infeasibility_is_fatal() {
        let plant = one_rule(m(&[&[2.0]]), m(&[&[0.0]]), m(&[&[1.0]]), m(&[&[0.0]]));
        let cfg =
            SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[0.1]), 0.8, 0.2, 1, 1, vec![1e-9]).unwrap();
        let sim = sim_cfg(3, vec![1.0], DelayProcess::none(1), DelayProcess::none(1));
        assert!(matches!(run(&plant, &plant.matched_controller(), &cfg, &sim), Err(SimError::InitialInfeasible(_))));
    }

    #[test]
    fn csv_layout() {
        let plant = one_rule(
            m(&[&[0.5, 0.0], &[0.0, 0.5]]),
            m(&[&[0.0, 0.0], &[0.0, 0.0]]),
            m(&[&[1.0], &[0.0]]),
            m(&[&[0.0], &[0.0]]),
        );
        let traj =
            uncontrolled_run(&plant, &sim_cfg(2, vec![1.0, 2.0], DelayProcess::constant(1, 1), DelayProcess::none(1)))
                .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,t,x_1,x_2,u_1,d_x,d_u,zeta,feasible");
        assert_eq!(lines[1], "0,0,1,2,0,1,0,,");
        assert_eq!(lines[2], "1,0.2,0.5,1,0,1,0,,");
    }
}
