//! Certification oracles that re-check a synthesized controller without going
//! through the solver.
//!
//! Every check returns a [`CertReport`]. Margins are signed slacks: positive
//! means the inequality held with that much room, negative means it was
//! violated by that much. A failing report always carries a [`Witness`] that
//! reproduces the failure when evaluated on its own.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::it2::{self, It2Controller, It2Error, It2Plant};
use crate::matkernel::{assemble_symmetric, congruence, dot, invert, norm2, BlockSpec, MatError, Matrix, SymMatrix};
use crate::sim::Trajectory;
use crate::synth::{SynthConfig, SynthError, SynthesisSolution};
use crate::Scalar;

/// Tolerance of the trajectory and invariance checks.
pub const CHECK_TOL: f64 = 1e-7;

/// Relative deviation allowed between a replayed stage and its closed form.
pub const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Fuzzy(#[from] It2Error),
    #[error(transparent)]
    Synthesis(#[from] SynthError),
    #[error("invalid check input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The check's precondition does not hold (e.g. an indefinite Schur pivot).
    Inapplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inapplicable => "INAPPLICABLE",
        })
    }
}

/// Where a check failed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Witness {
    pub step: Option<usize>,
    pub stage: Option<String>,
    pub delay: Option<usize>,
    /// State, or the test vector of a matrix stage.
    pub x: Option<Vec<f64>>,
    pub x_d: Option<Vec<f64>>,
    /// The offending value (quadratic form, eigenvalue, ...).
    pub value: f64,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(k) = self.step {
            parts.push(format!("step={k}"));
        }
        if let Some(s) = &self.stage {
            parts.push(format!("stage={s}"));
        }
        if let Some(d) = self.delay {
            parts.push(format!("delay={d}"));
        }
        if let Some(x) = &self.x {
            parts.push(format!("x={x:?}"));
        }
        if let Some(x) = &self.x_d {
            parts.push(format!("x_d={x:?}"));
        }
        parts.push(format!("value={:e}", self.value));
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub name: String,
    pub verdict: Verdict,
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    /// Free-form remarks, e.g. branches of a definition that were not exercised.
    pub notes: Vec<String>,
    /// Per-stage results of composite checks.
    pub stages: Vec<CertReport>,
}

impl CertReport {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict: Verdict::Pass,
            worst_margin: f64::INFINITY,
            witness: None,
            notes: Vec::new(),
            stages: Vec::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Records a slack; the first failing one (or the worst, once failing) becomes the witness.
    fn record(&mut self, margin: f64, ok: bool, witness: impl FnOnce() -> Witness) {
        let worse = margin < self.worst_margin || margin.is_nan();
        if worse {
            self.worst_margin = margin;
        }
        if !ok && (self.verdict == Verdict::Pass || worse) {
            self.verdict = Verdict::Fail;
            self.witness = Some(witness());
        }
    }

    fn push_stage(&mut self, stage: CertReport) {
        if stage.worst_margin < self.worst_margin {
            self.worst_margin = stage.worst_margin;
        }
        self.push_side_stage(stage);
    }

    /// Adds a stage whose margin is on a different scale: it can fail the
    /// report but does not enter `worst_margin`.
    fn push_side_stage(&mut self, stage: CertReport) {
        if stage.verdict == Verdict::Fail && self.verdict == Verdict::Pass {
            self.verdict = Verdict::Fail;
            self.witness = stage.witness.clone();
        }
        self.stages.push(stage);
    }
}

impl fmt::Display for CertReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check: {}", self.name)?;
        writeln!(f, "verdict: {}", self.verdict)?;
        writeln!(f, "worst_margin: {:e}", self.worst_margin)?;
        if let Some(w) = &self.witness {
            writeln!(f, "witness: {w}")?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        for s in &self.stages {
            writeln!(
                f,
                "  stage {}: {} margin={:e}{}",
                s.name,
                s.verdict,
                s.worst_margin,
                s.witness.as_ref().map_or(String::new(), |w| format!(" witness: {w}"))
            )?;
        }
        Ok(())
    }
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Weights the solution's value function is evaluated with at `x`.
fn value_weights<T: Scalar>(sol: &SynthesisSolution<T>, plant: &It2Plant<T>, x: &[T]) -> Result<Vec<T>, VerifyError> {
    Ok(it2::firing_strengths(plant, x)?.into_iter().take(sol.n_rules()).collect())
}

/// Razumikhin decrease along a closed-loop run:
/// `V_{k+1}(x(k+1)) - max{V_k(x(k)), V_k(x_d(k))} < -x(k)'Qx(k) + 1e-7`,
/// with `V_k(z) = z' P_w z`, `P` from the solution in force at step `k` and `w`
/// the weights of `x(k)`. The last step has no successor value and is skipped.
pub fn check_lrf_trajectory<T: Scalar>(
    traj: &Trajectory<T>,
    plant: &It2Plant<T>,
    q: &SymMatrix<T>,
) -> Result<CertReport, VerifyError> {
    let mut rep = CertReport::new("razumikhin-decrease");
    rep.notes.push("disturbance branch rho(|d|): not exercised (closed loop has no exogenous input)".into());
    if q.dim() != plant.state_dim() {
        return Err(VerifyError::Input(format!("Q is {0}x{0}, plant state dim {1}", q.dim(), plant.state_dim())));
    }
    let mut cache: Option<(usize, Vec<SymMatrix<T>>)> = None;
    let mut p_at = |idx: usize, sol: &SynthesisSolution<T>, x: &[T]| -> Result<SymMatrix<T>, VerifyError> {
        if cache.as_ref().is_none_or(|c| c.0 != idx) {
            cache = Some((idx, sol.p_matrices()?));
        }
        let ps = &cache.as_ref().expect("filled").1;
        let w = value_weights(sol, plant, x)?;
        let mut acc = SymMatrix::zeros(ps[0].dim());
        for (p, &wl) in ps.iter().zip(&w) {
            acc = acc.try_add(&p.scale(wl))?;
        }
        Ok(acc)
    };
    for k in 0..traj.len().saturating_sub(1) {
        let (Some(i0), Some(i1)) = (traj.solution_index[k], traj.solution_index[k + 1]) else {
            return Err(VerifyError::Input(format!("no solution recorded at step {k}")));
        };
        let x = &traj.x[k];
        let x_d = &traj.x_d[k];
        let x1 = &traj.x[k + 1];
        let p0 = p_at(i0, &traj.solutions[i0], x)?;
        let v_now = p0.quad_form(x).max(p0.quad_form(x_d));
        let p1 = p_at(i1, &traj.solutions[i1], x1)?;
        let v_next = p1.quad_form(x1);
        let lhs = (v_next - v_now + q.quad_form(x)).to_f64_lossy();
        let slack = -lhs;
        rep.record(slack, lhs < CHECK_TOL, || Witness {
            step: Some(k),
            x: Some(to_f64(x)),
            x_d: Some(to_f64(x_d)),
            value: lhs,
            ..Witness::default()
        });
    }
    Ok(rep)
}

/// Eigenvalue sandwich `psi_min |x|^2 <= x' P_w x <= psi_max |x|^2` with the
/// extreme eigenvalues over every rule and step, checked on `samples` random
/// states and random convex weights per solution. Slack is relative to
/// `psi_max |x|^2`.
pub fn check_eigen_sandwich<T: Scalar>(
    sols: &[SynthesisSolution<T>],
    samples: usize,
    seed: u64,
) -> Result<(CertReport, f64, f64), VerifyError> {
    if sols.is_empty() {
        return Err(VerifyError::Input("no solutions to check".into()));
    }
    let all: Vec<Vec<SymMatrix<T>>> = sols.iter().map(|s| s.p_matrices()).collect::<Result<_, _>>()?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in all.iter().flatten() {
        let ev = p.eigenvalues()?;
        lo = lo.min(ev[0].to_f64_lossy());
        hi = hi.max(ev[ev.len() - 1].to_f64_lossy());
    }
    let mut rep = CertReport::new("eigenvalue-sandwich");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, ps) in all.iter().enumerate() {
        let n = ps[0].dim();
        for _ in 0..samples {
            let x: Vec<T> = (0..n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
            let w = random_simplex(&mut rng, ps.len());
            let v: f64 = ps.iter().zip(&w).map(|(p, &wl)| wl * p.quad_form(&x).to_f64_lossy()).sum();
            let nx = dot(&x, &x).to_f64_lossy();
            if nx == 0.0 {
                continue;
            }
            let slack = (v - lo * nx).min(hi * nx - v) / (hi.abs() * nx);
            rep.record(slack, slack >= -1e-9, || Witness {
                step: Some(k),
                x: Some(to_f64(&x)),
                value: v,
                ..Witness::default()
            });
        }
    }
    rep.notes.push(format!("psi_min={lo:e} psi_max={hi:e}"));
    Ok((rep, lo, hi))
}

fn random_simplex(rng: &mut ChaCha8Rng, r: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..r).map(|_| -rng.random_range(f64::MIN_POSITIVE..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// How a solution evaluates the dynamics and value weights at a state.
struct ClosedLoop<'a, T> {
    plant: &'a It2Plant<T>,
    ctrl: &'a It2Controller<T>,
    sol: &'a SynthesisSolution<T>,
    ps: Vec<SymMatrix<T>>,
}

impl<T: Scalar> ClosedLoop<'_, T> {
    /// Weights of the prediction model at `x`: the scheduling weights when the
    /// solution was synthesized on fixed weights, the state's own otherwise.
    fn model_weights(&self, x: &[T]) -> Result<Vec<T>, VerifyError> {
        match &self.sol.scheduling {
            Some(mu) => Ok(mu.clone()),
            None => Ok(it2::firing_strengths(self.plant, x)?),
        }
    }

    fn p_w(&self, w: &[T]) -> Result<SymMatrix<T>, VerifyError> {
        let mut acc = SymMatrix::zeros(self.ps[0].dim());
        for (p, &wl) in self.ps.iter().zip(w) {
            acc = acc.try_add(&p.scale(wl))?;
        }
        Ok(acc)
    }

    fn level(&self, x: &[T]) -> Result<T, VerifyError> {
        Ok(self.p_w(&self.model_weights(x)?)?.quad_form(x))
    }

    /// `x+ = (A + B K) x + (A_d + B_d K) x_d` at the model weights of `x`.
    fn successor(&self, x: &[T], x_d: &[T]) -> Result<Vec<T>, VerifyError> {
        let w = self.model_weights(x)?;
        let h = if self.sol.gains.len() == 1 || self.sol.scheduling.is_some() {
            let mut e = vec![T::zero(); self.sol.gains.len()];
            e[0] = T::one();
            e
        } else {
            it2::controller_strengths(self.ctrl, x)?
        };
        let (cl, cl_d) = it2::closed_loop_matrices(self.plant, &w, &h, &self.sol.gains)?;
        let a = cl.mul_vec(x);
        let b = cl_d.mul_vec(x_d);
        Ok(a.iter().zip(&b).map(|(&p, &q)| p + q).collect())
    }

    /// Radial scale putting `dir` on the `zeta` level set.
    fn boundary_scale(&self, dir: &[T]) -> Result<T, VerifyError> {
        let zeta = self.sol.zeta;
        if self.sol.scheduling.is_some() {
            let v = self.level(dir)?;
            return Ok((zeta / v).sqrt());
        }
        let scaled = |t: T| dir.iter().map(|&d| d * t).collect::<Vec<T>>();
        let (mut lo, mut hi) = (T::zero(), T::one());
        let mut guard = 0;
        while self.level(&scaled(hi))? < zeta {
            hi = hi + hi;
            guard += 1;
            if guard > 200 {
                return Err(VerifyError::Input("terminal set unbounded along a sampled direction".into()));
            }
        }
        for _ in 0..100 {
            let mid = (lo + hi) / T::lit(2.0);
            if self.level(&scaled(mid))? <= zeta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Vec<T>, VerifyError> {
        let n = self.plant.state_dim();
        let dir: Vec<T> = loop {
            let d: Vec<T> = (0..n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
            if norm2(&d) > T::lit(1e-3) {
                break d;
            }
        };
        let s = self.boundary_scale(&dir)?;
        // half the samples on the level set, the rest spread inside it
        let radial = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.0f64..1.0).powf(1.0 / n as f64) };
        Ok(dir.iter().map(|&d| d * s * T::lit(radial)).collect())
    }
}

/// Sampling check that the terminal set is invariant under the closed loop.
///
/// Draws `n_samples` histories `x(k), x(k-1), .., x(k-h)` inside the set
/// (boundary-biased) and applies one step with `x_d = x(k-d)`, for every
/// `d` in `1..=h` when `all_delays`, else for one random `d`. Passes iff every
/// successor value is at most `zeta + 1e-7`. The successor value is taken as
/// `max_t x+' P_t x+`, which bounds `x+' P_w x+` for any weights `w` and needs
/// no membership evaluation far from the operating range.
pub fn check_rpi_sampling<T: Scalar>(
    plant: &It2Plant<T>,
    ctrl: &It2Controller<T>,
    sol: &SynthesisSolution<T>,
    h: usize,
    n_samples: usize,
    all_delays: bool,
    seed: u64,
) -> Result<CertReport, VerifyError> {
    if h == 0 {
        return Err(VerifyError::Input("delay bound must be at least 1".into()));
    }
    let cl = ClosedLoop { plant, ctrl, sol, ps: sol.p_matrices()? };
    let mut rep = CertReport::new("terminal-set-invariance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeta = sol.zeta.to_f64_lossy();
    for _ in 0..n_samples {
        let hist: Vec<Vec<T>> = (0..=h).map(|_| cl.sample(&mut rng)).collect::<Result<_, _>>()?;
        let delays: Vec<usize> = if all_delays { (1..=h).collect() } else { vec![rng.random_range(1..=h)] };
        for d in delays {
            let x = &hist[0];
            let x_d = &hist[d];
            let x1 = cl.successor(x, x_d)?;
            let v1 = cl.ps.iter().map(|p| p.quad_form(&x1).to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
            let slack = zeta + CHECK_TOL - v1;
            rep.record(slack, slack >= 0.0, || Witness {
                delay: Some(d),
                x: Some(to_f64(x)),
                x_d: Some(to_f64(x_d)),
                value: v1,
                ..Witness::default()
            });
        }
    }
    rep.notes.push(format!("zeta={zeta:e} samples={n_samples} h={h} all_delays={all_delays}"));
    Ok(rep)
}

/// Outcome of a Schur-complement equivalence test.
pub fn schur_oracle<T: Scalar>(full: &SymMatrix<T>, split: usize) -> Result<CertReport, VerifyError> {
    let n = full.dim();
    if split == 0 || split >= n {
        return Err(VerifyError::Input(format!("split {split} outside 1..{n}")));
    }
    let mut rep = CertReport::new("schur-complement");
    let m = full.as_matrix();
    let a = SymMatrix::symmetrize(&m.block(0, 0, split, split))?;
    let b = m.block(0, split, split, n - split);
    let c = SymMatrix::symmetrize(&m.block(split, split, n - split, n - split))?;
    let c_ev = c.eigenvalues()?;
    let (c_lo, c_hi) = (c_ev[0], c_ev[c_ev.len() - 1]);
    if !(c_hi < T::zero() || c_lo > T::zero()) {
        rep.verdict = Verdict::Inapplicable;
        rep.worst_margin = c_lo.to_f64_lossy().abs().min(c_hi.to_f64_lossy().abs());
        rep.notes.push(format!(
            "pivot block is not sign-definite (eigenvalues {:e}..{:e})",
            c_lo.to_f64_lossy(),
            c_hi.to_f64_lossy()
        ));
        return Ok(rep);
    }
    let c_inv = invert(c.as_matrix())?;
    let comp = SymMatrix::symmetrize(&a.as_matrix().try_sub(&(&(&b * &c_inv) * &b.transpose()))?)?;
    let full_ev = full.eigenvalues()?;
    let comp_ev = comp.eigenvalues()?;
    let nd_full = full_ev[n - 1] < T::zero();
    let nd_split = c_hi < T::zero() && comp_ev[split - 1] < T::zero();
    let pd_full = full_ev[0] > T::zero();
    let pd_split = c_lo > T::zero() && comp_ev[0] > T::zero();
    let agree = nd_full == nd_split && pd_full == pd_split;
    rep.record(if agree { 0.0 } else { -1.0 }, agree, || Witness {
        stage: Some(format!("nd {nd_full}/{nd_split} pd {pd_full}/{pd_split}")),
        value: full_ev[n - 1].to_f64_lossy(),
        ..Witness::default()
    });
    rep.notes.push(format!("full negative definite: {nd_full}, positive definite: {pd_full}"));
    Ok(rep)
}

/// `Y - M' - M + M' Y^{-1} M`; positive semidefinite for every `Y > 0`.
pub fn lemma_gap<T: Scalar>(m: &Matrix<T>, y: &SymMatrix<T>) -> Result<SymMatrix<T>, VerifyError> {
    let y_inv = y.inverse()?;
    let mt = m.transpose();
    let quad = &(&mt * y_inv.as_matrix()) * m;
    let lin = y.as_matrix().try_sub(&mt)?.try_sub(m)?;
    Ok(SymMatrix::symmetrize(&lin.try_add(&quad)?)?)
}

/// Random suite for [`lemma_gap`]: `draws` pairs with square `M` and `Y > 0` of
/// dimension `dims`, margin `min_eig >= -1e-9`.
pub fn check_lemma_suite<T: Scalar>(
    draws: usize,
    dims: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<CertReport, VerifyError> {
    let mut rep = CertReport::new("lemma-bound");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..draws {
        let n = rng.random_range(dims.clone());
        let mut entry = || T::lit(rng.random_range(-1.0..1.0));
        let m = Matrix::from_vec(n, n, (0..n * n).map(|_| entry()).collect())?;
        let g = Matrix::from_vec(n, n, (0..n * n).map(|_| entry()).collect())?;
        let y = SymMatrix::symmetrize(&(&g.transpose() * &g))?.add_identity(T::lit(0.1));
        let gap = lemma_gap(&m, &y)?.min_eig()?.to_f64_lossy();
        rep.record(gap, gap >= -1e-9, || Witness {
            step: Some(i),
            stage: Some(format!("dim {n}")),
            x: Some(to_f64(m.as_slice())),
            x_d: Some(to_f64(y.as_matrix().as_slice())),
            value: gap,
            ..Witness::default()
        });
    }
    Ok(rep)
}

/// Rule indices the decrease block is replayed at: plant rule `l`, controller
/// rule `i`, successor rule `t` (all zero-based). Solutions synthesized on
/// scheduling weights use those weights for the current rule and ignore `l`, `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vertex {
    pub l: usize,
    pub i: usize,
    pub t: usize,
}

/// Blended quantities the chain is replayed with.
struct ReplayPoint<T> {
    y_cur: SymMatrix<T>,
    y_t: SymMatrix<T>,
    m: Matrix<T>,
    h: Matrix<T>,
    k: Matrix<T>,
    a: Matrix<T>,
    a_d: Matrix<T>,
    b: Matrix<T>,
    b_d: Matrix<T>,
}

fn replay_point<T: Scalar>(
    sol: &SynthesisSolution<T>,
    plant: &It2Plant<T>,
    v: Vertex,
) -> Result<ReplayPoint<T>, VerifyError> {
    let r = sol.n_rules();
    if v.l >= r || v.i >= sol.h.len() || v.t >= r {
        return Err(VerifyError::Input(format!("vertex {v:?} outside {r} rules")));
    }
    let (w, i) = match &sol.scheduling {
        Some(mu) => (mu.clone(), 0),
        None => ((0..r).map(|j| if j == v.l { T::one() } else { T::zero() }).collect(), v.i),
    };
    let mut y_cur = SymMatrix::zeros(sol.y[0].dim());
    for (y, &wl) in sol.y.iter().zip(&w) {
        y_cur = y_cur.try_add(&y.scale(wl))?;
    }
    let bl = it2::blend(plant, &w)?;
    let k = &sol.h[i] * &invert(&sol.m)?;
    Ok(ReplayPoint {
        y_cur,
        y_t: sol.y[v.t].clone(),
        m: sol.m.clone(),
        h: sol.h[i].clone(),
        k,
        a: bl.a,
        a_d: bl.a_d,
        b: bl.b,
        b_d: bl.b_d,
    })
}

fn eye<T: Scalar>(n: usize, s: T) -> Matrix<T> {
    Matrix::identity(n).scale(s)
}

fn block_diag<T: Scalar>(blocks: &[Matrix<T>]) -> Matrix<T> {
    let n: usize = blocks.iter().map(Matrix::rows).sum();
    let mut out = Matrix::zeros(n, n);
    let mut o = 0;
    for b in blocks {
        out.set_block(o, o, b);
        o += b.rows();
    }
    out
}

/// Sign stage: `ND` means the matrix must be negative definite within `tol`.
fn sign_stage<T: Scalar>(name: &str, s: &SymMatrix<T>, negative: bool, tol: f64) -> Result<CertReport, VerifyError> {
    let (ev, vecs) = s.eigh()?;
    let (val, idx) = if negative { (ev[ev.len() - 1], ev.len() - 1) } else { (ev[0], 0) };
    let val = val.to_f64_lossy();
    let slack = if negative { -val } else { val };
    let mut rep = CertReport::new(name);
    let vec: Vec<f64> = (0..s.dim()).map(|r| vecs[(r, idx)].to_f64_lossy()).collect();
    rep.record(slack, slack >= -tol, || Witness {
        stage: Some(name.into()),
        x: Some(vec),
        value: val,
        ..Witness::default()
    });
    Ok(rep)
}

/// Eliminates the trailing block from `index` on: `A - B C^{-1} B'`. Fails the
/// stage unless the pivot `C` is negative definite.
fn eliminate<T: Scalar>(s: &SymMatrix<T>, index: usize) -> Result<(SymMatrix<T>, bool), VerifyError> {
    let n = s.dim();
    let m = s.as_matrix();
    let a = m.block(0, 0, index, index);
    let b = m.block(0, index, index, n - index);
    let c = SymMatrix::symmetrize(&m.block(index, index, n - index, n - index))?;
    let pivot_nd = c.max_eig()? < T::zero();
    let c_inv = invert(c.as_matrix())?;
    Ok((SymMatrix::symmetrize(&a.try_sub(&(&(&b * &c_inv) * &b.transpose()))?)?, pivot_nd))
}

/// Replays the chain from the synthesized decrease block down to the scalar
/// decrease inequality at one vertex and checks every intermediate matrix at
/// `tol` (sign of the extreme eigenvalue).
///
/// Stages, in order:
/// 1. the decrease block itself (congruent cost rows);
/// 2. the same block with the literal `QM / -zeta Q` and `RH / -zeta R` rows (sign only);
/// 3. the lemma bound `Y - M - M' >= -M' Y^{-1} M`;
/// 4. the block with `lambda` replaced by `-M' Y^{-1} M`;
/// 5. congruence by `diag(M^{-1}, M^{-1}, I, I, I)`;
/// 6. rescaling by `zeta` so that `P = zeta Y^{-1}` appears;
/// 7. elimination of the cost rows;
/// 8. elimination of the `-P_t^{-1}` block;
/// 9. agreement of that complement with its closed form, and the closed form's sign;
/// 10. the scalar inequality on `pairs` random `(x, x_d)`.
pub fn replay_derivation<T: Scalar>(
    sol: &SynthesisSolution<T>,
    plant: &It2Plant<T>,
    cfg: &SynthConfig<T>,
    vertex: Vertex,
    pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<CertReport, VerifyError> {
    let pt = replay_point(sol, plant, vertex)?;
    let (n, w) = (plant.state_dim(), plant.input_dim());
    let zeta = sol.zeta;
    let (rho, rho_d) = (cfg.rho, cfg.rho_d);
    let qf = cfg.q.psd_factor()?;
    let rf = cfg.r.psd_factor()?;
    let q = cfg.q.as_matrix();
    let r = cfg.r.as_matrix();
    let mut rep = CertReport::new(format!("derivation-replay[{},{},{}]", vertex.l + 1, vertex.i + 1, vertex.t + 1));

    let lambda = pt.y_cur.as_matrix().try_sub(&pt.m)?.try_sub(&pt.m.transpose())?;
    let chi = (&pt.a * &pt.m).try_add(&(&pt.b * &pt.h))?;
    let chi_d = (&pt.a_d * &pt.m).try_add(&(&pt.b_d * &pt.h))?;
    let neg_yt = pt.y_t.as_matrix().scale(-T::one());
    let decrease = |d00: Matrix<T>, d11: Matrix<T>, c3: Matrix<T>, c33: Matrix<T>, c4: Matrix<T>, c44: Matrix<T>| {
        let mut spec = BlockSpec::square(vec![n, n, n, n, w]);
        spec.set(0, 0, d00)
            .set(1, 1, d11)
            .set(2, 0, chi.clone())
            .set(2, 1, chi_d.clone())
            .set(2, 2, neg_yt.clone())
            .set(3, 0, c3)
            .set(3, 3, c33)
            .set(4, 0, c4)
            .set(4, 4, c44);
        assemble_symmetric(&spec)
    };

    let s1 = decrease(lambda.scale(rho), lambda.scale(rho_d), &qf * &pt.m, eye(n, -zeta), &rf * &pt.h, eye(w, -zeta))?;
    rep.push_stage(sign_stage("decrease-block", &s1, true, tol)?);

    let literal =
        decrease(lambda.scale(rho), lambda.scale(rho_d), q * &pt.m, q.scale(-zeta), r * &pt.h, r.scale(-zeta))?;
    rep.push_stage(sign_stage("literal-cost-rows", &literal, true, 0.0)?);

    let y_inv = pt.y_cur.inverse()?;
    let mym = SymMatrix::symmetrize(&(&(&pt.m.transpose() * y_inv.as_matrix()) * &pt.m))?;
    let gap = lemma_gap(&pt.m, &pt.y_cur)?;
    rep.push_stage(sign_stage("lemma-bound", &gap, false, tol)?);

    let neg_mym = mym.as_matrix().scale(-T::one());
    let s3 =
        decrease(neg_mym.scale(rho), neg_mym.scale(rho_d), &qf * &pt.m, eye(n, -zeta), &rf * &pt.h, eye(w, -zeta))?;
    rep.push_stage(sign_stage("lemma-substitution", &s3, true, tol)?);

    let m_inv = invert(&pt.m)?;
    let t = block_diag(&[m_inv.clone(), m_inv, Matrix::identity(n), Matrix::identity(n), Matrix::identity(w)]);
    let s4 = congruence(&s3, &t)?;
    rep.push_stage(sign_stage("congruence-by-inverse-m", &s4, true, tol)?);

    let sz = zeta.sqrt();
    let isz = T::one() / sz;
    let scale = block_diag(&[eye(n, sz), eye(n, sz), eye(n, isz), eye(n, isz), eye(w, isz)]);
    let s5 = congruence(&s4, &scale)?;
    rep.push_stage(sign_stage("zeta-rescaling", &s5, true, tol)?);

    let (s6, pivot_ok) = eliminate(&s5, 3 * n)?;
    let mut st = sign_stage("cost-row-elimination", &s6, true, tol)?;
    if !pivot_ok {
        st.record(f64::NEG_INFINITY, false, || Witness {
            stage: Some("cost pivot not negative definite".into()),
            ..Witness::default()
        });
    }
    rep.push_stage(st);

    let (s7, pivot_ok) = eliminate(&s6, 2 * n)?;
    let mut st = sign_stage("schur-complement", &s7, true, tol)?;
    if !pivot_ok {
        st.record(f64::NEG_INFINITY, false, || Witness {
            stage: Some("-P_t^{-1} pivot not negative definite".into()),
            ..Witness::default()
        });
    }
    // closed form: [Q + K'RK - rho P, 0; 0, -rho_d P] + [th th_d]' P_t [th th_d]
    let ps = sol.p_matrices()?;
    let p_cur = pt.y_cur.inverse()?.scale(zeta);
    let p_t = &ps[vertex.t];
    let theta = &pt.a + &(&pt.b * &pt.k);
    let theta_d = &pt.a_d + &(&pt.b_d * &pt.k);
    let mut tt = Matrix::zeros(n, 2 * n);
    tt.set_block(0, 0, &theta);
    tt.set_block(0, n, &theta_d);
    let mut base = Matrix::zeros(2 * n, 2 * n);
    let kk = &(&pt.k.transpose() * r) * &pt.k;
    base.set_block(0, 0, &q.try_add(&kk)?.try_sub(&p_cur.as_matrix().scale(rho))?);
    base.set_block(n, n, &p_cur.as_matrix().scale(-rho_d));
    let closed = SymMatrix::symmetrize(&base.try_add(&(&(&tt.transpose() * p_t.as_matrix()) * &tt))?)?;
    rep.push_stage(st);
    let rel = s7.try_sub(&closed)?.max_abs().to_f64_lossy() / closed.max_abs().to_f64_lossy().max(f64::MIN_POSITIVE);
    let mut agree = CertReport::new("closed-form-agreement");
    agree.record(AGREEMENT_TOL - rel, rel <= AGREEMENT_TOL, || Witness {
        stage: Some("closed-form-agreement".into()),
        value: rel,
        ..Witness::default()
    });
    rep.push_side_stage(agree);
    rep.push_stage(sign_stage("closed-form-complement", &closed, true, tol)?);

    let mut scalar = CertReport::new("scalar-decrease");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let z: Vec<T> = (0..2 * n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
        let nz = norm2(&z);
        if nz == T::zero() {
            continue;
        }
        let z: Vec<T> = z.iter().map(|&v| v / nz).collect();
        let (x, x_d) = z.split_at(n);
        let xp: Vec<T> = theta.mul_vec(x).iter().zip(theta_d.mul_vec(x_d)).map(|(&a, b)| a + b).collect();
        let u = pt.k.mul_vec(x);
        let lhs = p_t.quad_form(&xp) + cfg.q.quad_form(x) + cfg.r.quad_form(&u)
            - (p_cur.quad_form(x) * rho + p_cur.quad_form(x_d) * rho_d);
        let lhs = lhs.to_f64_lossy();
        scalar.record(-lhs, lhs < tol, || Witness {
            stage: Some("scalar-decrease".into()),
            x: Some(to_f64(x)),
            x_d: Some(to_f64(x_d)),
            value: lhs,
            ..Witness::default()
        });
    }
    rep.push_stage(scalar);
    Ok(rep)
}

/// Returns a copy with every `Y_l` multiplied by `factor` (used to exercise failing replays).
pub fn perturb_y<T: Scalar>(sol: &SynthesisSolution<T>, factor: T) -> SynthesisSolution<T> {
    let mut out = sol.clone();
    for y in &mut out.y {
        *y = y.scale(factor);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::it2::{FuzzyRule, It2MembershipFn, MembershipShape, Premise, Weighting};
    use crate::sim::{self, DelayProcess, SimConfig};
    use crate::synth::{solve_step, HistoryWindow};

    fn scalar_plant(a: f64, b: f64, a_d: f64, b_d: f64) -> It2Plant<f64> {
        let g = MembershipShape::Gaussian { center: 0.0, sigma: 1e8, height: 1.0 };
        let m = |v: f64| Matrix::from_vec(1, 1, vec![v]).unwrap();
        It2Plant::new(
            vec![FuzzyRule { a: m(a), a_d: m(a_d), b: m(b), b_d: m(b_d) }],
            vec![It2MembershipFn { lower: g, upper: g, weighting: Weighting::Constant(0.5) }],
            Premise::of_state(0),
        )
        .unwrap()
    }

    fn scalar_sol(y: f64, m: f64, h: f64, zeta: f64) -> SynthesisSolution<f64> {
        SynthesisSolution {
            y: vec![SymMatrix::diag(&[y])],
            m: Matrix::diag(&[m]),
            h: vec![Matrix::diag(&[h])],
            z: SymMatrix::diag(&[1.0]),
            zeta,
            gains: vec![Matrix::diag(&[h / m])],
            scheduling: None,
            u_max: vec![10.0],
            iterations: 0,
            margin: 0.0,
        }
    }

    #[test]
    fn schur_small_cases() {
        let nd = SymMatrix::<f64>::diag(&[-1.0, -1.0]);
        let r = schur_oracle(&nd, 1).unwrap();
        assert!(r.pass());
        let ind = SymMatrix::<f64>::from_f64_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let r = schur_oracle(&ind, 1).unwrap();
        assert!(r.pass());
        let piv = SymMatrix::<f64>::from_f64_rows(&[[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]).unwrap();
        assert_eq!(schur_oracle(&piv, 1).unwrap().verdict, Verdict::Inapplicable);
    }

    #[test]
    fn sandwich_axis_tight() {
        let mut s = scalar_sol(1.0, 1.0, 0.0, 1.0);
        s.y = vec![SymMatrix::diag(&[0.5, 0.125])];
        let (rep, lo, hi) = check_eigen_sandwich(&[s], 1000, 1).unwrap();
        assert!(rep.pass());
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 8.0).abs() < 1e-12);
        let p = SymMatrix::diag(&[2.0, 8.0]);
        assert_eq!(p.quad_form(&[1.0, 0.0]), lo);
    }

    #[test]
    fn sandwich_identity() {
        let mut s = scalar_sol(1.0, 1.0, 0.0, 1.0);
        s.y = vec![SymMatrix::identity(3)];
        let (rep, lo, hi) = check_eigen_sandwich(&[s], 100, 2).unwrap();
        assert!(rep.pass());
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn lrf_zero_trajectory_passes() {
        let plant = scalar_plant(0.5, 1.0, 0.0, 0.0);
        let cfg =
            SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[0.1]), 0.8, 0.2, 1, 1, vec![1.0]).unwrap();
        // solutions come from a real run; the states are then zeroed
        let sim_cfg = SimConfig::new(5, vec![0.3], 0.2, DelayProcess::none(1), DelayProcess::none(1));
        let mut zero = sim::run(&plant, &plant.matched_controller(), &cfg, &sim_cfg).unwrap();
        for v in zero.x.iter_mut().chain(zero.x_d.iter_mut()) {
            v[0] = 0.0;
        }
        let rep = check_lrf_trajectory(&zero, &plant, &cfg.q).unwrap();
        assert!(rep.pass());
        assert_eq!(rep.worst_margin, 0.0);
        assert!(rep.notes[0].contains("not exercised"));
    }

    #[test]
    fn lrf_detects_growth() {
        let plant = scalar_plant(0.5, 1.0, 0.0, 0.0);
        let cfg =
            SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[0.1]), 0.8, 0.2, 1, 1, vec![1.0]).unwrap();
        let sim_cfg = SimConfig::new(6, vec![0.3], 0.2, DelayProcess::none(1), DelayProcess::none(1));
        let mut traj = sim::run(&plant, &plant.matched_controller(), &cfg, &sim_cfg).unwrap();
        assert!(check_lrf_trajectory(&traj, &plant, &cfg.q).unwrap().pass());
        traj.x[3][0] = 2.0;
        let rep = check_lrf_trajectory(&traj, &plant, &cfg.q).unwrap();
        assert!(!rep.pass());
        let w = rep.witness.unwrap();
        assert_eq!(w.step, Some(2));
        assert!(w.value > 0.0);
    }

    #[test]
    fn rpi_scalar_contraction() {
        // A + BK = 0.5, no delay terms, P = zeta / y
        let plant = scalar_plant(1.0, 1.0, 0.0, 0.0);
        let sol = scalar_sol(2.0, 1.0, -0.5, 1.0);
        let rep = check_rpi_sampling(&plant, &plant.matched_controller(), &sol, 3, 500, true, 3).unwrap();
        assert!(rep.pass());
        // successor value is 0.25 x'Px, at most zeta / 4
        assert!(rep.worst_margin >= 0.75 * sol.zeta);
        let bad = scalar_sol(2.0, 1.0, 0.5, 1.0);
        let rep = check_rpi_sampling(&plant, &plant.matched_controller(), &bad, 1, 200, false, 3).unwrap();
        assert!(!rep.pass());
        let w = rep.witness.unwrap();
        let x = w.x.unwrap()[0];
        // replay: x+ = 1.5 x, value x+^2 / 2
        assert!(((1.5 * x).powi(2) / 2.0 - w.value).abs() < 1e-12);
    }

    #[test]
    fn replay_on_solved_scalar() {
        let plant = scalar_plant(0.9, 1.0, 0.1, 0.2);
        let cfg =
            SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[0.1]), 0.8, 0.2, 2, 2, vec![2.0]).unwrap();
        let hist = HistoryWindow::constant(&[0.7], 2, 2, 1);
        let sol = solve_step(&plant, &cfg, &hist).unwrap();
        let v = Vertex { l: 0, i: 0, t: 0 };
        let rep = replay_derivation(&sol, &plant, &cfg, v, 500, 1e-7, 4).unwrap();
        assert!(rep.pass(), "{rep}");
        assert_eq!(rep.stages.len(), 11);
        // scalar closed form of the final complement
        let (y, m, hh, z) = (sol.y[0][(0, 0)], sol.m[(0, 0)], sol.h[0][(0, 0)], sol.zeta);
        let (k, p) = (hh / m, z / y);
        let (th, thd) = (0.9 + k, 0.1 + 0.2 * k);
        let (c00, c01, c11) = (1.0 + 0.1 * k * k - 0.8 * p + th * th * p, th * p * thd, -0.2 * p + thd * thd * p);
        let top = 0.5 * (c00 + c11) + (0.25 * (c00 - c11).powi(2) + c01 * c01).sqrt();
        let stage = rep.stages.iter().find(|s| s.name == "closed-form-complement").unwrap();
        assert!((stage.worst_margin + top).abs() < 1e-9 * top.abs().max(1.0), "{} vs {}", stage.worst_margin, -top);
        // Y is pinned by containment here, so halving it keeps the block feasible;
        // growing it makes Y - M - M' positive and breaks the first stage
        let bad = perturb_y(&sol, 5.0);
        let rep = replay_derivation(&bad, &plant, &cfg, v, 500, 1e-7, 4).unwrap();
        assert!(!rep.pass(), "{rep}");
        let w = rep.witness.unwrap();
        assert_eq!(w.stage.as_deref(), Some("decrease-block"));
        // replay the witness vector on a rebuilt block
        let z = w.x.unwrap();
        let (y5, m5, h5, zeta) = (bad.y[0][(0, 0)], bad.m[(0, 0)], bad.h[0][(0, 0)], bad.zeta);
        let lam = y5 - 2.0 * m5;
        let (chi, chi_d) = (0.9 * m5 + h5, 0.1 * m5 + 0.2 * h5);
        let qf = 1.0;
        let rf = 0.1f64.sqrt();
        let blk = SymMatrix::<f64>::from_f64_rows(&[
            [0.8 * lam, 0.0, chi, qf * m5, rf * h5],
            [0.0, 0.2 * lam, chi_d, 0.0, 0.0],
            [chi, chi_d, -y5, 0.0, 0.0],
            [qf * m5, 0.0, 0.0, -zeta, 0.0],
            [rf * h5, 0.0, 0.0, 0.0, -zeta],
        ])
        .unwrap();
        let val = blk.quad_form(&z);
        assert!(val > 1e-7 && (val - w.value).abs() < 1e-9, "{val} vs {}", w.value);
    }

    #[test]
    fn lemma_suite_small() {
        let r = check_lemma_suite::<f64>(200, 2..=5, 9).unwrap();
        assert!(r.pass(), "{r}");
        assert!(r.worst_margin > -1e-9);
    }

    #[test]
    fn lemma_gap_matches_square_form() {
        let m = Matrix::<f64>::from_f64_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        let y = SymMatrix::<f64>::from_f64_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let gap = lemma_gap(&m, &y).unwrap();
        // (M - Y)' Y^{-1} (M - Y)
        let d = m.try_sub(y.as_matrix()).unwrap();
        let sq = &(&d.transpose() * y.inverse().unwrap().as_matrix()) * &d;
        assert!(gap.as_matrix().try_sub(&sq).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn report_text_has_fields() {
        let mut r = CertReport::new("demo");
        r.record(-0.5, false, || Witness { step: Some(3), value: 0.5, ..Witness::default() });
        let s = r.to_string();
        assert!(s.contains("check: demo") && s.contains("verdict: FAIL") && s.contains("step=3"));
    }
}
