//! Per-step LMI synthesis and gain extraction.
//!
//! Decision variables: `Y_l` (one per rule, symmetric), a common `M`, input
//! matrices `H`, the input-bound matrix `Z` and the scalar cost bound `zeta`.
//! With `P_l = zeta Y_l^{-1}` and `K = H M^{-1}`, feasibility of the decrease
//! blocks gives, for every successor rule `t`,
//!
//! ```text
//! x+' P_t x+ + x'Qx + u'Ru < rho x'Px + rho_d x_d'Px_d,   x+ = (A + BK) x + (A_d + B_d K) x_d
//! ```
//!
//! The input-bound blocks keep `|u_m| <= u_max,m` on the ellipsoids, and the
//! containment blocks put every history sample inside them.
//!
//! Two relaxations of the fuzzy-blended inequality are available:
//!
//! * [`Relaxation::Vertex`]: one `H^i` per controller rule and the decrease
//!   block imposed at every (plant rule, controller rule, successor rule).
//! * [`Relaxation::Scheduled`]: the current membership weights are known when
//!   the problem is solved, so the blended matrices at those weights are used
//!   directly with a single `H`; only the successor rule is enumerated.

use thiserror::Error;

use crate::it2::{self, It2Controller, It2Error, It2Plant};
use crate::lmi::{self, AffineBlock, Assignment, LmiConstraint, LmiError, LmiProblem, Sense, SolverSettings, VarRef};
use crate::matkernel::{invert, BlockSpec, MatError, Matrix, SymMatrix};
use crate::Scalar;

/// Residual tolerance every returned solution is certified at.
pub const CERT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error("synthesis infeasible: {0}")]
    Infeasible(LmiError),
    #[error("solver gave no certificate: {0}")]
    NoCertificate(LmiError),
    #[error("solution failed residual certification (worst margin {0:.3e})")]
    Certification(f64),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Fuzzy(#[from] It2Error),
    #[error("malformed problem: {0}")]
    Structure(String),
}

impl From<LmiError> for SynthError {
    fn from(e: LmiError) -> Self {
        match e {
            LmiError::Infeasible { .. } => Self::Infeasible(e),
            LmiError::NoCertificate { .. } => Self::NoCertificate(e),
            LmiError::Matrix(m) => Self::Matrix(m),
            other => Self::Structure(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relaxation {
    Vertex,
    #[default]
    Scheduled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig<T> {
    pub q: SymMatrix<T>,
    pub r: SymMatrix<T>,
    pub rho: T,
    pub rho_d: T,
    /// State-delay bound.
    pub h: usize,
    /// Input-delay bound.
    pub j: usize,
    pub u_max: Vec<T>,
    pub relaxation: Relaxation,
    pub solver: SolverSettings,
}

impl<T: Scalar> SynthConfig<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: SymMatrix<T>,
        r: SymMatrix<T>,
        rho: T,
        rho_d: T,
        h: usize,
        j: usize,
        u_max: Vec<T>,
    ) -> Result<Self, SynthError> {
        let cfg = Self {
            q,
            r,
            rho,
            rho_d,
            h,
            j,
            u_max,
            relaxation: Relaxation::default(),
            solver: SolverSettings::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_relaxation(mut self, r: Relaxation) -> Self {
        self.relaxation = r;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        let (zero, one) = (T::zero(), T::one());
        if !(self.rho > zero && self.rho < one && self.rho_d > zero && self.rho_d < one) {
            return bad("rho and rho_d must lie in (0, 1)");
        }
        if (self.rho + self.rho_d - one).abs() > T::lit(1e-12).max(T::lit(4.0) * T::precision()) {
            return bad("rho + rho_d must equal 1");
        }
        if self.h == 0 || self.j == 0 {
            return bad("delay bounds h and j must be positive");
        }
        if self.q.min_eig()? < -T::lit(1e3) * T::precision() * self.q.max_abs() {
            return bad("Q must be positive semidefinite");
        }
        if !(self.r.min_eig()? > zero) {
            return bad("R must be positive definite");
        }
        if self.u_max.len() != self.r.dim() || self.u_max.iter().any(|&u| !(u > zero)) {
            return bad("u_max needs one positive bound per input");
        }
        Ok(())
    }
}

/// States `x(k-h) .. x(k)` and inputs `u(k-j) .. u(k-1)`, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow<T> {
    pub states: Vec<Vec<T>>,
    pub inputs: Vec<Vec<T>>,
}

impl<T: Scalar> HistoryWindow<T> {
    /// `x0` replicated over the whole state window, zero past inputs.
    pub fn constant(x0: &[T], h: usize, j: usize, input_dim: usize) -> Self {
        Self { states: vec![x0.to_vec(); h + 1], inputs: vec![vec![T::zero(); input_dim]; j] }
    }

    pub fn current(&self) -> &[T] {
        self.states.last().expect("non-empty window")
    }

    pub fn h(&self) -> usize {
        self.states.len() - 1
    }

    pub fn j(&self) -> usize {
        self.inputs.len()
    }

    /// `x(k - d)` for `d` in `0..=h`.
    pub fn state_lag(&self, d: usize) -> Option<&[T]> {
        let h = self.h();
        (d <= h).then(|| self.states[h - d].as_slice())
    }

    /// `u(k - d)` for `d` in `1..=j`.
    pub fn input_lag(&self, d: usize) -> Option<&[T]> {
        let j = self.j();
        (d >= 1 && d <= j).then(|| self.inputs[j - d].as_slice())
    }

    /// Shifts the window: `u` becomes `u(k)`, `x_next` becomes the new current state.
    pub fn push(&mut self, x_next: Vec<T>, u: Vec<T>) {
        self.states.remove(0);
        self.states.push(x_next);
        if !self.inputs.is_empty() {
            self.inputs.remove(0);
            self.inputs.push(u);
        }
    }

    fn check(&self, n: usize, w: usize, cfg: &SynthConfig<T>) -> Result<(), SynthError> {
        if self.states.len() != cfg.h + 1 || self.inputs.len() != cfg.j {
            return Err(SynthError::Config(format!(
                "history holds {} states / {} inputs, expected {} / {}",
                self.states.len(),
                self.inputs.len(),
                cfg.h + 1,
                cfg.j
            )));
        }
        if self.states.iter().any(|x| x.len() != n) || self.inputs.iter().any(|u| u.len() != w) {
            return Err(SynthError::Config("history vector of wrong length".into()));
        }
        Ok(())
    }
}

/// Handles to the decision variables of a built problem.
#[derive(Debug, Clone)]
pub struct SynthVars {
    pub y: Vec<VarRef>,
    pub m: VarRef,
    pub h: Vec<VarRef>,
    pub z: VarRef,
    pub zeta: VarRef,
    /// Membership weights the problem was scheduled on (scheduled relaxation only).
    pub scheduling: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSolution<T> {
    pub y: Vec<SymMatrix<T>>,
    pub m: Matrix<T>,
    /// One input matrix per controller rule (repeated under the scheduled relaxation).
    pub h: Vec<Matrix<T>>,
    pub z: SymMatrix<T>,
    pub zeta: T,
    pub gains: Vec<Matrix<T>>,
    pub scheduling: Option<Vec<T>>,
    pub u_max: Vec<T>,
    pub iterations: usize,
    /// Worst residual margin from the certification check.
    pub margin: f64,
}

impl<T: Scalar> SynthesisSolution<T> {
    pub fn n_rules(&self) -> usize {
        self.y.len()
    }

    /// `P_l = zeta Y_l^{-1}` for every rule.
    pub fn p_matrices(&self) -> Result<Vec<SymMatrix<T>>, MatError> {
        self.y.iter().map(|y| Ok(y.inverse()?.scale(self.zeta))).collect()
    }

    /// `P_w = sum_l w_l zeta Y_l^{-1}`.
    pub fn blended_p(&self, w: &[T]) -> Result<SymMatrix<T>, MatError> {
        let ps = self.p_matrices()?;
        let mut acc = SymMatrix::zeros(ps[0].dim());
        for (p, &wl) in ps.iter().zip(w) {
            acc = acc.try_add(&p.scale(wl))?;
        }
        Ok(acc)
    }

    /// Blended gain `sum_i h_i K^i`.
    pub fn blended_gain(&self, h: &[T]) -> Matrix<T> {
        let mut k = Matrix::zeros(self.gains[0].rows(), self.gains[0].cols());
        for (ki, &hi) in self.gains.iter().zip(h) {
            k = &k + &ki.scale(hi);
        }
        k
    }

    /// The solution as an assignment for `vars` of the problem it came from.
    pub fn assignment(&self, vars: &SynthVars) -> Assignment<T> {
        let mut a = Assignment::new();
        for (v, y) in vars.y.iter().zip(&self.y) {
            a.set(v.name.clone(), y.as_matrix().clone());
        }
        a.set(vars.m.name.clone(), self.m.clone());
        for (v, h) in vars.h.iter().zip(&self.h) {
            a.set(v.name.clone(), h.clone());
        }
        a.set(vars.z.name.clone(), self.z.as_matrix().clone());
        a.set_scalar(vars.zeta.name.clone(), self.zeta);
        a
    }
}

fn lambda<T: Scalar>(y_terms: AffineBlock<T>, m: &VarRef) -> AffineBlock<T> {
    y_terms.minus(AffineBlock::var(m)).minus(AffineBlock::var_t(m))
}

/// Builds the per-step problem. Returns the problem and the variable handles.
pub fn build_problem<T: Scalar>(
    plant: &It2Plant<T>,
    cfg: &SynthConfig<T>,
    hist: &HistoryWindow<T>,
) -> Result<(LmiProblem<T>, SynthVars), SynthError> {
    cfg.validate()?;
    let (n, w, r) = (plant.state_dim(), plant.input_dim(), plant.n_rules());
    if cfg.q.dim() != n || cfg.r.dim() != w {
        return Err(SynthError::Config(format!("Q must be {n}x{n} and R {w}x{w}")));
    }
    hist.check(n, w, cfg)?;
    let qf = cfg.q.psd_factor()?;
    let rf = cfg.r.psd_factor()?;

    let mut p = LmiProblem::new();
    let y: Vec<VarRef> = (1..=r).map(|l| p.sym_var(format!("Y{l}"), n)).collect::<Result<_, _>>()?;
    let m = p.mat_var("M", n, n)?;
    let hs: Vec<VarRef> = match cfg.relaxation {
        Relaxation::Vertex => (1..=r).map(|i| p.mat_var(format!("H{i}"), w, n)).collect::<Result<_, _>>()?,
        Relaxation::Scheduled => vec![p.mat_var("H", w, n)?],
    };
    let z = p.sym_var("Z", w)?;
    let zeta = p.scalar_var("zeta")?;

    let neg_eye = |d: usize| Matrix::<T>::identity(d).scale(-T::one());
    let decrease = |y_cur: AffineBlock<T>, bl: &it2::Blended<T>, h: &VarRef, t: usize| {
        let lam = lambda(y_cur, &m);
        let chi = AffineBlock::lmul(&bl.a, &m).plus(AffineBlock::lmul(&bl.b, h));
        let chi_d = AffineBlock::lmul(&bl.a_d, &m).plus(AffineBlock::lmul(&bl.b_d, h));
        let mut spec = BlockSpec::square(vec![n, n, n, n, w]);
        spec.set(0, 0, lam.clone().scale(cfg.rho))
            .set(1, 1, lam.scale(cfg.rho_d))
            .set(2, 0, chi)
            .set(2, 1, chi_d)
            .set(2, 2, AffineBlock::var(&y[t]).scale(-T::one()))
            .set(3, 0, AffineBlock::lmul(&qf, &m))
            .set(3, 3, AffineBlock::scalar(&zeta, neg_eye(n)))
            .set(4, 0, AffineBlock::lmul(&rf, h))
            .set(4, 4, AffineBlock::scalar(&zeta, neg_eye(w)));
        spec
    };

    let scheduling = match cfg.relaxation {
        Relaxation::Vertex => {
            for l in 0..r {
                let bl = it2::blend(plant, &unit(r, l))?;
                for (i, h) in hs.iter().enumerate() {
                    for t in 0..r {
                        let spec = decrease(AffineBlock::var(&y[l]), &bl, h, t);
                        p.push(LmiConstraint::new(
                            format!("decrease[{},{},{}]", l + 1, i + 1, t + 1),
                            Sense::NegativeDefinite,
                            spec,
                        ));
                    }
                }
            }
            None
        }
        Relaxation::Scheduled => {
            let mu = it2::firing_strengths(plant, hist.current())?;
            let bl = it2::blend(plant, &mu)?;
            let mut y_mu = AffineBlock::zero(n, n);
            for (yl, &ml) in y.iter().zip(&mu) {
                y_mu = y_mu.plus(AffineBlock::var(yl).scale(ml));
            }
            for t in 0..r {
                let spec = decrease(y_mu.clone(), &bl, &hs[0], t);
                p.push(LmiConstraint::new(format!("decrease[{}]", t + 1), Sense::NegativeDefinite, spec));
            }
            Some(mu.iter().map(|v| v.to_f64_lossy()).collect())
        }
    };

    for (i, h) in hs.iter().enumerate() {
        for (l, yl) in y.iter().enumerate() {
            let mut spec = BlockSpec::square(vec![w, n]);
            spec.set(0, 0, AffineBlock::var(&z)).set(0, 1, AffineBlock::var(h)).set(
                1,
                1,
                AffineBlock::var(&m).plus(AffineBlock::var_t(&m)).minus(AffineBlock::var(yl)),
            );
            let label = match cfg.relaxation {
                Relaxation::Vertex => format!("input[{},{}]", i + 1, l + 1),
                Relaxation::Scheduled => format!("input[{}]", l + 1),
            };
            p.push(LmiConstraint::new(label, Sense::PositiveSemidefinite, spec));
        }
    }

    let h_len = hist.h();
    for (l, yl) in y.iter().enumerate() {
        for (k, x) in hist.states.iter().enumerate() {
            let mut spec = BlockSpec::square(vec![1, n]);
            spec.set(0, 0, AffineBlock::constant(Matrix::identity(1)))
                .set(1, 0, AffineBlock::constant(Matrix::column(x)))
                .set(1, 1, AffineBlock::var(yl));
            let lag = k as isize - h_len as isize;
            p.push(LmiConstraint::new(format!("contain[{},{}]", l + 1, lag), Sense::PositiveSemidefinite, spec));
        }
    }

    for (mm, &u) in cfg.u_max.iter().enumerate() {
        p.add_bound(format!("umax[{}]", mm + 1), vec![(z.clone(), (mm, mm), T::one())], u * u);
    }
    p.minimize(&zeta);
    Ok((p, SynthVars { y, m, h: hs, z, zeta, scheduling }))
}

/// The per-step problem without the variable handles.
pub fn build_step_lmis<T: Scalar>(
    plant: &It2Plant<T>,
    cfg: &SynthConfig<T>,
    hist: &HistoryWindow<T>,
) -> Result<LmiProblem<T>, SynthError> {
    Ok(build_problem(plant, cfg, hist)?.0)
}

fn unit<T: Scalar>(r: usize, l: usize) -> Vec<T> {
    (0..r).map(|k| if k == l { T::one() } else { T::zero() }).collect()
}

/// Reads a solved assignment back into a [`SynthesisSolution`] and extracts gains.
pub fn extract<T: Scalar>(
    vars: &SynthVars,
    a: &Assignment<T>,
    cfg: &SynthConfig<T>,
    r: usize,
) -> Result<SynthesisSolution<T>, SynthError> {
    let y = vars.y.iter().map(|v| a.sym(&v.name)).collect::<Result<Vec<_>, _>>()?;
    let m = a.get(&vars.m.name)?.clone();
    let mut h = vars.h.iter().map(|v| a.get(&v.name).cloned()).collect::<Result<Vec<_>, _>>()?;
    if h.len() == 1 && r > 1 {
        h = vec![h[0].clone(); r];
    }
    let m_inv = invert(&m)?;
    let gains = h.iter().map(|hi| hi * &m_inv).collect();
    Ok(SynthesisSolution {
        y,
        m,
        h,
        z: a.sym(&vars.z.name)?,
        zeta: a.scalar(&vars.zeta.name)?,
        gains,
        scheduling: vars.scheduling.as_ref().map(|s| s.iter().map(|&v| T::lit(v)).collect()),
        u_max: cfg.u_max.clone(),
        iterations: 0,
        margin: f64::NAN,
    })
}

/// Builds, solves and certifies one step.
pub fn solve_step<T: Scalar>(
    plant: &It2Plant<T>,
    cfg: &SynthConfig<T>,
    hist: &HistoryWindow<T>,
) -> Result<SynthesisSolution<T>, SynthError> {
    let (p, vars) = build_problem(plant, cfg, hist)?;
    let s = lmi::solve_with(&p, &cfg.solver)?;
    let mut sol = extract(&vars, &s.assignment, cfg, plant.n_rules())?;
    let report = lmi::check_feasible(&p, &s.assignment, CERT_TOL)?;
    if !report.pass {
        return Err(SynthError::Certification(report.worst_margin()));
    }
    sol.iterations = s.iterations;
    sol.margin = report.worst_margin();
    Ok(sol)
}

/// `u = (sum_l h_l(x) K^l) x`. Overshoot of `u_max` below 1e-9 is clipped; larger
/// overshoot is returned unchanged so callers can detect it.
pub fn control_input<T: Scalar>(
    sol: &SynthesisSolution<T>,
    ctrl: &It2Controller<T>,
    x: &[T],
) -> Result<Vec<T>, SynthError> {
    let h = if sol.gains.len() == 1 { vec![T::one()] } else { it2::controller_strengths(ctrl, x)? };
    if h.len() != sol.gains.len() {
        return Err(SynthError::Config(format!(
            "controller has {} rules, solution {} gains",
            h.len(),
            sol.gains.len()
        )));
    }
    let mut u = sol.blended_gain(&h).mul_vec(x);
    let slack = T::lit(1e-9);
    for (um, &lim) in u.iter_mut().zip(&sol.u_max) {
        if um.abs() > lim && um.abs() <= lim + slack {
            *um = um.signum() * lim;
        }
    }
    Ok(u)
}

/// `x' P_w(x) x` with `P_w = sum_l w_l(x) zeta Y_l^{-1}`; `x` is in the terminal set
/// iff the value is at most `zeta`.
pub fn terminal_set_value<T: Scalar>(
    sol: &SynthesisSolution<T>,
    plant: &It2Plant<T>,
    x: &[T],
) -> Result<T, SynthError> {
    let w = it2::firing_strengths(plant, x)?;
    Ok(sol.blended_p(&w)?.quad_form(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::it2::{FuzzyRule, It2MembershipFn, MembershipShape, Premise, Weighting};

    pub(crate) fn scalar_plant(a: f64, b: f64, a_d: f64, b_d: f64) -> It2Plant<f64> {
        let g = MembershipShape::Gaussian { center: 0.0, sigma: 1.0, height: 1.0 };
        let m = |v: f64| Matrix::from_vec(1, 1, vec![v]).unwrap();
        It2Plant::new(
            vec![FuzzyRule { a: m(a), a_d: m(a_d), b: m(b), b_d: m(b_d) }],
            vec![It2MembershipFn { lower: g, upper: g, weighting: Weighting::Constant(0.5) }],
            Premise::of_state(0),
        )
        .unwrap()
    }

    fn scalar_cfg(h: usize, u_max: f64) -> SynthConfig<f64> {
        SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[0.1]), 0.8, 0.2, h, 1, vec![u_max]).unwrap()
    }

    #[test]
    fn rho_sum_guard() {
        let err = SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[1.0]), 0.8, 0.3, 1, 1, vec![1.0]);
        assert!(matches!(err, Err(SynthError::Config(m)) if m.contains("rho + rho_d")));
        let err = SynthConfig::new(SymMatrix::diag(&[1.0]), SymMatrix::diag(&[0.0]), 0.8, 0.2, 1, 1, vec![1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn scalar_counts() {
        let plant = scalar_plant(0.5, 1.0, 0.0, 0.0);
        for relax in [Relaxation::Vertex, Relaxation::Scheduled] {
            let cfg = scalar_cfg(3, 1.0).with_relaxation(relax);
            let hist = HistoryWindow::constant(&[0.4], 3, 1, 1);
            let p = build_step_lmis(&plant, &cfg, &hist).unwrap();
            assert_eq!(p.count_labelled("decrease"), 1);
            assert_eq!(p.count_labelled("input"), 1);
            assert_eq!(p.count_labelled("contain"), 4);
            assert_eq!(p.constraints.iter().find(|c| c.label.starts_with("decrease")).unwrap().dim(), 5);
        }
    }

    #[test]
    fn zero_history_containment_is_origin_block() {
        let plant = scalar_plant(0.5, 1.0, 0.0, 0.0);
        let cfg = scalar_cfg(2, 1.0);
        let hist = HistoryWindow::constant(&[0.0], 2, 1, 1);
        let (p, vars) = build_problem(&plant, &cfg, &hist).unwrap();
        let mut a = Assignment::new();
        a.set(vars.y[0].name.clone(), Matrix::diag(&[2.5]));
        for c in p.constraints.iter().filter(|c| c.label.starts_with("contain")) {
            assert_eq!(c.evaluate(&a).unwrap(), SymMatrix::diag(&[1.0, 2.5]));
        }
    }

    #[test]
    fn scalar_stable_plant_is_feasible() {
        let plant = scalar_plant(0.5, 1.0, 0.0, 0.0);
        for relax in [Relaxation::Vertex, Relaxation::Scheduled] {
            let cfg = scalar_cfg(1, 1.0).with_relaxation(relax);
            let hist = HistoryWindow::constant(&[0.8], 1, 1, 1);
            let sol = solve_step(&plant, &cfg, &hist).unwrap();
            assert!(sol.zeta > 0.0 && sol.y[0][(0, 0)] > 0.0);
            // gain consistency H = K M
            let hm = &sol.gains[0] * &sol.m;
            assert!(hm.try_sub(&sol.h[0]).unwrap().max_abs() < 1e-9);
            let v = terminal_set_value(&sol, &plant, &[0.8]).unwrap();
            assert!(v <= sol.zeta * (1.0 + 1e-9));
            assert_eq!(control_input(&sol, &plant.matched_controller(), &[0.0]).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn tiny_input_bound_is_infeasible() {
        let plant = scalar_plant(1.5, 1.0, 0.0, 0.0);
        let cfg = scalar_cfg(1, 1e-9);
        let hist = HistoryWindow::constant(&[5.0], 1, 1, 1);
        assert!(matches!(solve_step(&plant, &cfg, &hist), Err(SynthError::Infeasible(_))));
    }

    #[test]
    fn terminal_value_identity_ellipsoid() {
        let sol = SynthesisSolution {
            y: vec![SymMatrix::diag(&[2.0, 2.0])],
            m: Matrix::identity(2),
            h: vec![Matrix::zeros(1, 2)],
            z: SymMatrix::diag(&[1.0]),
            zeta: 2.0,
            gains: vec![Matrix::zeros(1, 2)],
            scheduling: None,
            u_max: vec![1.0],
            iterations: 0,
            margin: 0.0,
        };
        let g = MembershipShape::Gaussian { center: 0.0, sigma: 1.0, height: 1.0 };
        let r = FuzzyRule {
            a: Matrix::identity(2),
            a_d: Matrix::zeros(2, 2),
            b: Matrix::zeros(2, 1),
            b_d: Matrix::zeros(2, 1),
        };
        let plant = It2Plant::new(
            vec![r],
            vec![It2MembershipFn { lower: g, upper: g, weighting: Weighting::Constant(0.0) }],
            Premise::of_state(0),
        )
        .unwrap();
        assert_eq!(terminal_set_value(&sol, &plant, &[0.0, 0.0]).unwrap(), 0.0);
        let v: f64 = terminal_set_value(&sol, &plant, &[0.6, -0.8]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn history_window_lags() {
        let mut hw = HistoryWindow::constant(&[1.0], 2, 2, 1);
        hw.push(vec![2.0], vec![0.5]);
        hw.push(vec![3.0], vec![0.7]);
        assert_eq!(hw.current(), &[3.0]);
        assert_eq!(hw.state_lag(1).unwrap(), &[2.0]);
        assert_eq!(hw.state_lag(2).unwrap(), &[1.0]);
        assert!(hw.state_lag(3).is_none());
        assert_eq!(hw.input_lag(1).unwrap(), &[0.7]);
        assert_eq!(hw.input_lag(2).unwrap(), &[0.5]);
        assert!(hw.input_lag(0).is_none());
    }
}
