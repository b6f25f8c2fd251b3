//! Affine LMI modelling and a small dense semidefinite solver.
//!
//! A problem is a list of named matrix variables, block-structured matrix
//! inequalities that are affine in those variables, optional linear scalar
//! bounds and an optional scalar objective to minimize.
//!
//! Solving goes through a compiled form: every variable is flattened into
//! scalar unknowns `y`, every constraint becomes `G(y) = G0 + sum_j y_j G_j`
//! that must be positive definite, and a log-barrier path-following method
//! (phase I for a strictly feasible point, phase II for the objective) works
//! on that form. Strict "negative definite" constraints are tightened to
//! `F(y) <= -eps I` with `eps = 1e-6 (1 + |F0|)`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::matkernel::{cholesky_lower, Block, BlockSpec, MatError, Matrix, SymMatrix};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    Symmetric,
    General,
    Scalar,
}

/// Handle to a decision variable registered in an [`LmiProblem`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub id: usize,
    pub name: String,
    pub kind: VarKind,
    pub rows: usize,
    pub cols: usize,
}

impl VarRef {
    /// Number of scalar unknowns the variable contributes.
    pub fn n_unknowns(&self) -> usize {
        match self.kind {
            VarKind::Symmetric => self.rows * (self.rows + 1) / 2,
            VarKind::General => self.rows * self.cols,
            VarKind::Scalar => 1,
        }
    }

    /// Index of entry `(r, c)` among this variable's unknowns.
    pub fn unknown_index(&self, r: usize, c: usize) -> usize {
        match self.kind {
            VarKind::Scalar => 0,
            VarKind::General => r * self.cols + c,
            VarKind::Symmetric => {
                let (a, b) = if r <= c { (r, c) } else { (c, r) };
                a * self.rows - a * (a + 1) / 2 + b
            }
        }
    }

    fn basis<T: Scalar>(&self, k: usize) -> Matrix<T> {
        let mut e = Matrix::zeros(self.rows, self.cols);
        match self.kind {
            VarKind::Scalar => e[(0, 0)] = T::one(),
            VarKind::General => e[(k / self.cols, k % self.cols)] = T::one(),
            VarKind::Symmetric => {
                let (a, b) = self.sym_pair(k);
                e[(a, b)] = T::one();
                e[(b, a)] = T::one();
            }
        }
        e
    }

    fn sym_pair(&self, k: usize) -> (usize, usize) {
        let n = self.rows;
        let mut rem = k;
        for a in 0..n {
            let len = n - a;
            if rem < len {
                return (a, a + rem);
            }
            rem -= len;
        }
        unreachable!("unknown index out of range")
    }
}

/// One additive term of an [`AffineBlock`].
#[derive(Debug, Clone, PartialEq)]
pub enum Term<T> {
    /// `scale * left * op(var) * right`, `op` = transpose when `transposed`.
    Product { scale: T, left: Matrix<T>, var: VarRef, right: Matrix<T>, transposed: bool },
    /// `var * coeff` for a scalar variable.
    Scaled { var: VarRef, coeff: Matrix<T> },
}

/// Matrix-valued affine expression `constant + sum(terms)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlock<T> {
    pub constant: Matrix<T>,
    pub terms: Vec<Term<T>>,
}

impl<T: Scalar> AffineBlock<T> {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self { constant: Matrix::zeros(rows, cols), terms: Vec::new() }
    }

    pub fn constant(m: Matrix<T>) -> Self {
        Self { constant: m, terms: Vec::new() }
    }

    /// The variable itself.
    pub fn var(v: &VarRef) -> Self {
        Self::zero(v.rows, v.cols).plus_product(T::one(), Matrix::identity(v.rows), v, Matrix::identity(v.cols), false)
    }

    /// `v^T`.
    pub fn var_t(v: &VarRef) -> Self {
        Self::zero(v.cols, v.rows).plus_product(T::one(), Matrix::identity(v.cols), v, Matrix::identity(v.rows), true)
    }

    /// `left * v`.
    pub fn lmul(left: &Matrix<T>, v: &VarRef) -> Self {
        Self::zero(left.rows(), v.cols).plus_product(T::one(), left.clone(), v, Matrix::identity(v.cols), false)
    }

    /// `v * coeff` for a scalar variable.
    pub fn scalar(v: &VarRef, coeff: Matrix<T>) -> Self {
        let mut b = Self::zero(coeff.rows(), coeff.cols());
        b.terms.push(Term::Scaled { var: v.clone(), coeff });
        b
    }

    pub fn rows(&self) -> usize {
        self.constant.rows()
    }

    pub fn cols(&self) -> usize {
        self.constant.cols()
    }

    pub fn plus_product(mut self, scale: T, left: Matrix<T>, var: &VarRef, right: Matrix<T>, transposed: bool) -> Self {
        self.terms.push(Term::Product { scale, left, var: var.clone(), right, transposed });
        self
    }

    pub fn plus(mut self, other: Self) -> Self {
        self.constant = &self.constant + &other.constant;
        self.terms.extend(other.terms);
        self
    }

    pub fn minus(self, other: Self) -> Self {
        self.plus(other.scale(-T::one()))
    }

    pub fn scale(mut self, s: T) -> Self {
        self.constant = self.constant.scale(s);
        for t in &mut self.terms {
            match t {
                Term::Product { scale, .. } => *scale = *scale * s,
                Term::Scaled { coeff, .. } => *coeff = coeff.scale(s),
            }
        }
        self
    }

    pub fn transpose(self) -> Self {
        let terms = self
            .terms
            .into_iter()
            .map(|t| match t {
                Term::Product { scale, left, var, right, transposed } => Term::Product {
                    scale,
                    left: right.transpose(),
                    var,
                    right: left.transpose(),
                    transposed: !transposed,
                },
                Term::Scaled { var, coeff } => Term::Scaled { var, coeff: coeff.transpose() },
            })
            .collect();
        Self { constant: self.constant.transpose(), terms }
    }

    fn check_shapes(&self) -> Result<(), String> {
        let shape = self.constant.shape();
        for t in &self.terms {
            match t {
                Term::Product { left, var, right, transposed, .. } => {
                    let (vr, vc) = if *transposed { (var.cols, var.rows) } else { (var.rows, var.cols) };
                    if left.cols() != vr || right.rows() != vc || (left.rows(), right.cols()) != shape {
                        return Err(format!(
                            "term in {} is {}x{} * {} * {}x{}, block is {}x{}",
                            var.name,
                            left.rows(),
                            left.cols(),
                            var.name,
                            right.rows(),
                            right.cols(),
                            shape.0,
                            shape.1
                        ));
                    }
                }
                Term::Scaled { var, coeff } => {
                    if var.kind != VarKind::Scalar {
                        return Err(format!("scaled term needs a scalar variable, {} is not", var.name));
                    }
                    if coeff.shape() != shape {
                        return Err(format!("scaled term on {} has wrong shape", var.name));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, a: &Assignment<T>) -> Result<Matrix<T>, LmiError> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let contrib = match t {
                Term::Product { scale, left, var, right, transposed } => {
                    let v = a.get(&var.name)?;
                    let v = if *transposed { v.transpose() } else { v.clone() };
                    (&(left * &v) * right).scale(*scale)
                }
                Term::Scaled { var, coeff } => coeff.scale(a.get(&var.name)?[(0, 0)]),
            };
            out = &out + &contrib;
        }
        Ok(out)
    }

    /// Coefficient matrix of one unknown of `var` (zero if `var` is absent).
    fn coefficient(&self, var: &VarRef, k: usize) -> Matrix<T> {
        let mut out = Matrix::zeros(self.rows(), self.cols());
        for t in &self.terms {
            match t {
                Term::Product { scale, left, var: v, right, transposed } if v.id == var.id => {
                    let e = var.basis::<T>(k);
                    let e = if *transposed { e.transpose() } else { e };
                    out = &out + &(&(left * &e) * right).scale(*scale);
                }
                Term::Scaled { var: v, coeff } if v.id == var.id => out = &out + coeff,
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    NegativeDefinite,
    PositiveSemidefinite,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::NegativeDefinite => "< 0",
            Sense::PositiveSemidefinite => ">= 0",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint<T> {
    pub label: String,
    pub sense: Sense,
    pub blocks: BlockSpec<AffineBlock<T>>,
}

impl<T: Scalar> LmiConstraint<T> {
    pub fn new(label: impl Into<String>, sense: Sense, blocks: BlockSpec<AffineBlock<T>>) -> Self {
        Self { label: label.into(), sense, blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.total_dim()
    }

    fn validate(&self) -> Result<(), LmiError> {
        let err = |m: String| LmiError::Structure(format!("{}: {m}", self.label));
        if self.blocks.row_dims != self.blocks.col_dims {
            return Err(err("row and column block dims differ".into()));
        }
        let nb = self.blocks.row_dims.len();
        for (&(i, j), b) in &self.blocks.blocks {
            if i >= nb || j >= nb {
                return Err(err(format!("block ({i},{j}) outside layout")));
            }
            if i > j && self.blocks.blocks.contains_key(&(j, i)) {
                return Err(err(format!("block ({i},{j}) given with its mirror")));
            }
            if let Block::Value(b) = b {
                if (b.rows(), b.cols()) != (self.blocks.row_dims[i], self.blocks.col_dims[j]) {
                    return Err(err(format!(
                        "block ({i},{j}) is {}x{}, layout expects {}x{}",
                        b.rows(),
                        b.cols(),
                        self.blocks.row_dims[i],
                        self.blocks.col_dims[j]
                    )));
                }
                b.check_shapes().map_err(|m| err(format!("block ({i},{j}): {m}")))?;
            }
        }
        Ok(())
    }

    /// Assembled matrix at a numeric assignment.
    pub fn evaluate(&self, a: &Assignment<T>) -> Result<SymMatrix<T>, LmiError> {
        let mut spec = BlockSpec::<Matrix<T>>::square(self.blocks.row_dims.clone());
        for (&(i, j), b) in &self.blocks.blocks {
            if let Block::Value(b) = b {
                spec.set(i, j, b.evaluate(a)?);
            }
        }
        Ok(crate::matkernel::assemble_symmetric(&spec)?)
    }

    fn variables(&self) -> Vec<VarRef> {
        let mut out: BTreeMap<usize, VarRef> = BTreeMap::new();
        for b in self.blocks.blocks.values() {
            if let Block::Value(b) = b {
                for t in &b.terms {
                    let v = match t {
                        Term::Product { var, .. } | Term::Scaled { var, .. } => var,
                    };
                    out.entry(v.id).or_insert_with(|| v.clone());
                }
            }
        }
        out.into_values().collect()
    }
}

/// `sum(coef * var[r, c]) <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBound<T> {
    pub label: String,
    pub terms: Vec<(VarRef, (usize, usize), T)>,
    pub rhs: T,
}

/// Iteration and tolerance knobs of the interior-point solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Predictor-corrector iteration cap per phase.
    pub max_iterations: usize,
    /// Every unknown is confined to `[-box_radius, box_radius]`.
    pub box_radius: f64,
    /// Relative duality gap and primal residual at which a run is converged.
    pub gap_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iterations: 200, box_radius: 1e4, gap_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmiError {
    #[error("malformed problem: {0}")]
    Structure(String),
    #[error("variable {0} not assigned")]
    MissingVariable(String),
    #[error("infeasible (best phase-I margin {margin:.3e})")]
    Infeasible { margin: f64 },
    #[error("no certificate after {iterations} iterations")]
    NoCertificate { iterations: usize },
    #[error(transparent)]
    Matrix(#[from] MatError),
}

/// Numeric values for the variables of a problem, keyed by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment<T> {
    values: BTreeMap<String, Matrix<T>>,
}

impl<T: Scalar> Assignment<T> {
    pub fn new() -> Self {
        Self { values: BTreeMap::new() }
    }

    pub fn set(&mut self, name: impl Into<String>, m: Matrix<T>) -> &mut Self {
        self.values.insert(name.into(), m);
        self
    }

    pub fn set_scalar(&mut self, name: impl Into<String>, v: T) -> &mut Self {
        self.set(name, Matrix::from_vec(1, 1, vec![v]).expect("1x1"))
    }

    pub fn get(&self, name: &str) -> Result<&Matrix<T>, LmiError> {
        self.values.get(name).ok_or_else(|| LmiError::MissingVariable(name.to_string()))
    }

    pub fn scalar(&self, name: &str) -> Result<T, LmiError> {
        Ok(self.get(name)?[(0, 0)])
    }

    pub fn sym(&self, name: &str) -> Result<SymMatrix<T>, LmiError> {
        Ok(SymMatrix::symmetrize(self.get(name)?)?)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.values.keys()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem<T> {
    pub variables: Vec<VarRef>,
    pub constraints: Vec<LmiConstraint<T>>,
    pub bounds: Vec<LinearBound<T>>,
    pub objective: Option<VarRef>,
}

impl<T: Scalar> Default for LmiProblem<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> LmiProblem<T> {
    pub fn new() -> Self {
        Self { variables: Vec::new(), constraints: Vec::new(), bounds: Vec::new(), objective: None }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        rows: usize,
        cols: usize,
    ) -> Result<VarRef, LmiError> {
        let name = name.into();
        if self.variables.iter().any(|v| v.name == name) {
            return Err(LmiError::Structure(format!("duplicate variable name {name}")));
        }
        let (rows, cols) = if kind == VarKind::Scalar { (1, 1) } else { (rows, cols) };
        if rows == 0 || cols == 0 || (kind == VarKind::Symmetric && rows != cols) {
            return Err(LmiError::Structure(format!("bad shape {rows}x{cols} for {name}")));
        }
        let v = VarRef { id: self.variables.len(), name, kind, rows, cols };
        self.variables.push(v.clone());
        Ok(v)
    }

    pub fn sym_var(&mut self, name: impl Into<String>, n: usize) -> Result<VarRef, LmiError> {
        self.add_var(name, VarKind::Symmetric, n, n)
    }

    pub fn mat_var(&mut self, name: impl Into<String>, r: usize, c: usize) -> Result<VarRef, LmiError> {
        self.add_var(name, VarKind::General, r, c)
    }

    pub fn scalar_var(&mut self, name: impl Into<String>) -> Result<VarRef, LmiError> {
        self.add_var(name, VarKind::Scalar, 1, 1)
    }

    pub fn push(&mut self, c: LmiConstraint<T>) {
        self.constraints.push(c);
    }

    pub fn add_bound(&mut self, label: impl Into<String>, terms: Vec<(VarRef, (usize, usize), T)>, rhs: T) {
        self.bounds.push(LinearBound { label: label.into(), terms, rhs });
    }

    pub fn minimize(&mut self, v: &VarRef) {
        self.objective = Some(v.clone());
    }

    pub fn n_unknowns(&self) -> usize {
        self.variables.iter().map(VarRef::n_unknowns).sum()
    }

    pub fn count_labelled(&self, prefix: &str) -> usize {
        self.constraints.iter().filter(|c| c.label.starts_with(prefix)).count()
    }

    pub fn validate(&self) -> Result<(), LmiError> {
        for (i, v) in self.variables.iter().enumerate() {
            if v.id != i {
                return Err(LmiError::Structure(format!("variable {} has foreign id", v.name)));
            }
        }
        let known = |v: &VarRef| self.variables.get(v.id).is_some_and(|w| w == v);
        for c in &self.constraints {
            c.validate()?;
            if let Some(v) = c.variables().into_iter().find(|v| !known(v)) {
                return Err(LmiError::Structure(format!("{}: unknown variable {}", c.label, v.name)));
            }
        }
        for b in &self.bounds {
            for (v, (r, c), _) in &b.terms {
                if !known(v) || *r >= v.rows || *c >= v.cols {
                    return Err(LmiError::Structure(format!("{}: bad entry of {}", b.label, v.name)));
                }
            }
        }
        if let Some(obj) = &self.objective {
            if obj.kind != VarKind::Scalar || !known(obj) {
                return Err(LmiError::Structure("objective must be a registered scalar".into()));
            }
            if !self.constraints.iter().any(|c| c.variables().iter().any(|v| v.id == obj.id)) {
                return Err(LmiError::Structure(format!("objective {} appears in no constraint", obj.name)));
            }
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<usize> {
        BlockSpec::<()>::offsets(&self.variables.iter().map(VarRef::n_unknowns).collect::<Vec<_>>())
    }

    /// Flattens an assignment into the unknown vector.
    pub fn pack(&self, a: &Assignment<T>) -> Result<Vec<T>, LmiError> {
        let mut y = Vec::with_capacity(self.n_unknowns());
        for v in &self.variables {
            let m = a.get(&v.name)?;
            if m.shape() != (v.rows, v.cols) {
                return Err(LmiError::Structure(format!("value of {} has wrong shape", v.name)));
            }
            match v.kind {
                VarKind::Scalar => y.push(m[(0, 0)]),
                VarKind::General => y.extend_from_slice(m.as_slice()),
                VarKind::Symmetric => {
                    for r in 0..v.rows {
                        for c in r..v.cols {
                            y.push(m[(r, c)]);
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn unpack(&self, y: &[T]) -> Assignment<T> {
        let mut a = Assignment::new();
        for (v, off) in self.variables.iter().zip(self.offsets()) {
            let mut m = Matrix::zeros(v.rows, v.cols);
            for k in 0..v.n_unknowns() {
                m = &m + &v.basis::<T>(k).scale(y[off + k]);
            }
            a.set(v.name.clone(), m);
        }
        a
    }
}

impl<T: Scalar> fmt::Display for LmiProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# variables ({} unknowns)", self.n_unknowns())?;
        for v in &self.variables {
            writeln!(f, "var {} {:?} {}x{}", v.name, v.kind, v.rows, v.cols)?;
        }
        match &self.objective {
            Some(o) => writeln!(f, "minimize {}", o.name)?,
            None => writeln!(f, "feasibility")?,
        }
        for c in &self.constraints {
            writeln!(f, "\nconstraint {} : dims {:?} {}", c.label, c.blocks.row_dims, c.sense)?;
            for (&(i, j), b) in &c.blocks.blocks {
                let Block::Value(b) = b else { continue };
                let mut parts = Vec::new();
                if b.constant.max_abs() > T::zero() {
                    parts.push(format!("C{:?}", b.constant.to_f64_rows()));
                }
                for t in &b.terms {
                    parts.push(match t {
                        Term::Product { scale, left, var, right, transposed } => format!(
                            "{}*L{:?}*{}{}*R{:?}",
                            scale,
                            left.to_f64_rows(),
                            var.name,
                            if *transposed { "'" } else { "" },
                            right.to_f64_rows()
                        ),
                        Term::Scaled { var, coeff } => format!("{}*{:?}", var.name, coeff.to_f64_rows()),
                    });
                }
                writeln!(f, "  ({i},{j}) = {}", if parts.is_empty() { "0".into() } else { parts.join(" + ") })?;
            }
        }
        for b in &self.bounds {
            let lhs: Vec<String> = b.terms.iter().map(|(v, (r, c), k)| format!("{k}*{}[{r},{c}]", v.name)).collect();
            writeln!(f, "\nbound {} : {} <= {}", b.label, lhs.join(" + "), b.rhs)?;
        }
        Ok(())
    }
}

/// Per-constraint outcome of [`check_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub label: String,
    pub min_eig: f64,
    pub max_eig: f64,
    /// Signed slack; positive means satisfied (`-max_eig` for "< 0", `min_eig` for ">= 0").
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
    pub pass: bool,
}

impl FeasibilityReport {
    pub fn worst_margin(&self) -> f64 {
        self.checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn violated(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.label.as_str()).collect()
    }
}

/// Residual certification of an assignment.
pub fn check_feasible<T: Scalar>(
    p: &LmiProblem<T>,
    a: &Assignment<T>,
    tol: f64,
) -> Result<FeasibilityReport, LmiError> {
    let mut checks = Vec::new();
    for c in &p.constraints {
        let ev = c.evaluate(a)?.eigenvalues()?;
        let (lo, hi) = (ev[0].to_f64_lossy(), ev[ev.len() - 1].to_f64_lossy());
        let (margin, pass) = match c.sense {
            Sense::NegativeDefinite => (-hi, hi < -tol),
            Sense::PositiveSemidefinite => (lo, lo > -tol),
        };
        checks.push(ConstraintCheck { label: c.label.clone(), min_eig: lo, max_eig: hi, margin, pass });
    }
    for b in &p.bounds {
        let mut lhs = T::zero();
        for (v, (r, c), k) in &b.terms {
            lhs = lhs + *k * a.get(&v.name)?[(*r, *c)];
        }
        let slack = (b.rhs - lhs).to_f64_lossy();
        checks.push(ConstraintCheck {
            label: b.label.clone(),
            min_eig: slack,
            max_eig: slack,
            margin: slack,
            pass: slack > -tol,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(FeasibilityReport { checks, pass })
}

/// Result of a successful solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub assignment: Assignment<T>,
    /// Objective value, or the phase-I margin for pure feasibility problems.
    pub objective: T,
    pub iterations: usize,
    /// Smallest eigenvalue over all compiled (tightened) constraint matrices.
    pub margin: T,
}

pub fn solve<T: Scalar>(p: &LmiProblem<T>) -> Result<Solution<T>, LmiError> {
    solve_with(p, &SolverSettings::default())
}

pub fn solve_with<T: Scalar>(p: &LmiProblem<T>, s: &SolverSettings) -> Result<Solution<T>, LmiError> {
    p.validate()?;
    let cp = Compiled::from_problem(p)?;
    let (y0, it1) = cp.phase_one(s)?;
    let (y, it2) = match &p.objective {
        Some(obj) => {
            let j = p.offsets()[obj.id];
            let mut c = vec![T::zero(); cp.n];
            c[j] = T::one();
            cp.phase_two(&c, y0, s)?
        }
        None => (y0, 0),
    };
    let margin = cp.margin(&y).ok_or(LmiError::NoCertificate { iterations: it1 + it2 })?;
    let objective = match &p.objective {
        Some(obj) => y[p.offsets()[obj.id]],
        None => margin,
    };
    Ok(Solution { assignment: p.unpack(&y), objective, iterations: it1 + it2, margin })
}

/// Minimizes the scalar objective by bisection over feasibility problems with the
/// objective frozen. Independent of phase II of [`solve`].
pub fn solve_bisection<T: Scalar>(p: &LmiProblem<T>, lo: T, hi: T) -> Result<Solution<T>, LmiError> {
    solve_bisection_with(p, lo, hi, &SolverSettings::default())
}

pub fn solve_bisection_with<T: Scalar>(
    p: &LmiProblem<T>,
    lo: T,
    hi: T,
    s: &SolverSettings,
) -> Result<Solution<T>, LmiError> {
    p.validate()?;
    let obj = p.objective.clone().ok_or_else(|| LmiError::Structure("bisection needs a scalar objective".into()))?;
    if !(lo < hi) {
        return Err(LmiError::Structure("bisection needs lo < hi".into()));
    }
    let cp = Compiled::from_problem(p)?;
    let j = p.offsets()[obj.id];
    let feasible_at = |v: T| -> Result<Option<(Vec<T>, usize)>, LmiError> {
        match cp.fix(j, v).phase_one(s) {
            Ok((y, it)) => {
                let mut full = y;
                full.insert(j, v);
                Ok(Some((full, it)))
            }
            Err(LmiError::Infeasible { .. }) | Err(LmiError::NoCertificate { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let (mut best, mut iters) = match feasible_at(hi)? {
        Some(w) => w,
        None => return Err(LmiError::Infeasible { margin: f64::NAN }),
    };
    let (mut a, mut b) = (lo, hi);
    let target = (hi - lo) * T::lit(2f64.powi(-32));
    while b - a > target {
        let mid = a + (b - a) * T::lit(0.5);
        if mid <= a || mid >= b {
            break;
        }
        match feasible_at(mid)? {
            Some((y, it)) => {
                best = y;
                iters += it;
                b = mid;
            }
            None => a = mid,
        }
    }
    let margin = cp.margin(&best).unwrap_or(T::zero());
    Ok(Solution { assignment: p.unpack(&best), objective: b, iterations: iters, margin })
}

/// `G(y) = G0 + sum_j y_j G_j`, stored densely.
#[derive(Debug, Clone)]
struct CBlock<T> {
    dim: usize,
    g0: Vec<T>,
    terms: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> CBlock<T> {
    fn at(&self, y: &[T]) -> Vec<T> {
        let mut g = self.g0.clone();
        for (j, gj) in &self.terms {
            let yj = y[*j];
            if yj != T::zero() {
                for (a, b) in g.iter_mut().zip(gj) {
                    *a = *a + yj * *b;
                }
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
struct Compiled<T> {
    n: usize,
    blocks: Vec<CBlock<T>>,
}

impl<T: Scalar> Compiled<T> {
    fn from_problem(p: &LmiProblem<T>) -> Result<Self, LmiError> {
        let offs = p.offsets();
        let mut blocks = Vec::new();
        for c in &p.constraints {
            let dims = &c.blocks.row_dims;
            let bo = BlockSpec::<()>::offsets(dims);
            let d = c.dim();
            let place = |dst: &mut Vec<T>, i: usize, j: usize, m: &Matrix<T>| {
                for a in 0..m.rows() {
                    for b in 0..m.cols() {
                        let (r, col) = (bo[i] + a, bo[j] + b);
                        dst[r * d + col] = m[(a, b)];
                        dst[col * d + r] = m[(a, b)];
                    }
                }
            };
            let mut g0 = vec![T::zero(); d * d];
            let mut per_unknown: BTreeMap<usize, Vec<T>> = BTreeMap::new();
            for (&(i, j), b) in &c.blocks.blocks {
                let Block::Value(b) = b else { continue };
                if i == j && !is_symmetric(&b.constant) {
                    return Err(LmiError::Structure(format!("{}: diagonal block ({i},{i}) not symmetric", c.label)));
                }
                place(&mut g0, i, j, &b.constant);
                for v in c.variables() {
                    for k in 0..v.n_unknowns() {
                        let coef = b.coefficient(&v, k);
                        if coef.max_abs() == T::zero() {
                            continue;
                        }
                        if i == j && !is_symmetric(&coef) {
                            return Err(LmiError::Structure(format!(
                                "{}: diagonal block ({i},{i}) not symmetric in {}",
                                c.label, v.name
                            )));
                        }
                        let dst = per_unknown.entry(offs[v.id] + k).or_insert_with(|| vec![T::zero(); d * d]);
                        place(dst, i, j, &coef);
                    }
                }
            }
            if c.sense == Sense::NegativeDefinite {
                let norm = g0.iter().map(|&v| v * v).sum::<T>().sqrt();
                let eps = T::lit(1e-6) * (T::one() + norm);
                for v in g0.iter_mut() {
                    *v = -*v;
                }
                for k in 0..d {
                    g0[k * d + k] = g0[k * d + k] - eps;
                }
                for g in per_unknown.values_mut() {
                    for v in g.iter_mut() {
                        *v = -*v;
                    }
                }
            }
            blocks.push(CBlock { dim: d, g0, terms: per_unknown.into_iter().collect() });
        }
        for b in &p.bounds {
            let mut terms: BTreeMap<usize, T> = BTreeMap::new();
            for (v, (r, c), k) in &b.terms {
                let e = terms.entry(offs[v.id] + v.unknown_index(*r, *c)).or_insert(T::zero());
                *e = *e - *k;
            }
            blocks.push(CBlock {
                dim: 1,
                g0: vec![b.rhs],
                terms: terms.into_iter().map(|(j, v)| (j, vec![v])).collect(),
            });
        }
        Ok(Self { n: p.n_unknowns(), blocks })
    }

    /// Same problem with unknown `j` frozen at `v` and removed.
    fn fix(&self, j: usize, v: T) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut g0 = b.g0.clone();
                let mut terms = Vec::with_capacity(b.terms.len());
                for (k, g) in &b.terms {
                    if *k == j {
                        for (a, c) in g0.iter_mut().zip(g) {
                            *a = *a + v * *c;
                        }
                    } else {
                        terms.push((if *k > j { k - 1 } else { *k }, g.clone()));
                    }
                }
                CBlock { dim: b.dim, g0, terms }
            })
            .collect();
        Self { n: self.n - 1, blocks }
    }

    /// Smallest eigenvalue over all blocks, `None` if some block is not finite.
    fn margin(&self, y: &[T]) -> Option<T> {
        let mut m = T::infinity();
        for b in &self.blocks {
            let g = Matrix::from_vec(b.dim, b.dim, b.at(y)).ok()?;
            let e = SymMatrix::symmetrize(&g).ok()?.min_eig().ok()?;
            m = m.min(e);
        }
        Some(m)
    }

    /// Appends `r - y_j > 0` and `r + y_j > 0` for the first `count` unknowns.
    fn boxed(mut self, count: usize, r: T) -> Self {
        for j in 0..count {
            self.blocks.push(CBlock { dim: 1, g0: vec![r], terms: vec![(j, vec![-T::one()])] });
            self.blocks.push(CBlock { dim: 1, g0: vec![r], terms: vec![(j, vec![T::one()])] });
        }
        self
    }

    /// Phase I: minimize `s` subject to `G_b(y) + s I > 0` and `s > -1` inside the box.
    /// Returns as soon as `s < 0`.
    fn phase_one(&self, set: &SolverSettings) -> Result<(Vec<T>, usize), LmiError> {
        let n = self.n;
        let mut y = vec![T::zero(); n + 1];
        let start = self.margin(&y[..n]).ok_or(LmiError::Matrix(MatError::NonFinite("phase I start")))?;
        if start > T::zero() {
            return Ok((y[..n].to_vec(), 0));
        }
        y[n] = -start + T::one();
        let mut blocks: Vec<CBlock<T>> = self
            .blocks
            .iter()
            .map(|b| {
                let mut b = b.clone();
                let mut eye = vec![T::zero(); b.dim * b.dim];
                for k in 0..b.dim {
                    eye[k * b.dim + k] = T::one();
                }
                b.terms.push((n, eye));
                b
            })
            .collect();
        blocks.push(CBlock { dim: 1, g0: vec![T::one()], terms: vec![(n, vec![T::one()])] });
        let aug = Compiled { n: n + 1, blocks }.boxed(n, T::lit(set.box_radius));
        let mut c = vec![T::zero(); n + 1];
        c[n] = T::one();
        let run = aug.interior_point(&c, y, set, |y| y[n] < T::zero())?;
        let s = run.y[n];
        if s < T::zero() {
            Ok((run.y[..n].to_vec(), run.iterations))
        } else {
            Err(LmiError::Infeasible { margin: -s.to_f64_lossy() })
        }
    }

    /// Phase II: minimize `c^T y` from a strictly feasible start.
    fn phase_two(&self, c: &[T], y0: Vec<T>, set: &SolverSettings) -> Result<(Vec<T>, usize), LmiError> {
        let r = T::lit(set.box_radius).max(T::lit(2.0) * y0.iter().fold(T::zero(), |m, v| m.max(v.abs())));
        let boxed = self.clone().boxed(self.n, r);
        let run = boxed.interior_point(c, y0, set, |_| false)?;
        Ok((run.y, run.iterations))
    }

    /// Primal-dual path following with Nesterov-Todd scaling and a Mehrotra
    /// predictor-corrector. The dual slack is always `S = G(y)` for the current
    /// iterate, so every `y` visited is strictly feasible; the primal `X` starts
    /// infeasible. `early(y)` ends the run before convergence.
    fn interior_point(
        &self,
        c: &[T],
        mut y: Vec<T>,
        set: &SolverSettings,
        early: impl Fn(&[T]) -> bool,
    ) -> Result<IpmRun<T>, LmiError> {
        let m = self.n;
        let blocks: Vec<DenseBlock<T>> = self.blocks.iter().map(DenseBlock::from_compiled).collect();
        let total: usize = blocks.iter().map(|b| b.dim).sum();
        let nn = T::lit(total as f64);
        let tol = T::lit(set.gap_tol).max(T::lit(100.0) * T::precision());
        let c_norm = crate::matkernel::norm2(c);

        let mut s: Vec<Matrix<T>> = Vec::with_capacity(blocks.len());
        for b in &blocks {
            s.push(b.at(&y));
        }
        // Standard infeasible primal start `X_k = xi_k I`.
        let mut x: Vec<Matrix<T>> = blocks
            .iter()
            .map(|b| {
                let nk = T::lit(b.dim as f64);
                let mut xi = T::lit(10.0).max(nk.sqrt());
                for (j, gj) in &b.terms {
                    xi = xi.max(nk * (T::one() + c[*j].abs()) / (T::one() + gj.frobenius()));
                }
                Matrix::identity(b.dim).scale(xi)
            })
            .collect();

        let mut iterations = 0;
        loop {
            if early(&y) {
                return Ok(IpmRun { y, iterations });
            }
            let mut r = c.to_vec();
            let mut gap = T::zero();
            let mut dobj = T::zero();
            for (b, (xk, sk)) in blocks.iter().zip(x.iter().zip(&s)) {
                for (j, gj) in &b.terms {
                    r[*j] = r[*j] - inner(gj, xk);
                }
                gap = gap + inner(xk, sk);
                dobj = dobj - inner(&b.g0, xk);
            }
            let pobj = crate::matkernel::dot(c, &y);
            let pinf = crate::matkernel::norm2(&r) / (T::one() + c_norm);
            let scale = pobj.abs().max(dobj.abs()).max(T::lit(1e-12) * (T::one() + c_norm));
            if pinf <= T::lit(100.0) * tol && gap <= tol * scale {
                return Ok(IpmRun { y, iterations });
            }
            // y stays strictly dual feasible, so an iterate this close to the
            // stop test is kept when X becomes too ill-conditioned to continue.
            let near = pinf <= T::lit(1e5) * tol && gap <= T::lit(1e3) * tol * scale;
            if iterations >= set.max_iterations {
                return stop(near, y, iterations);
            }
            iterations += 1;
            let mu = gap / nn;

            let mut nt = Vec::with_capacity(blocks.len());
            for ((b, xk), sk) in blocks.iter().zip(&x).zip(&s) {
                let Some(sc) = NtScaling::new(xk, sk, &b.terms) else { return stop(near, y, iterations) };
                nt.push(sc);
            }
            // Schur complement as a Gram matrix of the scaled coefficients.
            let mut schur = vec![T::zero(); m * m];
            for (b, sc) in blocks.iter().zip(&nt) {
                for (ia, ((ja, _), ga)) in b.terms.iter().zip(&sc.coef).enumerate() {
                    for ((jb, _), gb) in b.terms.iter().zip(&sc.coef).skip(ia) {
                        let (ja, jb) = (*ja, *jb);
                        let v = inner(ga, gb);
                        schur[ja * m + jb] = schur[ja * m + jb] + v;
                        if ja != jb {
                            schur[jb * m + ja] = schur[jb * m + ja] + v;
                        }
                    }
                }
            }
            // Scaled directions for `dX~ + dS~ = T_k`.
            let direction = |t_blocks: &[Matrix<T>]| -> Option<(Vec<T>, Vec<Matrix<T>>, Vec<Matrix<T>>)> {
                let mut g = r.clone();
                for ((b, sc), tk) in blocks.iter().zip(&nt).zip(t_blocks) {
                    for ((j, _), gj) in b.terms.iter().zip(&sc.coef) {
                        g[*j] = g[*j] - inner(gj, tk);
                    }
                }
                // solve_spd returns -M^{-1} g, so g carries the negated right-hand side.
                let dy = solve_spd(&schur, &g, m)?;
                let mut ds = Vec::with_capacity(blocks.len());
                let mut dx = Vec::with_capacity(blocks.len());
                for ((b, sc), tk) in blocks.iter().zip(&nt).zip(t_blocks) {
                    let mut dsk = Matrix::zeros(b.dim, b.dim);
                    for ((j, _), gj) in b.terms.iter().zip(&sc.coef) {
                        if dy[*j] != T::zero() {
                            axpy_mat(&mut dsk, dy[*j], gj);
                        }
                    }
                    let mut dxk = tk.clone();
                    axpy_mat(&mut dxk, -T::one(), &dsk);
                    ds.push(dsk);
                    dx.push(dxk);
                }
                Some((dy, dx, ds))
            };
            let steps =
                |d: &[Matrix<T>]| -> T { nt.iter().zip(d).fold(T::infinity(), |a, (sc, dk)| a.min(sc.max_step(dk))) };

            // predictor
            let t_aff: Vec<Matrix<T>> = nt.iter().map(|sc| Matrix::diag(&sc.v).scale(-T::one())).collect();
            let Some((_, dx_a, ds_a)) = direction(&t_aff) else { return stop(near, y, iterations) };
            let ap = steps(&dx_a).min(T::one());
            let ad = steps(&ds_a).min(T::one());
            let mut gap_a = T::zero();
            for ((sc, dxk), dsk) in nt.iter().zip(&dx_a).zip(&ds_a) {
                let mut xa = Matrix::diag(&sc.v);
                let mut sa = xa.clone();
                axpy_mat(&mut xa, ap, dxk);
                axpy_mat(&mut sa, ad, dsk);
                gap_a = gap_a + inner(&xa, &sa);
            }
            let ratio = (gap_a / gap).max(T::zero()).min(T::one());
            let sigma = ratio * ratio * ratio;

            // corrector
            let t_cor: Vec<Matrix<T>> = nt
                .iter()
                .zip(dx_a.iter().zip(&ds_a))
                .map(|(sc, (dxk, dsk))| sc.corrector_rhs(dxk, dsk, sigma * mu))
                .collect();
            let Some((dy, dx, ds)) = direction(&t_cor) else { return stop(near, y, iterations) };
            let frac = T::lit(0.98);
            let ap = (frac * steps(&dx)).min(T::one());
            let mut ad = (frac * steps(&ds)).min(T::one());
            // Same guard for X, which is rebuilt from the scaled space.
            let mut ap = ap;
            loop {
                let cand: Vec<Matrix<T>> = nt
                    .iter()
                    .zip(&dx)
                    .map(|(sc, dxk)| {
                        let mut scaled = Matrix::diag(&sc.v);
                        axpy_mat(&mut scaled, ap, dxk);
                        symmetric_part(&mul(&mul(&sc.g, &scaled), &sc.g.transpose()))
                    })
                    .collect();
                if cand.iter().all(|m| cholesky_lower(m).is_some()) {
                    x = cand;
                    break;
                }
                ap = ap * T::lit(0.5);
                if ap < T::precision() {
                    return stop(near, y, iterations);
                }
            }
            // S is recomputed from y; shrink the step if rounding pushed it out.
            loop {
                let cand = crate::matkernel::axpy(ad, &dy, &y);
                let sc: Vec<Matrix<T>> = blocks.iter().map(|b| b.at(&cand)).collect();
                if sc.iter().all(|m| cholesky_lower(m).is_some()) {
                    y = cand;
                    s = sc;
                    break;
                }
                ad = ad * T::lit(0.5);
                if ad < T::precision() {
                    return stop(near, y, iterations);
                }
            }
        }
    }
}

struct IpmRun<T> {
    y: Vec<T>,
    iterations: usize,
}

/// Exit on numerical breakdown or the iteration cap.
fn stop<T>(near: bool, y: Vec<T>, iterations: usize) -> Result<IpmRun<T>, LmiError> {
    if near {
        Ok(IpmRun { y, iterations })
    } else {
        Err(LmiError::NoCertificate { iterations })
    }
}

/// A compiled block with its coefficient matrices unpacked once per solve.
struct DenseBlock<T> {
    dim: usize,
    g0: Matrix<T>,
    terms: Vec<(usize, Matrix<T>)>,
}

impl<T: Scalar> DenseBlock<T> {
    fn from_compiled(b: &CBlock<T>) -> Self {
        let d = b.dim;
        let mk = |v: &Vec<T>| Matrix::from_vec(d, d, v.clone()).expect("compiled block is square");
        Self { dim: d, g0: mk(&b.g0), terms: b.terms.iter().map(|(j, g)| (*j, mk(g))).collect() }
    }

    fn at(&self, y: &[T]) -> Matrix<T> {
        let mut g = self.g0.clone();
        for (j, gj) in &self.terms {
            if y[*j] != T::zero() {
                axpy_mat(&mut g, y[*j], gj);
            }
        }
        g
    }
}

/// NT scaling `W = G G^T` with `W S W = X`, where `G^T S G = G^{-1} X G^{-T} = diag(v)`.
/// Built from the Cholesky factors of `S` and `X` and an SVD of their product,
/// which keeps relative accuracy in the small singular values. `coef` holds the
/// scaled coefficients `G^T G_j G`.
struct NtScaling<T> {
    g: Matrix<T>,
    v: Vec<T>,
    coef: Vec<Matrix<T>>,
}

impl<T: Scalar> NtScaling<T> {
    fn new(x: &Matrix<T>, s: &Matrix<T>, terms: &[(usize, Matrix<T>)]) -> Option<Self> {
        let ls = cholesky_lower(s)?;
        let lx = cholesky_lower(x)?;
        // L_S^T X L_S = R R^T with R = L_S^T L_X; its eigenpairs are the squared
        // singular values and left singular vectors of R.
        let r = mul(&ls.transpose(), &lx);
        let (sigma, q) = left_singular(&r)?;
        let d = s.rows();
        let mut qd = q;
        for i in 0..d {
            for j in 0..d {
                qd[(i, j)] = qd[(i, j)] * sigma[j].sqrt();
            }
        }
        let g = mul(&lower_inverse(&ls).transpose(), &qd);
        let gt = g.transpose();
        let coef = terms.iter().map(|(_, gj)| symmetric_part(&mul(&mul(&gt, gj), &g))).collect();
        Some(Self { g, v: sigma, coef })
    }

    /// Largest `alpha` with `diag(v) + alpha D` positive definite.
    fn max_step(&self, d: &Matrix<T>) -> T {
        let n = self.v.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = d[(i, j)] / (self.v[i] * self.v[j]).sqrt();
            }
        }
        match SymMatrix::symmetrize(&k).and_then(|k| k.min_eig()) {
            Ok(lo) if lo < T::zero() => -T::one() / lo,
            Ok(_) => T::infinity(),
            Err(_) => T::zero(),
        }
    }

    /// Scaled right-hand side of the Mehrotra corrector.
    fn corrector_rhs(&self, dx: &Matrix<T>, ds: &Matrix<T>, target: T) -> Matrix<T> {
        let cross = mul(dx, ds);
        let d = self.v.len();
        let mut t = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut rhs = -(cross[(i, j)] + cross[(j, i)]);
                if i == j {
                    rhs = rhs + T::lit(2.0) * (target - self.v[i] * self.v[i]);
                }
                t[(i, j)] = rhs / (self.v[i] + self.v[j]);
            }
        }
        t
    }
}

/// Singular values and left singular vectors of a square `r` by one-sided
/// Jacobi on `r^T`; `None` if a singular value vanishes.
fn left_singular<T: Scalar>(r: &Matrix<T>) -> Option<(Vec<T>, Matrix<T>)> {
    let d = r.rows();
    let mut a = r.transpose();
    let mut w = Matrix::identity(d);
    let tol = T::precision();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let (mut app, mut aqq, mut apq) = (T::zero(), T::zero(), T::zero());
                for k in 0..d {
                    app = app + a[(k, p)] * a[(k, p)];
                    aqq = aqq + a[(k, q)] * a[(k, q)];
                    apq = apq + a[(k, p)] * a[(k, q)];
                }
                if apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (T::lit(2.0) * apq);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let sn = c * t;
                for k in 0..d {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * x - sn * y;
                    a[(k, q)] = sn * x + c * y;
                    let (x, y) = (w[(k, p)], w[(k, q)]);
                    w[(k, p)] = c * x - sn * y;
                    w[(k, q)] = sn * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<T> = (0..d).map(|j| (0..d).map(|k| a[(k, j)] * a[(k, j)]).sum::<T>().sqrt()).collect();
    sigma.iter().all(|&v| v > T::zero() && v.is_finite()).then_some((sigma, w))
}

fn lower_inverse<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let d = l.rows();
    let mut li = Matrix::zeros(d, d);
    for col in 0..d {
        for i in col..d {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in col..i {
                s = s - l[(i, k)] * li[(k, col)];
            }
            li[(i, col)] = s / l[(i, i)];
        }
    }
    li
}

fn mul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    a.matmul(b).expect("conforming block products")
}

fn inner<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    a.as_slice().iter().zip(b.as_slice()).map(|(&p, &q)| p * q).sum()
}

fn axpy_mat<T: Scalar>(dst: &mut Matrix<T>, alpha: T, src: &Matrix<T>) {
    let (r, c) = dst.shape();
    for i in 0..r {
        for j in 0..c {
            dst[(i, j)] = dst[(i, j)] + alpha * src[(i, j)];
        }
    }
}

fn symmetric_part<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let half = T::lit(0.5);
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..i {
            let v = half * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn is_symmetric<T: Scalar>(m: &Matrix<T>) -> bool {
    if !m.is_square() {
        return false;
    }
    let tol = T::lit(64.0) * T::precision() * m.max_abs();
    (0..m.rows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Newton direction `-H^{-1} g`. `H` is first equilibrated by its diagonal (the
/// unknowns live on very different scales); if the factorization still fails a
/// growing multiple of the identity is added to the equilibrated matrix.
fn solve_spd<T: Scalar>(h: &[T], g: &[T], n: usize) -> Option<Vec<T>> {
    let d: Vec<T> = (0..n)
        .map(|i| {
            let v = h[i * n + i];
            if v > T::zero() {
                v.sqrt()
            } else {
                T::one()
            }
        })
        .collect();
    let mut reg = T::zero();
    for _ in 0..12 {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = h[i * n + j] / (d[i] * d[j]);
            }
            m[(i, i)] = m[(i, i)] + reg;
        }
        if let Some(l) = cholesky_lower(&m) {
            let mut z = vec![T::zero(); n];
            for i in 0..n {
                let mut s = -g[i] / d[i];
                for k in 0..i {
                    s = s - l[(i, k)] * z[k];
                }
                z[i] = s / l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = z[i];
                for k in (i + 1)..n {
                    s = s - l[(k, i)] * z[k];
                }
                z[i] = s / l[(i, i)];
            }
            let z: Vec<T> = z.iter().zip(&d).map(|(&v, &di)| v / di).collect();
            if z.iter().all(|v| v.is_finite()) {
                return Some(z);
            }
        }
        reg = if reg == T::zero() { T::lit(16.0) * T::precision() } else { reg * T::lit(100.0) };
    }
    None
}
