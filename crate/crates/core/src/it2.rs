//! Interval type-2 Takagi-Sugeno plant and controller descriptions.
//!
//! Each rule carries a lower and an upper membership grade of the premise
//! variable. The effective grade is `upper * rho_upper(x) + lower * rho_lower(x)`
//! with `rho_upper + rho_lower = 1`, and the effective grades are normalized
//! over the rules. Plant and controller use the same construction.

use thiserror::Error;

use crate::matkernel::Matrix;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum It2Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("all firing strengths vanish at the given state")]
    Degenerate,
    #[error("non-finite state or grade")]
    NonFinite,
}

/// Type-1 membership shape used for a lower or upper grade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipShape<T> {
    /// `height * exp(-(z - center)^2 / (2 sigma^2))`
    Gaussian { center: T, sigma: T, height: T },
    /// Piecewise linear `0 -> height -> 0` over `[left, peak, right]`.
    Triangular { left: T, peak: T, right: T, height: T },
}

impl<T: Scalar> MembershipShape<T> {
    pub fn eval(&self, z: T) -> T {
        match *self {
            Self::Gaussian { center, sigma, height } => {
                let d = (z - center) / sigma;
                height * (-(d * d) / T::lit(2.0)).exp()
            }
            Self::Triangular { left, peak, right, height } => {
                if z <= left || z >= right {
                    T::zero()
                } else if z <= peak {
                    height * (z - left) / (peak - left)
                } else {
                    height * (right - z) / (right - peak)
                }
            }
        }
    }
}

/// State-dependent split between the upper and lower grade. The function gives
/// `rho_lower`; `rho_upper = 1 - rho_lower`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting<T> {
    /// `rho_lower = sin^2(x[state])`
    SinSquared {
        state: usize,
    },
    Constant(T),
}

impl<T: Scalar> Weighting<T> {
    pub fn lower(&self, x: &[T]) -> T {
        match *self {
            Self::SinSquared { state } => {
                let s = x[state].sin();
                s * s
            }
            Self::Constant(v) => v,
        }
    }

    pub fn upper(&self, x: &[T]) -> T {
        T::one() - self.lower(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct It2MembershipFn<T> {
    pub lower: MembershipShape<T>,
    pub upper: MembershipShape<T>,
    pub weighting: Weighting<T>,
}

impl<T: Scalar> It2MembershipFn<T> {
    /// Grades `(lower, upper)` at premise value `z`.
    pub fn grades(&self, z: T) -> (T, T) {
        (self.lower.eval(z), self.upper.eval(z))
    }

    /// Un-normalized type-reduced grade.
    pub fn effective(&self, z: T, x: &[T]) -> T {
        let (lo, up) = self.grades(z);
        up * self.weighting.upper(x) + lo * self.weighting.lower(x)
    }

    /// `upper >= lower` on an evenly spaced grid over `[a, b]`.
    pub fn envelope_holds(&self, a: T, b: T, samples: usize) -> bool {
        let steps = samples.max(2) - 1;
        (0..=steps).all(|k| {
            let z = a + (b - a) * T::lit(k as f64 / steps as f64);
            let (lo, up) = self.grades(z);
            up >= lo && lo >= T::zero() && up <= T::one()
        })
    }
}

/// Premise variable `z = x[state] + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Premise<T> {
    pub state: usize,
    pub offset: T,
}

impl<T: Scalar> Premise<T> {
    pub fn of_state(state: usize) -> Self {
        Self { state, offset: T::zero() }
    }

    pub fn eval(&self, x: &[T]) -> T {
        x[self.state] + self.offset
    }
}

/// `x+ = A x + B u + A_d x_d + B_d u_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRule<T> {
    pub a: Matrix<T>,
    pub a_d: Matrix<T>,
    pub b: Matrix<T>,
    pub b_d: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct It2Plant<T> {
    rules: Vec<FuzzyRule<T>>,
    memberships: Vec<It2MembershipFn<T>>,
    premise: Premise<T>,
    n: usize,
    w: usize,
}

impl<T: Scalar> It2Plant<T> {
    pub fn new(
        rules: Vec<FuzzyRule<T>>,
        memberships: Vec<It2MembershipFn<T>>,
        premise: Premise<T>,
    ) -> Result<Self, It2Error> {
        let first = rules.first().ok_or_else(|| It2Error::Dimension("plant needs at least one rule".into()))?;
        let n = first.a.rows();
        let w = first.b.cols();
        if memberships.len() != rules.len() {
            return Err(It2Error::Dimension(format!(
                "{} rules but {} membership functions",
                rules.len(),
                memberships.len()
            )));
        }
        for (l, r) in rules.iter().enumerate() {
            let ok =
                r.a.shape() == (n, n) && r.a_d.shape() == (n, n) && r.b.shape() == (n, w) && r.b_d.shape() == (n, w);
            if !ok {
                return Err(It2Error::Dimension(format!("rule {}: expected A, A_d {n}x{n} and B, B_d {n}x{w}", l + 1)));
            }
            if ![&r.a, &r.a_d, &r.b, &r.b_d].iter().all(|m| m.is_finite()) {
                return Err(It2Error::NonFinite);
            }
        }
        check_premise(&premise, &memberships, n)?;
        Ok(Self { rules, memberships, premise, n, w })
    }

    pub fn rules(&self) -> &[FuzzyRule<T>] {
        &self.rules
    }

    pub fn memberships(&self) -> &[It2MembershipFn<T>] {
        &self.memberships
    }

    pub fn premise(&self) -> Premise<T> {
        self.premise
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.w
    }

    /// Controller sharing the plant's premise and membership functions.
    pub fn matched_controller(&self) -> It2Controller<T> {
        It2Controller { memberships: self.memberships.clone(), premise: self.premise }
    }

    /// Copy of the plant with `A_d`, `B_d` folded into `A`, `B` and zeroed.
    pub fn folded(&self) -> Self {
        let rules = self
            .rules
            .iter()
            .map(|r| FuzzyRule {
                a: &r.a + &r.a_d,
                a_d: Matrix::zeros(self.n, self.n),
                b: &r.b + &r.b_d,
                b_d: Matrix::zeros(self.n, self.w),
            })
            .collect();
        Self { rules, ..self.clone() }
    }
}

/// Controller membership description; rules are the gains supplied at runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct It2Controller<T> {
    memberships: Vec<It2MembershipFn<T>>,
    premise: Premise<T>,
}

impl<T: Scalar> It2Controller<T> {
    pub fn new(memberships: Vec<It2MembershipFn<T>>, premise: Premise<T>, state_dim: usize) -> Result<Self, It2Error> {
        if memberships.is_empty() {
            return Err(It2Error::Dimension("controller needs at least one rule".into()));
        }
        check_premise(&premise, &memberships, state_dim)?;
        Ok(Self { memberships, premise })
    }

    pub fn n_rules(&self) -> usize {
        self.memberships.len()
    }

    pub fn memberships(&self) -> &[It2MembershipFn<T>] {
        &self.memberships
    }

    pub fn premise(&self) -> Premise<T> {
        self.premise
    }
}

fn check_premise<T: Scalar>(p: &Premise<T>, mfs: &[It2MembershipFn<T>], n: usize) -> Result<(), It2Error> {
    if p.state >= n {
        return Err(It2Error::Dimension(format!("premise reads x[{}] of a {n}-state system", p.state)));
    }
    for mf in mfs {
        if let Weighting::SinSquared { state } = mf.weighting {
            if state >= n {
                return Err(It2Error::Dimension(format!("weighting reads x[{state}] of a {n}-state system")));
            }
        }
    }
    Ok(())
}

fn normalized<T: Scalar>(
    mfs: &[It2MembershipFn<T>],
    premise: &Premise<T>,
    x: &[T],
    n: usize,
) -> Result<Vec<T>, It2Error> {
    if x.len() != n {
        return Err(It2Error::Dimension(format!("state has {} entries, expected {n}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(It2Error::NonFinite);
    }
    let z = premise.eval(x);
    let raw: Vec<T> = mfs.iter().map(|mf| mf.effective(z, x)).collect();
    let total: T = raw.iter().copied().sum();
    if !total.is_finite() {
        return Err(It2Error::NonFinite);
    }
    if total <= T::zero() {
        return Err(It2Error::Degenerate);
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Normalized plant firing strengths at state `x`.
pub fn firing_strengths<T: Scalar>(p: &It2Plant<T>, x: &[T]) -> Result<Vec<T>, It2Error> {
    normalized(&p.memberships, &p.premise, x, p.n)
}

/// Normalized controller firing strengths at state `x`.
pub fn controller_strengths<T: Scalar>(c: &It2Controller<T>, x: &[T]) -> Result<Vec<T>, It2Error> {
    let n = x.len().max(c.premise.state + 1);
    normalized(&c.memberships, &c.premise, x, n)
}

/// Weighted rule matrices `(A, A_d, B, B_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blended<T> {
    pub a: Matrix<T>,
    pub a_d: Matrix<T>,
    pub b: Matrix<T>,
    pub b_d: Matrix<T>,
}

pub fn blend<T: Scalar>(p: &It2Plant<T>, w: &[T]) -> Result<Blended<T>, It2Error> {
    if w.len() != p.n_rules() {
        return Err(It2Error::Dimension(format!("{} weights for {} rules", w.len(), p.n_rules())));
    }
    let mut out = Blended {
        a: Matrix::zeros(p.n, p.n),
        a_d: Matrix::zeros(p.n, p.n),
        b: Matrix::zeros(p.n, p.w),
        b_d: Matrix::zeros(p.n, p.w),
    };
    for (r, &wl) in p.rules.iter().zip(w) {
        if wl == T::zero() {
            continue;
        }
        out.a = &out.a + &r.a.scale(wl);
        out.a_d = &out.a_d + &r.a_d.scale(wl);
        out.b = &out.b + &r.b.scale(wl);
        out.b_d = &out.b_d + &r.b_d.scale(wl);
    }
    Ok(out)
}

/// `sum_l sum_m w_l h_m (A_l + B_l K_m)` and the delayed counterpart.
pub fn closed_loop_matrices<T: Scalar>(
    p: &It2Plant<T>,
    w: &[T],
    h: &[T],
    gains: &[Matrix<T>],
) -> Result<(Matrix<T>, Matrix<T>), It2Error> {
    if h.len() != gains.len() {
        return Err(It2Error::Dimension(format!("{} controller weights for {} gains", h.len(), gains.len())));
    }
    if let Some(k) = gains.iter().find(|k| k.shape() != (p.w, p.n)) {
        return Err(It2Error::Dimension(format!("gain is {}x{}, expected {}x{}", k.rows(), k.cols(), p.w, p.n)));
    }
    let bl = blend(p, w)?;
    let mut k = Matrix::zeros(p.w, p.n);
    for (km, &hm) in gains.iter().zip(h) {
        k = &k + &km.scale(hm);
    }
    // The double sum factors because the weights are separable.
    Ok((&bl.a + &(&bl.b * &k), &bl.a_d + &(&bl.b_d * &k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(c: f64, s: f64, h: f64) -> MembershipShape<f64> {
        MembershipShape::Gaussian { center: c, sigma: s, height: h }
    }

    fn mf(c: f64) -> It2MembershipFn<f64> {
        It2MembershipFn {
            lower: gauss(c, 0.8, 0.8),
            upper: gauss(c, 1.2, 1.0),
            weighting: Weighting::SinSquared { state: 1 },
        }
    }

    fn rule(a: f64, b: f64) -> FuzzyRule<f64> {
        FuzzyRule {
            a: Matrix::from_f64_rows(&[[a, 0.1], [0.0, a]]).unwrap(),
            a_d: Matrix::from_f64_rows(&[[0.01, 0.0], [0.0, 0.02]]).unwrap(),
            b: Matrix::from_f64_rows(&[[0.0], [b]]).unwrap(),
            b_d: Matrix::from_f64_rows(&[[0.0], [0.001 * b]]).unwrap(),
        }
    }

    fn two_rule() -> It2Plant<f64> {
        It2Plant::new(vec![rule(0.9, 1.0), rule(1.1, 0.5)], vec![mf(-1.0), mf(1.0)], Premise::of_state(1)).unwrap()
    }

    #[test]
    fn single_rule_weight_is_one() {
        let p = It2Plant::new(vec![rule(0.5, 1.0)], vec![mf(0.0)], Premise::of_state(0)).unwrap();
        for x in [[0.0, 0.0], [3.0, -7.0], [-4.0, 1.0]] {
            assert_eq!(firing_strengths(&p, &x).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn identical_rules_split_evenly() {
        let p = It2Plant::new(vec![rule(0.5, 1.0); 2], vec![mf(0.3); 2], Premise::of_state(1)).unwrap();
        let w = firing_strengths(&p, &[0.2, 0.9]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_memberships_rejected() {
        let tri = MembershipShape::Triangular { left: 0.0, peak: 1.0, right: 2.0, height: 1.0 };
        let m = It2MembershipFn { lower: tri, upper: tri, weighting: Weighting::Constant(0.5) };
        let p = It2Plant::new(vec![rule(0.5, 1.0)], vec![m], Premise::of_state(0)).unwrap();
        assert_eq!(firing_strengths(&p, &[5.0, 0.0]), Err(It2Error::Degenerate));
        assert!((firing_strengths(&p, &[0.5, 0.0]).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vertex_blend_is_exact() {
        let p = two_rule();
        let b = blend(&p, &[1.0, 0.0]).unwrap();
        assert_eq!(b.a, p.rules()[0].a);
        assert_eq!(b.a_d, p.rules()[0].a_d);
        assert_eq!(b.b, p.rules()[0].b);
        assert_eq!(b.b_d, p.rules()[0].b_d);
        assert!(blend(&p, &[1.0]).is_err());
    }

    #[test]
    fn closed_loop_single_rule_collapse() {
        let p = It2Plant::new(vec![rule(0.5, 1.0)], vec![mf(0.0)], Premise::of_state(0)).unwrap();
        let (phi, phi_d) = closed_loop_matrices(&p, &[1.0], &[1.0], &[Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(phi, p.rules()[0].a);
        assert_eq!(phi_d, p.rules()[0].a_d);
        let k = Matrix::from_f64_rows(&[[-0.2, 0.3]]).unwrap();
        let (phi, _) = closed_loop_matrices(&p, &[1.0], &[1.0], &[k.clone()]).unwrap();
        assert_eq!(phi, &p.rules()[0].a + &(&p.rules()[0].b * &k));
    }

    #[test]
    fn type_one_reduction_ignores_weighting() {
        let g = gauss(0.5, 1.0, 1.0);
        let make = |wt: Weighting<f64>| {
            let mfs = vec![
                It2MembershipFn { lower: g, upper: g, weighting: wt },
                It2MembershipFn { lower: gauss(-1.0, 1.0, 1.0), upper: gauss(-1.0, 1.0, 1.0), weighting: wt },
            ];
            It2Plant::new(vec![rule(0.5, 1.0), rule(0.7, 1.0)], mfs, Premise::of_state(1)).unwrap()
        };
        let x = [0.3, 0.1];
        let a = firing_strengths(&make(Weighting::Constant(0.0)), &x).unwrap();
        let b = firing_strengths(&make(Weighting::SinSquared { state: 0 }), &x).unwrap();
        let t1 = [g.eval(0.1), gauss(-1.0, 1.0, 1.0).eval(0.1)];
        let s = t1[0] + t1[1];
        for l in 0..2 {
            assert!((a[l] - t1[l] / s).abs() < 1e-15);
            assert!((b[l] - t1[l] / s).abs() < 1e-15);
        }
    }

    #[test]
    fn envelope_of_default_family() {
        for c in [0.8862, 2.7520, 4.7052] {
            assert!(mf(c).envelope_holds(-10.0, 15.0, 2001));
        }
        let bad = It2MembershipFn {
            lower: gauss(0.0, 1.2, 1.0),
            upper: gauss(0.0, 0.8, 0.8),
            weighting: Weighting::Constant(0.5),
        };
        assert!(!bad.envelope_holds(-3.0, 3.0, 101));
    }

    #[test]
    fn dimension_checks() {
        let mut r = rule(0.5, 1.0);
        r.a_d = Matrix::zeros(2, 3);
        assert!(It2Plant::new(vec![r], vec![mf(0.0)], Premise::of_state(0)).is_err());
        assert!(It2Plant::new(vec![rule(0.5, 1.0)], vec![mf(0.0)], Premise::of_state(2)).is_err());
        assert!(It2Plant::new(vec![rule(0.5, 1.0)], vec![], Premise::of_state(0)).is_err());
        assert!(firing_strengths(&two_rule(), &[1.0]).is_err());
    }

    #[test]
    fn folded_plant_sums_delay_terms() {
        let p = two_rule().folded();
        assert_eq!(p.rules()[0].a[(1, 1)], 0.9 + 0.02);
        assert_eq!(p.rules()[0].a_d.max_abs(), 0.0);
    }
}
